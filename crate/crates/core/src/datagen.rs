//! Synthetic labeled designs: uniform random sampling inside the scenario
//! ranges, boundary sampling around rule thresholds, class balancing and CSV
//! input/output.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::RuleEngine;
use crate::schema::{DesignRecord, FeatureRole, ScenarioId, ScenarioSchema, TOL_MAX, TOL_MIN};

/// Relative half-width of the boundary perturbation for dimensions.
pub const REL_PERTURBATION: f64 = 0.02;
/// Absolute half-width (mm) of the boundary perturbation for tolerances.
pub const TOL_PERTURBATION: f64 = 0.05;
/// Bound on retries inside a single draw.
pub const MAX_TRIES: usize = 1000;
/// Bound on random draws when looking for a manufacturable base design. The
/// combined scenario accepts well under 1% of uniform draws.
pub const FEASIBLE_TRIES: usize = 100_000;
/// Candidate budget per requested record when balancing.
pub const BUDGET_FACTOR: usize = 100;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub scenario: ScenarioId,
    pub n_total: usize,
    pub boundary_fraction: f64,
    pub balance: bool,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(scenario: ScenarioId, n_total: usize, seed: u64) -> Self {
        GenConfig { scenario, n_total, boundary_fraction: 0.5, balance: true, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.boundary_fraction) {
            return Err(Error::InvalidArgument(format!(
                "boundary fraction {} not in [0, 1]",
                self.boundary_fraction
            )));
        }
        if self.balance && (self.n_total < 2 || !self.n_total.is_multiple_of(2)) {
            return Err(Error::InvalidArgument(format!(
                "a balanced dataset needs an even size of at least 2, got {}",
                self.n_total
            )));
        }
        Ok(())
    }
}

/// Where a boundary sample was placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryInfo {
    pub condition: String,
    pub feature: String,
    pub threshold: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub manufacturable: usize,
    pub non_manufacturable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: GenConfig,
    pub rule_hash: String,
    pub counts: ClassCounts,
    pub random_records: usize,
    pub boundary_records: usize,
    pub candidates_drawn: usize,
    /// Mean fraction of each dependent feature's range left after enforcing
    /// containment in the block.
    pub containment_acceptance: f64,
    /// Share of tolerance pairs accepted with upper >= lower.
    pub tolerance_acceptance: f64,
    /// Share of boundary records within the perturbation window of a threshold.
    pub boundary_near_threshold: f64,
    pub perturbation_relative: f64,
    pub perturbation_tolerance_mm: f64,
    pub generated_at: String,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Stats {
    trunc_sum: f64,
    trunc_n: usize,
    tol_tries: usize,
    tol_accepted: usize,
}

/// Index of every feature whose range depends on another feature.
#[derive(Debug, Clone, Copy)]
struct Links {
    b1: Option<usize>,
    b2: Option<usize>,
    b3: Option<usize>,
    h2: Option<usize>,
    h3: Option<usize>,
    h4: Option<usize>,
    p1: Option<usize>,
    p2: Option<usize>,
    p4: Option<usize>,
    p5: Option<usize>,
    p6: Option<usize>,
}

impl Links {
    fn new(s: &ScenarioSchema) -> Self {
        let i = |n: &str| s.index_of(n);
        Links {
            b1: i("B1"),
            b2: i("B2"),
            b3: i("B3"),
            h2: i("H2"),
            h3: i("H3"),
            h4: i("H4"),
            p1: i("P1"),
            p2: i("P2"),
            p4: i("P4"),
            p5: i("P5"),
            p6: i("P6"),
        }
    }

    /// Upper limit implied by containment in the block, given the values set
    /// so far (unset values are NaN and count at their range minimum).
    fn upper(&self, s: &ScenarioSchema, v: &[f64], i: usize) -> f64 {
        let val = |j: Option<usize>| {
            let j = j.expect("linked feature");
            if v[j].is_nan() { s.features[j].min } else { v[j] }
        };
        let me = Some(i);
        if me == self.h2 || me == self.p4 {
            val(self.b3)
        } else if me == self.h3 {
            val(self.b1)
        } else if me == self.h4 {
            val(self.b2)
        } else if me == self.p1 {
            val(self.b1) - val(self.p5)
        } else if me == self.p5 {
            val(self.b1) - val(self.p1)
        } else if me == self.p2 {
            val(self.b2) - val(self.p6)
        } else if me == self.p6 {
            val(self.b2) - val(self.p2)
        } else {
            f64::INFINITY
        }
    }
}

/// Draws designs for one scenario against one rule engine.
pub struct Sampler<'a> {
    engine: &'a RuleEngine,
    scenario: ScenarioId,
    schema: &'a ScenarioSchema,
    links: Links,
    /// Conditions with a governing feature, as (condition index, feature index).
    governed: Vec<(usize, usize)>,
    stats: Stats,
}

impl<'a> Sampler<'a> {
    pub fn new(engine: &'a RuleEngine, scenario: ScenarioId) -> Self {
        let schema = engine.schema(scenario);
        let governed = (0..engine.conditions(scenario).len())
            .filter_map(|c| engine.governing_index(scenario, c).map(|g| (c, g)))
            .collect();
        Sampler { engine, scenario, schema, links: Links::new(schema), governed, stats: Stats::default() }
    }

    /// Admissible range of feature `i` given the other values.
    pub fn feature_range(&self, values: &[f64], i: usize) -> (f64, f64) {
        let f = &self.schema.features[i];
        (f.min, f.max.min(self.links.upper(self.schema, values, i)))
    }

    /// Every feature uniform in its range, dependent features truncated to
    /// fit inside the block, tolerance pairs redrawn until upper >= lower.
    pub fn sample_random<R: Rng>(&mut self, rng: &mut R) -> Result<DesignRecord> {
        let s = self.schema;
        let mut v = vec![f64::NAN; s.len()];
        for (i, f) in s.features.iter().enumerate() {
            match f.role {
                FeatureRole::BlockDim => v[i] = rng.gen_range(f.min..=f.max),
                FeatureRole::FeatureDim | FeatureRole::Position => {}
                FeatureRole::TolUpper | FeatureRole::TolLower => {}
            }
        }
        for (i, f) in s.features.iter().enumerate() {
            if matches!(f.role, FeatureRole::FeatureDim | FeatureRole::Position) {
                let (lo, hi) = self.feature_range(&v, i);
                if hi < lo {
                    return Err(Error::Sampling(format!("empty range for {}", f.name)));
                }
                if hi < f.max {
                    self.stats.trunc_sum += (hi - lo) / (f.max - f.min);
                } else {
                    self.stats.trunc_sum += 1.0;
                }
                self.stats.trunc_n += 1;
                v[i] = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            }
        }
        for (i, f) in s.features.iter().enumerate() {
            if f.role != FeatureRole::TolUpper {
                continue;
            }
            let lt_idx = s
                .index_of(&format!("{}_LT", f.linked_dimension.as_deref().unwrap_or_default()))
                .ok_or_else(|| Error::Sampling(format!("no lower tolerance paired with {}", f.name)))?;
            let mut ok = false;
            for _ in 0..MAX_TRIES {
                let ut = rng.gen_range(TOL_MIN..=TOL_MAX);
                let lt = rng.gen_range(TOL_MIN..=TOL_MAX);
                self.stats.tol_tries += 1;
                if ut >= lt {
                    self.stats.tol_accepted += 1;
                    v[i] = ut;
                    v[lt_idx] = lt;
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::Sampling(format!("no ordered tolerance pair for {}", f.name)));
            }
        }
        Ok(DesignRecord::new(self.scenario, v))
    }

    /// A random design that passes every rule.
    pub fn sample_feasible<R: Rng>(&mut self, rng: &mut R) -> Result<DesignRecord> {
        for _ in 0..FEASIBLE_TRIES {
            let r = self.sample_random(rng)?;
            if self.engine.is_manufacturable(self.scenario, &r.values) {
                return Ok(r);
            }
        }
        Err(Error::Sampling(format!("no manufacturable {} design in {FEASIBLE_TRIES} draws", self.scenario)))
    }

    fn is_tolerance_feature(&self, i: usize) -> bool {
        matches!(self.schema.features[i].role, FeatureRole::TolUpper | FeatureRole::TolLower)
    }

    /// Threshold of `condition` for `base`, moved by `unit * width` where
    /// `unit` is in `[-1, 1]` and width is the perturbation half-width.
    pub fn place_at_threshold(&self, base: &DesignRecord, condition: usize, unit: f64) -> Option<(DesignRecord, BoundaryInfo)> {
        let g = self.engine.governing_index(self.scenario, condition)?;
        let (lo, hi) = self.feature_range(&base.values, g);
        let t = self.engine.solve_threshold(self.scenario, condition, &base.values, lo, hi)?;
        let width = if self.is_tolerance_feature(g) { TOL_PERTURBATION } else { REL_PERTURBATION * t.abs() };
        let x = t + unit * width;
        if x < lo || x > hi {
            return None;
        }
        let mut values = base.values.clone();
        values[g] = x;
        let info = BoundaryInfo {
            condition: self.engine.conditions(self.scenario)[condition].id.clone(),
            feature: self.schema.features[g].name.clone(),
            threshold: t,
            epsilon: x - t,
        };
        Some((DesignRecord::new(self.scenario, values), info))
    }

    /// Feasible base design with one governing feature moved next to a
    /// randomly chosen rule threshold.
    pub fn sample_boundary<R: Rng>(&mut self, rng: &mut R) -> Result<(DesignRecord, BoundaryInfo)> {
        if self.governed.is_empty() {
            return Err(Error::Sampling("scenario has no solvable rule".into()));
        }
        for _ in 0..MAX_TRIES {
            let base = self.sample_feasible(rng)?;
            let &(c, _) = self.governed.choose(rng).expect("non-empty");
            let unit = rng.gen_range(-1.0..=1.0);
            if let Some(out) = self.place_at_threshold(&base, c, unit) {
                return Ok(out);
            }
        }
        Err(Error::Sampling(format!("no solvable boundary in {MAX_TRIES} attempts")))
    }

    /// True when some rule threshold lies within the perturbation window of
    /// the record's governing value.
    pub fn near_threshold(&self, values: &[f64]) -> bool {
        let mut work = values.to_vec();
        for &(c, g) in &self.governed {
            let x = values[g];
            let (a, b) = if self.is_tolerance_feature(g) {
                (x - TOL_PERTURBATION, x + TOL_PERTURBATION)
            } else if x > 0.0 {
                (x / (1.0 + REL_PERTURBATION), x / (1.0 - REL_PERTURBATION))
            } else {
                continue;
            };
            work[g] = a;
            let ma = self.engine.margin(self.scenario, c, &work) >= 0.0;
            work[g] = b;
            let mb = self.engine.margin(self.scenario, c, &work) >= 0.0;
            work[g] = x;
            if ma != mb {
                return true;
            }
        }
        false
    }
}

/// Generates a labeled dataset. With `balance`, the random and boundary
/// shares are each split evenly between the two classes so both the class
/// balance and the boundary fraction are exact.
pub fn generate_dataset(engine: &RuleEngine, config: &GenConfig) -> Result<(Vec<DesignRecord>, Manifest)> {
    config.validate()?;
    let n = config.n_total;
    let n_boundary = ((n as f64) * config.boundary_fraction).round() as usize;
    let n_random = n - n_boundary;
    // need[kind][class]; kind 0 = random, 1 = boundary
    let mut need = if config.balance {
        let b1 = n_boundary / 2;
        let b0 = n_boundary - b1;
        [[n / 2 - b0, n / 2 - b1], [b0, b1]]
    } else {
        [[n_random, 0], [n_boundary, 0]]
    };
    let budget = BUDGET_FACTOR * n.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sampler = Sampler::new(engine, config.scenario);
    let mut out = Vec::with_capacity(n);
    let mut boundary_near = 0usize;
    let mut drawn = 0usize;
    let mut remaining = n;
    while remaining > 0 {
        for kind in 0..2 {
            if need[kind][0] + need[kind][1] == 0 {
                continue;
            }
            drawn += 1;
            if drawn > budget {
                return Err(Error::BalanceUnreachable(budget));
            }
            let rec = if kind == 0 {
                sampler.sample_random(&mut rng)?
            } else {
                sampler.sample_boundary(&mut rng)?.0
            };
            let label = u8::from(engine.is_manufacturable(config.scenario, &rec.values));
            let slot = if config.balance { label as usize } else { 0 };
            if need[kind][slot] == 0 {
                continue;
            }
            need[kind][slot] -= 1;
            remaining -= 1;
            if kind == 1 && sampler.near_threshold(&rec.values) {
                boundary_near += 1;
            }
            out.push(rec.with_label(label));
        }
    }
    let pos = out.iter().filter(|r| r.label == Some(1)).count();
    let st = sampler.stats;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        config: config.clone(),
        rule_hash: engine.rule_hash().to_string(),
        counts: ClassCounts { manufacturable: pos, non_manufacturable: out.len() - pos },
        random_records: n_random,
        boundary_records: n_boundary,
        candidates_drawn: drawn,
        containment_acceptance: if st.trunc_n > 0 { st.trunc_sum / st.trunc_n as f64 } else { 1.0 },
        tolerance_acceptance: if st.tol_tries > 0 { st.tol_accepted as f64 / st.tol_tries as f64 } else { 1.0 },
        boundary_near_threshold: if n_boundary > 0 { boundary_near as f64 / n_boundary as f64 } else { 0.0 },
        perturbation_relative: REL_PERTURBATION,
        perturbation_tolerance_mm: TOL_PERTURBATION,
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    Ok((out, manifest))
}

/// Fraction of records lying within the perturbation window of a threshold.
pub fn near_threshold_fraction(engine: &RuleEngine, records: &[DesignRecord]) -> f64 {
    let Some(first) = records.first() else { return 0.0 };
    let sampler = Sampler::new(engine, first.scenario);
    let near = records.iter().filter(|r| sampler.near_threshold(&r.values)).count();
    near as f64 / records.len() as f64
}

// ---------------------------------------------------------------------------
// CSV

/// Writes records as CSV: schema columns in order, then `label` when every
/// record carries one.
pub fn write_csv<W: Write>(records: &[DesignRecord], scenario: ScenarioId, w: W) -> Result<()> {
    let schema = ScenarioSchema::for_scenario(scenario);
    let labeled = !records.is_empty() && records.iter().all(|r| r.label.is_some());
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let mut header = schema.names();
    if labeled {
        header.push("label".into());
    }
    out.write_record(&header).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in records {
        r.check_schema(&schema)?;
        row.clear();
        row.extend(r.values.iter().map(|v| v.to_string()));
        if labeled {
            row.push(r.label.unwrap().to_string());
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, message: e.to_string() }
}

pub fn save_csv(records: &[DesignRecord], scenario: ScenarioId, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(records, scenario, std::io::BufWriter::new(f))
}

/// Reads a dataset CSV. The scenario is recognised from the header; a
/// trailing `label` column is optional.
pub fn read_csv<R: Read>(r: R) -> Result<(ScenarioId, Vec<DesignRecord>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let labeled = header.last().is_some_and(|h| h == "label");
    let cols = if labeled { &header[..header.len() - 1] } else { &header[..] };
    let scenario = ScenarioId::ALL
        .into_iter()
        .find(|&id| ScenarioSchema::for_scenario(id).names() == cols)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("header does not match any scenario schema: {}", header.join(",")),
        })?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        let mut values = Vec::with_capacity(cols.len());
        for (name, field) in cols.iter().zip(rec.iter()) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {name}: `{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("column {name}: non-finite value") });
            }
            values.push(v);
        }
        let mut d = DesignRecord::new(scenario, values);
        if labeled {
            let field = rec.get(cols.len()).unwrap_or_default().trim();
            d.label = Some(match field {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse { line, message: format!("label `{other}` is not 0 or 1") });
                }
            });
        }
        out.push(d);
    }
    Ok((scenario, out))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<(ScenarioId, Vec<DesignRecord>)> {
    let f = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> RuleEngine {
        RuleEngine::default()
    }

    #[test]
    fn random_samples_respect_ranges_and_containment() {
        let e = engine();
        for id in ScenarioId::ALL {
            let mut s = Sampler::new(&e, id);
            let schema = e.schema(id).clone();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let n = if id == ScenarioId::Drilling { 10_000 } else { 2_000 };
            for _ in 0..n {
                let r = s.sample_random(&mut rng).unwrap();
                assert!(schema.range_errors(&r.values).is_empty(), "{:?}", schema.range_errors(&r.values));
                let g = |n: &str| r.get(&schema, n).unwrap();
                if id.has_hole() {
                    assert!(g("H2") <= g("B3"));
                    assert!(g("H3") <= g("B1") && g("H4") <= g("B2"));
                }
                if id.has_pocket() {
                    assert!(g("P4") <= g("B3"));
                    assert!(g("P1") + g("P5") <= g("B1") + 1e-9);
                    assert!(g("P2") + g("P6") <= g("B2") + 1e-9);
                }
                for f in &schema.features {
                    if f.role == FeatureRole::TolUpper {
                        let d = f.linked_dimension.as_ref().unwrap();
                        assert!(g(&f.name) >= g(&format!("{d}_LT")));
                    }
                }
            }
        }
    }

    #[test]
    fn random_sampling_is_seeded() {
        let e = engine();
        let draw = |seed| {
            let mut s = Sampler::new(&e, ScenarioId::Milling);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| s.sample_random(&mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn depth_ratio_boundary_window() {
        let e = engine();
        let s = Sampler::new(&e, ScenarioId::Drilling);
        let schema = e.schema(ScenarioId::Drilling);
        let c = e.conditions(ScenarioId::Drilling).iter().position(|c| c.id == "R-D2").unwrap();
        let mut base = DesignRecord::new(
            ScenarioId::Drilling,
            schema.features.iter().map(|f| match f.name.as_str() {
                "B1" => 100.0,
                "B2" => 80.0,
                "B3" => 60.0,
                "H1" => 5.0,
                "H2" => 10.0,
                "H3" => 50.0,
                "H4" => 40.0,
                _ => 0.0,
            }).collect(),
        );
        // zero tolerances make the threshold exactly 5 * 5
        for f in &schema.features {
            if f.linked_dimension.is_some() {
                base.set(schema, &f.name, 0.0).unwrap();
            }
        }
        let h2 = schema.index_of("H2").unwrap();
        for unit in [-1.0, -0.5, 0.5, 1.0] {
            let (r, info) = s.place_at_threshold(&base, c, unit).unwrap();
            assert!((info.threshold - 25.0).abs() < 1e-9);
            assert!(r.values[h2] >= 24.5 - 1e-9 && r.values[h2] <= 25.5 + 1e-9);
            let violated = e.margin(ScenarioId::Drilling, c, &r.values) < 0.0;
            assert_eq!(violated, unit > 0.0, "unit {unit}");
        }
    }

    #[test]
    fn boundary_samples_are_near_thresholds() {
        let e = engine();
        let mut s = Sampler::new(&e, ScenarioId::Drilling);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let recs: Vec<_> = (0..500).map(|_| s.sample_boundary(&mut rng).unwrap().0).collect();
        assert!(near_threshold_fraction(&e, &recs) >= 0.3);
    }

    #[test]
    fn balanced_generation_is_exact_and_reproducible() {
        let e = engine();
        let cfg = GenConfig::new(ScenarioId::Drilling, 1000, 7);
        let (recs, m) = generate_dataset(&e, &cfg).unwrap();
        assert_eq!(recs.len(), 1000);
        assert_eq!(m.counts.manufacturable, 500);
        assert_eq!(m.counts.non_manufacturable, 500);
        assert_eq!(m.rule_hash, e.rules().hash());
        for r in &recs {
            assert_eq!(r.label, Some(u8::from(e.check(r).unwrap().manufacturable)));
        }
        let mut a = Vec::new();
        write_csv(&recs, ScenarioId::Drilling, &mut a).unwrap();
        let (again, _) = generate_dataset(&e, &cfg).unwrap();
        let mut b = Vec::new();
        write_csv(&again, ScenarioId::Drilling, &mut b).unwrap();
        assert_eq!(a, b);
        assert!(GenConfig::new(ScenarioId::Drilling, 7, 1).validate().is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let e = engine();
        let (recs, _) = generate_dataset(&e, &GenConfig::new(ScenarioId::Combined, 20, 2)).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, ScenarioId::Combined, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("B1,B2,B3,H1,H2,H3,H4,P1,"));
        assert!(text.lines().next().unwrap().ends_with(",label"));
        assert!(!text.contains('\r'));
        let (id, back) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(id, ScenarioId::Combined);
        assert_eq!(back, recs);

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replacen(',', ",abc", 1);
        let bad = lines.join("\n");
        match read_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_csv("x,y\n1,2\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
