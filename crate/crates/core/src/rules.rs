//! Design-for-manufacturing rule engine.
//!
//! Every rule is split into one or more *conditions*. A condition computes a
//! signed margin in millimetres from the worst-case geometry of a design; a
//! negative margin is a violation. Worst case means each dimension is taken at
//! the end of its tolerance band that is least favourable to the condition.
//!
//! Rule constants and the tool catalog live in a [`RuleSet`], which is
//! serialized to JSON and hashed so generated datasets can record the exact
//! policy they were labeled under.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schema::{DesignRecord, ScenarioId, ScenarioSchema};

pub const RULESET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConstants {
    /// R-D1: drillable diameter range.
    pub drill_min_diameter: f64,
    pub drill_max_diameter: f64,
    /// R-D2: depth <= ratio * diameter.
    pub drill_depth_ratio: f64,
    /// R-D4: remaining bottom under a blind hole.
    pub hole_bottom_min: f64,
    pub hole_bottom_diameter_ratio: f64,
    /// R-D5: hole wall to block faces.
    pub hole_wall_min: f64,
    pub hole_wall_diameter_ratio: f64,
    /// R-D7 / R-M7: narrowest producible tolerance band.
    pub min_tolerance_band: f64,
    /// R-M1: radii at or below this are sharp corners.
    pub sharp_corner_radius: f64,
    /// R-M2: depth <= ratio * cutter diameter.
    pub mill_depth_ratio: f64,
    /// R-M5: pocket wall to block faces.
    pub pocket_wall_min: f64,
    pub pocket_wall_depth_ratio: f64,
    /// R-M6: remaining pocket floor.
    pub pocket_bottom_min: f64,
    pub pocket_bottom_size_ratio: f64,
    /// R-C2: web between hole and pocket.
    pub web_min: f64,
    pub web_diameter_ratio: f64,
    /// R-C3: web height may not exceed this multiple of its thickness.
    pub web_slenderness: f64,
}

impl Default for RuleConstants {
    fn default() -> Self {
        RuleConstants {
            drill_min_diameter: 1.0,
            drill_max_diameter: 30.0,
            drill_depth_ratio: 5.0,
            hole_bottom_min: 1.0,
            hole_bottom_diameter_ratio: 0.25,
            hole_wall_min: 1.0,
            hole_wall_diameter_ratio: 0.5,
            min_tolerance_band: 0.1,
            sharp_corner_radius: 0.0,
            mill_depth_ratio: 4.0,
            pocket_wall_min: 1.5,
            pocket_wall_depth_ratio: 0.2,
            pocket_bottom_min: 1.5,
            pocket_bottom_size_ratio: 0.1,
            web_min: 1.0,
            web_diameter_ratio: 0.5,
            web_slenderness: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drill {
    pub diameter: f64,
    pub max_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndMill {
    pub diameter: f64,
    pub flute_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCatalog {
    pub drills: Vec<Drill>,
    pub end_mills: Vec<EndMill>,
}

impl Default for ToolCatalog {
    fn default() -> Self {
        let mut drill_sizes: Vec<f64> = (0..=24).map(|i| 1.0 + 0.5 * i as f64).collect();
        drill_sizes.extend((14..=30).map(|d| d as f64));
        let drills = drill_sizes
            .into_iter()
            .map(|d| Drill { diameter: d, max_depth: (10.0 * d).min(150.0) })
            .collect();
        let end_mills = [1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0, 25.0, 32.0]
            .into_iter()
            .map(|d| EndMill { diameter: d, flute_length: (3.0 * d).min(60.0) })
            .collect();
        ToolCatalog { drills, end_mills }
    }
}

impl ToolCatalog {
    pub fn validate(&self) -> Result<()> {
        let ok_drills = self.drills.windows(2).all(|w| w[0].diameter < w[1].diameter)
            && self.drills.iter().all(|d| d.diameter > 0.0 && d.max_depth > 0.0);
        let ok_mills = self.end_mills.windows(2).all(|w| w[0].diameter < w[1].diameter)
            && self.end_mills.iter().all(|m| m.diameter > 0.0 && m.flute_length > 0.0);
        if !ok_drills || !ok_mills || self.drills.is_empty() || self.end_mills.is_empty() {
            return Err(Error::InvalidArgument(
                "tool catalog diameters must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Largest drill not exceeding the hole diameter.
    pub fn drill_for(&self, diameter: f64) -> Option<Drill> {
        self.drills.iter().rev().find(|d| d.diameter <= diameter + 1e-9).copied()
    }

    /// Largest end mill that fits the internal corner radius.
    pub fn end_mill_for(&self, corner_radius: f64) -> Option<EndMill> {
        self.end_mills
            .iter()
            .rev()
            .find(|m| m.diameter <= 2.0 * corner_radius + 1e-9)
            .copied()
    }
}

/// Drill for a hole: the largest catalog size not exceeding `diameter` that
/// also reaches `depth`.
pub fn select_drill(diameter: f64, depth: f64, catalog: &ToolCatalog) -> Option<Drill> {
    catalog.drill_for(diameter).filter(|d| d.max_depth >= depth)
}

/// End mill for a pocket: the largest catalog cutter that fits the corner
/// radius, provided its flutes reach `depth`.
pub fn select_end_mill(corner_radius: f64, depth: f64, catalog: &ToolCatalog) -> Option<EndMill> {
    catalog.end_mill_for(corner_radius).filter(|m| m.flute_length >= depth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RuleSet {
    pub format_version: u32,
    pub constants: RuleConstants,
    pub catalog: ToolCatalog,
}

impl RuleSet {
    pub fn standard() -> Self {
        RuleSet {
            format_version: RULESET_FORMAT_VERSION,
            constants: RuleConstants::default(),
            catalog: ToolCatalog::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rs: RuleSet = serde_json::from_str(text)?;
        if rs.format_version != RULESET_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: rs.format_version,
                expected: RULESET_FORMAT_VERSION,
            });
        }
        rs.catalog.validate()?;
        Ok(rs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Canonical pretty JSON; this is what [`RuleSet::save`] writes.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("rule set serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_canonical_json())?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_canonical_json().as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Process,
    Structural,
    Tooling,
    Tolerance,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Process => "process",
            Category::Structural => "structural",
            Category::Tooling => "tooling",
            Category::Tolerance => "tolerance",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    pub condition: String,
    pub category: Category,
    pub message: String,
    pub offending_features: Vec<String>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub manufacturable: bool,
    pub violations: Vec<Violation>,
}

impl RuleReport {
    pub fn label(&self) -> u8 {
        u8::from(self.manufacturable)
    }

    pub fn categories(&self) -> Vec<Category> {
        let mut out: Vec<Category> = Vec::new();
        for v in &self.violations {
            if !out.contains(&v.category) {
                out.push(v.category);
            }
        }
        out
    }

    pub fn rule_ids(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for v in &self.violations {
            if !out.contains(&v.rule_id.as_str()) {
                out.push(&v.rule_id);
            }
        }
        out
    }

    pub fn has_rule(&self, rule_id: &str) -> bool {
        self.violations.iter().any(|v| v.rule_id == rule_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

/// Worst-case realization of a toleranced dimension.
pub fn worst_case(nominal: f64, tol_lower: f64, tol_upper: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Max => nominal + tol_upper,
        Direction::Min => nominal + tol_lower,
    }
}

/// A toleranced dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tol {
    pub nom: f64,
    pub ut: f64,
    pub lt: f64,
}

impl Tol {
    fn exact(nom: f64) -> Self {
        Tol { nom, ut: 0.0, lt: 0.0 }
    }

    /// Largest realizable value. An inverted band is read conservatively.
    pub fn hi(&self) -> f64 {
        worst_case(self.nom, self.lt.min(self.ut), self.ut.max(self.lt), Direction::Max)
    }

    pub fn lo(&self) -> f64 {
        worst_case(self.nom, self.lt.min(self.ut), self.ut.max(self.lt), Direction::Min)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HoleDims {
    pub diameter: Tol,
    pub depth: Tol,
    pub x: Tol,
    pub y: Tol,
}

#[derive(Debug, Clone, Copy)]
pub struct PocketDims {
    pub length: Tol,
    pub width: Tol,
    pub radius: f64,
    pub depth: Tol,
    pub x: Tol,
    pub y: Tol,
}

/// Geometry of one design as seen by the rules.
#[derive(Debug, Clone, Copy)]
pub struct Dims {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub hole: Option<HoleDims>,
    pub pocket: Option<PocketDims>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Tolerance bands applied, tolerance-sanity rules active.
    WorstCase,
    /// Nominal geometry only; tolerance-sanity rules skipped.
    Nominal,
}

#[derive(Debug, Clone, Copy)]
struct TolIdx {
    nom: usize,
    ut: usize,
    lt: usize,
}

impl TolIdx {
    fn read(&self, v: &[f64], mode: EvalMode) -> Tol {
        match mode {
            EvalMode::WorstCase => Tol { nom: v[self.nom], ut: v[self.ut], lt: v[self.lt] },
            EvalMode::Nominal => Tol::exact(v[self.nom]),
        }
    }
}

#[derive(Debug, Clone)]
struct Layout {
    b: [usize; 3],
    hole: Option<[TolIdx; 4]>,
    pocket: Option<([TolIdx; 2], usize, [TolIdx; 3])>,
}

impl Layout {
    fn new(schema: &ScenarioSchema) -> Self {
        let ix = |n: &str| schema.index_of(n).expect("schema feature");
        let tol = |n: &str| TolIdx {
            nom: ix(n),
            ut: ix(&format!("{n}_UT")),
            lt: ix(&format!("{n}_LT")),
        };
        let id = schema.scenario_id;
        Layout {
            b: [ix("B1"), ix("B2"), ix("B3")],
            hole: id.has_hole().then(|| [tol("H1"), tol("H2"), tol("H3"), tol("H4")]),
            pocket: id
                .has_pocket()
                .then(|| ([tol("P1"), tol("P2")], ix("P3"), [tol("P4"), tol("P5"), tol("P6")])),
        }
    }

    fn dims(&self, v: &[f64], mode: EvalMode) -> Dims {
        Dims {
            b1: v[self.b[0]],
            b2: v[self.b[1]],
            b3: v[self.b[2]],
            hole: self.hole.map(|h| HoleDims {
                diameter: h[0].read(v, mode),
                depth: h[1].read(v, mode),
                x: h[2].read(v, mode),
                y: h[3].read(v, mode),
            }),
            pocket: self.pocket.map(|(lw, r, dxy)| PocketDims {
                length: lw[0].read(v, mode),
                width: lw[1].read(v, mode),
                radius: v[r],
                depth: dxy[0].read(v, mode),
                x: dxy[1].read(v, mode),
                y: dxy[2].read(v, mode),
            }),
        }
    }
}

type MarginFn = fn(&Dims, &RuleSet) -> f64;

/// One enumerated violation condition.
#[derive(Clone)]
pub struct Condition {
    pub id: String,
    pub rule_id: &'static str,
    pub category: Category,
    pub description: String,
    /// Feature a boundary sampler solves for; `None` excludes the condition.
    pub governing: Option<String>,
    pub features: Vec<String>,
    pub is_tolerance: bool,
    margin: MarginFn,
}

impl fmt::Debug for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Condition").field("id", &self.id).finish()
    }
}

impl Condition {
    pub fn margin(&self, dims: &Dims, rules: &RuleSet) -> f64 {
        (self.margin)(dims, rules)
    }
}

fn cond(
    id: &str,
    rule_id: &'static str,
    category: Category,
    description: &str,
    governing: Option<&str>,
    features: &[&str],
    margin: MarginFn,
) -> Condition {
    Condition {
        id: id.to_string(),
        rule_id,
        category,
        description: description.to_string(),
        governing: governing.map(str::to_string),
        features: features.iter().map(|s| s.to_string()).collect(),
        is_tolerance: false,
        margin,
    }
}

fn hole(d: &Dims) -> &HoleDims {
    d.hole.as_ref().expect("hole geometry")
}

fn pocket(d: &Dims) -> &PocketDims {
    d.pocket.as_ref().expect("pocket geometry")
}

fn hole_wall_req(h: &HoleDims, r: &RuleSet) -> f64 {
    r.constants.hole_wall_min.max(r.constants.hole_wall_diameter_ratio * h.diameter.hi())
}

fn hole_walls(d: &Dims) -> [f64; 4] {
    let h = hole(d);
    let rad = 0.5 * h.diameter.hi();
    [
        h.x.lo() - rad,
        d.b1 - h.x.hi() - rad,
        h.y.lo() - rad,
        d.b2 - h.y.hi() - rad,
    ]
}

fn pocket_walls(d: &Dims) -> [f64; 4] {
    let p = pocket(d);
    [
        p.x.lo(),
        d.b1 - (p.x.hi() + p.length.hi()),
        p.y.lo(),
        d.b2 - (p.y.hi() + p.width.hi()),
    ]
}

fn pocket_wall_req(p: &PocketDims, r: &RuleSet) -> f64 {
    r.constants.pocket_wall_min.max(r.constants.pocket_wall_depth_ratio * p.depth.hi())
}

/// Clearance between the hole wall and the pocket wall (negative on overlap).
pub fn hole_pocket_web(d: &Dims) -> f64 {
    let h = hole(d);
    let p = pocket(d);
    let (rx0, rx1) = (p.x.lo(), p.x.hi() + p.length.hi());
    let (ry0, ry1) = (p.y.lo(), p.y.hi() + p.width.hi());
    let dx = (rx0 - h.x.hi()).max(h.x.lo() - rx1).max(0.0);
    let dy = (ry0 - h.y.hi()).max(h.y.lo() - ry1).max(0.0);
    dx.hypot(dy) - 0.5 * h.diameter.hi()
}

fn tol_conditions(rule_id: &'static str, dims: &[&str]) -> Vec<Condition> {
    let mut out = Vec::new();
    for &name in dims {
        let ut = format!("{name}_UT");
        let lt = format!("{name}_LT");
        let (inv, band) = tol_margin_fns(name);
        let mut a = cond(
            &format!("{rule_id}.{name}.inverted"),
            rule_id,
            Category::Tolerance,
            &format!("{name} upper tolerance below lower tolerance"),
            Some(&ut),
            &[&ut, &lt],
            inv,
        );
        a.is_tolerance = true;
        let mut b = cond(
            &format!("{rule_id}.{name}.band"),
            rule_id,
            Category::Tolerance,
            &format!("{name} tolerance band narrower than process capability"),
            Some(&ut),
            &[&ut, &lt],
            band,
        );
        b.is_tolerance = true;
        out.push(a);
        out.push(b);
    }
    out
}

macro_rules! tol_fns {
    ($($name:literal => $get:expr),* $(,)?) => {
        fn tol_margin_fns(name: &str) -> (MarginFn, MarginFn) {
            match name {
                $($name => (
                    |d: &Dims, _r: &RuleSet| { let t: Tol = ($get)(d); t.ut - t.lt },
                    |d: &Dims, r: &RuleSet| { let t: Tol = ($get)(d); t.ut - t.lt - r.constants.min_tolerance_band },
                ),)*
                _ => unreachable!("no tolerance for {name}"),
            }
        }
    };
}

tol_fns! {
    "H1" => |d: &Dims| hole(d).diameter,
    "H2" => |d: &Dims| hole(d).depth,
    "H3" => |d: &Dims| hole(d).x,
    "H4" => |d: &Dims| hole(d).y,
    "P1" => |d: &Dims| pocket(d).length,
    "P2" => |d: &Dims| pocket(d).width,
    "P4" => |d: &Dims| pocket(d).depth,
    "P5" => |d: &Dims| pocket(d).x,
    "P6" => |d: &Dims| pocket(d).y,
}

fn drilling_conditions() -> Vec<Condition> {
    use Category::*;
    let mut c = vec![
        cond("R-D1.min", "R-D1", Tooling, "worst-case hole diameter below smallest twist drill",
            Some("H1"), &["H1", "H1_LT"],
            |d, r| hole(d).diameter.lo() - r.constants.drill_min_diameter),
        cond("R-D1.max", "R-D1", Tooling, "worst-case hole diameter above largest twist drill",
            Some("H1"), &["H1", "H1_UT"],
            |d, r| r.constants.drill_max_diameter - hole(d).diameter.hi()),
        cond("R-D2", "R-D2", Process, "hole depth exceeds depth-to-diameter ratio",
            Some("H2"), &["H2", "H2_UT", "H1", "H1_LT"],
            |d, r| {
                let h = hole(d);
                r.constants.drill_depth_ratio * h.diameter.lo() - h.depth.hi()
            }),
        cond("R-D3.none", "R-D3", Tooling, "no catalog drill for the hole diameter",
            None, &["H1"],
            |d, r| match r.catalog.drill_for(hole(d).diameter.nom) {
                Some(_) => 0.0f64.max(hole(d).diameter.nom - r.catalog.drills[0].diameter),
                None => hole(d).diameter.nom - r.catalog.drills[0].diameter,
            }),
        cond("R-D3.reach", "R-D3", Tooling, "hole deeper than the drill can reach",
            Some("H2"), &["H2", "H2_UT", "H1"],
            |d, r| {
                let h = hole(d);
                match r.catalog.drill_for(h.diameter.nom) {
                    Some(t) => t.max_depth - h.depth.hi(),
                    None => -h.depth.hi(),
                }
            }),
        cond("R-D4", "R-D4", Structural, "blind hole leaves too little bottom material",
            Some("H2"), &["B3", "H2", "H2_UT", "H1"],
            |d, r| {
                let h = hole(d);
                if h.depth.nom >= d.b3 {
                    return f64::INFINITY;
                }
                let req = r.constants.hole_bottom_min
                    .max(r.constants.hole_bottom_diameter_ratio * h.diameter.hi());
                d.b3 - h.depth.hi() - req
            }),
    ];
    let faces: [(&str, &str, &str, &str); 4] = [
        ("x_lo", "H3", "H3_LT", "B1"),
        ("x_hi", "H3", "H3_UT", "B1"),
        ("y_lo", "H4", "H4_LT", "B2"),
        ("y_hi", "H4", "H4_UT", "B2"),
    ];
    let wall_fns: [MarginFn; 4] = [
        |d, r| hole_walls(d)[0] - hole_wall_req(hole(d), r),
        |d, r| hole_walls(d)[1] - hole_wall_req(hole(d), r),
        |d, r| hole_walls(d)[2] - hole_wall_req(hole(d), r),
        |d, r| hole_walls(d)[3] - hole_wall_req(hole(d), r),
    ];
    let inside_fns: [MarginFn; 4] = [
        |d, _| hole_walls(d)[0],
        |d, _| hole_walls(d)[1],
        |d, _| hole_walls(d)[2],
        |d, _| hole_walls(d)[3],
    ];
    for (i, (face, pos, tol, block)) in faces.iter().enumerate() {
        c.push(cond(
            &format!("R-D5.{face}"), "R-D5", Structural,
            &format!("hole wall to {face} block face thinner than minimum"),
            Some(pos), &[pos, tol, "H1", block], wall_fns[i],
        ));
    }
    for (i, (face, pos, tol, block)) in faces.iter().enumerate() {
        c.push(cond(
            &format!("R-D6.{face}"), "R-D6", Process,
            &format!("hole breaks through the {face} block face"),
            Some(pos), &[pos, tol, "H1", block], inside_fns[i],
        ));
    }
    c.extend(tol_conditions("R-D7", &["H1", "H2", "H3", "H4"]));
    c
}

fn milling_conditions() -> Vec<Condition> {
    use Category::*;
    let mut c = vec![
        cond("R-M1.sharp", "R-M1", Process, "sharp internal pocket corner cannot be cut by a rotating end mill",
            None, &["P3"],
            |d, r| {
                let m = pocket(d).radius - r.constants.sharp_corner_radius;
                if m > 0.0 { m } else { m - 1e-9 }
            }),
        cond("R-M1.tool", "R-M1", Process, "corner radius smaller than the smallest end mill",
            Some("P3"), &["P3"],
            |d, r| 2.0 * pocket(d).radius - r.catalog.end_mills[0].diameter),
        cond("R-M1.fit", "R-M1", Process, "corner radius too large for pocket size",
            Some("P3"), &["P3", "P1", "P2", "P1_LT", "P2_LT"],
            |d, _| {
                let p = pocket(d);
                p.length.lo().min(p.width.lo()) - 2.0 * p.radius
            }),
        cond("R-M2", "R-M2", Tooling, "pocket depth exceeds depth-to-cutter-diameter ratio",
            Some("P4"), &["P4", "P4_UT", "P3"],
            |d, r| {
                let p = pocket(d);
                match r.catalog.end_mill_for(p.radius) {
                    Some(m) => r.constants.mill_depth_ratio * m.diameter - p.depth.hi(),
                    None => -p.depth.hi(),
                }
            }),
        cond("R-M3", "R-M3", Tooling, "no catalog end mill reaches the pocket floor",
            Some("P4"), &["P4", "P4_UT", "P3"],
            |d, r| {
                let p = pocket(d);
                match r.catalog.end_mill_for(p.radius) {
                    Some(m) => m.flute_length - p.depth.hi(),
                    None => -p.depth.hi(),
                }
            }),
    ];
    let faces: [(&str, &str, &str, &str, &str); 4] = [
        ("x_lo", "P5", "P5_LT", "B1", "P1"),
        ("x_hi", "P5", "P5_UT", "B1", "P1"),
        ("y_lo", "P6", "P6_LT", "B2", "P2"),
        ("y_hi", "P6", "P6_UT", "B2", "P2"),
    ];
    let inside_fns: [MarginFn; 4] = [
        |d, _| pocket_walls(d)[0],
        |d, _| pocket_walls(d)[1],
        |d, _| pocket_walls(d)[2],
        |d, _| pocket_walls(d)[3],
    ];
    let wall_fns: [MarginFn; 4] = [
        |d, r| pocket_walls(d)[0] - pocket_wall_req(pocket(d), r),
        |d, r| pocket_walls(d)[1] - pocket_wall_req(pocket(d), r),
        |d, r| pocket_walls(d)[2] - pocket_wall_req(pocket(d), r),
        |d, r| pocket_walls(d)[3] - pocket_wall_req(pocket(d), r),
    ];
    for (i, (face, pos, tol, block, size)) in faces.iter().enumerate() {
        c.push(cond(
            &format!("R-M4.{face}"), "R-M4", Process,
            &format!("pocket extends past the {face} block face"),
            Some(pos), &[pos, tol, block, size], inside_fns[i],
        ));
    }
    for (i, (face, pos, tol, block, size)) in faces.iter().enumerate() {
        c.push(cond(
            &format!("R-M5.{face}"), "R-M5", Structural,
            &format!("pocket wall at {face} block face thinner than minimum"),
            Some(pos), &[pos, tol, block, size, "P4"], wall_fns[i],
        ));
    }
    c.push(cond("R-M6", "R-M6", Structural, "pocket floor thinner than minimum",
        Some("P4"), &["B3", "P4", "P4_UT"],
        |d, r| {
            let p = pocket(d);
            let req = r.constants.pocket_bottom_min
                .max(r.constants.pocket_bottom_size_ratio * p.length.nom.min(p.width.nom));
            d.b3 - p.depth.hi() - req
        }));
    c.extend(tol_conditions("R-M7", &["P1", "P2", "P4", "P5", "P6"]));
    c
}

fn interaction_conditions() -> Vec<Condition> {
    use Category::*;
    vec![
        cond("R-C1", "R-C1", Process, "hole and pocket footprints overlap",
            Some("H3"), &["H3", "H4", "H1", "P5", "P6", "P1", "P2"],
            |d, _| hole_pocket_web(d)),
        cond("R-C2", "R-C2", Structural, "web between hole and pocket thinner than minimum",
            Some("H3"), &["H3", "H4", "H1", "P5", "P6", "P1", "P2"],
            |d, r| {
                let req = r.constants.web_min
                    .max(r.constants.web_diameter_ratio * hole(d).diameter.hi());
                hole_pocket_web(d) - req
            }),
        cond("R-C3", "R-C3", Structural, "web between hole and pocket too slender for the combined depth",
            Some("H3"), &["H3", "H4", "H1", "H2", "P4", "P5", "P6"],
            |d, r| {
                let height = hole(d).depth.hi().min(pocket(d).depth.hi());
                r.constants.web_slenderness * hole_pocket_web(d) - height
            }),
    ]
}

/// Enumerated conditions for a scenario, in evaluation order.
pub fn conditions_for(id: ScenarioId) -> Vec<Condition> {
    match id {
        ScenarioId::Drilling => drilling_conditions(),
        ScenarioId::Milling => milling_conditions(),
        ScenarioId::Combined => {
            let mut c = drilling_conditions();
            c.extend(milling_conditions());
            c.extend(interaction_conditions());
            c
        }
    }
}

struct ScenarioRules {
    schema: ScenarioSchema,
    layout: Layout,
    conditions: Vec<Condition>,
    governing_idx: Vec<Option<usize>>,
}

/// Stateless evaluator over an immutable rule set.
pub struct RuleEngine {
    rules: RuleSet,
    hash: String,
    scenarios: Vec<ScenarioRules>,
}

impl fmt::Debug for RuleEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RuleEngine").field("hash", &self.hash).finish()
    }
}

impl Default for RuleEngine {
    fn default() -> Self {
        RuleEngine::new(RuleSet::standard())
    }
}

impl RuleEngine {
    pub fn new(rules: RuleSet) -> Self {
        let hash = rules.hash();
        let scenarios = ScenarioId::ALL
            .iter()
            .map(|&id| {
                let schema = ScenarioSchema::for_scenario(id);
                let conditions = conditions_for(id);
                let governing_idx = conditions
                    .iter()
                    .map(|c| c.governing.as_ref().and_then(|g| schema.index_of(g)))
                    .collect();
                ScenarioRules { layout: Layout::new(&schema), schema, conditions, governing_idx }
            })
            .collect();
        RuleEngine { rules, hash, scenarios }
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn rule_hash(&self) -> &str {
        &self.hash
    }

    fn scenario(&self, id: ScenarioId) -> &ScenarioRules {
        &self.scenarios[id as usize]
    }

    pub fn schema(&self, id: ScenarioId) -> &ScenarioSchema {
        &self.scenario(id).schema
    }

    pub fn conditions(&self, id: ScenarioId) -> &[Condition] {
        &self.scenario(id).conditions
    }

    /// Schema index of the feature a condition's boundary is solved for.
    pub fn governing_index(&self, id: ScenarioId, condition: usize) -> Option<usize> {
        self.scenario(id).governing_idx[condition]
    }

    pub fn dims(&self, id: ScenarioId, values: &[f64], mode: EvalMode) -> Dims {
        self.scenario(id).layout.dims(values, mode)
    }

    /// Margin of one condition on raw schema-ordered values.
    pub fn margin(&self, id: ScenarioId, condition: usize, values: &[f64]) -> f64 {
        let s = self.scenario(id);
        let dims = s.layout.dims(values, EvalMode::WorstCase);
        s.conditions[condition].margin(&dims, &self.rules)
    }

    /// Fast feasibility test without building a report.
    pub fn is_manufacturable(&self, id: ScenarioId, values: &[f64]) -> bool {
        let s = self.scenario(id);
        let dims = s.layout.dims(values, EvalMode::WorstCase);
        s.conditions.iter().all(|c| c.margin(&dims, &self.rules) >= 0.0)
    }

    pub fn evaluate(&self, record: &DesignRecord, mode: EvalMode) -> Result<RuleReport> {
        let s = self.scenario(record.scenario);
        record.check_schema(&s.schema)?;
        let dims = s.layout.dims(&record.values, mode);
        let mut violations = Vec::new();
        for c in &s.conditions {
            if mode == EvalMode::Nominal && c.category == Category::Tolerance {
                continue;
            }
            let m = c.margin(&dims, &self.rules);
            if m < 0.0 {
                violations.push(Violation {
                    rule_id: c.rule_id.to_string(),
                    condition: c.id.clone(),
                    category: c.category,
                    message: format!("{} (margin {:.3} mm)", c.description, m),
                    offending_features: c.features.clone(),
                    margin: m,
                });
            }
        }
        Ok(RuleReport { manufacturable: violations.is_empty(), violations })
    }

    pub fn check(&self, record: &DesignRecord) -> Result<RuleReport> {
        self.evaluate(record, EvalMode::WorstCase)
    }

    fn check_as(&self, id: ScenarioId, record: &DesignRecord) -> Result<RuleReport> {
        if record.scenario != id {
            return Err(Error::SchemaMismatch(format!(
                "expected a {id} record, got {}",
                record.scenario
            )));
        }
        self.check(record)
    }

    pub fn check_drilling(&self, record: &DesignRecord) -> Result<RuleReport> {
        self.check_as(ScenarioId::Drilling, record)
    }

    pub fn check_milling(&self, record: &DesignRecord) -> Result<RuleReport> {
        self.check_as(ScenarioId::Milling, record)
    }

    pub fn check_combined(&self, record: &DesignRecord) -> Result<RuleReport> {
        self.check_as(ScenarioId::Combined, record)
    }

    /// Value of the governing feature at which `condition` changes state,
    /// searched inside `[lo, hi]` and nearest to the record's current value.
    pub fn solve_threshold(
        &self,
        id: ScenarioId,
        condition: usize,
        values: &[f64],
        lo: f64,
        hi: f64,
    ) -> Option<f64> {
        let g = self.governing_index(id, condition)?;
        let mut work = values.to_vec();
        let current = values[g];
        let mut eval = |x: f64| {
            work[g] = x;
            self.margin(id, condition, &work) >= 0.0
        };
        let here = eval(current);
        let mut best: Option<f64> = None;
        for end in [lo, hi] {
            if end == current || eval(end) == here {
                continue;
            }
            let (mut a, mut b) = (current, end);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if eval(mid) == here {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let root = 0.5 * (a + b);
            if best.is_none_or(|bst| (root - current).abs() < (bst - current).abs()) {
                best = Some(root);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn drilling(over: &[(&str, f64)]) -> DesignRecord {
        let s = ScenarioSchema::for_scenario(ScenarioId::Drilling);
        let mut r = DesignRecord::new(
            ScenarioId::Drilling,
            s.features
                .iter()
                .map(|f| match f.name.as_str() {
                    "B1" => 100.0,
                    "B2" => 80.0,
                    "B3" => 50.0,
                    "H1" => 5.0,
                    "H2" => 20.0,
                    "H3" => 50.0,
                    "H4" => 40.0,
                    n if n.ends_with("_UT") => 0.1,
                    _ => -0.1,
                })
                .collect(),
        );
        for (n, v) in over {
            r.set(&s, n, *v).unwrap();
        }
        r
    }

    fn milling(over: &[(&str, f64)]) -> DesignRecord {
        let s = ScenarioSchema::for_scenario(ScenarioId::Milling);
        let mut r = DesignRecord::new(
            ScenarioId::Milling,
            s.features
                .iter()
                .map(|f| match f.name.as_str() {
                    "B1" => 100.0,
                    "B2" => 80.0,
                    "B3" => 50.0,
                    "P1" => 40.0,
                    "P2" => 30.0,
                    "P3" => 5.0,
                    "P4" => 20.0,
                    "P5" => 20.0,
                    "P6" => 20.0,
                    n if n.ends_with("_UT") => 0.1,
                    _ => -0.1,
                })
                .collect(),
        );
        for (n, v) in over {
            r.set(&s, n, *v).unwrap();
        }
        r
    }

    #[test]
    fn worst_case_examples() {
        assert!((worst_case(20.0, -0.1, 0.1, Direction::Max) - 20.1).abs() < 1e-12);
        assert!((worst_case(20.0, -0.1, 0.1, Direction::Min) - 19.9).abs() < 1e-12);
        assert_eq!(worst_case(20.0, 0.0, 0.0, Direction::Max), 20.0);
    }

    #[test]
    fn drilling_depth_ratio_case() {
        let e = RuleEngine::default();
        assert!(e.check_drilling(&drilling(&[])).unwrap().manufacturable);
        let deep = e.check_drilling(&drilling(&[("H2", 30.0)])).unwrap();
        assert!(deep.has_rule("R-D2"));
        assert!(!e.check_drilling(&drilling(&[("H2", 20.0)])).unwrap().has_rule("R-D2"));
    }

    #[test]
    fn hole_near_edge_breaks_wall() {
        let e = RuleEngine::default();
        let r = e.check_drilling(&drilling(&[("H3", 1.0)])).unwrap();
        assert!(r.has_rule("R-D5"));
        assert!(r.has_rule("R-D6"));
    }

    #[test]
    fn through_hole_skips_bottom_rule() {
        let e = RuleEngine::default();
        let r = e.check_drilling(&drilling(&[("B3", 20.0), ("H2", 20.0)])).unwrap();
        assert!(!r.has_rule("R-D4"));
        let r = e.check_drilling(&drilling(&[("B3", 20.5), ("H2", 20.0)])).unwrap();
        assert!(r.has_rule("R-D4"));
    }

    #[test]
    fn inverted_tolerance_is_reported_not_thrown() {
        let e = RuleEngine::default();
        let r = e.check_drilling(&drilling(&[("H2_UT", -0.2), ("H2_LT", 0.2)])).unwrap();
        assert!(r.violations.iter().any(|v| v.condition == "R-D7.H2.inverted"));
        let r = e.check_drilling(&drilling(&[("H1_UT", 0.02), ("H1_LT", -0.02)])).unwrap();
        assert!(r.violations.iter().any(|v| v.condition == "R-D7.H1.band"));
    }

    #[test]
    fn milling_cases() {
        let e = RuleEngine::default();
        assert!(e.check_milling(&milling(&[])).unwrap().manufacturable);
        let sharp = e.check_milling(&milling(&[("P3", 0.0)])).unwrap();
        assert!(sharp.has_rule("R-M1"));
        let ratio = e.check_milling(&milling(&[("P3", 2.5), ("P4", 25.0)])).unwrap();
        assert!(ratio.has_rule("R-M2"));
        let thin = e.check_milling(&milling(&[("P6", 1.0)])).unwrap();
        assert!(thin.has_rule("R-M5"));
        assert_eq!(
            thin.violations.iter().find(|v| v.rule_id == "R-M5").unwrap().category,
            Category::Structural
        );
        assert!(!e.check_milling(&milling(&[("P6", 7.0)])).unwrap().has_rule("R-M5"));
        let floor = e.check_milling(&milling(&[("P4", 49.0)])).unwrap();
        assert!(floor.has_rule("R-M6"));
    }

    #[test]
    fn tool_selection() {
        let cat = ToolCatalog::default();
        assert_eq!(select_end_mill(2.5, 10.0, &cat).unwrap().diameter, 5.0);
        assert_eq!(select_end_mill(5.0, 10.0, &cat).unwrap().diameter, 10.0);
        assert!(select_end_mill(2.5, 25.0, &cat).is_none());
        assert!(select_drill(0.4, 2.0, &cat).is_none());
        assert_eq!(select_drill(5.0, 20.0, &cat).unwrap().diameter, 5.0);
        assert_eq!(select_drill(5.3, 20.0, &cat).unwrap().diameter, 5.0);
        assert!(select_drill(5.0, 60.0, &cat).is_none());
    }

    #[test]
    fn categories_are_consistent_per_rule() {
        for id in ScenarioId::ALL {
            let mut seen: HashMap<&str, Category> = HashMap::new();
            for c in conditions_for(id) {
                let prev = seen.insert(c.rule_id, c.category);
                assert!(prev.is_none() || prev == Some(c.category), "{}", c.id);
            }
        }
    }

    #[test]
    fn condition_counts() {
        let d = conditions_for(ScenarioId::Drilling).len();
        let m = conditions_for(ScenarioId::Milling).len();
        let c = conditions_for(ScenarioId::Combined).len();
        assert!(d >= 20, "{d}");
        assert!(m >= 20, "{m}");
        assert!(c > d + m);
        let mut ids: Vec<_> = conditions_for(ScenarioId::Combined).into_iter().map(|c| c.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), c);
    }

    #[test]
    fn threshold_solver_finds_depth_ratio() {
        let e = RuleEngine::default();
        let rec = drilling(&[("H1_LT", 0.0), ("H2_UT", 0.0), ("H1_UT", 0.1), ("H2_LT", -0.1)]);
        let idx = e
            .conditions(ScenarioId::Drilling)
            .iter()
            .position(|c| c.id == "R-D2")
            .unwrap();
        let t = e.solve_threshold(ScenarioId::Drilling, idx, &rec.values, 4.0, 50.0).unwrap();
        assert!((t - 25.0).abs() < 1e-9, "{t}");
    }

    #[test]
    fn ruleset_json_round_trip_and_hash() {
        let rs = RuleSet::standard();
        let back = RuleSet::from_json(&rs.to_canonical_json()).unwrap();
        assert_eq!(rs, back);
        assert_eq!(rs.hash(), back.hash());
        let mut other = rs.clone();
        other.constants.drill_depth_ratio = 6.0;
        assert_ne!(rs.hash(), other.hash());
        let mut bad = rs.clone();
        bad.format_version = 9;
        assert!(matches!(
            RuleSet::from_json(&serde_json::to_string(&bad).unwrap()),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn schema_mismatch_is_error() {
        let e = RuleEngine::default();
        let mut r = drilling(&[]);
        assert!(e.check_milling(&r).is_err());
        r.values.pop();
        assert!(e.check(&r).is_err());
    }
}
