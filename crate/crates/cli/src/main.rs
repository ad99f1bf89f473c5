use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kan_dfm::baselines::{self, LrConfig, MlpConfig};
use kan_dfm::datagen::{self, GenConfig};
use kan_dfm::interpret;
use kan_dfm::kan::KanModel;
use kan_dfm::schema::ScenarioId;
use kan_dfm::trainer::{self, OptimizerKind, SearchSpace, TrainConfig};
use kan_dfm_cli::service::{self, AppState};
use kan_dfm_cli::{background_path, centre_background, load_rules, parse_design, RULES_ENV};

#[derive(Parser)]
#[command(name = "kan-dfm", version, about = "Manufacturability assessment with Kolmogorov-Arnold networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset (CSV plus manifest).
    Generate(GenerateArgs),
    /// Train a model on a dataset CSV.
    Train(TrainArgs),
    /// Score a model on a labelled CSV.
    Eval(EvalArgs),
    /// Feature attributions for one design.
    Explain(ExplainArgs),
    /// Export the learned spline curves.
    Splines(SplinesArgs),
    /// Export the two-neuron latent projection of a dataset.
    Latent(LatentArgs),
    /// Learning curve over training-set sizes.
    Curve(CurveArgs),
    /// Cross-validated hyperparameter grid search.
    Gridsearch(GridArgs),
    /// Compare the KAN with the MLP and logistic-regression baselines.
    Bench(BenchArgs),
    /// Serve models over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    scenario: ScenarioId,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    boundary_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enforce a 50/50 class split.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    balance: bool,
    /// Rule constants JSON (overridden by KAN_DFM_RULES).
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value = "dataset.csv")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Hidden widths, comma separated.
    #[arg(long, default_value = "16,2", value_delimiter = ',')]
    arch: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    grid: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = OptimizerKind::Lbfgs)]
    optimizer: OptimizerKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
}

impl ModelArgs {
    fn config(&self) -> TrainConfig {
        let mut c = match self.optimizer {
            OptimizerKind::Adam => TrainConfig::adam(),
            OptimizerKind::Lbfgs => TrainConfig::default(),
        };
        c.hidden = self.arch.clone();
        c.grid = self.grid;
        c.order_k = self.k;
        c.seed = self.seed;
        if let Some(v) = self.max_steps {
            c.max_steps = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.patience {
            c.patience = v;
        }
        c
    }
}

fn parse_widths(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|w| w.trim().parse::<usize>().map_err(|e| format!("bad width `{w}`: {e}")))
        .collect()
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Per-step trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Design JSON: `{"scenario_id": .., "params": {..}}`.
    #[arg(long)]
    input: PathBuf,
    /// Background CSV; defaults to the sample saved with the model.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Sampled permutations (default 200 per feature).
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = kan_dfm_cli::DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplinesArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[arg(long, default_value = "splines.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct LatentArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "latent.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training-set sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "curve.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    /// Architectures separated by `;`, widths by `,`.
    #[arg(long, default_value = "16,2")]
    archs: String,
    #[arg(long, default_value = "3", value_delimiter = ',')]
    grids: Vec<usize>,
    #[arg(long, default_value = "3", value_delimiter = ',')]
    ks: Vec<usize>,
    #[arg(long, default_value = "lbfgs", value_delimiter = ',')]
    optimizers: Vec<OptimizerKind>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value = "gridsearch.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "models")]
    model_dir: PathBuf,
    /// Rule constants JSON (overridden by KAN_DFM_RULES).
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Concurrent attribution jobs.
    #[arg(long, default_value_t = 2)]
    explain_workers: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn load_data(path: &Path) -> Result<(ScenarioId, Vec<kan_dfm::schema::DesignRecord>)> {
    datagen::load_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<KanModel> {
    KanModel::load(path).with_context(|| format!("loading {}", path.display()))
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let engine = load_rules(a.rules.as_deref())?;
    let cfg = GenConfig { scenario: a.scenario, n_total: a.n, boundary_fraction: a.boundary_frac, balance: a.balance, seed: a.seed };
    let (records, manifest) = datagen::generate_dataset(&engine, &cfg)?;
    datagen::save_csv(&records, a.scenario, &a.out)?;
    manifest.save(manifest_path(&a.out))?;
    eprintln!(
        "wrote {} records ({} manufacturable) to {}",
        records.len(),
        manifest.counts.manufacturable,
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let (_, records) = load_data(&a.data)?;
    let cfg = a.model.config();
    let outcome = trainer::train(&records, &cfg)?;
    outcome.model.save(&a.out)?;
    let train_records: Vec<_> = outcome.train_indices.iter().map(|&i| records[i].clone()).collect();
    let bg = interpret::sample_background(&train_records, cfg.seed);
    datagen::save_csv(&bg, outcome.model.scenario_id, background_path(&a.out))?;
    if let Some(t) = &a.trace {
        outcome.trace.write_csv(create(t)?)?;
    }
    eprintln!(
        "{}: {} steps, best step {}, stop {:?}",
        cfg.label(),
        outcome.trace.steps,
        outcome.trace.best_step,
        outcome.trace.stop_reason
    );
    write_json(&outcome.test_report, None)
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (_, records) = load_data(&a.data)?;
    let report = trainer::evaluate_model(&model, &records)?;
    write_json(&report, a.out.as_deref())
}

fn explain(a: ExplainArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let body: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.input.display()))?;
    let record = parse_design(&body, Some(model.scenario_id))?;
    let background = match &a.background {
        Some(p) => load_data(p)?.1,
        None => {
            let p = background_path(&a.model);
            if p.exists() {
                load_data(&p)?.1
            } else {
                centre_background(&model)
            }
        }
    };
    let resp = kan_dfm_cli::explain(&model, &record, &background, a.budget, a.top_k, a.seed)?;
    write_json(&resp, a.out.as_deref())
}

fn splines(a: SplinesArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let curves = interpret::export_splines(&model, a.points)?;
    let mut w = create(&a.out)?;
    interpret::write_splines_csv(&curves, &mut w)?;
    w.flush()?;
    for (name, score) in interpret::feature_activity(&model, &curves).iter().take(5) {
        eprintln!("{name}\t{score:.6}");
    }
    Ok(())
}

fn latent(a: LatentArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (_, records) = load_data(&a.data)?;
    let rows = interpret::export_latent(&model, &records)?;
    let mut w = create(&a.out)?;
    interpret::write_latent_csv(&rows, &mut w)?;
    w.flush()?;
    let labelled: Vec<_> = rows.iter().filter_map(|r| r.true_label.map(|t| ((r.u, r.v), t))).collect();
    if !labelled.is_empty() {
        let (pts, ys): (Vec<_>, Vec<_>) = labelled.into_iter().unzip();
        if let Ok(s) = interpret::silhouette(&pts, &ys) {
            eprintln!("silhouette {s:.4}");
        }
    }
    Ok(())
}

fn curve(a: CurveArgs) -> Result<()> {
    let (_, records) = load_data(&a.data)?;
    if a.sizes.is_empty() {
        bail!("--sizes needs at least one value");
    }
    let points = trainer::learning_curve(&records, &a.sizes, &a.model.config())?;
    let mut w = create(&a.out)?;
    writeln!(w, "size,auc,f1,accuracy,precision,recall,log_loss,seconds,test_hash")?;
    for p in &points {
        let r = &p.report;
        writeln!(w, "{},{},{},{},{},{},{},{:.3},{}", p.size, r.auc, r.f1, r.accuracy, r.precision, r.recall, r.log_loss, p.seconds, p.test_hash)?;
    }
    w.flush()?;
    Ok(())
}

fn gridsearch(a: GridArgs) -> Result<()> {
    let (_, records) = load_data(&a.data)?;
    let archs = a.archs.split(';').map(parse_widths).collect::<Result<Vec<_>, _>>().map_err(anyhow::Error::msg)?;
    let space = SearchSpace { archs, grids: a.grids, ks: a.ks, optimizers: a.optimizers };
    let mut base = TrainConfig::default();
    if let Some(m) = a.max_steps {
        base.max_steps = m;
    }
    let results = trainer::grid_search(&records, &space, a.folds, a.seed, &base)?;
    let mut w = create(&a.out)?;
    writeln!(w, "rank,config,mean_auc,mean_f1,fold_aucs")?;
    for r in &results {
        let folds: Vec<String> = r.fold_aucs.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},\"{}\",{},{},\"{}\"", r.rank, r.config.label(), r.mean_auc, r.mean_f1, folds.join(";"))?;
    }
    w.flush()?;
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let (_, records) = load_data(&a.data)?;
    let kan = TrainConfig { seed: a.seed, ..TrainConfig::default() };
    let mlp = MlpConfig { seed: a.seed, ..MlpConfig::default() };
    let rows = baselines::benchmark(&records, &kan, &mlp, &LrConfig::default())?;
    let mut w = create(&a.out)?;
    baselines::write_bench_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    if std::env::var_os(RULES_ENV).is_some() && a.rules.is_some() {
        eprintln!("{RULES_ENV} overrides --rules");
    }
    let engine = load_rules(a.rules.as_deref())?;
    let models = service::load_models(&a.model_dir).with_context(|| format!("loading models from {}", a.model_dir.display()))?;
    for m in &models {
        eprintln!("loaded {} ({})", m.id, m.model.scenario_id);
    }
    let state = Arc::new(AppState::new(models, engine, a.explain_workers));
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse()?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, service::router(state)).await?;
        Ok(())
    })
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Explain(a) => explain(a),
        Command::Splines(a) => splines(a),
        Command::Latent(a) => latent(a),
        Command::Curve(a) => curve(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
