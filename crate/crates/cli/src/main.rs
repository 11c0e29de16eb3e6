use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dklm::datagen::Syd4Params;
use dklm::pipeline::{self, sweep, write_sweep_csv};
use dklm::{io, metrics, BootstrapKind, Error, Input, NystromSetting, PipelineConfig, SweepGrid, SyntheticSpec};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "dklm", version, about = "Kernel-learning subspace clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write labels, affinity, history and report.
    Cluster(RunArgs),
    /// Generate a synthetic dataset as CSV (one point per row, label last).
    Synth(SynthArgs),
    /// Learn the kernel only and write it with its validation report.
    Kernel(RunArgs),
    /// Score predicted labels against ground truth.
    Eval(EvalArgs),
    /// Run a grid over alpha, beta and gamma.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    TwoMoons,
    ThreeRings,
    Syd4,
}

#[derive(Clone, Copy, ValueEnum)]
enum BootKind {
    /// Global least squares.
    Lsr,
    /// Least squares over nearest neighbours, affine weights.
    Local,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV input, one point per row.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Treat the last CSV column as ground-truth labels.
    #[arg(long)]
    label_column: bool,
    /// Generate the input instead of reading it.
    #[arg(long, value_enum)]
    synthetic: Option<Dataset>,
    /// Points per cluster for synthetic input.
    #[arg(long)]
    n_per_cluster: Option<usize>,
    /// Noise sd for synthetic input.
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Unset flags keep the value of the base config: the dataset preset with
/// `--preset`, the library defaults otherwise.
#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON pipeline config; its fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the tuned settings of the synthetic dataset.
    #[arg(long, requires = "synthetic")]
    preset: bool,
    #[arg(long, value_enum)]
    bootstrap: Option<BootKind>,
    /// Bootstrap ridge weight.
    #[arg(long)]
    boot_gamma: Option<f64>,
    /// Neighbourhood size for the local bootstrap.
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of clusters; defaults to the synthetic dataset's, else 2.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Nyström landmarks: auto, off, third, or a count.
    #[arg(long)]
    nystrom: Option<String>,
    /// Edge threshold for counting components of C.
    #[arg(long)]
    threshold: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    dataset: Dataset,
    #[arg(long)]
    n_per_cluster: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Destination CSV.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth labels, one per line.
    #[arg(long)]
    truth: PathBuf,
    /// Predicted labels, one per line.
    #[arg(long)]
    pred: PathBuf,
    /// Also write the JSON report here.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    betas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    gammas: Vec<f64>,
}

fn synthetic_spec(d: Dataset, n: Option<usize>, sd: Option<f64>) -> SyntheticSpec {
    match d {
        Dataset::TwoMoons => SyntheticSpec::TwoMoons {
            n_per_moon: n.unwrap_or(500),
            noise_sd: sd.unwrap_or(0.08),
        },
        Dataset::ThreeRings => SyntheticSpec::ThreeRings {
            n_per_ring: n.unwrap_or(650),
            radii: [1.0, 2.0, 3.0],
            noise_sd: sd.unwrap_or(0.05),
        },
        Dataset::Syd4 => {
            let mut params = Syd4Params::default();
            if let Some(n) = n {
                params.samples = 4 * n;
            }
            if let Some(sd) = sd {
                params.jitter_sd = sd;
            }
            SyntheticSpec::Syd4 { params }
        }
    }
}

/// Overlays `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (key, v) in p {
                match b.get_mut(&key) {
                    // Tagged enums (bootstrap, input) are replaced whole when the tag changes.
                    Some(slot) if slot.is_object() && v.is_object() && same_tag(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(key, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn same_tag(a: &Value, b: &Value) -> bool {
    match (a.get("kind"), b.get("kind")) {
        (Some(x), Some(y)) => x == y,
        (_, None) => b.as_object().is_some_and(|o| o.keys().all(|k| a.get(k).is_some())),
        _ => false,
    }
}

fn build_config(args: &RunArgs) -> dklm::Result<PipelineConfig> {
    let d = &args.data;
    let synthetic = d.synthetic.map(|ds| synthetic_spec(ds, d.n_per_cluster, d.noise_sd));
    let mut cfg = match (&synthetic, args.preset) {
        (Some(spec), true) => pipeline::preset(spec),
        _ => PipelineConfig::default(),
    };
    match (&d.input, synthetic) {
        (Some(path), _) => {
            cfg.input = Input::Csv {
                path: path.clone(),
                label_column: d.label_column,
            }
        }
        (None, Some(spec)) => {
            cfg.solver.k = spec.clusters();
            cfg.input = Input::Synthetic(spec);
        }
        (None, None) => {}
    }
    cfg.seed = d.seed;

    let (mut boot_gamma, mut neighbors) = match cfg.bootstrap {
        BootstrapKind::Lsr { gamma } => (gamma, 5),
        BootstrapKind::LocalLsr { gamma, neighbors } => (gamma, neighbors),
    };
    boot_gamma = args.boot_gamma.unwrap_or(boot_gamma);
    neighbors = args.neighbors.unwrap_or(neighbors);
    let local = match args.bootstrap {
        Some(b) => matches!(b, BootKind::Local),
        None => matches!(cfg.bootstrap, BootstrapKind::LocalLsr { .. }),
    };
    cfg.bootstrap = if local {
        BootstrapKind::LocalLsr {
            gamma: boot_gamma,
            neighbors,
        }
    } else {
        BootstrapKind::Lsr { gamma: boot_gamma }
    };

    let s = &mut cfg.solver;
    s.alpha = args.alpha.unwrap_or(s.alpha);
    s.beta = args.beta.unwrap_or(s.beta);
    s.gamma = args.gamma.unwrap_or(s.gamma);
    s.k = args.k.unwrap_or(s.k);
    s.max_iters = args.max_iters.unwrap_or(s.max_iters);
    s.tol = args.tol.unwrap_or(s.tol);
    cfg.xi = args.xi.unwrap_or(cfg.xi);
    cfg.threshold = args.threshold.unwrap_or(cfg.threshold);
    if let Some(q) = &args.nystrom {
        cfg.nystrom = q.parse::<NystromSetting>()?;
    }
    if args.out.is_some() {
        cfg.output_dir = args.out.clone();
    }

    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)?;
        let mut base = serde_json::to_value(&cfg)?;
        merge(&mut base, patch);
        cfg = serde_json::from_value(base)?;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> dklm::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn cluster(args: &RunArgs) -> dklm::Result<()> {
    let cfg = build_config(args).map_err(|e| e.in_stage("config"))?;
    let out = pipeline::run_pipeline(&cfg)?;
    print_json(&out.report)
}

fn kernel(args: &RunArgs) -> dklm::Result<()> {
    let cfg = build_config(args).map_err(|e| e.in_stage("config"))?;
    let p = pipeline::prepare(&cfg)?;
    if let Some(dir) = &cfg.output_dir {
        io::write_matrix(p.kernel.matrix().as_array(), true, dir.join("kernel.csv"))
            .and_then(|_| io::write_json(&p.validation, dir.join("kernel_validation.json")))
            .map_err(|e| e.in_stage("output"))?;
    }
    print_json(&serde_json::json!({ "validation": p.validation, "nystrom": p.nystrom }))
}

fn synth(args: &SynthArgs) -> dklm::Result<()> {
    let ds = synthetic_spec(args.dataset, args.n_per_cluster, args.noise_sd)
        .generate(args.seed)
        .map_err(|e| e.in_stage("synth"))?;
    io::save_csv(&ds.x, Some(&ds.truth), &args.out).map_err(|e| e.in_stage("output"))?;
    eprintln!("wrote {} points of {} to {}", ds.x.points(), ds.name, args.out.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> dklm::Result<()> {
    let read = |p: &Path| io::read_labels(p).map_err(|e| e.in_stage("ingest"));
    let (truth, pred) = (read(&args.truth)?, read(&args.pred)?);
    let report = metrics::evaluate(&truth, &pred).map_err(|e| e.in_stage("metrics"))?;
    if let Some(out) = &args.out {
        io::write_json(&report, out).map_err(|e| e.in_stage("output"))?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> dklm::Result<()> {
    let cfg = build_config(&args.run).map_err(|e| e.in_stage("config"))?;
    let grid = SweepGrid {
        alpha: args.alphas.clone(),
        beta: args.betas.clone(),
        gamma: args.gammas.clone(),
    };
    let rows = sweep(&cfg, &grid)?;
    let table = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(".")).join("sweep.csv");
    write_sweep_csv(&rows, &table).map_err(|e| e.in_stage("output"))?;
    for r in &rows {
        match &r.outcome {
            Ok(rep) => println!("alpha={} beta={} gamma={} metrics={:?}", r.alpha, r.beta, r.gamma, rep.metrics),
            Err(e) => println!("alpha={} beta={} gamma={} failed: {e}", r.alpha, r.beta, r.gamma),
        }
    }
    eprintln!("wrote {}", table.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Cluster(a) => cluster(a),
        Command::Synth(a) => synth(a),
        Command::Kernel(a) => kernel(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => run_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
