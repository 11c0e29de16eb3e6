//! End-to-end runs: ingest → bootstrap → kernel (dense or Nyström) →
//! solver → spectral clustering → metrics, with artifact export and
//! parameter sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{build_affinity, normalize_degree, Bootstrap, BootstrapKind, SelfRepMatrix, DEFAULT_DEGREE_EPS};
use crate::data::{DataMatrix, LabelVector};
use crate::datagen::SyntheticSpec;
use crate::error::{Error, Result};
use crate::io;
use crate::kernel::{
    assemble_nystrom_with_rho, learn_kernel, nystrom_approx, validate_kernel, KernelMatrix, RhoPolicy,
    ValidationReport, DEFAULT_XI,
};
use crate::metrics::{evaluate, MetricReport};
use crate::solver::{solve_dklm, SolverConfig, SolverState};
use crate::spectral::{affinity_from_z, count_components, spectral_cluster};

/// Where the points come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: bool,
    },
    Synthetic(SyntheticSpec),
}

/// Landmark count for the Nyström path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NystromSetting {
    /// Off below 600 points, `N/3` landmarks from there on.
    #[default]
    Auto,
    Off,
    Count(usize),
    /// `N/3` landmarks regardless of size.
    Third,
}

/// Point count from which [`NystromSetting::Auto`] switches to sampling.
pub const NYSTROM_AUTO_MIN_POINTS: usize = 600;

impl NystromSetting {
    pub fn resolve(self, n: usize) -> Option<usize> {
        match self {
            NystromSetting::Off => None,
            NystromSetting::Auto if n < NYSTROM_AUTO_MIN_POINTS => None,
            NystromSetting::Auto | NystromSetting::Third => Some((n / 3).max(2)),
            NystromSetting::Count(q) => Some(q),
        }
    }
}

impl std::str::FromStr for NystromSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(NystromSetting::Auto),
            "off" => Ok(NystromSetting::Off),
            "third" | "N/3" | "n/3" => Ok(NystromSetting::Third),
            _ => s
                .parse::<usize>()
                .map(NystromSetting::Count)
                .map_err(|_| Error::param("nystrom", format!("expected auto, off, third or a count, got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: Input,
    pub bootstrap: BootstrapKind,
    pub xi: f64,
    pub solver: SolverConfig,
    pub nystrom: NystromSetting,
    pub rho: RhoPolicy,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Edge threshold used when counting components of the learned `C`.
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: Input::Synthetic(SyntheticSpec::TwoMoons {
                n_per_moon: 500,
                noise_sd: 0.08,
            }),
            bootstrap: BootstrapKind::default(),
            xi: DEFAULT_XI,
            solver: SolverConfig::default(),
            nystrom: NystromSetting::Auto,
            rho: RhoPolicy::Adaptive,
            seed: 7,
            output_dir: None,
            threshold: 1e-3,
        }
    }
}

/// Settings tuned for the bundled synthetic datasets, dense kernel.
///
/// All three use the local least-squares bootstrap. `C` scales roughly with
/// `α/N` and the component threshold is absolute, so the larger ring set
/// takes `α` and `γ` ten times higher (scaling both leaves the solution's
/// shape unchanged and multiplies `C`). Rings also need a wider bootstrap
/// neighbourhood: with 5 neighbours the bootstrap graph falls apart into
/// arcs.
pub fn preset(spec: &SyntheticSpec) -> PipelineConfig {
    let (neighbors, alpha, gamma) = match spec {
        SyntheticSpec::TwoMoons { .. } => (5, 2.0, 300.0),
        SyntheticSpec::ThreeRings { .. } => (10, 20.0, 3e4),
        SyntheticSpec::Syd4 { .. } => (5, 2.0, 300.0),
    };
    PipelineConfig {
        input: Input::Synthetic(spec.clone()),
        bootstrap: BootstrapKind::LocalLsr { gamma: 1e-3, neighbors },
        solver: SolverConfig {
            alpha,
            beta: 1e4,
            gamma,
            k: spec.clusters(),
            ..SolverConfig::default()
        },
        nystrom: NystromSetting::Off,
        ..PipelineConfig::default()
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NystromReport {
    pub q: usize,
    pub rho: f64,
    /// With full sampling: whether the reconstruction matched the dense
    /// kernel plus `ρI` within 1e-8.
    pub exactness_check: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub points: usize,
    pub dims: usize,
    pub k: usize,
    pub metrics: Option<MetricReport>,
    pub components: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub kernel_validation: ValidationReport,
    pub nystrom: Option<NystromReport>,
    pub wall_time_s: f64,
}

/// Result of a run with the in-memory artifacts kept.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub labels: LabelVector,
    pub state: SolverState,
}

/// Everything upstream of the solver, reusable across solver settings.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub name: String,
    pub x: DataMatrix,
    pub truth: Option<LabelVector>,
    pub z_boot: SelfRepMatrix,
    pub kernel: KernelMatrix,
    pub validation: ValidationReport,
    pub nystrom: Option<NystromReport>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

pub fn load_input(cfg: &PipelineConfig) -> Result<(String, DataMatrix, Option<LabelVector>)> {
    stage("ingest", match &cfg.input {
        Input::Csv { path, label_column } => io::load_csv(path, *label_column).map(|(x, l)| {
            let name = path.file_stem().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
            (name, x, l)
        }),
        Input::Synthetic(spec) => spec.generate(cfg.seed).map(|ds| (ds.name, ds.x, Some(ds.truth))),
    })
}

/// Runs bootstrap and kernel construction on already loaded points.
pub fn prepare_data(
    cfg: &PipelineConfig,
    name: String,
    x: DataMatrix,
    truth: Option<LabelVector>,
) -> Result<Prepared> {
    if let Some(t) = &truth {
        if t.len() != x.points() {
            return Err(Error::LengthMismatch {
                expected: x.points(),
                actual: t.len(),
            }
            .in_stage("ingest"));
        }
    }
    let n = x.points();
    let z_boot = stage("bootstrap", cfg.bootstrap.self_representation(&x))?;
    let (kernel, nystrom) = match cfg.nystrom.resolve(n) {
        None => {
            let g = stage("kernel", normalize_degree(&build_affinity(&z_boot), DEFAULT_DEGREE_EPS))?;
            (stage("kernel", learn_kernel(&g, cfg.xi))?, None)
        }
        Some(q) => {
            let nk = stage("nystrom", nystrom_approx(&x, &z_boot, q, cfg.xi, cfg.rho, cfg.solver.k, cfg.seed))?;
            let (k, rho) = stage("nystrom", assemble_nystrom_with_rho(&nk))?;
            let exactness_check = if q == n {
                let g = stage("kernel", normalize_degree(&build_affinity(&z_boot), DEFAULT_DEGREE_EPS))?;
                let dense = stage("kernel", learn_kernel(&g, cfg.xi))?;
                let ok = dense
                    .matrix()
                    .as_array()
                    .indexed_iter()
                    .all(|((i, j), &v)| (k.matrix().get(i, j) - v - if i == j { rho } else { 0.0 }).abs() <= 1e-8);
                Some(ok)
            } else {
                None
            };
            (k, Some(NystromReport { q, rho, exactness_check }))
        }
    };
    let validation = stage("kernel", validate_kernel(&kernel))?;
    Ok(Prepared {
        name,
        x,
        truth,
        z_boot,
        kernel,
        validation,
        nystrom,
    })
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let (name, x, truth) = load_input(cfg)?;
    prepare_data(cfg, name, x, truth)
}

/// Solver, clustering and metrics on a prepared kernel.
pub fn solve_prepared(p: &Prepared, cfg: &PipelineConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let state = stage("solver", solve_dklm(&p.kernel, &cfg.solver))?;
    let affinity = affinity_from_z(&state.z);
    let labels = stage("spectral", spectral_cluster(&affinity, cfg.solver.k, cfg.seed))?;
    let metrics = match &p.truth {
        Some(t) => Some(stage("metrics", evaluate(t, &labels))?),
        None => None,
    };
    let components = count_components(&state.c_sym(), cfg.threshold);
    let report = RunReport {
        dataset: p.name.clone(),
        points: p.x.points(),
        dims: p.x.dims(),
        k: cfg.solver.k,
        metrics,
        components,
        iterations: state.iterations,
        converged: state.converged,
        final_objective: state.history.last().map_or(f64::NAN, |r| r.objective),
        kernel_validation: p.validation.clone(),
        nystrom: p.nystrom.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { report, labels, state })
}

fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    io::write_labels(&out.labels, dir.join("labels.csv"))?;
    io::write_matrix(affinity_from_z(&out.state.z).as_array(), true, dir.join("affinity.csv"))?;
    io::write_history(&out.state.history, dir.join("history.csv"))?;
    io::write_json(&out.report, dir.join("report.json"))
}

/// Full pipeline. Artifacts are written to `cfg.output_dir` when set; the
/// kernel validation report goes out as soon as the kernel exists.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let prepared = prepare(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        stage("output", io::write_json(&prepared.validation, dir.join("kernel_validation.json")))?;
    }
    let mut out = solve_prepared(&prepared, cfg)?;
    out.report.wall_time_s = started.elapsed().as_secs_f64();
    info!(
        "{}: {} points, {} iterations, {} components, metrics {:?}",
        out.report.dataset, out.report.points, out.report.iterations, out.report.components, out.report.metrics
    );
    if let Some(dir) = &cfg.output_dir {
        stage("output", write_outputs(dir, &out))?;
    }
    Ok(out)
}

/// Axis values of a parameter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SweepGrid {
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &a in &self.alpha {
            for &b in &self.beta {
                for &g in &self.gamma {
                    out.push((a, b, g));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub outcome: std::result::Result<RunReport, String>,
}

/// One run per grid point. Bootstrap and kernel are shared; each point
/// gets its own output subdirectory. Failures are kept per row.
pub fn sweep(base: &PipelineConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let prepared = prepare(base)?;
    let rows = grid
        .points()
        .into_par_iter()
        .enumerate()
        .map(|(i, (alpha, beta, gamma))| {
            let mut cfg = base.clone();
            cfg.solver.alpha = alpha;
            cfg.solver.beta = beta;
            cfg.solver.gamma = gamma;
            let outcome = solve_prepared(&prepared, &cfg).and_then(|out| {
                if let Some(dir) = &base.output_dir {
                    stage("output", write_outputs(&dir.join(format!("run_{i:03}")), &out))?;
                }
                Ok(out.report)
            });
            SweepRow {
                alpha,
                beta,
                gamma,
                outcome: outcome.map_err(|e| e.to_string()),
            }
        })
        .collect();
    Ok(rows)
}

/// Sweep table: `alpha,beta,gamma,acc,nmi,purity,error`.
pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let mut text = String::from("alpha,beta,gamma,acc,nmi,purity,error\n");
    for r in rows {
        let (acc, nmi, purity, err) = match &r.outcome {
            Ok(rep) => match rep.metrics {
                Some(m) => (m.acc.to_string(), m.nmi.to_string(), m.purity.to_string(), String::new()),
                None => (String::new(), String::new(), String::new(), String::new()),
            },
            Err(e) => (String::new(), String::new(), String::new(), format!("\"{}\"", e.replace('"', "'"))),
        };
        text.push_str(&format!("{},{},{},{acc},{nmi},{purity},{err}\n", r.alpha, r.beta, r.gamma));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
