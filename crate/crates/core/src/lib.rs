//! Data-driven kernel learning for nonlinear subspace clustering.
//!
//! A linear self-representation of the data seeds a learned kernel; an
//! alternating solver then finds a kernel self-representation whose
//! relaxation `C` is pushed toward `k` diagonal blocks, and spectral
//! clustering of `(Z + Zᵀ)/2` gives the labels.

pub mod bootstrap;
pub mod data;
pub mod datagen;
pub mod error;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod solver;
pub mod spectral;

pub use bootstrap::{Bootstrap, BootstrapKind, NormalizedAffinity, SelfRepMatrix};
pub use data::{DataMatrix, LabelVector};
pub use datagen::{LabeledDataset, SyntheticSpec};
pub use error::{Error, Result};
pub use kernel::{KernelMatrix, NystromKernel, RhoPolicy, ValidationReport};
pub use metrics::MetricReport;
pub use numerics::{EigenPairs, SymMatrix};
pub use pipeline::{preset, Input, NystromSetting, PipelineConfig, RunOutput, RunReport, SweepGrid};
pub use solver::{SolverConfig, SolverState};
