//! Configuration, pipeline orchestration, invariant checks and plot data.

mod config;
mod pipeline;
mod plot;
mod verify;

pub use config::{
    config_hash, DiscretizationConfig, ExperimentConfig, Monomial, OutputConfig, PotentialSpec, ProblemConfig,
    RunConfig, MAX_INDEX,
};
pub use pipeline::{
    branch_label, compare, expand_stage, homogenize, reference_count, reference_options, reference_stage, rows_to_csv,
    run, spectrum, sweep, BranchReport, Context, ExpandReport, FitReport, HomogenizeReport, Prediction,
    ReferenceReport, RunManifest, SpectrumReport, Stage, SweepReport, Warning, GAUGE, HIERARCHY_TOLERANCE,
};
pub use plot::{plot_data, PlotSeries};
pub use verify::{verify, Check, VerifyOptions, VerifyReport};

/// Smallest useful configuration: the harmonic oscillator with a = 1.
pub const MINIMAL_CONFIG: &str = r#"[problem]
dim = 1
potential = "squared-norm"
coefficient = { kind = "expression", entries = [["1"]] }

[discretization]
torus_modes = 8
hermite_n = 32

[experiment]
j = 1
epsilons = [0.1]
order = 2
count = 4
"#;
