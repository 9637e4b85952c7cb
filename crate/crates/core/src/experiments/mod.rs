//! Monte Carlo experiments: concentration checks, solvers that exploit the
//! benign landscape, and sampling-ratio sweeps. Every result is a pure
//! function of its configuration and seed; trials run in parallel on the
//! ambient rayon pool and are collected in trial order.

pub mod concentration;
pub mod csv;
pub mod solvers;
pub mod transition;

pub use concentration::{
    check_cross_moment, check_cubic_moment, check_quartic_lower, check_spectral_norm, check_truncation_split,
    truncation_split, CheckId, ConcentrationStat, TruncationSplit,
};
pub use solvers::{
    gradient_descent, negative_curvature_descent, spectral_init, CurvatureConfig, Outcome, SolverTrace, StepConfig,
    TraceEntry,
};
pub use transition::{
    phase_transition, sample_count, trend_check, Scaling, TransitionCell, TransitionConfig, TransitionMode,
    TransitionResult, TransitionTrial, TrendReport,
};
