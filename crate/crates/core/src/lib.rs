//! Landscape verification for real-valued phase retrieval with the intensity
//! least-squares loss
//!
//! ```text
//! F(z) = (1/m) Σ_j (⟨a_j, z⟩² − y_j²)²,    y_j² = ⟨a_j, x⟩²
//! ```
//!
//! over i.i.d. standard Gaussian measurement vectors `a_j`. The crate provides
//! the objective and its derivatives, the polar/region geometry around the
//! planted signal, Monte Carlo verifiers for the landscape properties (negative
//! curvature at critical points with small correlation, no critical points at
//! moderate correlation away from the signal, strong convexity near `±x`, and
//! a strict local maximum at the origin), and experiment drivers for
//! concentration checks, solvers and sampling-ratio sweeps.

pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod landscape;
pub mod linalg;
pub mod objective;

pub use ensemble::{sample_ensemble, MeasurementEnsemble, SignalSpec, TrialSeed};
pub use error::{Error, Result};
pub use geometry::{
    EmpiricalMoments, PolarPoint, PopulationMoments, RegionConfig, RegionMembership,
};
pub use landscape::{
    CriticalKind, CriticalPointRecord, LandscapeConfig, LandscapeReport, LemmaId, LemmaVerdict,
};
pub use objective::{EigenPair, Extreme, ObjectiveEvaluation};
