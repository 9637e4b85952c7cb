//! Polar coordinates around the planted signal, the three-region cover of
//! `ℝⁿ`, finite-sample fourth-order moments and the closed-form
//! infinite-sample (population) objective.
//!
//! A point is written `z = √R · ẑ` with `‖ẑ‖ = 1`, correlation
//! `σ = ⟨ẑ, x⟩` and sign-folded distance `dist(z) = min(‖z − x‖, ‖z + x‖)`,
//! which satisfies `dist² = R + 1 − 2√R·|σ|`.
//!
//! The regions, for `ε₀ > 0` and `0 < δ₀ < 1/4`:
//!
//! * `R1`: `|σ| ≤ √((√3 − 1)/2) − ε₀` (critical points have negative curvature along `x`)
//! * `R2`: `|σ| ≥ 1/2` and `dist ≥ δ₀` (no critical points)
//! * `R3`: `dist ≤ δ₀` (strong convexity)

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::MeasurementEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// `√((√3 − 1)/2)`, the correlation below which the population curvature
/// along `x` at a radially stationary point is negative.
pub fn r1_correlation_limit() -> f64 {
    ((3f64.sqrt() - 1.0) / 2.0).sqrt()
}

/// Lower correlation bound of `R2`.
pub const R2_CORRELATION_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PolarPoint {
    pub z: Vec<f64>,
    /// `R = ‖z‖²`
    pub radius_sq: f64,
    /// `ẑ = z / ‖z‖`; `None` at the origin.
    pub direction: Option<Vec<f64>>,
    /// Signed correlation `⟨ẑ, x⟩`, 0 at the origin.
    pub sigma: f64,
    pub dist: f64,
}

impl PolarPoint {
    pub fn folded_sigma(&self) -> f64 {
        self.sigma.abs()
    }

    pub fn radius(&self) -> f64 {
        self.radius_sq.sqrt()
    }
}

/// Decomposes `z` relative to the unit signal `x`.
pub fn polar(z: &[f64], x: &[f64]) -> Result<PolarPoint> {
    if z.len() != x.len() {
        return Err(Error::Shape { expected: x.len(), got: z.len() });
    }
    let radius_sq = dot(z, z);
    let r = radius_sq.sqrt();
    let (direction, sigma) = if r > 0.0 {
        let d: Vec<f64> = z.iter().map(|v| v / r).collect();
        let s = dot(&d, x).clamp(-1.0, 1.0);
        (Some(d), s)
    } else {
        (None, 0.0)
    };
    let minus: f64 = z.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    let plus: f64 = z.iter().zip(x).map(|(a, b)| (a + b) * (a + b)).sum();
    let dist = minus.min(plus).sqrt();
    Ok(PolarPoint { z: z.to_vec(), radius_sq, direction, sigma, dist })
}

/// Region thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub epsilon0: f64,
    pub delta0: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { epsilon0: 0.05, delta0: 0.2 }
    }
}

impl RegionConfig {
    /// The instantiation `ε₀ = δ₀ = 0.01`.
    pub fn strict() -> Self {
        Self { epsilon0: 0.01, delta0: 0.01 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0 && self.epsilon0 < 0.3) {
            return Err(Error::Config(format!("epsilon0 = {} must lie in (0, 0.3)", self.epsilon0)));
        }
        if !(self.delta0 > 0.0 && self.delta0 < 0.25) {
            return Err(Error::Config(format!("delta0 = {} must lie in (0, 1/4)", self.delta0)));
        }
        Ok(())
    }

    pub fn r1_sigma_max(&self) -> f64 {
        r1_correlation_limit() - self.epsilon0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMembership {
    pub in_r1: bool,
    pub in_r2: bool,
    pub in_r3: bool,
    pub epsilon0: f64,
    pub delta0: f64,
}

impl RegionMembership {
    pub fn covered(&self) -> bool {
        self.in_r1 || self.in_r2 || self.in_r3
    }
}

pub fn classify_region(p: &PolarPoint, cfg: &RegionConfig) -> Result<RegionMembership> {
    cfg.validate()?;
    Ok(classify_unchecked(p.folded_sigma(), p.dist, cfg))
}

fn classify_unchecked(abs_sigma: f64, dist: f64, cfg: &RegionConfig) -> RegionMembership {
    RegionMembership {
        in_r1: abs_sigma <= cfg.r1_sigma_max(),
        in_r2: abs_sigma >= R2_CORRELATION_FLOOR && dist >= cfg.delta0,
        in_r3: dist <= cfg.delta0,
        epsilon0: cfg.epsilon0,
        delta0: cfg.delta0,
    }
}

/// Returns the grid points that belong to no region.
pub fn coverage_check(cfg: &RegionConfig, grid: &[PolarPoint]) -> Result<Vec<PolarPoint>> {
    cfg.validate()?;
    Ok(grid
        .iter()
        .filter(|p| !classify_unchecked(p.folded_sigma(), p.dist, cfg).covered())
        .cloned()
        .collect())
}

/// Points of `ℝ²` with `x = e₁` laid out on a `(σ, R)` grid,
/// `σ ∈ [−1, 1]` and `R ∈ (0, r_max]`, both at spacing `step`.
pub fn sigma_radius_grid(step: f64, r_max: f64) -> Vec<PolarPoint> {
    let x = [1.0, 0.0];
    let ns = (2.0 / step).round() as usize;
    let nr = (r_max / step).round() as usize;
    let mut out = Vec::with_capacity((ns + 1) * nr);
    for i in 0..=ns {
        let sigma = (-1.0 + i as f64 * step).clamp(-1.0, 1.0);
        let perp = (1.0 - sigma * sigma).max(0.0).sqrt();
        for k in 1..=nr {
            let r = (k as f64 * step).sqrt();
            let z = [r * sigma, r * perp];
            out.push(polar(&z, &x).expect("fixed dimension"));
        }
    }
    out
}

/// Finite-sample fourth-order statistics along a unit direction `ẑ`:
///
/// ```text
/// A  = (1/m) Σ (aᵀẑ)⁴          B = (1/m) Σ (aᵀẑ)²(aᵀx)²
/// A1 = (1/m) Σ (aᵀx)(aᵀẑ)³     C1 = (1/m) Σ (aᵀẑ)(aᵀx)³     D = (1/m) Σ (aᵀx)⁴
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub a: f64,
    pub b: f64,
    pub a1: f64,
    pub c1: f64,
    pub d: f64,
}

pub fn empirical_moments(e: &MeasurementEnsemble, zhat: &[f64]) -> Result<EmpiricalMoments> {
    if zhat.len() != e.n() {
        return Err(Error::Shape { expected: e.n(), got: zhat.len() });
    }
    let s = norm(zhat);
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::NormalizationRequired { norm: s });
    }
    let x = e.signal();
    let (mut a, mut b, mut a1, mut c1, mut d) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for row in e.rows() {
        let u = dot(row, zhat);
        let v = dot(row, x);
        let (u2, v2) = (u * u, v * v);
        a += u2 * u2;
        b += u2 * v2;
        a1 += v * u2 * u;
        c1 += u * v2 * v;
        d += v2 * v2;
    }
    let m = e.m() as f64;
    Ok(EmpiricalMoments { a: a / m, b: b / m, a1: a1 / m, c1: c1 / m, d: d / m })
}

/// `R = B / A`: the unique radius at which `z = √R·ẑ` is stationary along
/// the ray through `ẑ`.
pub fn critical_radius(mom: &EmpiricalMoments) -> Result<f64> {
    if !(mom.a > 0.0) {
        return Err(Error::DegenerateMoments(format!("A = {} (every row orthogonal to ẑ)", mom.a)));
    }
    Ok(mom.b / mom.a)
}

/// `B·A1 − A·C1`, which vanishes at every critical point `√R·ẑ`.
pub fn critical_relation_residual(mom: &EmpiricalMoments) -> f64 {
    mom.b * mom.a1 - mom.a * mom.c1
}

/// Infinite-sample limits of the moments, as functions of `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationMoments {
    pub a: f64,
    pub b: f64,
    pub a1: f64,
    pub c1: f64,
    pub d: f64,
}

impl PopulationMoments {
    pub fn at(sigma: f64) -> Self {
        Self { a: 3.0, b: 2.0 * sigma * sigma + 1.0, a1: 3.0 * sigma, c1: 3.0 * sigma, d: 3.0 }
    }

    pub fn as_empirical(&self) -> EmpiricalMoments {
        EmpiricalMoments { a: self.a, b: self.b, a1: self.a1, c1: self.c1, d: self.d }
    }

    /// Largest absolute deviation of `emp` from these values, per statistic
    /// in the order `A, B, A1, C1, D`.
    pub fn deviations(&self, emp: &EmpiricalMoments) -> [f64; 5] {
        [
            (emp.a - self.a).abs(),
            (emp.b - self.b).abs(),
            (emp.a1 - self.a1).abs(),
            (emp.c1 - self.c1).abs(),
            (emp.d - self.d).abs(),
        ]
    }
}

/// `E F(z) = 3‖z‖⁴ − 2‖z‖² − 4⟨z,x⟩² + 3` for unit `x`.
pub fn population_loss(z: &[f64], x: &[f64]) -> f64 {
    let r2 = dot(z, z);
    let c = dot(z, x);
    3.0 * r2 * r2 - 2.0 * r2 - 4.0 * c * c + 3.0
}

/// `∇ E F(z) = (12‖z‖² − 4) z − 8⟨z,x⟩ x`
pub fn population_gradient(z: &[f64], x: &[f64]) -> Vec<f64> {
    let r2 = dot(z, z);
    let c = dot(z, x);
    z.iter().zip(x).map(|(zi, xi)| (12.0 * r2 - 4.0) * zi - 8.0 * c * xi).collect()
}

/// `∇² E F(z) = (12‖z‖² − 4) I + 24 zzᵀ − 8 xxᵀ`
pub fn population_hessian(z: &[f64], x: &[f64]) -> DMatrix<f64> {
    let n = z.len();
    let r2 = dot(z, z);
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { 12.0 * r2 - 4.0 } else { 0.0 };
        diag + 24.0 * z[i] * z[j] - 8.0 * x[i] * x[j]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationKind {
    Maximum,
    Minimum,
    Saddle,
}

/// A critical set of the population objective.
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationCritical {
    Point { z: Vec<f64>, kind: PopulationKind, loss: f64 },
    /// The sphere `{z ⊥ x : ‖z‖ = radius}`; every point is a strict saddle.
    SaddleSphere { radius: f64, normal: Vec<f64>, loss: f64 },
}

impl PopulationCritical {
    pub fn loss(&self) -> f64 {
        match self {
            Self::Point { loss, .. } | Self::SaddleSphere { loss, .. } => *loss,
        }
    }

    /// A concrete member of the set; for the saddle sphere, the point along
    /// `unit_perp` (which must be orthogonal to `x`).
    pub fn representative(&self, unit_perp: &[f64]) -> Vec<f64> {
        match self {
            Self::Point { z, .. } => z.clone(),
            Self::SaddleSphere { radius, .. } => unit_perp.iter().map(|v| radius * v).collect(),
        }
    }
}

/// Every critical point of the population objective: the origin (maximum),
/// `±x` (minima) and the saddle sphere of radius `1/√3` in `x^⊥`.
pub fn population_critical_points(x: &[f64]) -> Result<Vec<PopulationCritical>> {
    let s = norm(x);
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::NormalizationRequired { norm: s });
    }
    let origin = vec![0.0; x.len()];
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let mut out = vec![
        PopulationCritical::Point { loss: population_loss(&origin, x), z: origin, kind: PopulationKind::Maximum },
        PopulationCritical::Point { z: x.to_vec(), kind: PopulationKind::Minimum, loss: 0.0 },
        PopulationCritical::Point { z: neg, kind: PopulationKind::Minimum, loss: 0.0 },
    ];
    if x.len() >= 2 {
        let radius = 1.0 / 3f64.sqrt();
        // ‖z‖² = 1/3, ⟨z,x⟩ = 0
        let loss = 3.0 / 9.0 - 2.0 / 3.0 + 3.0;
        out.push(PopulationCritical::SaddleSphere { radius, normal: x.to_vec(), loss });
    }
    Ok(out)
}
