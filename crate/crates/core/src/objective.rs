//! The intensity least-squares objective and its derivatives.
//!
//! ```text
//! F(z)      = (1/m) Σ r_j²,                r_j = ⟨a_j, z⟩² − y_j²
//! ∇F(z)     = (4/m) Σ r_j ⟨a_j, z⟩ a_j
//! ∇²F(z)    = (4/m) Σ (3⟨a_j, z⟩² − y_j²) a_j a_jᵀ
//! ```
//!
//! The gradient carries the factor 4/m obtained by differentiating `F`
//! directly, which is the same constant as the Hessian. Critical points and
//! the sign of curvature are unaffected by positive rescaling.

use nalgebra::DMatrix;

use crate::ensemble::MeasurementEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm, LanczosConfig};

pub use crate::linalg::{EigenPair, Extreme};

/// Largest `n` for which the dense Hessian is assembled by default.
pub const DENSE_LIMIT: usize = 512;

/// Relative step for central finite differences: `h = FD_STEP · (1 + ‖z‖)`.
pub const FD_STEP: f64 = 1e-5;

fn check_len(e: &MeasurementEnsemble, v: &[f64]) -> Result<()> {
    if v.len() != e.n() {
        return Err(Error::Shape { expected: e.n(), got: v.len() });
    }
    Ok(())
}

fn check_unit(v: &[f64], tol: f64) -> Result<()> {
    let s = norm(v);
    if (s - 1.0).abs() > tol {
        return Err(Error::NormalizationRequired { norm: s });
    }
    Ok(())
}

/// Loss, gradient and cached residuals at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEvaluation {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn evaluate(e: &MeasurementEnsemble, z: &[f64]) -> Result<ObjectiveEvaluation> {
    check_len(e, z)?;
    let m = e.m() as f64;
    let mut gradient = vec![0.0; e.n()];
    let mut residuals = Vec::with_capacity(e.m());
    let mut acc = 0.0;
    for (a, y2) in e.rows().zip(e.y_squared()) {
        let p = dot(a, z);
        let r = p * p - y2;
        acc += r * r;
        linalg::axpy(r * p, a, &mut gradient);
        residuals.push(r);
    }
    gradient.iter_mut().for_each(|g| *g *= 4.0 / m);
    Ok(ObjectiveEvaluation { loss: acc / m, gradient, residuals })
}

pub fn loss(e: &MeasurementEnsemble, z: &[f64]) -> Result<f64> {
    check_len(e, z)?;
    let acc: f64 = e
        .rows()
        .zip(e.y_squared())
        .map(|(a, y2)| {
            let p = dot(a, z);
            let r = p * p - y2;
            r * r
        })
        .sum();
    Ok(acc / e.m() as f64)
}

pub fn gradient(e: &MeasurementEnsemble, z: &[f64]) -> Result<Vec<f64>> {
    Ok(evaluate(e, z)?.gradient)
}

/// Second directional derivative along a unit direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProbe {
    pub direction: Vec<f64>,
    pub quad_form: f64,
}

impl CurvatureProbe {
    pub fn new(e: &MeasurementEnsemble, z: &[f64], direction: Vec<f64>) -> Result<Self> {
        let quad_form = hessian_quadratic_form(e, z, &direction)?;
        Ok(Self { direction, quad_form })
    }
}

/// `H_ξξ(z) = (4/m) Σ (a_jᵀξ)² (3(a_jᵀz)² − (a_jᵀx)²)` for unit `ξ`.
pub fn hessian_quadratic_form(e: &MeasurementEnsemble, z: &[f64], xi: &[f64]) -> Result<f64> {
    check_len(e, z)?;
    check_len(e, xi)?;
    check_unit(xi, 1e-9)?;
    let acc: f64 = e
        .rows()
        .zip(e.y_squared())
        .map(|(a, y2)| {
            let s = dot(a, xi);
            let p = dot(a, z);
            s * s * (3.0 * p * p - y2)
        })
        .sum();
    Ok(4.0 * acc / e.m() as f64)
}

/// `∇²F(z) v = (4/m) Σ (3(a_jᵀz)² − y_j²)(a_jᵀv) a_j`
pub fn hessian_vector_product(e: &MeasurementEnsemble, z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len(e, z)?;
    check_len(e, v)?;
    Ok(hvp_unchecked(e, z, v))
}

fn hvp_unchecked(e: &MeasurementEnsemble, z: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; e.n()];
    for (a, y2) in e.rows().zip(e.y_squared()) {
        let p = dot(a, z);
        let w = (3.0 * p * p - y2) * dot(a, v);
        linalg::axpy(w, a, &mut out);
    }
    let scale = 4.0 / e.m() as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

/// Weighted Gram matrix `(1/m) Σ w_j a_j a_jᵀ`, symmetric by construction.
pub fn weighted_gram(e: &MeasurementEnsemble, weights: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let n = e.n();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for (a, w) in e.rows().zip(weights) {
        for i in 0..n {
            let wi = w * a[i];
            for j in i..n {
                g[(i, j)] += wi * a[j];
            }
        }
    }
    let inv_m = 1.0 / e.m() as f64;
    for i in 0..n {
        for j in i..n {
            let v = g[(i, j)] * inv_m;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `(1/m) Σ y_j² a_j a_jᵀ`
pub fn y_weighted_gram(e: &MeasurementEnsemble) -> DMatrix<f64> {
    weighted_gram(e, e.y_squared().iter().copied())
}

pub fn full_hessian(e: &MeasurementEnsemble, z: &[f64]) -> Result<DMatrix<f64>> {
    full_hessian_with_limit(e, z, DENSE_LIMIT)
}

pub fn full_hessian_with_limit(e: &MeasurementEnsemble, z: &[f64], limit: usize) -> Result<DMatrix<f64>> {
    check_len(e, z)?;
    if e.n() > limit {
        return Err(Error::Capacity { n: e.n(), limit });
    }
    let weights = e.rows().zip(e.y_squared()).map(|(a, y2)| {
        let p = dot(a, z);
        4.0 * (3.0 * p * p - y2)
    });
    Ok(weighted_gram(e, weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMode {
    /// Dense when `n ≤ dense_limit`, Lanczos on Hessian-vector products otherwise.
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenConfig {
    pub mode: EigenMode,
    pub dense_limit: usize,
    pub tol: f64,
    /// Iteration cap as a multiple of `n`.
    pub iter_factor: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { mode: EigenMode::Auto, dense_limit: DENSE_LIMIT, tol: 1e-8, iter_factor: 10 }
    }
}

pub fn extreme_eigenvalues(e: &MeasurementEnsemble, z: &[f64], which: Extreme) -> Result<EigenPair> {
    extreme_eigenvalues_with(e, z, which, &EigenConfig::default())
}

/// Extreme eigenpair of `∇²F(z)`. The returned pair always satisfies
/// `‖Mv − λv‖ ≤ tol · (1 + |λ|)`.
pub fn extreme_eigenvalues_with(
    e: &MeasurementEnsemble,
    z: &[f64],
    which: Extreme,
    cfg: &EigenConfig,
) -> Result<EigenPair> {
    check_len(e, z)?;
    let n = e.n();
    let dense = match cfg.mode {
        EigenMode::Dense => true,
        EigenMode::Iterative => false,
        EigenMode::Auto => n <= cfg.dense_limit,
    };
    if dense {
        let h = full_hessian_with_limit(e, z, cfg.dense_limit.max(n))?;
        let pair = linalg::dense_extreme(&h, which);
        let r = linalg::residual(&h, &pair);
        if r > cfg.tol * (1.0 + pair.value.abs()) {
            return Err(Error::Convergence { iterations: 0, residual: r });
        }
        Ok(pair)
    } else {
        let lcfg = LanczosConfig {
            tol: cfg.tol,
            max_iter: cfg.iter_factor * n,
            ..LanczosConfig::for_dimension(n)
        };
        linalg::lanczos_extreme(n, |v| hvp_unchecked(e, z, v), which, &lcfg)
    }
}

/// Central-difference gradient of the loss, step `FD_STEP · (1 + ‖z‖)`.
/// Kept independent of the analytic gradient for use as an oracle.
pub fn finite_difference_gradient(e: &MeasurementEnsemble, z: &[f64]) -> Result<Vec<f64>> {
    check_len(e, z)?;
    let h = FD_STEP * (1.0 + norm(z));
    let mut out = Vec::with_capacity(z.len());
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        zp[i] = z[i] + h;
        let fp = loss(e, &zp)?;
        zp[i] = z[i] - h;
        let fm = loss(e, &zp)?;
        zp[i] = z[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}
