//! Small dense helpers and a restarted Lanczos eigensolver.
//!
//! Vectors are plain `&[f64]` slices; dense matrices use `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Returns `x / ‖x‖`, or `None` for the zero vector.
pub fn normalized(x: &[f64]) -> Option<Vec<f64>> {
    let nrm = norm(x);
    if nrm > 0.0 && nrm.is_finite() {
        Some(scaled(1.0 / nrm, x))
    } else {
        None
    }
}

/// Which end of the spectrum to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit eigenvector.
    pub vector: Vec<f64>,
}

/// Residual `‖M v − λ v‖` for a dense symmetric matrix.
pub fn residual(m: &DMatrix<f64>, pair: &EigenPair) -> f64 {
    let n = pair.vector.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut mv = 0.0;
        for j in 0..n {
            mv += m[(i, j)] * pair.vector[j];
        }
        let r = mv - pair.value * pair.vector[i];
        acc += r * r;
    }
    acc.sqrt()
}

/// Extreme eigenpair of a dense symmetric matrix via a full decomposition.
pub fn dense_extreme(m: &DMatrix<f64>, which: Extreme) -> EigenPair {
    let eig = SymmetricEigen::new(m.clone());
    let idx = pick(eig.eigenvalues.as_slice(), which);
    EigenPair {
        value: eig.eigenvalues[idx],
        vector: eig.eigenvectors.column(idx).iter().copied().collect(),
    }
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn pick(vals: &[f64], which: Extreme) -> usize {
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        let better = match which {
            Extreme::Min => *v < vals[best],
            Extreme::Max => *v > vals[best],
        };
        if better {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosConfig {
    /// Convergence when `‖Av − λv‖ ≤ tol · (1 + |λ|)`.
    pub tol: f64,
    /// Total matrix-vector products allowed across restarts.
    pub max_iter: usize,
    /// Krylov subspace size before a restart.
    pub restart: usize,
    pub seed: u64,
}

impl LanczosConfig {
    pub fn for_dimension(n: usize) -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10 * n.max(1),
            restart: n.clamp(1, 64),
            seed: 0x5eed_1a2c,
        }
    }
}

/// Extreme eigenpair of a symmetric operator given only matrix-vector
/// products. Lanczos with full reorthogonalization, restarted from the
/// current Ritz vector every `restart` steps.
pub fn lanczos_extreme<F>(n: usize, apply: F, which: Extreme, cfg: &LanczosConfig) -> Result<EigenPair>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if n == 0 {
        return Err(Error::Config("eigensolver needs n >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nrm = norm(&start);
    start.iter_mut().for_each(|v| *v /= nrm);

    let k_max = cfg.restart.clamp(1, n);
    let mut used = 0usize;
    let mut last_residual = f64::INFINITY;

    while used < cfg.max_iter {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k_max);
        let mut alphas: Vec<f64> = Vec::with_capacity(k_max);
        let mut betas: Vec<f64> = Vec::with_capacity(k_max);
        let mut q = start.clone();

        for _ in 0..k_max {
            let mut w = apply(&q);
            used += 1;
            let alpha = dot(&q, &w);
            basis.push(q.clone());
            alphas.push(alpha);
            // full reorthogonalization (twice is enough)
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    axpy(-c, b, &mut w);
                }
            }
            let beta = norm(&w);
            if beta <= 1e-14 * (1.0 + alpha.abs()) || basis.len() == n || used >= cfg.max_iter {
                break;
            }
            betas.push(beta);
            q = scaled(1.0 / beta, &w);
        }

        let k = alphas.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let ritz = dense_extreme(&t, which);
        let mut v = vec![0.0; n];
        for (coef, b) in ritz.vector.iter().zip(&basis) {
            axpy(*coef, b, &mut v);
        }
        let vn = norm(&v);
        v.iter_mut().for_each(|x| *x /= vn);

        let av = apply(&v);
        let lambda = dot(&v, &av);
        let r = norm(&sub(&av, &scaled(lambda, &v)));
        last_residual = r;
        if r <= cfg.tol * (1.0 + lambda.abs()) {
            return Ok(EigenPair { value: lambda, vector: v });
        }
        start = v;
    }
    Err(Error::Convergence { iterations: used, residual: last_residual })
}
