//! First-order solvers on the intensity loss, with and without escape along
//! negative curvature, and the spectral starting point.

use serde::{Deserialize, Serialize};

use crate::ensemble::MeasurementEnsemble;
use crate::error::{Error, Result};
use crate::geometry::polar;
use crate::linalg::{self, dot, norm, Extreme};
use crate::objective::{self, EigenConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// First trial step of every line search; `None` uses
    /// `0.1 / (1 + 3 · mean(y²))`.
    pub initial_step: Option<f64>,
    pub backtrack: f64,
    pub armijo: f64,
    pub max_iter: usize,
    pub record_every: usize,
    /// Recovery threshold on `dist(z, ±x)`.
    pub recover_tol: f64,
    /// Gradient norm treated as an exact critical point.
    pub grad_tol: f64,
    pub max_backtracks: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            initial_step: None,
            backtrack: 0.5,
            armijo: 1e-4,
            max_iter: 10_000,
            record_every: 10,
            recover_tol: 1e-5,
            grad_tol: 1e-14,
            max_backtracks: 60,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_step.is_none_or(|s| s > 0.0 && s.is_finite())
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.record_every >= 1
            && self.recover_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step configuration {self:?}")))
        }
    }

    fn step0(&self, e: &MeasurementEnsemble) -> f64 {
        self.initial_step.unwrap_or_else(|| 0.1 / (1.0 + 3.0 * e.mean_y_squared()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureConfig {
    pub step: StepConfig,
    /// Below this gradient norm the smallest Hessian eigenpair is computed.
    pub switch_threshold: f64,
    pub tol_eig_rel: f64,
    /// First trial length of a curvature step, relative to `√mean(y²)`.
    pub curvature_step: f64,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self { step: StepConfig::default(), switch_threshold: 1e-3, tol_eig_rel: 1e-6, curvature_step: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Recovered,
    Stalled,
    Cap,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Recovered => "recovered",
            Self::Stalled => "stalled",
            Self::Cap => "cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    /// Every `record_every`-th iterate plus the final one.
    pub iterates: Vec<TraceEntry>,
    pub step_rule: String,
    pub outcome: Outcome,
    pub iterations: usize,
    pub curvature_steps: usize,
    pub final_z: Vec<f64>,
    pub final_dist: f64,
}

impl SolverTrace {
    /// Recorded losses never increase by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.iterates.windows(2).all(|w| w[1].loss <= w[0].loss + slack)
    }
}

struct State {
    z: Vec<f64>,
    loss: f64,
    grad: Vec<f64>,
}

impl State {
    fn at(e: &MeasurementEnsemble, z: Vec<f64>, iteration: usize) -> Result<Self> {
        let ev = objective::evaluate(e, &z)?;
        if !ev.loss.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        Ok(Self { z, loss: ev.loss, grad: ev.gradient })
    }
}

struct Recorder {
    every: usize,
    entries: Vec<TraceEntry>,
}

impl Recorder {
    fn push(&mut self, iter: usize, s: &State, dist: f64, force: bool) {
        if force || iter % self.every == 0 {
            if self.entries.last().is_some_and(|l| l.iter == iter) {
                return;
            }
            self.entries.push(TraceEntry { iter, loss: s.loss, grad_norm: norm(&s.grad), dist });
        }
    }
}

fn dist_to_signal(e: &MeasurementEnsemble, z: &[f64]) -> Result<f64> {
    Ok(polar(z, e.signal())?.dist)
}

/// Armijo backtracking along `−∇F`. `None` when no trial step decreases
/// the loss enough.
fn gradient_step(e: &MeasurementEnsemble, s: &State, cfg: &StepConfig, iter: usize) -> Result<Option<State>> {
    let g2 = dot(&s.grad, &s.grad);
    let mut alpha = cfg.step0(e);
    for _ in 0..cfg.max_backtracks {
        let z: Vec<f64> = s.z.iter().zip(&s.grad).map(|(zi, gi)| zi - alpha * gi).collect();
        let l = objective::loss(e, &z)?;
        if l.is_finite() && l <= s.loss - cfg.armijo * alpha * g2 {
            return State::at(e, z, iter).map(Some);
        }
        alpha *= cfg.backtrack;
    }
    Ok(None)
}

/// Step along `±v` for a unit eigenvector with `λ < 0`, keeping the sign
/// with the lower loss; accepted when the decrease is at least
/// `armijo · α² |λ| / 2`.
fn curvature_step(
    e: &MeasurementEnsemble,
    s: &State,
    v: &[f64],
    lambda: f64,
    cfg: &CurvatureConfig,
    iter: usize,
) -> Result<Option<State>> {
    let mut alpha = cfg.curvature_step * e.mean_y_squared().sqrt().max(1e-3);
    for _ in 0..cfg.step.max_backtracks {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for sign in [1.0, -1.0] {
            let z: Vec<f64> = s.z.iter().zip(v).map(|(zi, vi)| zi + sign * alpha * vi).collect();
            let l = objective::loss(e, &z)?;
            if l.is_finite() && best.as_ref().is_none_or(|(bl, _)| l < *bl) {
                best = Some((l, z));
            }
        }
        if let Some((l, z)) = best {
            if l <= s.loss - 0.5 * cfg.step.armijo * alpha * alpha * lambda.abs() {
                return State::at(e, z, iter).map(Some);
            }
        }
        alpha *= cfg.step.backtrack;
    }
    Ok(None)
}

fn finish(rule: &str, rec: Recorder, outcome: Outcome, iterations: usize, curv: usize, s: State, dist: f64) -> SolverTrace {
    SolverTrace {
        iterates: rec.entries,
        step_rule: rule.to_string(),
        outcome,
        iterations,
        curvature_steps: curv,
        final_z: s.z,
        final_dist: dist,
    }
}

fn rule_name(prefix: &str, cfg: &StepConfig, e: &MeasurementEnsemble) -> String {
    format!("{prefix}(step0={:.6e}, backtrack={}, armijo={})", cfg.step0(e), cfg.backtrack, cfg.armijo)
}

/// Gradient descent with Armijo backtracking from a fixed first trial step.
pub fn gradient_descent(e: &MeasurementEnsemble, z0: &[f64], cfg: &StepConfig) -> Result<SolverTrace> {
    cfg.validate()?;
    let rule = rule_name("gradient_backtracking", cfg, e);
    let mut rec = Recorder { every: cfg.record_every, entries: Vec::new() };
    let mut s = State::at(e, z0.to_vec(), 0)?;
    for iter in 0..=cfg.max_iter {
        let dist = dist_to_signal(e, &s.z)?;
        let outcome = if dist <= cfg.recover_tol {
            Some(Outcome::Recovered)
        } else if norm(&s.grad) <= cfg.grad_tol {
            Some(Outcome::Stalled)
        } else if iter == cfg.max_iter {
            Some(Outcome::Cap)
        } else {
            None
        };
        if let Some(o) = outcome {
            rec.push(iter, &s, dist, true);
            return Ok(finish(&rule, rec, o, iter, 0, s, dist));
        }
        rec.push(iter, &s, dist, false);
        match gradient_step(e, &s, cfg, iter + 1)? {
            Some(next) => s = next,
            None => {
                rec.push(iter, &s, dist, true);
                return Ok(finish(&rule, rec, Outcome::Stalled, iter, 0, s, dist));
            }
        }
    }
    unreachable!("loop returns at iter == max_iter")
}

/// Gradient descent that, once `‖∇F‖` drops below the switch threshold and
/// the Hessian has an eigenvalue below `−tol_eig`, steps along the
/// corresponding eigenvector instead. Escapes the origin and strict saddles.
pub fn negative_curvature_descent(e: &MeasurementEnsemble, z0: &[f64], cfg: &CurvatureConfig) -> Result<SolverTrace> {
    cfg.step.validate()?;
    let rule = rule_name("negative_curvature", &cfg.step, e);
    let eig = EigenConfig::default();
    let mut rec = Recorder { every: cfg.step.record_every, entries: Vec::new() };
    let mut s = State::at(e, z0.to_vec(), 0)?;
    let mut curv = 0;
    for iter in 0..=cfg.step.max_iter {
        let dist = dist_to_signal(e, &s.z)?;
        if dist <= cfg.step.recover_tol {
            rec.push(iter, &s, dist, true);
            return Ok(finish(&rule, rec, Outcome::Recovered, iter, curv, s, dist));
        }
        if iter == cfg.step.max_iter {
            rec.push(iter, &s, dist, true);
            return Ok(finish(&rule, rec, Outcome::Cap, iter, curv, s, dist));
        }
        rec.push(iter, &s, dist, false);
        let gn = norm(&s.grad);
        let mut next = None;
        if gn < cfg.switch_threshold {
            let low = objective::extreme_eigenvalues_with(e, &s.z, Extreme::Min, &eig)?;
            let high = objective::extreme_eigenvalues_with(e, &s.z, Extreme::Max, &eig)?;
            let tol = cfg.tol_eig_rel * (1.0 + high.value.abs());
            if low.value < -tol {
                next = curvature_step(e, &s, &low.vector, low.value, cfg, iter + 1)?;
                if next.is_some() {
                    curv += 1;
                }
            }
        }
        if next.is_none() && gn > cfg.step.grad_tol {
            next = gradient_step(e, &s, &cfg.step, iter + 1)?;
        }
        match next {
            Some(n) => s = n,
            None => {
                rec.push(iter, &s, dist, true);
                return Ok(finish(&rule, rec, Outcome::Stalled, iter, curv, s, dist));
            }
        }
    }
    unreachable!("loop returns at iter == max_iter")
}

/// Leading eigenvector of `(1/m) Σ y_j² a_j a_jᵀ`, scaled to norm
/// `√mean(y²)` (an unbiased estimate of `‖x‖²` is `mean(y²)`). The sign is
/// fixed so the largest-magnitude entry is positive.
pub fn spectral_init(e: &MeasurementEnsemble) -> Result<Vec<f64>> {
    let gram = objective::y_weighted_gram(e);
    let top = linalg::dense_extreme(&gram, Extreme::Max);
    let pivot = top.vector.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    let scale = e.mean_y_squared().sqrt() * if pivot < 0.0 { -1.0 } else { 1.0 };
    Ok(top.vector.iter().map(|v| scale * v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_ensemble, SignalSpec, TrialSeed};

    fn ens(n: usize, m: usize, seed: u64) -> MeasurementEnsemble {
        sample_ensemble(n, m, SignalSpec::Random, TrialSeed::new(seed, 0)).unwrap()
    }

    #[test]
    fn start_at_signal_recovers_immediately() {
        let e = ens(8, 200, 1);
        let x = e.signal().to_vec();
        let t = gradient_descent(&e, &x, &StepConfig::default()).unwrap();
        assert_eq!((t.outcome, t.iterations), (Outcome::Recovered, 0));
        let t = negative_curvature_descent(&e, &x, &CurvatureConfig::default()).unwrap();
        assert_eq!((t.outcome, t.iterations), (Outcome::Recovered, 0));
    }

    #[test]
    fn plain_descent_stalls_at_origin() {
        let e = ens(8, 200, 2);
        let t = gradient_descent(&e, &[0.0; 8], &StepConfig::default()).unwrap();
        assert_eq!(t.outcome, Outcome::Stalled);
        assert_eq!(t.final_z, vec![0.0; 8]);
    }

    #[test]
    fn curvature_descent_escapes_origin() {
        let e = ens(8, 320, 3);
        let t = negative_curvature_descent(&e, &[0.0; 8], &CurvatureConfig::default()).unwrap();
        assert_eq!(t.outcome, Outcome::Recovered, "{:?}", t.iterates.last());
        assert!(t.curvature_steps >= 1);
        assert!(t.is_monotone(1e-12));
    }

    #[test]
    fn cap_is_reported() {
        let e = ens(6, 200, 4);
        let cfg = StepConfig { max_iter: 3, ..Default::default() };
        let t = gradient_descent(&e, &[0.5, -0.2, 0.1, 0.3, 0.0, 0.4], &cfg).unwrap();
        assert_eq!((t.outcome, t.iterations), (Outcome::Cap, 3));
        assert!(t.is_monotone(1e-12));
    }

    #[test]
    fn scalar_spectral_init() {
        let e = MeasurementEnsemble::from_rows(1, vec![0.5, -2.0, 1.5], vec![1.0], 0).unwrap();
        let z = spectral_init(&e).unwrap();
        assert!((z[0] - e.mean_y_squared().sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_step_config() {
        let e = ens(2, 10, 5);
        let cfg = StepConfig { backtrack: 1.5, ..Default::default() };
        assert!(matches!(gradient_descent(&e, &[1.0, 0.0], &cfg), Err(Error::Config(_))));
    }
}
