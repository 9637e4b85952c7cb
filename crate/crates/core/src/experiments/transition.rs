//! Sweeps over the sampling ratio `m / (n ln n)` or `m / n`, measuring either
//! solver recovery or the landscape verdicts.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{random_direction, sample_ensemble, SignalSpec, TrialSeed};
use crate::error::{Error, Result};
use crate::landscape::{report_for_ensemble, LandscapeConfig};

use super::solvers::{negative_curvature_descent, CurvatureConfig, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// `m = ⌈c · n · ln n⌉`
    NLogN,
    /// `m = ⌈c · n⌉`
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionMode {
    /// Random-init negative-curvature descent per trial.
    Solve,
    /// Full landscape report per trial.
    Benign,
}

pub fn sample_count(n: usize, multiplier: f64, scaling: Scaling) -> usize {
    let base = match scaling {
        Scaling::NLogN => n as f64 * (n as f64).ln(),
        Scaling::Linear => n as f64,
    };
    ((multiplier * base).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionConfig {
    pub n_list: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub trials: usize,
    pub mode: TransitionMode,
    pub scaling: Scaling,
    pub seed: u64,
    pub landscape: LandscapeConfig,
    pub solver: CurvatureConfig,
}

impl TransitionConfig {
    pub fn new(n_list: Vec<usize>, multipliers: Vec<f64>, trials: usize, mode: TransitionMode, seed: u64) -> Self {
        Self {
            n_list,
            multipliers,
            trials,
            mode,
            scaling: Scaling::NLogN,
            seed,
            landscape: LandscapeConfig::default(),
            solver: CurvatureConfig::default(),
        }
    }
}

/// One trial row. In benign mode `iters` is 0 and `final_dist` is NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTrial {
    pub n: usize,
    pub m: usize,
    pub multiplier: f64,
    pub trial: usize,
    pub outcome: String,
    pub iters: usize,
    pub final_dist: f64,
    pub success: bool,
    pub benign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCell {
    pub n: usize,
    pub m: usize,
    pub multiplier: f64,
    pub trials: usize,
    pub success_rate: f64,
    pub benign_rate: f64,
    pub mean_iters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub cells: Vec<TransitionCell>,
    pub trials: Vec<TransitionTrial>,
}

/// Seed for trial `t` of cell `(n, m)`; independent of list ordering.
pub fn trial_seed(base: u64, n: usize, m: usize, t: usize) -> TrialSeed {
    TrialSeed::new(base, ((n as u64) << 32) ^ m as u64).child(t as u64)
}

pub fn phase_transition(cfg: &TransitionConfig) -> Result<TransitionResult> {
    if cfg.n_list.is_empty() || cfg.multipliers.is_empty() {
        return Err(Error::Config("n list and multiplier list must be nonempty".into()));
    }
    if cfg.trials == 0 || cfg.n_list.contains(&0) || cfg.multipliers.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Config("need trials >= 1, n >= 1 and positive multipliers".into()));
    }
    cfg.landscape.region.validate()?;
    cfg.solver.step.validate()?;

    let mut jobs = Vec::new();
    for &n in &cfg.n_list {
        for &c in &cfg.multipliers {
            let m = sample_count(n, c, cfg.scaling);
            for t in 0..cfg.trials {
                jobs.push((n, m, c, t));
            }
        }
    }
    let trials: Vec<TransitionTrial> =
        jobs.par_iter().map(|&(n, m, c, t)| run_trial(cfg, n, m, c, t)).collect();

    let cells = trials
        .chunks(cfg.trials)
        .map(|chunk| {
            let k = chunk.len() as f64;
            TransitionCell {
                n: chunk[0].n,
                m: chunk[0].m,
                multiplier: chunk[0].multiplier,
                trials: chunk.len(),
                success_rate: chunk.iter().filter(|t| t.success).count() as f64 / k,
                benign_rate: chunk.iter().filter(|t| t.benign).count() as f64 / k,
                mean_iters: chunk.iter().map(|t| t.iters as f64).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(TransitionResult { cells, trials })
}

fn run_trial(cfg: &TransitionConfig, n: usize, m: usize, multiplier: f64, t: usize) -> TransitionTrial {
    let ts = trial_seed(cfg.seed, n, m, t);
    let mut row = TransitionTrial {
        n,
        m,
        multiplier,
        trial: t,
        outcome: "error".into(),
        iters: 0,
        final_dist: f64::NAN,
        success: false,
        benign: false,
    };
    let Ok(e) = sample_ensemble(n, m, SignalSpec::Random, ts) else {
        return row;
    };
    match cfg.mode {
        TransitionMode::Solve => {
            let z0 = random_direction(n, &mut ts.child(1).rng());
            if let Ok(trace) = negative_curvature_descent(&e, &z0, &cfg.solver) {
                row.outcome = trace.outcome.as_str().into();
                row.iters = trace.iterations;
                row.final_dist = trace.final_dist;
                row.success = trace.outcome == Outcome::Recovered;
                row.benign = trace.outcome != Outcome::Stalled;
            }
        }
        TransitionMode::Benign => {
            if let Ok(report) = report_for_ensemble(&e, &cfg.landscape, ts.derived) {
                row.benign = report.all_pass();
                row.success = row.benign;
                row.outcome = if row.benign { "benign" } else { "not_benign" }.into();
            }
        }
    }
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    /// Fraction of bootstrap replicates in which a non-decreasing fit of
    /// rate against `m` is at least as good as a non-increasing fit.
    pub support: f64,
    pub replicates: usize,
    pub pass: bool,
}

/// Least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (v, w) in values.iter().zip(weights) {
        blocks.push((*v, *w, 1));
        while blocks.len() >= 2 {
            let (v2, w2, c2) = blocks[blocks.len() - 1];
            let (v1, w1, c1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / w, w, c1 + c2));
        }
    }
    blocks.into_iter().flat_map(|(v, _, c)| std::iter::repeat_n(v, c)).collect()
}

fn sse(values: &[f64], fit: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(fit).zip(weights).map(|((v, f), w)| w * (v - f) * (v - f)).sum()
}

fn trend_score(groups: &[Vec<(f64, f64)>]) -> (f64, f64) {
    let (mut up, mut down) = (0.0, 0.0);
    for g in groups {
        let vals: Vec<f64> = g.iter().map(|p| p.0).collect();
        let w: Vec<f64> = g.iter().map(|p| p.1).collect();
        up += sse(&vals, &isotonic_fit(&vals, &w), &w);
        let neg: Vec<f64> = vals.iter().map(|v| -v).collect();
        let fit_down: Vec<f64> = isotonic_fit(&neg, &w).into_iter().map(|v| -v).collect();
        down += sse(&vals, &fit_down, &w);
    }
    (up, down)
}

/// Parametric bootstrap test that success rates increase with `m` within
/// each `n`. Each replicate redraws every cell's successes as
/// `Binomial(trials, rate)`; it supports the upward trend when the
/// isotonic non-decreasing fit has no larger squared error than the
/// non-increasing one. Passes when at least 95% of replicates agree.
pub fn trend_check(cells: &[TransitionCell], replicates: usize, seed: u64) -> TrendReport {
    let mut by_n: std::collections::BTreeMap<usize, Vec<&TransitionCell>> = Default::default();
    for c in cells {
        by_n.entry(c.n).or_default().push(c);
    }
    for v in by_n.values_mut() {
        v.sort_by_key(|c| c.m);
    }
    let mut rng = TrialSeed::new(seed, 0).rng();
    let mut agree = 0usize;
    for _ in 0..replicates.max(1) {
        let groups: Vec<Vec<(f64, f64)>> = by_n
            .values()
            .map(|cs| {
                cs.iter()
                    .map(|c| {
                        let hits = (0..c.trials).filter(|_| rng.random::<f64>() < c.success_rate).count();
                        (hits as f64 / c.trials as f64, c.trials as f64)
                    })
                    .collect()
            })
            .collect();
        let (up, down) = trend_score(&groups);
        if up <= down {
            agree += 1;
        }
    }
    let replicates = replicates.max(1);
    let support = agree as f64 / replicates as f64;
    TrendReport { support, replicates, pass: support >= 0.95 }
}
