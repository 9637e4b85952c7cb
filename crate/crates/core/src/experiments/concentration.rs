//! Concentration of the empirical moment sums, measured by repeated sampling.
//!
//! Each check draws `trials` independent ensembles, computes one statistic
//! per ensemble, and counts how often it lands outside the `ε` band.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{sample_ensemble, MeasurementEnsemble, SignalSpec, TrialSeed};
use crate::error::{Error, Result};
use crate::geometry::empirical_moments;
use crate::linalg::{self, dot, norm};
use crate::objective::weighted_gram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    /// `‖(1/m) Σ a aᵀ − I‖₂ ≤ ε`
    SpectralNorm,
    /// `min_u (1/m) Σ (aᵀu)⁴ ≥ 3 − ε`
    QuarticLower,
    /// `max_u |(1/m) Σ (aᵀu)²(aᵀx)² − (1 + 2⟨u,x⟩²)| ≤ ε`
    CrossMoment,
    /// `max_u |(1/m) Σ (aᵀx)³(aᵀu) − 3⟨u,x⟩| ≤ ε`
    CubicMoment,
    /// `B1 + B2 + B3 = B` to relative error `ε`
    TruncationSplit,
}

impl CheckId {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SpectralNorm => "spectral_norm",
            Self::QuarticLower => "quartic_lower",
            Self::CrossMoment => "cross_moment",
            Self::CubicMoment => "cubic_moment",
            Self::TruncationSplit => "truncation_split",
        }
    }

    /// The quartic check fails from below; every other check fails from above.
    fn fails(&self, value: f64, epsilon: f64) -> bool {
        match self {
            Self::QuarticLower => value < 3.0 - epsilon,
            _ => value > epsilon,
        }
    }
}

impl std::str::FromStr for CheckId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spectral_norm" => Self::SpectralNorm,
            "quartic_lower" => Self::QuarticLower,
            "cross_moment" => Self::CrossMoment,
            "cubic_moment" => Self::CubicMoment,
            "truncation_split" => Self::TruncationSplit,
            other => return Err(Error::Config(format!("unknown check id {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationStat {
    pub check_id: CheckId,
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub failures: usize,
    pub empirical_failure_rate: f64,
    /// Most extreme per-trial value in the failing direction.
    pub worst_value: f64,
    /// Per-trial statistic, in trial order.
    pub values: Vec<f64>,
}

impl ConcentrationStat {
    fn from_values(check_id: CheckId, n: usize, m: usize, epsilon: f64, values: Vec<f64>) -> Self {
        let failures = values.iter().filter(|v| check_id.fails(**v, epsilon)).count();
        let worst_value = match check_id {
            CheckId::QuarticLower => values.iter().copied().fold(f64::INFINITY, f64::min),
            _ => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        Self {
            check_id,
            n,
            m,
            trials: values.len(),
            epsilon,
            failures,
            empirical_failure_rate: failures as f64 / values.len() as f64,
            worst_value,
            values,
        }
    }

    pub fn trial_fails(&self, trial: usize) -> bool {
        self.check_id.fails(self.values[trial], self.epsilon)
    }
}

fn run_trials<F>(n: usize, m: usize, trials: usize, seed: u64, per_trial: F) -> Result<Vec<f64>>
where
    F: Fn(&MeasurementEnsemble, TrialSeed) -> Result<f64> + Sync,
{
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let ts = TrialSeed::new(seed, t);
            let e = sample_ensemble(n, m, SignalSpec::Random, ts)?;
            per_trial(&e, ts.child(1))
        })
        .collect()
}

fn random_directions(n: usize, count: usize, seed: TrialSeed) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(u) = linalg::normalized(&g) {
            out.push(u);
        }
    }
    out
}

/// `‖(1/m) Σ a_j a_jᵀ − I‖₂`
pub fn covariance_deviation(e: &MeasurementEnsemble) -> f64 {
    let mut g = weighted_gram(e, std::iter::repeat(1.0));
    for i in 0..e.n() {
        g[(i, i)] -= 1.0;
    }
    let spec = linalg::dense_spectrum(&g);
    spec[0].abs().max(spec[spec.len() - 1].abs())
}

/// `(1/m) Σ (a_jᵀu)⁴`
pub fn quartic_sum(e: &MeasurementEnsemble, u: &[f64]) -> f64 {
    e.rows().map(|a| dot(a, u).powi(4)).sum::<f64>() / e.m() as f64
}

/// `(1/m) Σ (a_jᵀu)² (a_jᵀx)²`
pub fn cross_moment(e: &MeasurementEnsemble, u: &[f64]) -> f64 {
    let x = e.signal();
    e.rows().map(|a| (dot(a, u) * dot(a, x)).powi(2)).sum::<f64>() / e.m() as f64
}

/// `(1/m) Σ (a_jᵀx)³ (a_jᵀu)`
pub fn cubic_moment(e: &MeasurementEnsemble, u: &[f64]) -> f64 {
    let x = e.signal();
    e.rows().map(|a| dot(a, x).powi(3) * dot(a, u)).sum::<f64>() / e.m() as f64
}

pub fn check_spectral_norm(n: usize, m: usize, epsilon: f64, trials: usize, seed: u64) -> Result<ConcentrationStat> {
    let values = run_trials(n, m, trials, seed, |e, _| Ok(covariance_deviation(e)))?;
    Ok(ConcentrationStat::from_values(CheckId::SpectralNorm, n, m, epsilon, values))
}

pub fn check_quartic_lower(
    n: usize,
    m: usize,
    epsilon: f64,
    trials: usize,
    n_dirs: usize,
    seed: u64,
) -> Result<ConcentrationStat> {
    check_dirs(n_dirs)?;
    let values = run_trials(n, m, trials, seed, |e, ds| {
        Ok(random_directions(n, n_dirs, ds).iter().map(|u| quartic_sum(e, u)).fold(f64::INFINITY, f64::min))
    })?;
    Ok(ConcentrationStat::from_values(CheckId::QuarticLower, n, m, epsilon, values))
}

pub fn check_cross_moment(
    n: usize,
    m: usize,
    epsilon: f64,
    trials: usize,
    n_dirs: usize,
    seed: u64,
) -> Result<ConcentrationStat> {
    check_dirs(n_dirs)?;
    let values = run_trials(n, m, trials, seed, |e, ds| {
        let x = e.signal();
        Ok(random_directions(n, n_dirs, ds)
            .iter()
            .map(|u| {
                let c = dot(u, x);
                (cross_moment(e, u) - (1.0 + 2.0 * c * c)).abs()
            })
            .fold(0.0, f64::max))
    })?;
    Ok(ConcentrationStat::from_values(CheckId::CrossMoment, n, m, epsilon, values))
}

pub fn check_cubic_moment(
    n: usize,
    m: usize,
    epsilon: f64,
    trials: usize,
    n_dirs: usize,
    seed: u64,
) -> Result<ConcentrationStat> {
    check_dirs(n_dirs)?;
    let values = run_trials(n, m, trials, seed, |e, ds| {
        let x = e.signal();
        Ok(random_directions(n, n_dirs, ds)
            .iter()
            .map(|u| (cubic_moment(e, u) - 3.0 * dot(u, x)).abs())
            .fold(0.0, f64::max))
    })?;
    Ok(ConcentrationStat::from_values(CheckId::CubicMoment, n, m, epsilon, values))
}

/// Partition-of-unity check for the truncated split of `B`: per trial, the
/// largest relative error `|B1 + B2 + B3 − B| / B` over `n_dirs` random
/// directions. Fails above `1e-10`.
pub fn check_truncation_split(
    n: usize,
    m: usize,
    cutoff: f64,
    trials: usize,
    n_dirs: usize,
    seed: u64,
) -> Result<ConcentrationStat> {
    check_dirs(n_dirs)?;
    let values = run_trials(n, m, trials, seed, |e, ds| {
        let mut worst = 0.0f64;
        for u in random_directions(n, n_dirs, ds) {
            let split = truncation_split(e, &u, cutoff)?;
            let b = empirical_moments(e, &u)?.b;
            worst = worst.max((split.total() - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
        Ok(worst)
    })?;
    Ok(ConcentrationStat::from_values(CheckId::TruncationSplit, n, m, 1e-10, values))
}

fn check_dirs(n_dirs: usize) -> Result<()> {
    if n_dirs == 0 {
        return Err(Error::Config("n_dirs must be at least 1".into()));
    }
    Ok(())
}

/// Smooth cutoff: 1 on `[−1, 1]`, 0 outside `[−2, 2]`, and the quintic
/// smoothstep `1 − (6s⁵ − 15s⁴ + 10s³)`, `s = |t| − 1`, in between. The
/// result is C² rather than C^∞, which makes no difference for finite sums.
pub fn smooth_cutoff(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let s = a - 1.0;
        1.0 - s * s * s * (s * (6.0 * s - 15.0) + 10.0)
    }
}

/// `B = B1 + B2 + B3` with
///
/// ```text
/// B1 = (1/m) Σ (aᵀx)² φ(aᵀx/N) (aᵀẑ)² φ(aᵀẑ/N)
/// B2 = (1/m) Σ (aᵀx)² (1 − φ(aᵀx/N)) (aᵀẑ)² φ(aᵀẑ/N)
/// B3 = (1/m) Σ (aᵀx)² (aᵀẑ)² (1 − φ(aᵀẑ/N))
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSplit {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl TruncationSplit {
    pub fn total(&self) -> f64 {
        self.b1 + self.b2 + self.b3
    }
}

pub fn truncation_split(e: &MeasurementEnsemble, zhat: &[f64], cutoff: f64) -> Result<TruncationSplit> {
    if zhat.len() != e.n() {
        return Err(Error::Shape { expected: e.n(), got: zhat.len() });
    }
    let s = norm(zhat);
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::NormalizationRequired { norm: s });
    }
    if !(cutoff > 0.0) {
        return Err(Error::Config(format!("cutoff level must be positive (got {cutoff})")));
    }
    let x = e.signal();
    let (mut b1, mut b2, mut b3) = (0.0, 0.0, 0.0);
    for a in e.rows() {
        let v = dot(a, x);
        let u = dot(a, zhat);
        let w = v * v * u * u;
        let px = smooth_cutoff(v / cutoff);
        let pz = smooth_cutoff(u / cutoff);
        b1 += w * px * pz;
        b2 += w * (1.0 - px) * pz;
        b3 += w * (1.0 - pz);
    }
    let m = e.m() as f64;
    Ok(TruncationSplit { b1: b1 / m, b2: b2 / m, b3: b3 / m })
}

/// `max_j max(|a_jᵀx|, |a_jᵀẑ|)` and `min_j` of the same: the row
/// statistics that control when the cutoff is inactive or saturated.
pub fn row_statistic_range(e: &MeasurementEnsemble, zhat: &[f64]) -> (f64, f64) {
    let x = e.signal();
    e.rows()
        .map(|a| dot(a, x).abs().max(dot(a, zhat).abs()))
        .fold((f64::INFINITY, 0.0), |(lo, hi), s| (lo.min(s), hi.max(s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_shape() {
        assert_eq!(smooth_cutoff(0.0), 1.0);
        assert_eq!(smooth_cutoff(-1.0), 1.0);
        assert_eq!(smooth_cutoff(2.0), 0.0);
        assert_eq!(smooth_cutoff(-7.0), 0.0);
        assert!((smooth_cutoff(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=100 {
            let v = smooth_cutoff(1.0 + k as f64 / 100.0);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
    }

    #[test]
    fn one_dimensional_spectral_reduction() {
        let e = sample_ensemble(1, 50, SignalSpec::Random, TrialSeed::new(4, 0)).unwrap();
        let direct = (e.rows().map(|a| a[0] * a[0]).sum::<f64>() / 50.0 - 1.0).abs();
        assert!((covariance_deviation(&e) - direct).abs() < 1e-14);
    }

    #[test]
    fn reductions_at_signal() {
        let e = sample_ensemble(5, 300, SignalSpec::Random, TrialSeed::new(6, 0)).unwrap();
        let x = e.signal().to_vec();
        let d = empirical_moments(&e, &x).unwrap().d;
        assert!((cross_moment(&e, &x) - d).abs() < 1e-12);
        assert!((cubic_moment(&e, &x) - d).abs() < 1e-12);
        assert!((quartic_sum(&e, &x) - d).abs() < 1e-12);
    }

    #[test]
    fn cutoff_extremes() {
        let e = sample_ensemble(6, 200, SignalSpec::Random, TrialSeed::new(8, 0)).unwrap();
        let zhat = random_directions(6, 1, TrialSeed::new(8, 9)).pop().unwrap();
        let b = empirical_moments(&e, &zhat).unwrap().b;
        let (lo, hi) = row_statistic_range(&e, &zhat);
        let open = truncation_split(&e, &zhat, hi * 1.01).unwrap();
        assert_eq!((open.b2, open.b3), (0.0, 0.0));
        assert!((open.b1 - b).abs() <= 1e-12 * b);
        let shut = truncation_split(&e, &zhat, 0.5 * lo).unwrap();
        assert_eq!(shut.b1, 0.0);
        assert!((shut.total() - b).abs() <= 1e-10 * b);
    }

    #[test]
    fn never_fails_at_eps_three() {
        let s = check_quartic_lower(4, 20, 3.0, 5, 10, 1).unwrap();
        assert_eq!(s.failures, 0);
        assert_eq!(s.empirical_failure_rate, 0.0);
    }

    #[test]
    fn failure_rate_is_exact_ratio() {
        let s = check_spectral_norm(8, 8, 0.25, 7, 3).unwrap();
        assert_eq!(s.failures, 7);
        assert_eq!(s.empirical_failure_rate * 7.0, 7.0);
        let s = check_spectral_norm(4, 400, 0.35, 9, 3).unwrap();
        assert_eq!((s.empirical_failure_rate * 9.0).round() as usize, s.failures);
        assert_eq!(s.values.len(), 9);
    }

    #[test]
    fn check_ids_round_trip() {
        for id in [
            CheckId::SpectralNorm,
            CheckId::QuarticLower,
            CheckId::CrossMoment,
            CheckId::CubicMoment,
            CheckId::TruncationSplit,
        ] {
            assert_eq!(id.as_str().parse::<CheckId>().unwrap(), id);
        }
        assert!("bogus".parse::<CheckId>().is_err());
    }
}
