//! Empirical verification of the landscape properties on a fixed ensemble,
//! plus critical-point discovery and classification.
//!
//! The negative-curvature and no-critical-point verifiers work on radially
//! stationary points: for a sampled direction `ẑ`, the point
//! `z = √(B/A) · ẑ` satisfies `⟨∇F(z), z⟩ = 0` exactly, and any true critical
//! point along that ray must be this one. Reports mark this as
//! `"mode": "surrogate"`.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{sample_ensemble, MeasurementEnsemble, SignalSpec, TrialSeed};
use crate::error::{Error, Result};
use crate::geometry::{
    self, classify_region, critical_radius, empirical_moments, polar, RegionConfig, RegionMembership,
    R2_CORRELATION_FLOOR,
};
use crate::linalg::{self, dot, norm, Extreme};
use crate::objective::{self, EigenConfig};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LemmaId {
    #[serde(rename = "R1_curvature")]
    R1Curvature,
    #[serde(rename = "R2_no_critical")]
    R2NoCritical,
    #[serde(rename = "R3_convexity")]
    R3Convexity,
    #[serde(rename = "origin_max")]
    OriginMax,
}

impl LemmaId {
    pub const ALL: [LemmaId; 4] = [Self::R1Curvature, Self::R2NoCritical, Self::R3Convexity, Self::OriginMax];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::R1Curvature => "R1_curvature",
            Self::R2NoCritical => "R2_no_critical",
            Self::R3Convexity => "R3_convexity",
            Self::OriginMax => "origin_max",
        }
    }
}

impl std::fmt::Display for LemmaId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictConfig {
    pub n: usize,
    pub m: usize,
    pub epsilon0: f64,
    pub delta0: f64,
    pub seed: u64,
}

/// Outcome of one verifier. `pass` is exactly "worst statistic on the pass
/// side of the threshold"; the side depends on the verifier (below for R1 and
/// the origin, above for R2 and R3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaVerdict {
    pub lemma_id: LemmaId,
    pub samples: usize,
    pub worst_statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub config: VerdictConfig,
    /// Samples whose statistic fell on the failing side.
    pub violations: usize,
    /// R1 only: samples where the closed-form statistic and the direct
    /// curvature evaluation disagree (sign, or identity beyond 1e-8).
    pub cross_check_failures: usize,
    /// R1 only: largest relative error of the curvature identity.
    pub max_identity_rel_err: f64,
    /// Whether `m` met the sampling regime the property is stated for.
    pub regime_ok: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LandscapeConfig {
    pub region: RegionConfig,
    pub n_dirs: usize,
    pub n_pts: usize,
    /// Minimum gradient norm required at radially stationary R2 points.
    pub r2_margin: f64,
    /// R3 regime constant: `m ≥ C · n · ln n`.
    pub convexity_c: f64,
    #[serde(skip)]
    pub eigen: EigenConfig,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            region: RegionConfig::default(),
            n_dirs: 200,
            n_pts: 100,
            r2_margin: 1e-3,
            convexity_c: 10.0,
            eigen: EigenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub schema: u32,
    pub mode: String,
    pub seed: u64,
    pub ensemble_seed: u64,
    pub n: usize,
    pub m: usize,
    pub verdicts: Vec<LemmaVerdict>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl LandscapeReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, id: LemmaId) -> Option<&LemmaVerdict> {
        self.verdicts.iter().find(|v| v.lemma_id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

fn base_verdict(e: &MeasurementEnsemble, id: LemmaId, region: &RegionConfig, seed: u64, threshold: f64) -> LemmaVerdict {
    LemmaVerdict {
        lemma_id: id,
        samples: 0,
        worst_statistic: 0.0,
        threshold,
        pass: false,
        config: VerdictConfig { n: e.n(), m: e.m(), epsilon0: region.epsilon0, delta0: region.delta0, seed },
        violations: 0,
        cross_check_failures: 0,
        max_identity_rel_err: 0.0,
        regime_ok: true,
    }
}

fn gaussian_vec(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform unit vector orthogonal to `x`, or `None` when `n = 1`.
fn uniform_perp(x: &[f64], rng: &mut ChaCha12Rng) -> Option<Vec<f64>> {
    if x.len() < 2 {
        return None;
    }
    loop {
        let mut g = gaussian_vec(x.len(), rng);
        let c = dot(&g, x);
        linalg::axpy(-c, x, &mut g);
        if let Some(u) = linalg::normalized(&g) {
            return Some(u);
        }
    }
}

/// Unit direction with correlation `σ ~ U[lo, hi]` against `x` and a uniform
/// component in `x^⊥`.
pub fn sample_direction_in_band(x: &[f64], lo: f64, hi: f64, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
    let sigma: f64 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    match uniform_perp(x, rng) {
        Some(w) => {
            let c = (1.0 - sigma * sigma).max(0.0).sqrt();
            let d: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| sigma * xi + c * wi).collect();
            Ok(linalg::normalized(&d).expect("unit combination"))
        }
        None if lo <= 1.0 && 1.0 <= hi => Ok(x.to_vec()),
        None if lo <= -1.0 && -1.0 <= hi => Ok(x.iter().map(|v| -v).collect()),
        None => Err(Error::Sampling),
    }
}

/// The radially stationary point `√(B/A) · ẑ` and its moments.
pub fn radial_critical_point(e: &MeasurementEnsemble, zhat: &[f64]) -> Result<(Vec<f64>, geometry::EmpiricalMoments)> {
    let mom = empirical_moments(e, zhat)?;
    let r = critical_radius(&mom)?.sqrt();
    Ok((zhat.iter().map(|v| r * v).collect(), mom))
}

/// Negative curvature along `x` at radially stationary points with small
/// correlation. The statistic `(3B² − A·D)/A²` has the sign of `H_xx` at
/// `z = √(B/A) ẑ`; each sample is cross-checked against the direct
/// evaluation of `H_xx`.
pub fn verify_r1_curvature(e: &MeasurementEnsemble, epsilon0: f64, n_dirs: usize, seed: TrialSeed) -> Result<LemmaVerdict> {
    let region = RegionConfig { epsilon0, ..RegionConfig::default() };
    region.validate()?;
    if n_dirs == 0 {
        return Err(Error::Config("n_dirs must be at least 1".into()));
    }
    let x = e.signal();
    let band = region.r1_sigma_max();
    let mut rng = seed.rng();
    let mut v = base_verdict(e, LemmaId::R1Curvature, &region, seed.derived, 0.0);
    v.regime_ok = e.m() >= e.n();
    v.worst_statistic = f64::NEG_INFINITY;
    for _ in 0..n_dirs {
        let zhat = sample_direction_in_band(x, -band, band, &mut rng)?;
        let (z, mom) = radial_critical_point(e, &zhat)?;
        let closed = 3.0 * mom.b * mom.b - mom.a * mom.d;
        let stat = closed / (mom.a * mom.a);
        let hxx = objective::hessian_quadratic_form(e, &z, x)?;
        let lhs = 0.25 * hxx * mom.a;
        let rel = (lhs - closed).abs() / closed.abs().max(f64::MIN_POSITIVE);
        v.max_identity_rel_err = v.max_identity_rel_err.max(rel);
        if hxx.signum() != closed.signum() || rel > 1e-8 {
            v.cross_check_failures += 1;
        }
        if stat >= 0.0 {
            v.violations += 1;
        }
        v.worst_statistic = v.worst_statistic.max(stat);
        v.samples += 1;
    }
    v.pass = v.worst_statistic < v.threshold;
    Ok(v)
}

/// No critical points in R2: the gradient norm at radially stationary points
/// with folded correlation in `[1/2, 1]` and `dist ≥ δ₀` stays above
/// `margin`.
pub fn verify_r2_no_critical(
    e: &MeasurementEnsemble,
    delta0: f64,
    n_dirs: usize,
    margin: f64,
    seed: TrialSeed,
) -> Result<LemmaVerdict> {
    let region = RegionConfig { delta0, ..RegionConfig::default() };
    region.validate()?;
    if n_dirs == 0 {
        return Err(Error::Config("n_dirs must be at least 1".into()));
    }
    let x = e.signal();
    let mut rng = seed.rng();
    let mut v = base_verdict(e, LemmaId::R2NoCritical, &region, seed.derived, margin);
    v.regime_ok = e.m() >= e.n();
    v.worst_statistic = f64::INFINITY;
    for _ in 0..n_dirs {
        let zhat = sample_direction_in_band(x, R2_CORRELATION_FLOOR, 1.0, &mut rng)?;
        let (z, _) = radial_critical_point(e, &zhat)?;
        if polar(&z, x)?.dist < delta0 {
            continue;
        }
        let g = norm(&objective::gradient(e, &z)?);
        if g <= margin {
            v.violations += 1;
        }
        v.worst_statistic = v.worst_statistic.min(g);
        v.samples += 1;
    }
    if v.samples == 0 {
        return Err(Error::InsufficientCoverage { delta0 });
    }
    v.pass = v.worst_statistic > v.threshold;
    Ok(v)
}

/// Strong convexity near `±x`: smallest Hessian eigenvalue at points drawn
/// uniformly from the balls of radius `δ₀` around `x` and `−x`.
pub fn verify_r3_convexity(
    e: &MeasurementEnsemble,
    delta0: f64,
    n_pts: usize,
    convexity_c: f64,
    eigen: &EigenConfig,
    seed: TrialSeed,
) -> Result<LemmaVerdict> {
    let region = RegionConfig { delta0, ..RegionConfig::default() };
    region.validate()?;
    if n_pts == 0 {
        return Err(Error::Config("n_pts must be at least 1".into()));
    }
    let n = e.n();
    let x = e.signal();
    let mut rng = seed.rng();
    let mut v = base_verdict(e, LemmaId::R3Convexity, &region, seed.derived, 0.0);
    v.regime_ok = e.m() as f64 >= convexity_c * n as f64 * (n as f64).ln();
    v.worst_statistic = f64::INFINITY;
    for _ in 0..n_pts {
        let dir = linalg::normalized(&gaussian_vec(n, &mut rng)).unwrap_or_else(|| x.to_vec());
        let u: f64 = rng.random();
        let radius = delta0 * u.powf(1.0 / n as f64);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let z: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| sign * xi + radius * di).collect();
        let lam = objective::extreme_eigenvalues_with(e, &z, Extreme::Min, eigen)?.value;
        if lam <= 0.0 {
            v.violations += 1;
        }
        v.worst_statistic = v.worst_statistic.min(lam);
        v.samples += 1;
    }
    v.pass = v.worst_statistic > v.threshold;
    Ok(v)
}

/// Strict local maximum at the origin: `λ_max(∇²F(0)) < 0`, where
/// `∇²F(0) = −4 · (1/m) Σ y_j² a_j a_jᵀ`.
pub fn verify_origin_max(e: &MeasurementEnsemble, eigen: &EigenConfig) -> Result<LemmaVerdict> {
    let region = RegionConfig::default();
    let mut v = base_verdict(e, LemmaId::OriginMax, &region, e.seed(), 0.0);
    v.regime_ok = e.m() >= 2 * e.n();
    let lam = objective::extreme_eigenvalues_with(e, &vec![0.0; e.n()], Extreme::Max, eigen)?.value;
    v.samples = 1;
    v.worst_statistic = lam;
    v.violations = usize::from(lam >= 0.0);
    v.pass = lam < v.threshold;
    Ok(v)
}

/// Samples an ensemble with a random signal and runs all four verifiers.
/// Deterministic in `(n, m, cfg, seed)`.
pub fn run_landscape_report(n: usize, m: usize, cfg: &LandscapeConfig, seed: u64) -> Result<LandscapeReport> {
    cfg.region.validate()?;
    let start = Instant::now();
    let es = TrialSeed::new(seed, 0);
    let e = sample_ensemble(n, m, SignalSpec::Random, es)?;
    let report = report_for_ensemble(&e, cfg, seed)?;
    Ok(LandscapeReport { elapsed: start.elapsed(), ..report })
}

/// Runs all four verifiers on an existing ensemble. Verifier sub-seeds are
/// children `1..=3` of `TrialSeed::new(seed, 0)`.
pub fn report_for_ensemble(e: &MeasurementEnsemble, cfg: &LandscapeConfig, seed: u64) -> Result<LandscapeReport> {
    let start = Instant::now();
    let root = TrialSeed::new(seed, 0);
    let r1 = verify_r1_curvature(e, cfg.region.epsilon0, cfg.n_dirs, root.child(1))?;
    let r2 = match verify_r2_no_critical(e, cfg.region.delta0, cfg.n_dirs, cfg.r2_margin, root.child(2)) {
        Ok(v) => v,
        Err(Error::InsufficientCoverage { .. }) => {
            let mut v = base_verdict(e, LemmaId::R2NoCritical, &cfg.region, root.child(2).derived, cfg.r2_margin);
            v.regime_ok = e.m() >= e.n();
            v
        }
        Err(other) => return Err(other),
    };
    let r3 = verify_r3_convexity(e, cfg.region.delta0, cfg.n_pts, cfg.convexity_c, &cfg.eigen, root.child(3))?;
    let origin = verify_origin_max(e, &cfg.eigen)?;
    // the region thresholds live in every verdict config
    let verdicts = [r1, r2, r3, origin]
        .into_iter()
        .map(|mut v| {
            v.config.epsilon0 = cfg.region.epsilon0;
            v.config.delta0 = cfg.region.delta0;
            v
        })
        .collect();
    Ok(LandscapeReport {
        schema: REPORT_SCHEMA,
        mode: "surrogate".into(),
        seed,
        ensemble_seed: e.seed(),
        n: e.n(),
        m: e.m(),
        verdicts,
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Minimum,
    Maximum,
    Saddle,
    Degenerate,
}

impl CriticalKind {
    /// Classifies from the extreme eigenvalues with
    /// `tol_eig = rel_tol · (1 + |λ_max|)`.
    pub fn classify(lambda_min: f64, lambda_max: f64, rel_tol: f64) -> Self {
        let tol = rel_tol * (1.0 + lambda_max.abs());
        if lambda_min > tol {
            Self::Minimum
        } else if lambda_max < -tol {
            Self::Maximum
        } else if lambda_min < -tol && lambda_max > tol {
            Self::Saddle
        } else {
            Self::Degenerate
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPointRecord {
    pub seed_index: usize,
    pub z: Vec<f64>,
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kind: CriticalKind,
    pub region: RegionMembership,
    pub dist_to_signal: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CriticalSearchOutcome {
    Converged(CriticalPointRecord),
    /// The iteration cap was hit or the line search stalled away from a
    /// critical point.
    Unconverged { seed_index: usize, z: Vec<f64>, grad_norm: f64, iterations: usize },
}

impl CriticalSearchOutcome {
    pub fn record(&self) -> Option<&CriticalPointRecord> {
        match self {
            Self::Converged(r) => Some(r),
            Self::Unconverged { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    /// Stop when `‖∇F(z)‖ ≤ tol · (1 + ‖z‖³)`.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub tol_eig_rel: f64,
    pub region: RegionConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            armijo: 1e-4,
            backtrack: 0.5,
            tol_eig_rel: 1e-6,
            region: RegionConfig::default(),
        }
    }
}

/// Locates near-critical points by minimizing `½‖∇F‖²` from each seed.
///
/// The search direction is the Newton step `−H⁻¹g` (a descent direction for
/// `½‖g‖²` whenever `H` is invertible), falling back to `−Hg`; step lengths
/// come from Armijo backtracking on `½‖g‖²`.
pub fn find_critical_points(
    e: &MeasurementEnsemble,
    seeds: &[Vec<f64>],
    cfg: &SearchConfig,
) -> Result<Vec<CriticalSearchOutcome>> {
    if !(cfg.tol > 0.0) {
        return Err(Error::Config("critical tolerance must be positive".into()));
    }
    cfg.region.validate()?;
    seeds.iter().enumerate().map(|(i, s)| search_one(e, i, s, cfg)).collect()
}

fn merit(e: &MeasurementEnsemble, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let g = objective::gradient(e, z)?;
    Ok((0.5 * dot(&g, &g), g))
}

fn search_one(e: &MeasurementEnsemble, seed_index: usize, seed: &[f64], cfg: &SearchConfig) -> Result<CriticalSearchOutcome> {
    let mut z = seed.to_vec();
    let (mut phi, mut g) = merit(e, &z)?;
    let mut iterations = 0;
    for it in 0..=cfg.max_iter {
        iterations = it;
        let gn = norm(&g);
        let zn = norm(&z);
        if gn <= cfg.tol * (1.0 + zn * zn * zn) {
            return classify_point(e, seed_index, z, gn, it, cfg).map(CriticalSearchOutcome::Converged);
        }
        if it == cfg.max_iter {
            break;
        }
        let h = objective::full_hessian(e, &z)?;
        let gv = nalgebra::DVector::from_column_slice(&g);
        let hg: Vec<f64> = (&h * &gv).iter().copied().collect();
        let newton = h.clone().lu().solve(&(-&gv)).map(|d| d.iter().copied().collect::<Vec<f64>>());
        let (dir, slope) = match newton {
            Some(d) if d.iter().all(|v| v.is_finite()) && dot(&hg, &d) < 0.0 => {
                let s = dot(&hg, &d);
                (d, s)
            }
            _ => (hg.iter().map(|v| -v).collect(), -dot(&hg, &hg)),
        };
        if !(slope < 0.0) {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = z.iter().zip(&dir).map(|(zi, di)| zi + alpha * di).collect();
            let (p, tg) = merit(e, &trial)?;
            if p.is_finite() && p <= phi + cfg.armijo * alpha * slope {
                accepted = Some((trial, p, tg));
                break;
            }
            alpha *= cfg.backtrack;
        }
        match accepted {
            Some((nz, p, ng)) => {
                z = nz;
                phi = p;
                g = ng;
            }
            None => break,
        }
    }
    Ok(CriticalSearchOutcome::Unconverged { seed_index, grad_norm: norm(&g), z, iterations })
}

fn classify_point(
    e: &MeasurementEnsemble,
    seed_index: usize,
    z: Vec<f64>,
    grad_norm: f64,
    iterations: usize,
    cfg: &SearchConfig,
) -> Result<CriticalPointRecord> {
    let h = objective::full_hessian(e, &z)?;
    let spec = linalg::dense_spectrum(&h);
    let (lambda_min, lambda_max) = (spec[0], spec[spec.len() - 1]);
    let p = polar(&z, e.signal())?;
    Ok(CriticalPointRecord {
        seed_index,
        grad_norm,
        lambda_min,
        lambda_max,
        kind: CriticalKind::classify(lambda_min, lambda_max, cfg.tol_eig_rel),
        region: classify_region(&p, &cfg.region)?,
        dist_to_signal: p.dist,
        iterations,
        z,
    })
}
