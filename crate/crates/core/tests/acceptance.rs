//! Acceptance suite: one PASS/FAIL line per criterion. Sizes and tolerances
//! come from `acceptance.json` next to this file.

use std::process::ExitCode;
use std::time::Instant;

use prlandscape::ensemble::{sample_ensemble, SignalSpec, TrialSeed};
use prlandscape::experiments::csv::{write_landscape_csv, write_transition_csv};
use prlandscape::experiments::{
    check_quartic_lower, check_spectral_norm, check_truncation_split, negative_curvature_descent, phase_transition,
    CurvatureConfig, Outcome, Scaling, TransitionConfig, TransitionMode,
};
use prlandscape::geometry::{critical_radius, empirical_moments, PopulationMoments};
use prlandscape::landscape::{find_critical_points, run_landscape_report, CriticalKind, SearchConfig};
use prlandscape::linalg::{self, dot, norm};
use prlandscape::objective::{self, y_weighted_gram};
use prlandscape::{Extreme, LandscapeConfig, LemmaId, MeasurementEnsemble};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Config {
    seed: u64,
    calculus: Calculus,
    stationarity: Stationarity,
    population: Population,
    landscape: Landscape,
    critical: Critical,
    solver: Solver,
    concentration: Concentration,
    determinism: Determinism,
}

#[derive(Deserialize)]
struct Calculus {
    n: usize,
    m: usize,
    points: usize,
    grad_rel: f64,
    hvp_rel: f64,
    polar_abs: f64,
    max_seconds: f64,
}

#[derive(Deserialize)]
struct Stationarity {
    n: usize,
    m: usize,
    directions: usize,
    grad_abs: f64,
    radial_rel: f64,
}

#[derive(Deserialize)]
struct Population {
    n: usize,
    m: usize,
    sigmas: Vec<f64>,
    trials: usize,
    tol: f64,
    min_pass: usize,
    max_seconds: f64,
}

#[derive(Deserialize)]
struct Landscape {
    n: usize,
    m: usize,
    ensembles: usize,
    epsilon0: f64,
    delta0: f64,
    n_dirs: usize,
    n_pts: usize,
    r2_margin: f64,
    origin_rel: f64,
}

#[derive(Deserialize)]
struct Critical {
    n: usize,
    m: usize,
    seeds: usize,
    seed_radius: f64,
    dist_floor: f64,
    saddle_radius_tol: f64,
}

#[derive(Deserialize)]
struct Solver {
    n: usize,
    m: usize,
    runs: usize,
    min_rate: f64,
    max_seconds: f64,
}

#[derive(Deserialize)]
struct Concentration {
    spectral: Spectral,
    quartic: Quartic,
    truncation: Truncation,
}

#[derive(Deserialize)]
struct Spectral {
    n: usize,
    m: usize,
    epsilon: f64,
    trials: usize,
    max_rate: f64,
}

#[derive(Deserialize)]
struct Quartic {
    n: usize,
    m: usize,
    epsilon: f64,
    trials: usize,
    n_dirs: usize,
    max_rate: f64,
}

#[derive(Deserialize)]
struct Truncation {
    n: usize,
    m: usize,
    cutoffs: Vec<f64>,
    trials: usize,
    n_dirs: usize,
}

#[derive(Deserialize)]
struct Determinism {
    verify_n: usize,
    verify_m: usize,
    transition_n: Vec<usize>,
    transition_mult: Vec<f64>,
    transition_trials: usize,
}

type Check = Result<String, String>;

fn gaussian(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        if let Some(u) = linalg::normalized(&gaussian(n, rng)) {
            return u;
        }
    }
}

fn ensemble(n: usize, m: usize, seed: u64, idx: u64) -> MeasurementEnsemble {
    sample_ensemble(n, m, SignalSpec::Random, TrialSeed::new(seed, idx)).expect("ensemble")
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    norm(&linalg::sub(a, b)) / norm(b).max(1e-300)
}

fn calculus(cfg: &Calculus, seed: u64) -> Check {
    let start = Instant::now();
    let e = ensemble(cfg.n, cfg.m, seed, 1);
    let mut rng = TrialSeed::new(seed, 2).rng();
    let (mut g_worst, mut h_worst, mut p_worst) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cfg.points {
        let z = linalg::scaled(1.5, &gaussian(cfg.n, &mut rng));
        let xi = unit(cfg.n, &mut rng);
        let g = objective::gradient(&e, &z).map_err(|e| e.to_string())?;
        let fd = objective::finite_difference_gradient(&e, &z).map_err(|e| e.to_string())?;
        g_worst = g_worst.max(rel(&fd, &g));

        let hv = objective::hessian_vector_product(&e, &z, &xi).map_err(|e| e.to_string())?;
        let h = 1e-5 * (1.0 + norm(&z));
        let gp = objective::gradient(&e, &linalg::add(&z, &linalg::scaled(h, &xi))).unwrap();
        let gm = objective::gradient(&e, &linalg::sub(&z, &linalg::scaled(h, &xi))).unwrap();
        let fd_hv: Vec<f64> = gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * h)).collect();
        h_worst = h_worst.max(rel(&fd_hv, &hv));

        let q = objective::hessian_quadratic_form(&e, &z, &xi).map_err(|e| e.to_string())?;
        p_worst = p_worst.max((dot(&xi, &hv) - q).abs() / q.abs().max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("grad rel {g_worst:.2e}, hvp rel {h_worst:.2e}, polarization {p_worst:.2e}, {secs:.2}s");
    if g_worst <= cfg.grad_rel && h_worst <= cfg.hvp_rel && p_worst <= cfg.polar_abs && secs < cfg.max_seconds {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn stationarity(cfg: &Stationarity, seed: u64) -> Check {
    let e = ensemble(cfg.n, cfg.m, seed, 3);
    let x = e.signal().to_vec();
    let mut worst_exact = 0.0f64;
    for z in [x.clone(), linalg::scaled(-1.0, &x), vec![0.0; cfg.n]] {
        worst_exact = worst_exact.max(norm(&objective::gradient(&e, &z).unwrap()));
    }
    let mut rng = TrialSeed::new(seed, 4).rng();
    let mut radial = 0.0f64;
    for _ in 0..cfg.directions {
        let zhat = unit(cfg.n, &mut rng);
        let mom = empirical_moments(&e, &zhat).unwrap();
        let r = critical_radius(&mom).map_err(|e| e.to_string())?;
        let z = linalg::scaled(r.sqrt(), &zhat);
        let g = objective::gradient(&e, &z).unwrap();
        let scale = 4.0 * r.sqrt() * (r * mom.a + mom.b);
        radial = radial.max(dot(&g, &zhat).abs() / scale);
    }
    let msg = format!("max |grad| at 0, x, -x {worst_exact:.2e}; radial rel {radial:.2e}");
    if worst_exact <= cfg.grad_abs && radial <= cfg.radial_rel {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn population(cfg: &Population, seed: u64) -> Check {
    let start = Instant::now();
    let hits: Vec<Vec<bool>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let e = ensemble(cfg.n, cfg.m, seed, 100 + t as u64);
            let x = e.signal();
            let mut rng = TrialSeed::new(seed, 100 + t as u64).child(1).rng();
            let g = gaussian(cfg.n, &mut rng);
            let perp = linalg::normalized(&linalg::sub(&g, &linalg::scaled(dot(&g, x), x))).expect("perp");
            cfg.sigmas
                .iter()
                .map(|&s| {
                    let zhat: Vec<f64> =
                        x.iter().zip(&perp).map(|(xi, pi)| s * xi + (1.0 - s * s).max(0.0).sqrt() * pi).collect();
                    let zhat = linalg::normalized(&zhat).unwrap();
                    let emp = empirical_moments(&e, &zhat).unwrap();
                    PopulationMoments::at(s).deviations(&emp).iter().all(|d| *d <= cfg.tol)
                })
                .collect()
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let counts: Vec<usize> = (0..cfg.sigmas.len()).map(|k| hits.iter().filter(|h| h[k]).count()).collect();
    let msg = format!("sigma {:?} within tol in {:?} of {} trials, {secs:.1}s", cfg.sigmas, counts, cfg.trials);
    if counts.iter().all(|c| *c >= cfg.min_pass) && secs < cfg.max_seconds {
        Ok(msg)
    } else {
        Err(msg)
    }
}

struct LandscapeRuns {
    r1: Check,
    r2: Check,
    r3: Check,
    origin: Check,
}

fn landscape(cfg: &Landscape, seed: u64) -> LandscapeRuns {
    let mut lc = LandscapeConfig::default();
    lc.region.epsilon0 = cfg.epsilon0;
    lc.region.delta0 = cfg.delta0;
    lc.n_dirs = cfg.n_dirs;
    lc.n_pts = cfg.n_pts;
    lc.r2_margin = cfg.r2_margin;
    let runs: Vec<_> = (0..cfg.ensembles)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(1000 + k as u64);
            let report = run_landscape_report(cfg.n, cfg.m, &lc, s).expect("report");
            let e = ensemble(cfg.n, cfg.m, s, 0);
            let gram_min = linalg::dense_extreme(&y_weighted_gram(&e), Extreme::Min).value;
            (report, gram_min)
        })
        .collect();
    let get = |id: LemmaId| runs.iter().map(move |(r, _)| r.verdict(id).expect("verdict"));

    let r1 = {
        let viol: usize = get(LemmaId::R1Curvature).map(|v| v.violations).sum();
        let cross: usize = get(LemmaId::R1Curvature).map(|v| v.cross_check_failures).sum();
        let worst = get(LemmaId::R1Curvature).map(|v| v.worst_statistic).fold(f64::NEG_INFINITY, f64::max);
        let ident = get(LemmaId::R1Curvature).map(|v| v.max_identity_rel_err).fold(0.0, f64::max);
        let samples: usize = get(LemmaId::R1Curvature).map(|v| v.samples).sum();
        let msg = format!(
            "{samples} samples, worst 3B^2-AD over A^2 {worst:.4}, violations {viol}, cross-check failures {cross}, identity rel err {ident:.1e}"
        );
        if viol == 0 && cross == 0 && ident <= 1e-8 && worst < 0.0 {
            Ok(msg)
        } else {
            Err(msg)
        }
    };
    let r2 = {
        let worst = get(LemmaId::R2NoCritical).map(|v| v.worst_statistic).fold(f64::INFINITY, f64::min);
        let samples: usize = get(LemmaId::R2NoCritical).map(|v| v.samples).sum();
        let msg = format!("{samples} stationary samples, min gradient norm {worst:.4} vs margin {:.0e}", cfg.r2_margin);
        if get(LemmaId::R2NoCritical).all(|v| v.pass) && worst > cfg.r2_margin {
            Ok(msg)
        } else {
            Err(msg)
        }
    };
    let r3 = {
        let worst = get(LemmaId::R3Convexity).map(|v| v.worst_statistic).fold(f64::INFINITY, f64::min);
        let samples: usize = get(LemmaId::R3Convexity).map(|v| v.samples).sum();
        let msg = format!("{samples} points within dist {}, min lambda_min {worst:.4}", cfg.delta0);
        if get(LemmaId::R3Convexity).all(|v| v.pass) && worst > 0.0 && samples == cfg.ensembles * cfg.n_pts {
            Ok(msg)
        } else {
            Err(msg)
        }
    };
    let origin = {
        let mut worst_rel = 0.0f64;
        let mut worst_lam = f64::NEG_INFINITY;
        for (r, gram_min) in &runs {
            let lam = r.verdict(LemmaId::OriginMax).unwrap().worst_statistic;
            worst_lam = worst_lam.max(lam);
            worst_rel = worst_rel.max((lam + 4.0 * gram_min).abs() / lam.abs().max(1e-300));
        }
        let msg = format!("max lambda_max(H(0)) {worst_lam:.4}, rel err vs -4 lambda_min(gram) {worst_rel:.1e}");
        if worst_lam < 0.0 && worst_rel <= cfg.origin_rel && cfg.m >= 2 * cfg.n {
            Ok(msg)
        } else {
            Err(msg)
        }
    };
    LandscapeRuns { r1, r2, r3, origin }
}

fn critical(cfg: &Critical, seed: u64) -> Check {
    let e = ensemble(cfg.n, cfg.m, seed, 5);
    let mut rng = TrialSeed::new(seed, 6).rng();
    let seeds: Vec<Vec<f64>> = (0..cfg.seeds)
        .map(|_| {
            let r = cfg.seed_radius * rng.random::<f64>().powf(1.0 / cfg.n as f64);
            linalg::scaled(r, &unit(cfg.n, &mut rng))
        })
        .collect();
    let out = find_critical_points(&e, &seeds, &SearchConfig::default()).map_err(|e| e.to_string())?;
    let recs: Vec<_> = out.iter().filter_map(|o| o.record()).collect();
    let far: Vec<_> = recs.iter().filter(|r| r.dist_to_signal > cfg.dist_floor).collect();
    let bad = far.iter().filter(|r| !(r.lambda_min < 0.0)).count();
    let saddles: Vec<f64> = far.iter().filter(|r| r.kind == CriticalKind::Saddle).map(|r| norm(&r.z)).collect();
    let maxima = far.iter().filter(|r| r.kind == CriticalKind::Maximum).count();
    let mean_radius = saddles.iter().sum::<f64>() / saddles.len().max(1) as f64;
    let target = 1.0 / 3f64.sqrt();
    let msg = format!(
        "{} converged ({} away from +-x: {} saddles, {} maxima, {bad} without negative curvature), mean saddle radius {mean_radius:.4} vs {target:.4}",
        recs.len(),
        far.len(),
        saddles.len(),
        maxima
    );
    if bad == 0 && !saddles.is_empty() && (mean_radius - target).abs() <= cfg.saddle_radius_tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn solver(cfg: &Solver, seed: u64) -> Check {
    let start = Instant::now();
    let scfg = CurvatureConfig::default();
    let results: Vec<(Outcome, usize)> = (0..cfg.runs)
        .into_par_iter()
        .map(|k| {
            let e = ensemble(cfg.n, cfg.m, seed, 2000 + k as u64);
            let z0 = unit(cfg.n, &mut TrialSeed::new(seed, 2000 + k as u64).child(1).rng());
            let t = negative_curvature_descent(&e, &z0, &scfg).expect("solver");
            (t.outcome, t.curvature_steps)
        })
        .collect();
    let rate = results.iter().filter(|r| r.0 == Outcome::Recovered).count() as f64 / cfg.runs as f64;
    let e0 = ensemble(cfg.n, cfg.m, seed, 2000);
    let t0 = negative_curvature_descent(&e0, &vec![0.0; cfg.n], &scfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "random-init recovery {rate:.2}; from 0: {} after {} iterations ({} curvature steps, dist {:.1e}), {secs:.1}s",
        t0.outcome.as_str(),
        t0.iterations,
        t0.curvature_steps,
        t0.final_dist
    );
    if rate >= cfg.min_rate && t0.outcome == Outcome::Recovered && t0.curvature_steps >= 1 && secs < cfg.max_seconds {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn concentration(cfg: &Concentration, seed: u64) -> Check {
    let sp = &cfg.spectral;
    let spec = check_spectral_norm(sp.n, sp.m, sp.epsilon, sp.trials, seed ^ 0x51).map_err(|e| e.to_string())?;
    let q = &cfg.quartic;
    let quart =
        check_quartic_lower(q.n, q.m, q.epsilon, q.trials, q.n_dirs, seed ^ 0x52).map_err(|e| e.to_string())?;
    let tr = &cfg.truncation;
    let mut trunc_worst = 0.0f64;
    let mut trunc_fail = 0;
    for (k, &c) in tr.cutoffs.iter().enumerate() {
        let s = check_truncation_split(tr.n, tr.m, c, tr.trials, tr.n_dirs, seed ^ (0x60 + k as u64))
            .map_err(|e| e.to_string())?;
        trunc_worst = trunc_worst.max(s.worst_value);
        trunc_fail += s.failures;
    }
    let msg = format!(
        "spectral fail rate {:.2} (worst {:.3}); quartic fail rate {:.2} (worst min {:.3}); truncation worst rel {trunc_worst:.1e}",
        spec.empirical_failure_rate, spec.worst_value, quart.empirical_failure_rate, quart.worst_value
    );
    if spec.empirical_failure_rate <= sp.max_rate && quart.empirical_failure_rate <= q.max_rate && trunc_fail == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism(cfg: &Determinism, seed: u64) -> Check {
    let verify_bytes = || {
        let r = run_landscape_report(cfg.verify_n, cfg.verify_m, &LandscapeConfig::default(), seed).unwrap();
        let mut out = Vec::new();
        write_landscape_csv(&mut out, &[r]).unwrap();
        out
    };
    let transition_bytes = |threads: usize| {
        let mut tc = TransitionConfig::new(
            cfg.transition_n.clone(),
            cfg.transition_mult.clone(),
            cfg.transition_trials,
            TransitionMode::Solve,
            seed,
        );
        tc.scaling = Scaling::NLogN;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let res = pool.install(|| phase_transition(&tc)).unwrap();
        let mut out = Vec::new();
        write_transition_csv(&mut out, &res.trials).unwrap();
        out
    };
    let (v1, v2) = (verify_bytes(), verify_bytes());
    let (t1, t2) = (transition_bytes(1), transition_bytes(4));
    let msg = format!("landscape.csv {} bytes, transition.csv {} bytes (1 vs 4 threads)", v1.len(), t1.len());
    if v1 == v2 && t1 == t2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/acceptance.json");
    let cfg: Config = serde_json::from_str(&std::fs::read_to_string(path).expect("acceptance.json"))
        .expect("acceptance.json schema");
    let seed = cfg.seed;
    let start = Instant::now();

    let mut results: Vec<(&str, Check)> = Vec::new();
    results.push(("calculus consistency", calculus(&cfg.calculus, seed)));
    results.push(("exact stationarity", stationarity(&cfg.stationarity, seed)));
    results.push(("population moments", population(&cfg.population, seed)));
    let l = landscape(&cfg.landscape, seed);
    results.push(("negative curvature in R1", l.r1));
    results.push(("no critical points in R2", l.r2));
    results.push(("strong convexity in R3", l.r3));
    results.push(("origin is a strict maximum", l.origin));
    results.push(("small-n critical point classification", critical(&cfg.critical, seed)));
    results.push(("negative curvature descent recovery", solver(&cfg.solver, seed)));
    results.push(("concentration suite", concentration(&cfg.concentration, seed)));
    results.push(("seed determinism", determinism(&cfg.determinism, seed)));

    let mut failed = 0;
    for (k, (name, r)) in results.iter().enumerate() {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{:>2}] {name}: {detail}", k + 1);
    }
    println!("{} of {} criteria passed in {:.1}s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
