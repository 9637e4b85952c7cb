//! `prlandscape` command-line front end.
//!
//! Exit codes: 0 success or all checks pass, 1 usage/config/I-O error,
//! 2 a verdict or tolerance failed.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prlandscape::ensemble::{random_direction, sample_ensemble, SignalSpec, TrialSeed};
use prlandscape::experiments::csv::{write_concentration_csv, write_landscape_csv, write_transition_csv};
use prlandscape::experiments::{
    check_cross_moment, check_cubic_moment, check_quartic_lower, check_spectral_norm, check_truncation_split,
    gradient_descent, negative_curvature_descent, phase_transition, sample_count, spectral_init, trend_check,
    CheckId, ConcentrationStat, CurvatureConfig, Scaling, StepConfig, TransitionConfig, TransitionMode,
};
use prlandscape::geometry::{empirical_moments, PopulationMoments};
use prlandscape::landscape::run_landscape_report;
use prlandscape::linalg;
use prlandscape::{LandscapeConfig, RegionConfig};
use serde::Serialize;

use manifest::Run;

#[derive(Parser)]
#[command(name = "prlandscape", version, about = "Landscape verification for intensity least-squares phase retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the four landscape verifiers on one sampled ensemble.
    Verify(VerifyArgs),
    /// Sweep recovery or benignness over sample counts.
    Transition(TransitionArgs),
    /// Monte Carlo concentration checks.
    Moments(MomentsArgs),
    /// Run a solver on one sampled ensemble.
    Solve(SolveArgs),
    /// Compare empirical moments with their infinite-sample values.
    OracleCheck(OracleArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "PRLANDSCAPE_JOBS", default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, conflicts_with = "m_mult", required_unless_present = "m_mult")]
    m: Option<usize>,
    /// m = ⌈c · n · ln n⌉
    #[arg(long)]
    m_mult: Option<f64>,
    #[arg(long, conflicts_with = "strict")]
    eps0: Option<f64>,
    #[arg(long, conflicts_with = "strict")]
    delta0: Option<f64>,
    /// ε₀ = δ₀ = 0.01
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 200)]
    n_dirs: usize,
    #[arg(long, default_value_t = 100)]
    n_pts: usize,
    #[arg(long, default_value_t = 1e-3)]
    margin: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Solve,
    Benign,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ScalingArg {
    Nlogn,
    Linear,
}

#[derive(Args)]
struct TransitionArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    mult: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Solve)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ScalingArg::Nlogn)]
    scaling: ScalingArg,
    #[arg(long, default_value_t = 200)]
    n_dirs: usize,
    #[arg(long, default_value_t = 100)]
    n_pts: usize,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Bootstrap replicates for the monotone-trend check.
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MomentsArgs {
    /// spectral_norm, quartic_lower, cross_moment, cubic_moment, truncation_split or all
    #[arg(long, value_delimiter = ',', default_value = "all")]
    check: Vec<String>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 200)]
    n_dirs: usize,
    /// Truncation level N for truncation_split.
    #[arg(long, default_value_t = 1.0)]
    cutoff: f64,
    /// Exit 2 when any check's failure rate exceeds this.
    #[arg(long)]
    max_fail_rate: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum InitArg {
    Random,
    Spectral,
    Zero,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SolverArg {
    NegativeCurvature,
    Gradient,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    init: InitArg,
    #[arg(long, value_enum, default_value_t = SolverArg::NegativeCurvature)]
    solver: SolverArg,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.6,1")]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<prlandscape::Error> for Failure {
    fn from(e: prlandscape::Error) -> Self {
        match e {
            prlandscape::Error::Io(io) => Failure::Io(io.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let jobs = match &cli.command {
        Command::Verify(a) => a.common.jobs,
        Command::Transition(a) => a.common.jobs,
        Command::Moments(a) => a.common.jobs,
        Command::Solve(a) => a.common.jobs,
        Command::OracleCheck(a) => a.common.jobs,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Verify(a) => verify(a),
        Command::Transition(a) => transition(a),
        Command::Moments(a) => moments(a),
        Command::Solve(a) => solve(a),
        Command::OracleCheck(a) => oracle_check(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn prepare_out_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    if std::fs::metadata(dir)?.permissions().readonly() {
        return Err(Failure::Io(format!("{} is not writable", dir.display())));
    }
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

#[derive(Serialize)]
struct VerifyConfig {
    n: usize,
    m: usize,
    seed: u64,
    landscape: LandscapeConfig,
}

fn verify(a: VerifyArgs) -> Outcome {
    if a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let m = match (a.m, a.m_mult) {
        (Some(m), _) => m,
        (None, Some(c)) if c > 0.0 => sample_count(a.n, c, Scaling::NLogN),
        _ => return Err(Failure::Usage("--m-mult must be positive".into())),
    };
    let mut region = if a.strict { RegionConfig::strict() } else { RegionConfig::default() };
    if let Some(e) = a.eps0 {
        region.epsilon0 = e;
    }
    if let Some(d) = a.delta0 {
        region.delta0 = d;
    }
    region.validate()?;
    let landscape = LandscapeConfig { region, n_dirs: a.n_dirs, n_pts: a.n_pts, r2_margin: a.margin, ..Default::default() };
    let config = VerifyConfig { n: a.n, m, seed: a.common.seed, landscape };
    prepare_out_dir(&a.common.out_dir)?;
    let mut run = Run::start("verify", a.common.seed, &config);

    let report = run_landscape_report(a.n, m, &landscape, a.common.seed)?;
    let mut csv = Vec::new();
    write_landscape_csv(&mut csv, std::slice::from_ref(&report))?;
    run.write(&a.common.out_dir.join("landscape.csv"), &csv)?;
    let mut json = report.to_json();
    json.push('\n');
    run.write(&a.common.out_dir.join("report.json"), json.as_bytes())?;
    run.finish(&a.common.out_dir)?;

    for v in &report.verdicts {
        println!(
            "{:<15} {} worst={:.6e} threshold={:.1e} samples={} violations={}",
            v.lemma_id,
            if v.pass { "PASS" } else { "FAIL" },
            v.worst_statistic,
            v.threshold,
            v.samples,
            v.violations
        );
    }
    Ok(report.all_pass())
}

fn transition(a: TransitionArgs) -> Outcome {
    let mode = match a.mode {
        ModeArg::Solve => TransitionMode::Solve,
        ModeArg::Benign => TransitionMode::Benign,
    };
    let mut cfg = TransitionConfig::new(a.n.clone(), a.mult.clone(), a.trials, mode, a.common.seed);
    cfg.scaling = match a.scaling {
        ScalingArg::Nlogn => Scaling::NLogN,
        ScalingArg::Linear => Scaling::Linear,
    };
    cfg.landscape.n_dirs = a.n_dirs;
    cfg.landscape.n_pts = a.n_pts;
    cfg.solver.step.max_iter = a.max_iter;
    prepare_out_dir(&a.common.out_dir)?;
    let mut run = Run::start("transition", a.common.seed, &cfg);

    let result = phase_transition(&cfg)?;
    let mut csv = Vec::new();
    write_transition_csv(&mut csv, &result.trials)?;
    run.write(&a.common.out_dir.join("transition.csv"), &csv)?;
    let trend = trend_check(&result.cells, a.replicates, a.common.seed);
    #[derive(Serialize)]
    struct Summary<'a> {
        cells: &'a [prlandscape::experiments::TransitionCell],
        trend: prlandscape::experiments::TrendReport,
    }
    run.write(&a.common.out_dir.join("transition.json"), &json_bytes(&Summary { cells: &result.cells, trend }))?;
    run.finish(&a.common.out_dir)?;

    println!("{:>6} {:>8} {:>8} {:>9} {:>9} {:>10}", "n", "m", "mult", "success", "benign", "mean_iter");
    for c in &result.cells {
        println!(
            "{:>6} {:>8} {:>8} {:>9.3} {:>9.3} {:>10.1}",
            c.n, c.m, c.multiplier, c.success_rate, c.benign_rate, c.mean_iters
        );
    }
    println!("trend support {:.3} ({})", trend.support, if trend.pass { "increasing" } else { "not established" });
    Ok(true)
}

#[derive(Serialize)]
struct MomentsConfig {
    checks: Vec<CheckId>,
    n: usize,
    m: usize,
    epsilon: f64,
    trials: usize,
    n_dirs: usize,
    cutoff: f64,
    seed: u64,
    max_fail_rate: Option<f64>,
}

fn moments(a: MomentsArgs) -> Outcome {
    let mut checks = Vec::new();
    for name in &a.check {
        if name == "all" {
            checks.extend([
                CheckId::SpectralNorm,
                CheckId::QuarticLower,
                CheckId::CrossMoment,
                CheckId::CubicMoment,
                CheckId::TruncationSplit,
            ]);
        } else {
            checks.push(name.parse::<CheckId>()?);
        }
    }
    checks.dedup();
    let cfg = MomentsConfig {
        checks: checks.clone(),
        n: a.n,
        m: a.m,
        epsilon: a.epsilon,
        trials: a.trials,
        n_dirs: a.n_dirs,
        cutoff: a.cutoff,
        seed: a.common.seed,
        max_fail_rate: a.max_fail_rate,
    };
    prepare_out_dir(&a.common.out_dir)?;
    let mut run = Run::start("moments", a.common.seed, &cfg);

    let mut stats: Vec<ConcentrationStat> = Vec::new();
    for (k, id) in checks.iter().enumerate() {
        let seed = TrialSeed::new(a.common.seed, k as u64).derived;
        let s = match id {
            CheckId::SpectralNorm => check_spectral_norm(a.n, a.m, a.epsilon, a.trials, seed),
            CheckId::QuarticLower => check_quartic_lower(a.n, a.m, a.epsilon, a.trials, a.n_dirs, seed),
            CheckId::CrossMoment => check_cross_moment(a.n, a.m, a.epsilon, a.trials, a.n_dirs, seed),
            CheckId::CubicMoment => check_cubic_moment(a.n, a.m, a.epsilon, a.trials, a.n_dirs, seed),
            CheckId::TruncationSplit => check_truncation_split(a.n, a.m, a.cutoff, a.trials, a.n_dirs, seed),
        }?;
        println!(
            "{:<17} failures {}/{} rate {:.3} worst {:.6e}",
            s.check_id.as_str(),
            s.failures,
            s.trials,
            s.empirical_failure_rate,
            s.worst_value
        );
        stats.push(s);
    }
    let mut csv = Vec::new();
    write_concentration_csv(&mut csv, &stats)?;
    run.write(&a.common.out_dir.join("concentration.csv"), &csv)?;
    run.finish(&a.common.out_dir)?;
    Ok(a.max_fail_rate.is_none_or(|r| stats.iter().all(|s| s.empirical_failure_rate <= r)))
}

#[derive(Serialize)]
struct SolveConfig {
    n: usize,
    m: usize,
    init: InitArg,
    solver: SolverArg,
    seed: u64,
    curvature: CurvatureConfig,
}

fn solve(a: SolveArgs) -> Outcome {
    let curvature = CurvatureConfig { step: StepConfig { max_iter: a.max_iter, ..Default::default() }, ..Default::default() };
    let cfg = SolveConfig { n: a.n, m: a.m, init: a.init, solver: a.solver, seed: a.common.seed, curvature };
    prepare_out_dir(&a.common.out_dir)?;
    let mut run = Run::start("solve", a.common.seed, &cfg);

    let ts = TrialSeed::new(a.common.seed, 0);
    let e = sample_ensemble(a.n, a.m, SignalSpec::Random, ts)?;
    let z0 = match a.init {
        InitArg::Zero => vec![0.0; a.n],
        InitArg::Spectral => spectral_init(&e)?,
        InitArg::Random => random_direction(a.n, &mut ts.child(1).rng()),
    };
    let trace = match a.solver {
        SolverArg::NegativeCurvature => negative_curvature_descent(&e, &z0, &curvature)?,
        SolverArg::Gradient => gradient_descent(&e, &z0, &curvature.step)?,
    };
    run.write(&a.common.out_dir.join("solve.json"), &json_bytes(&trace))?;
    run.finish(&a.common.out_dir)?;
    println!(
        "outcome={} dist={:.6e} iterations={} curvature_steps={}",
        trace.outcome.as_str(),
        trace.final_dist,
        trace.iterations,
        trace.curvature_steps
    );
    Ok(trace.outcome == prlandscape::experiments::Outcome::Recovered)
}

#[derive(Serialize)]
struct OracleConfig {
    n: usize,
    m: usize,
    sigma: Vec<f64>,
    tol: f64,
    seed: u64,
}

#[derive(Serialize)]
struct OracleRow {
    sigma: f64,
    empirical: prlandscape::EmpiricalMoments,
    population: PopulationMoments,
    deviations: [f64; 5],
    pass: bool,
}

fn oracle_check(a: OracleArgs) -> Outcome {
    if a.n < 2 && a.sigma.iter().any(|s| s.abs() < 1.0) {
        return Err(Failure::Usage("|sigma| < 1 needs n >= 2".into()));
    }
    if a.sigma.iter().any(|s| !(s.abs() <= 1.0)) {
        return Err(Failure::Usage("sigma values must lie in [-1, 1]".into()));
    }
    let cfg = OracleConfig { n: a.n, m: a.m, sigma: a.sigma.clone(), tol: a.tol, seed: a.common.seed };
    prepare_out_dir(&a.common.out_dir)?;
    let mut run = Run::start("oracle-check", a.common.seed, &cfg);

    let ts = TrialSeed::new(a.common.seed, 0);
    let e = sample_ensemble(a.n, a.m, SignalSpec::Random, ts)?;
    let x = e.signal().to_vec();
    let perp = if a.n >= 2 {
        let g = random_direction(a.n, &mut ts.child(1).rng());
        linalg::normalized(&linalg::sub(&g, &linalg::scaled(linalg::dot(&g, &x), &x))).unwrap_or_else(|| {
            let mut v = vec![0.0; a.n];
            v[if x[0].abs() < 0.9 { 0 } else { 1 }] = 1.0;
            linalg::normalized(&linalg::sub(&v, &linalg::scaled(linalg::dot(&v, &x), &x))).expect("basis vector")
        })
    } else {
        vec![0.0]
    };
    let mut rows = Vec::new();
    for &s in &a.sigma {
        let zhat: Vec<f64> = x.iter().zip(&perp).map(|(xi, pi)| s * xi + (1.0 - s * s).max(0.0).sqrt() * pi).collect();
        let zhat = linalg::normalized(&zhat).expect("unit direction");
        let empirical = empirical_moments(&e, &zhat)?;
        let population = PopulationMoments::at(s);
        let deviations = population.deviations(&empirical);
        let pass = deviations.iter().all(|d| *d <= a.tol);
        println!(
            "sigma={s:<5} |A-3|={:.4} |B-(2s^2+1)|={:.4} |A1-3s|={:.4} |C1-3s|={:.4} |D-3|={:.4} {}",
            deviations[0],
            deviations[1],
            deviations[2],
            deviations[3],
            deviations[4],
            if pass { "PASS" } else { "FAIL" }
        );
        rows.push(OracleRow { sigma: s, empirical, population, deviations, pass });
    }
    run.write(&a.common.out_dir.join("oracle.json"), &json_bytes(&rows))?;
    run.finish(&a.common.out_dir)?;
    Ok(rows.iter().all(|r| r.pass))
}
