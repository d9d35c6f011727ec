//! Command-line front end: config-driven runs plus focused subcommands for
//! each experiment family.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hdclt::bounds::c2_parameters;
use hdclt::harness::{
    self, EmitFormat, Estimator, ExperimentConfig, RateFit, Transform,
};
use hdclt::models::{Density1d, Family, ModelSpec};
use hdclt::sharpness::{p1_monte_carlo_cross_check, p1_statistic};
use hdclt::special::EtaContext;
use hdclt::stein::{stein_identity_residual, DICTIONARY};
use hdclt::suprema::sup_fbeta_g;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "HDCLT_OUT";

#[derive(Parser)]
#[command(name = "hdclt", version, about = "High-dimensional CLT bound laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a versioned JSON experiment config.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores). Output bytes do not depend
        /// on this.
        #[arg(long)]
        threads: Option<usize>,
        /// Output CSV path or directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hermite supremum table over a d grid with a log-log-log slope fit.
    Suprema {
        #[arg(long, value_delimiter = ',', required = true)]
        d_grid: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        nu: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Shift scale K; eta = K / sqrt(log d).
        #[arg(long, default_value_t = 0.0)]
        eta_k: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bound-term estimates for one model.
    Bounds {
        /// Preset (exponential | normal | uniform | ma | nonlinear | chaos)
        /// or inline family JSON.
        #[arg(long, default_value = "exponential")]
        model: String,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: u64,
        /// Explicit truncation threshold; defaults to the auto policy.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Family-restricted rectangle distance of one model.
    Distance {
        #[arg(long, default_value = "exponential")]
        model: String,
        /// orthant | boxes | random
        #[arg(long, default_value = "orthant")]
        family: String,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact sharpness statistics on an (n, d) grid.
    Sharpness {
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        d_grid: Vec<usize>,
        /// Also run the Monte Carlo cross-check at the smallest grid point.
        #[arg(long)]
        cross_check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stein-identity residuals over the test-function dictionary.
    SteinCheck {
        #[arg(long, default_value = "exponential")]
        model: String,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Default output path: explicit flag wins, then $HDCLT_OUT/<name>, then ./<name>.
fn resolve_out(out: Option<PathBuf>, default_name: &str) -> PathBuf {
    match out {
        Some(p) if p.is_dir() => p.join(default_name),
        Some(p) => p,
        None => match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) => Path::new(&dir).join(default_name),
            None => PathBuf::from(default_name),
        },
    }
}

/// Default chaos eigenvalue profile: per row a geometric sequence normalized
/// to unit variance (2 sum lambda^2 = 1).
fn chaos_profile(d: usize) -> Family {
    let k = 4;
    let raw: Vec<f64> = (0..k).map(|i| 0.5f64.powi(i)).collect();
    let norm = (2.0 * raw.iter().map(|l| l * l).sum::<f64>()).sqrt();
    Family::ChaosQ2 { lambda: vec![raw.iter().map(|l| l / norm).collect(); d] }
}

fn parse_model(text: &str, d: usize) -> Result<Family, String> {
    match text {
        "exponential" => Ok(Family::ProductExponential),
        "normal" => Ok(Family::ProductCustom1d { density: Density1d::StdNormal }),
        "uniform" => Ok(Family::ProductCustom1d { density: Density1d::UniformSqrt3 }),
        "ma" => Ok(Family::MovingAverageMDependent { coeffs: vec![0.6, 0.8] }),
        "nonlinear" => Ok(Family::NonlinearQuadratic { epsilon: 0.5 }),
        "chaos" => Ok(chaos_profile(d)),
        json => serde_json::from_str(json)
            .map_err(|e| format!("model is neither a preset nor family JSON: {e}")),
    }
}

fn estimators_for(family: &Family) -> Vec<Estimator> {
    match family {
        Family::ProductExponential | Family::ProductCustom1d { .. } => vec![
            Estimator::DeltaW,
            Estimator::PairDelta1,
            Estimator::PairDelta2,
            Estimator::PairDelta3,
            Estimator::LocalDependence,
            Estimator::T1Functional,
            Estimator::C2Functional,
            Estimator::C2Rate,
        ],
        Family::GaussianAffine { .. } => {
            vec![Estimator::DeltaW, Estimator::PairDelta1, Estimator::C2Rate]
        }
        Family::MovingAverageMDependent { .. } => {
            vec![Estimator::LocalDependence, Estimator::C2Rate]
        }
        Family::NonlinearQuadratic { .. } => vec![
            Estimator::DeltaW,
            Estimator::NonlinearDelta1,
            Estimator::NonlinearDelta2,
            Estimator::NonlinearDelta3,
        ],
        Family::ChaosQ2 { .. } => vec![Estimator::ChaosDeltaBar, Estimator::ChaosMcFourth],
    }
}

fn cmd_run(
    config_path: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| format!("{}: {e}", config_path.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| format!("config parse: {e}"))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let output = harness::run(&config).map_err(|e| e.to_string())?;
    for err in &output.errors {
        eprintln!(
            "error: {} n={} d={} {}: {}",
            err.experiment, err.n, err.d, err.estimator, err.message
        );
    }
    let path = resolve_out(out, &format!("{}.csv", config.experiment));
    harness::emit(&output.records, EmitFormat::Csv, &path, &output.config_hash)
        .map_err(|e| e.to_string())?;
    println!(
        "{} records ({} errors) -> {}",
        output.records.len(),
        output.errors.len(),
        path.display()
    );
    Ok(output.assertions_pass(&config))
}

fn cmd_suprema(
    d_grid: &[usize],
    nu: usize,
    beta: f64,
    eta_k: f64,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    let mut rows = Vec::new();
    for &d in d_grid {
        let ctx = if eta_k == 0.0 {
            EtaContext::zero(d)
        } else {
            EtaContext::new(eta_k, d)
        };
        let sup = sup_fbeta_g(nu, beta, d, &ctx);
        rows.push((d, sup));
    }
    let fit: Option<RateFit> = harness::rate_fit(
        &rows.iter().map(|&(d, s)| (d as f64, s.value)).collect::<Vec<_>>(),
        Transform::LogLogLog,
    )
    .ok();
    let mut text = String::from("d,r_or_nu,beta,eta_K,value,maximizer_u,m_star,slope_fit\n");
    for (d, s) in &rows {
        let slope = fit.map_or(String::new(), |f| format!("{:.16e}", f.slope));
        text.push_str(&format!(
            "{d},{nu},{beta},{eta_k},{:.16e},{:.16e},{},{slope}\n",
            s.value, s.maximizer_u, s.m_star
        ));
    }
    let path = resolve_out(out, "suprema.csv");
    std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(f) = fit {
        println!(
            "nu={nu} beta={beta}: slope {:.4} +- {:.4} (expected {})",
            f.slope,
            f.slope_se,
            beta * nu as f64 / 2.0
        );
    }
    println!("{} rows -> {}", rows.len(), path.display());
    Ok(true)
}

fn run_single_model(
    experiment: &str,
    family: Family,
    estimators: Vec<Estimator>,
    d: usize,
    n: usize,
    reps: u64,
    eta: Option<f64>,
    seed: u64,
    out: Option<PathBuf>,
    default_name: &str,
) -> Result<bool, String> {
    let config = ExperimentConfig {
        experiment: experiment.into(),
        format_version: harness::FORMAT_VERSION,
        family,
        n_grid: vec![n],
        d_grid: vec![d],
        estimators,
        reps,
        seed,
        eta_policy: match eta {
            Some(eta) => harness::EtaPolicy::Explicit { eta },
            None => harness::EtaPolicy::Auto,
        },
        assertions: Vec::new(),
    };
    let output = harness::run(&config).map_err(|e| e.to_string())?;
    for r in &output.records {
        println!("{} = {:.6e} +- {:.2e}", r.estimator, r.value, r.se);
    }
    for err in &output.errors {
        eprintln!("error: {}: {}", err.estimator, err.message);
    }
    let path = resolve_out(out, default_name);
    harness::emit(&output.records, EmitFormat::Csv, &path, &output.config_hash)
        .map_err(|e| e.to_string())?;
    println!("-> {}", path.display());
    Ok(output.errors.is_empty())
}

fn cmd_sharpness(
    n_grid: &[usize],
    d_grid: &[usize],
    cross_check: bool,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    let mut text = String::from(
        "n,d,x_n,lambda_n,gauss_term,statistic,ratio_mdp,poisson_slack,regime_small,regime_large\n",
    );
    for &d in d_grid {
        for &n in n_grid {
            let p = p1_statistic(n, d);
            text.push_str(&format!(
                "{n},{d},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                p.x_n,
                p.lambda_n,
                p.gauss_term,
                p.statistic,
                p.ratio_mdp,
                p.poisson_slack,
                p.regime_small,
                p.regime_large
            ));
        }
    }
    let path = resolve_out(out, "sharpness.csv");
    std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    println!("{} rows -> {}", n_grid.len() * d_grid.len(), path.display());
    let mut ok = true;
    if cross_check {
        let n = *n_grid.iter().min().expect("non-empty grid");
        let d = *d_grid.iter().min().expect("non-empty grid");
        let report = p1_monte_carlo_cross_check(n, d, 100_000, 0, false);
        println!(
            "cross-check n={n} d={d}: empirical {:.4e} vs analytic {:.4e} (se {:.1e}, slack {:.1e})",
            report.empirical_diff, report.analytic, report.se, report.slack
        );
        ok = report.within_budget;
    }
    Ok(ok)
}

fn cmd_stein_check(
    model: &str,
    d: usize,
    n: usize,
    reps: u64,
    seed: u64,
) -> Result<bool, String> {
    let family = parse_model(model, d)?;
    let spec = ModelSpec { family, d, n, seed };
    spec.validate().map_err(|e| e.to_string())?;
    let mut ok = true;
    for f_id in DICTIONARY {
        let (res, se) = stein_identity_residual(&spec, f_id, reps).map_err(|e| e.to_string())?;
        let pass = res.abs() <= 4.0 * se;
        ok &= pass;
        println!(
            "{f_id}: residual {res:.4e} +- {se:.2e} [{}]",
            if pass { "ok" } else { "FAIL" }
        );
    }
    let sigma = spec.exact_sigma::<f64>();
    let (t, kappa, eta) = c2_parameters(1.0, &sigma, d, n);
    println!("auto parameters: t={t:.3e} kappa={kappa:.3e} eta={eta:.3e}");
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, threads, out } => cmd_run(&config, seed, threads, out),
        Command::Suprema { d_grid, nu, beta, eta_k, out } => {
            cmd_suprema(&d_grid, nu, beta, eta_k, out)
        }
        Command::Bounds { model, d, n, reps, eta, seed, out } => {
            parse_model(&model, d).and_then(|family| {
                let estimators = estimators_for(&family);
                run_single_model(
                    "bounds", family, estimators, d, n, reps, eta, seed, out, "bounds.csv",
                )
            })
        }
        Command::Distance { model, family, d, n, reps, seed, out } => parse_model(&model, d)
            .and_then(|model_family| {
                let est = match family.as_str() {
                    "orthant" => Estimator::DistanceOrthant,
                    "boxes" => Estimator::DistanceBoxes,
                    "random" => Estimator::DistanceRandom,
                    other => return Err(format!("unknown rectangle family {other}")),
                };
                run_single_model(
                    "distance",
                    model_family,
                    vec![est, Estimator::MaxKs],
                    d,
                    n,
                    reps,
                    None,
                    seed,
                    out,
                    "distance.csv",
                )
            }),
        Command::Sharpness { n_grid, d_grid, cross_check, out } => {
            cmd_sharpness(&n_grid, &d_grid, cross_check, out)
        }
        Command::SteinCheck { model, d, n, reps, seed } => {
            cmd_stein_check(&model, d, n, reps, seed)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
