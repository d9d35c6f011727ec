//! Config-driven experiment runner: versioned JSON configs, deterministic
//! grid execution, rate fitting, domination tests, and CSV / JSON-lines
//! emission.
//!
//! Reproducibility contract: (config, seed) fully determines every reported
//! value regardless of the worker count. Wall-clock columns are measurements
//! and are excluded from the byte-identity comparison; `csv_without_wall_ms`
//! strips them for that purpose.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bounds::{
    c2_functional, c2_parameters, chaos_delta_bar, delta_w, exch_pair_terms,
    local_dependence_term, nonlinear_terms, t1_functional, Estimate,
};
use crate::distance::{empirical_distance, max_kolmogorov, RectangleFamily};
use crate::models::{Family, ModelSpec, SigmaStats};
use crate::sharpness::p1_statistic;
use crate::stein::{stein_identity_residual, DICTIONARY};

/// Version of the config and file formats this binary understands.
pub const FORMAT_VERSION: u32 = 1;

/// Fixed CSV column order.
pub const CSV_HEADER: &str = "experiment,n,d,estimator,value,se,wall_ms,seed,config_hash";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("need at least 4 usable points, got {0}")]
    NotEnoughPoints(usize),
    #[error("distance and functional records cover different grids")]
    GridMismatch,
}

/// Threshold policy for the truncation parameter eta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum EtaPolicy {
    /// eta = 4 kappa / sqrt(n) with kappa = sqrt(5 log(dn)).
    Auto,
    Explicit { eta: f64 },
}

impl Default for EtaPolicy {
    fn default() -> Self {
        EtaPolicy::Auto
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    DeltaW,
    PairDelta1,
    PairDelta2,
    PairDelta3,
    NonlinearDelta1,
    NonlinearDelta2,
    NonlinearDelta3,
    LocalDependence,
    ChaosDeltaBar,
    ChaosMcFourth,
    DistanceOrthant,
    DistanceBoxes,
    DistanceRandom,
    MaxKs,
    T1Functional,
    C2Functional,
    C2Rate,
    SharpnessStatistic,
    SteinResidual,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::DeltaW => "delta-w",
            Estimator::PairDelta1 => "pair-delta1",
            Estimator::PairDelta2 => "pair-delta2",
            Estimator::PairDelta3 => "pair-delta3",
            Estimator::NonlinearDelta1 => "nonlinear-delta1",
            Estimator::NonlinearDelta2 => "nonlinear-delta2",
            Estimator::NonlinearDelta3 => "nonlinear-delta3",
            Estimator::LocalDependence => "local-dependence",
            Estimator::ChaosDeltaBar => "chaos-delta-bar",
            Estimator::ChaosMcFourth => "chaos-mc-fourth",
            Estimator::DistanceOrthant => "distance-orthant",
            Estimator::DistanceBoxes => "distance-boxes",
            Estimator::DistanceRandom => "distance-random",
            Estimator::MaxKs => "max-ks",
            Estimator::T1Functional => "t1-functional",
            Estimator::C2Functional => "c2-functional",
            Estimator::C2Rate => "c2-rate",
            Estimator::SharpnessStatistic => "sharpness-statistic",
            Estimator::SteinResidual => "stein-residual",
        }
    }
}

/// Exit-code assertion evaluated against the records of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueAssertion {
    pub estimator: Estimator,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub format_version: u32,
    /// Model family shared by every grid point; families embedding explicit
    /// dimensions only validate at matching d.
    pub family: Family,
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
    pub estimators: Vec<Estimator>,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub eta_policy: EtaPolicy,
    #[serde(default)]
    pub assertions: Vec<ValueAssertion>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.experiment.is_empty() {
            return Err(HarnessError::Validation("experiment id is empty".into()));
        }
        if self.format_version != FORMAT_VERSION {
            return Err(HarnessError::Validation(format!(
                "format version {} unsupported (binary speaks {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.n_grid.is_empty() || self.d_grid.is_empty() {
            return Err(HarnessError::Validation("grids must be non-empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::Validation("estimator list is empty".into()));
        }
        if self.reps < 100 {
            return Err(HarnessError::Validation(format!(
                "reps = {} below the minimum of 100",
                self.reps
            )));
        }
        Ok(())
    }
}

/// Content hash of the canonicalized config (hex, 16 chars). serde_json maps
/// are key-sorted, so the hash is stable under field reordering.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let canonical = serde_json::to_string(&value).expect("value serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub n: usize,
    pub d: usize,
    pub estimator: String,
    pub value: f64,
    pub se: f64,
    pub wall_ms: u64,
    pub seed: u64,
    pub config_hash: String,
}

/// A grid point that failed; failures are data, not crashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub experiment: String,
    pub n: usize,
    pub d: usize,
    pub estimator: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub errors: Vec<ErrorRecord>,
    pub config_hash: String,
}

impl RunOutput {
    /// Exit-code semantics: true iff every assertion holds and nothing errored.
    pub fn assertions_pass(&self, config: &ExperimentConfig) -> bool {
        if !self.errors.is_empty() {
            return false;
        }
        config.assertions.iter().all(|a| {
            self.records.iter().filter(|r| r.estimator == a.estimator.name()).all(|r| {
                a.max.is_none_or(|m| r.value <= m) && a.min.is_none_or(|m| r.value >= m)
            })
        })
    }
}

/// Per-grid-point model seed, decorrelating the substreams of different
/// (n, d) cells while staying a pure function of the config seed.
fn grid_seed(seed: u64, n: usize, d: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"grid");
    hasher.update(seed.to_le_bytes());
    hasher.update((n as u64).to_le_bytes());
    hasher.update((d as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn eta_for(policy: EtaPolicy, sigma: &SigmaStats<f64>, d: usize, n: usize) -> f64 {
    match policy {
        EtaPolicy::Auto => c2_parameters(1.0, sigma, d, n).2,
        EtaPolicy::Explicit { eta } => eta,
    }
}

fn evaluate(
    est: Estimator,
    spec: &ModelSpec,
    policy: EtaPolicy,
    reps: u64,
) -> Result<Estimate, String> {
    let sigma: SigmaStats<f64> = spec.exact_sigma();
    let eta = eta_for(policy, &sigma, spec.d, spec.n);
    let sampler = |rep: u64| {
        spec.sample_w_gamma_fast::<f64>(rep).unwrap_or_else(|| spec.sample_w(rep))
    };
    let pick = |t: (Estimate, Estimate, Estimate), i: usize| match i {
        0 => t.0,
        1 => t.1,
        _ => t.2,
    };
    match est {
        Estimator::DeltaW => Ok(delta_w(spec, reps)),
        Estimator::PairDelta1 | Estimator::PairDelta2 | Estimator::PairDelta3 => {
            let idx = match est {
                Estimator::PairDelta1 => 0,
                Estimator::PairDelta2 => 1,
                _ => 2,
            };
            exch_pair_terms(spec, eta, reps).map(|t| pick(t, idx)).map_err(|e| e.to_string())
        }
        Estimator::NonlinearDelta1 | Estimator::NonlinearDelta2 | Estimator::NonlinearDelta3 => {
            let idx = match est {
                Estimator::NonlinearDelta1 => 0,
                Estimator::NonlinearDelta2 => 1,
                _ => 2,
            };
            nonlinear_terms(spec, eta, reps).map(|t| pick(t, idx)).map_err(|e| e.to_string())
        }
        Estimator::LocalDependence => {
            local_dependence_term(spec, reps).map_err(|e| e.to_string())
        }
        Estimator::ChaosDeltaBar => chaos_delta_bar(spec, reps)
            .map(|r| Estimate { value: r.exact_delta_bar, se: 0.0 })
            .map_err(|e| e.to_string()),
        Estimator::ChaosMcFourth => {
            chaos_delta_bar(spec, reps).map(|r| r.mc_delta_sq).map_err(|e| e.to_string())
        }
        Estimator::DistanceOrthant | Estimator::DistanceBoxes | Estimator::DistanceRandom => {
            let family = match est {
                Estimator::DistanceOrthant => RectangleFamily::lower_orthant_default(),
                Estimator::DistanceBoxes => RectangleFamily::symmetric_box_default(),
                _ => RectangleFamily::random_default(spec.seed),
            };
            let d = empirical_distance(sampler, &sigma, &family, reps, reps, 0.01);
            Ok(Estimate { value: d.value, se: d.max_se() })
        }
        Estimator::MaxKs => {
            if !sigma.is_diagonal() {
                return Err("max-ks needs a diagonal reference covariance".into());
            }
            let scale: Vec<f64> = (0..spec.d).map(|j| sigma.entry(j, j).sqrt()).collect();
            use rayon::prelude::*;
            let maxima: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    sampler(rep)
                        .iter()
                        .zip(&scale)
                        .map(|(w, s)| w / s)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let ks = max_kolmogorov(&maxima, spec.d);
            // DKW-style fluctuation scale as the reported uncertainty
            Ok(Estimate { value: ks.value, se: 0.5 / (reps as f64).sqrt() })
        }
        Estimator::T1Functional => {
            let dw = delta_w(spec, reps);
            Ok(Estimate { value: t1_functional(dw.value, &sigma, spec.d), se: 0.0 })
        }
        Estimator::C2Functional => {
            Ok(Estimate { value: c2_functional(1.0, &sigma, spec.d, spec.n), se: 0.0 })
        }
        Estimator::C2Rate => {
            let dn = (spec.d * spec.n) as f64;
            Ok(Estimate { value: (dn.ln().powi(4) / spec.n as f64).cbrt(), se: 0.0 })
        }
        Estimator::SharpnessStatistic => {
            Ok(Estimate { value: p1_statistic(spec.n, spec.d).statistic, se: 0.0 })
        }
        Estimator::SteinResidual => {
            let mut worst = Estimate { value: 0.0, se: 0.0 };
            for f_id in DICTIONARY {
                let (res, se) =
                    stein_identity_residual(spec, f_id, reps).map_err(|e| e.to_string())?;
                if res.abs() > worst.value {
                    worst = Estimate { value: res.abs(), se };
                }
            }
            Ok(worst)
        }
    }
}

/// Executes the full grid x estimator product in canonical order. Estimator
/// failures become error records; nothing is silently dropped.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let hash = config_hash(config);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for &d in &config.d_grid {
        for &n in &config.n_grid {
            let seed = grid_seed(config.seed, n, d);
            let spec = ModelSpec { family: config.family.clone(), d, n, seed };
            if let Err(e) = spec.validate() {
                for est in &config.estimators {
                    errors.push(ErrorRecord {
                        experiment: config.experiment.clone(),
                        n,
                        d,
                        estimator: est.name().into(),
                        message: e.to_string(),
                    });
                }
                continue;
            }
            for &est in &config.estimators {
                let start = Instant::now();
                match evaluate(est, &spec, config.eta_policy, config.reps) {
                    Ok(value) if value.value.is_finite() => records.push(ResultRecord {
                        experiment: config.experiment.clone(),
                        n,
                        d,
                        estimator: est.name().into(),
                        value: value.value,
                        se: value.se,
                        wall_ms: start.elapsed().as_millis() as u64,
                        seed,
                        config_hash: hash.clone(),
                    }),
                    Ok(value) => errors.push(ErrorRecord {
                        experiment: config.experiment.clone(),
                        n,
                        d,
                        estimator: est.name().into(),
                        message: format!("non-finite value {}", value.value),
                    }),
                    Err(message) => errors.push(ErrorRecord {
                        experiment: config.experiment.clone(),
                        n,
                        d,
                        estimator: est.name().into(),
                        message,
                    }),
                }
            }
        }
    }
    Ok(RunOutput { records, errors, config_hash: hash })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// ln y against ln x.
    LogLog,
    /// ln y against ln ln x.
    LogLogLog,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Ordinary least squares on transformed coordinates. Non-positive y values
/// are excluded (counted in the fit); fewer than 4 usable points is an error.
pub fn rate_fit(points: &[(f64, f64)], transform: Transform) -> Result<RateFit, HarnessError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| {
            y > 0.0
                && x > 0.0
                && (transform == Transform::LogLog || x > 1.0)
        })
        .map(|&(x, y)| {
            let tx = match transform {
                Transform::LogLog => x.ln(),
                Transform::LogLogLog => x.ln().ln(),
            };
            (tx, y.ln())
        })
        .collect();
    let excluded = points.len() - usable.len();
    let k = usable.len();
    if k < 4 {
        return Err(HarnessError::NotEnoughPoints(k));
    }
    let kf = k as f64;
    let mean_x = usable.iter().map(|p| p.0).sum::<f64>() / kf;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss: f64 = usable
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_se = if k > 2 { (rss / (kf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(RateFit { slope, intercept, slope_se, used: k, excluded })
}

/// One measured value on the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridValue {
    pub n: usize,
    pub d: usize,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationReport {
    /// Constant fitted on the smallest-n column.
    pub c_hat: f64,
    pub pass: bool,
    /// Min over tested points of C functional + 4 SE - distance.
    pub worst_margin: f64,
}

/// Fits C on the smallest-n column and requires
/// distance <= C functional + 4 SE everywhere else.
pub fn domination_test(
    distance: &[GridValue],
    functional: &[GridValue],
) -> Result<DominationReport, HarnessError> {
    if distance.len() != functional.len() {
        return Err(HarnessError::GridMismatch);
    }
    let mut pairs: Vec<(&GridValue, &GridValue)> = Vec::with_capacity(distance.len());
    for dv in distance {
        let fv = functional
            .iter()
            .find(|f| f.n == dv.n && f.d == dv.d)
            .ok_or(HarnessError::GridMismatch)?;
        pairs.push((dv, fv));
    }
    let n_min = pairs.iter().map(|(d, _)| d.n).min().expect("non-empty grid");
    let c_hat = pairs
        .iter()
        .filter(|(d, _)| d.n == n_min)
        .map(|(d, f)| d.value / f.value)
        .fold(0.0f64, f64::max);
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for (d, f) in pairs.iter().filter(|(d, _)| d.n != n_min) {
        let margin = c_hat * f.value + 4.0 * (d.se + c_hat * f.se) - d.value;
        worst = worst.min(margin);
        if margin < 0.0 {
            pass = false;
        }
    }
    Ok(DominationReport { c_hat, pass, worst_margin: worst })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    JsonLines,
}

/// 17 significant digits: round-trip exact for f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders the CSV payload (header comment, column header, records).
pub fn render_csv(records: &[ResultRecord], hash: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# format_version={FORMAT_VERSION} config_hash={hash}");
    let _ = writeln!(out, "{CSV_HEADER}");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.n,
            r.d,
            r.estimator,
            fmt_f64(r.value),
            fmt_f64(r.se),
            r.wall_ms,
            r.seed,
            r.config_hash
        );
    }
    out
}

/// Drops the wall_ms column from a rendered CSV; the reproducibility contract
/// is byte identity of everything else.
pub fn csv_without_wall_ms(text: &str) -> String {
    text.lines()
        .map(|line| {
            if line.starts_with('#') {
                line.to_string()
            } else {
                line.split(',')
                    .enumerate()
                    .filter(|(i, _)| *i != 6)
                    .map(|(_, f)| f)
                    .collect::<Vec<_>>()
                    .join(",")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

pub fn emit(
    records: &[ResultRecord],
    format: EmitFormat,
    path: &Path,
    hash: &str,
) -> Result<(), HarnessError> {
    let text = match format {
        EmitFormat::Csv => render_csv(records, hash),
        EmitFormat::JsonLines => {
            let mut out = String::new();
            let header = serde_json::json!({
                "format_version": FORMAT_VERSION,
                "config_hash": hash,
            });
            let _ = writeln!(out, "{header}");
            for r in records {
                let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
            }
            out
        }
    };
    std::fs::write(path, text)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line == CSV_HEADER || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(HarnessError::Parse {
                path: path.display().to_string(),
                message: format!("line {}: expected 9 fields, got {}", lineno + 1, fields.len()),
            });
        }
        let parse_err = |message: String| HarnessError::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {message}", lineno + 1),
        };
        out.push(ResultRecord {
            experiment: fields[0].to_string(),
            n: fields[1].parse().map_err(|e| parse_err(format!("n: {e}")))?,
            d: fields[2].parse().map_err(|e| parse_err(format!("d: {e}")))?,
            estimator: fields[3].to_string(),
            value: fields[4].parse().map_err(|e| parse_err(format!("value: {e}")))?,
            se: fields[5].parse().map_err(|e| parse_err(format!("se: {e}")))?,
            wall_ms: fields[6].parse().map_err(|e| parse_err(format!("wall_ms: {e}")))?,
            seed: fields[7].parse().map_err(|e| parse_err(format!("seed: {e}")))?,
            config_hash: fields[8].to_string(),
        });
    }
    Ok(out)
}

pub fn read_json_lines(path: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            // first line is the format header
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| HarnessError::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}
