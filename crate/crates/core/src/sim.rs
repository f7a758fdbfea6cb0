//! Monte Carlo experiments over a grid of `(n, mu)` points.
//!
//! Every trial draws from its own ChaCha8 stream, keyed by the master seed
//! and indexed by `(salt, n index, mu index, trial index)`. Trials are
//! reduced in index order, so a report depends only on its configuration and
//! never on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dist::{BaseDensity, DensityKind, ScaleLocationModel};
use crate::error::{Error, Result};
use crate::protocols::{
    adaptive_estimate, mse_adaptive_asymptotic, mse_nonadaptive_asymptotic, multi_threshold_estimate,
    multi_threshold_theory, nonadaptive_on_samples, AdaptiveConfig, EstimateResult, MultiThresholdConfig,
    NonAdaptiveConfig, Split,
};
use crate::theory::{constants_for, mse_adaptive_constant};

pub const SCHEMA_VERSION: &str = "onebit-dme/sim-report/v1";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Largest tolerated share of failed trials at any grid point.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    NonAdaptive(NonAdaptiveConfig),
    Adaptive(AdaptiveConfig),
    MultiThreshold(MultiThresholdConfig),
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::NonAdaptive(_) => "non_adaptive",
            Protocol::Adaptive(_) => "adaptive",
            Protocol::MultiThreshold(_) => "multi_threshold",
        }
    }

    fn run(&self, samples: &[f64], d: &BaseDensity) -> Result<EstimateResult> {
        match self {
            Protocol::NonAdaptive(c) => nonadaptive_on_samples(samples, c, d),
            Protocol::Adaptive(c) => adaptive_estimate(samples, c, d),
            Protocol::MultiThreshold(c) => Ok(EstimateResult {
                mu_hat: multi_threshold_estimate(samples, c)?,
                sigma_hat: None,
                fractions: Vec::new(),
                clipped: Vec::new(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dist: DensityKind,
    pub protocol: Protocol,
    pub mu_grid: Vec<f64>,
    pub sigma: f64,
    pub n_values: Vec<usize>,
    pub n_trials: usize,
    pub master_seed: u64,
    /// Known range of the mean, from which thresholds are derived.
    pub mu_range: (f64, f64),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.mu_range;
        if !(lo < hi) {
            return Err(Error::Config(format!("empty mu range ({lo}, {hi})")));
        }
        if self.mu_grid.is_empty() || self.mu_grid.iter().any(|&m| !(m >= lo - 1e-12 && m <= hi + 1e-12)) {
            return Err(Error::Config(format!("mu grid must be non-empty and inside [{lo}, {hi}]")));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::Config("n values must be non-empty and positive".into()));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.n_values.len() > 1 << 8 || self.mu_grid.len() > 1 << 16 || self.n_trials as u64 > u32::MAX as u64 {
            return Err(Error::Config("grid too large for the stream index layout".into()));
        }
        match &self.protocol {
            Protocol::NonAdaptive(c) => c.validate(),
            Protocol::Adaptive(c) => c.validate(),
            Protocol::MultiThreshold(c) => {
                for &n in &self.n_values {
                    c.group_size(n)?;
                }
                Ok(())
            }
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Thresholds at one and two thirds of `[mu_min, mu_max]`, symmetric about
/// the mid-range; every mean in the range is within a third of the width of
/// some threshold.
pub fn equal_thirds_thresholds(mu_min: f64, mu_max: f64) -> Result<(f64, f64)> {
    if !(mu_min < mu_max) {
        return Err(Error::Domain(format!("empty range [{mu_min}, {mu_max}]")));
    }
    let w = mu_max - mu_min;
    Ok((mu_min + w / 3.0, mu_min + 2.0 * w / 3.0))
}

/// `min, min + step, ..., max` with the count fixed by rounding, so the last
/// point is exactly `max` when the step divides the range.
pub fn uniform_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && max >= min && min.is_finite() && max.is_finite()) {
        return Err(Error::Config(format!("bad grid {min}:{max}:{step}")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| min + i as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub n: usize,
    pub mu: f64,
    pub trials_ok: usize,
    pub failures: usize,
    /// Share of successful trials in which at least one fraction was clipped.
    pub clip_rate: f64,
    pub mse: f64,
    /// Sample standard deviation of the squared errors over `sqrt(trials_ok)`.
    pub mse_stderr: Option<f64>,
    pub mean_error: f64,
    pub mean_error_stderr: Option<f64>,
    pub sigma_mse: Option<f64>,
    pub sigma_mse_stderr: Option<f64>,
    /// Asymptotic (or, for the multi-threshold estimator, exact) MSE.
    pub theory_mse: Option<f64>,
    pub theory_sigma_mse: Option<f64>,
}

impl PointResult {
    /// `n MSE / sigma^2`, the unit in which the constants are stated.
    pub fn normalized_mse(&self, sigma: f64) -> f64 {
        self.n as f64 * self.mse / (sigma * sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub worst_case_mse: f64,
    pub worst_case_mu: f64,
    pub average_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmarks {
    pub c_adapt: f64,
    /// Missing when the density is not strictly log-concave.
    pub c_non: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: String,
    pub code_version: String,
    pub master_seed: u64,
    pub config_hash: String,
    pub salt: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub points: Vec<PointResult>,
    pub aggregates: Vec<Aggregate>,
    pub benchmarks: Benchmarks,
}

impl SimReport {
    pub fn point(&self, n: usize, mu: f64) -> Option<&PointResult> {
        self.points.iter().find(|p| p.n == n && p.mu == mu)
    }

    pub fn aggregate(&self, n: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.n == n)
    }
}

fn stream_id(salt: u8, n_idx: usize, mu_idx: usize, trial: usize) -> u64 {
    ((salt as u64) << 56) | ((n_idx as u64) << 48) | ((mu_idx as u64) << 32) | trial as u64
}

/// Independent generator for one trial.
pub fn trial_rng(master_seed: u64, salt: u8, n_idx: usize, mu_idx: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(salt, n_idx, mu_idx, trial));
    rng
}

enum Trial {
    Ok {
        err: f64,
        sigma_err: Option<f64>,
        clipped: bool,
    },
    Failed,
}

/// Mean and standard error of a sequence, summed in order.
fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, Option<f64>) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    let se = (n >= 2).then(|| {
        let ss: f64 = xs.map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    });
    (mean, se)
}

/// Runs the experiment on as many threads as the machine offers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimReport> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    run_experiment_with(cfg, workers)
}

pub fn run_experiment_with(cfg: &ExperimentConfig, workers: usize) -> Result<SimReport> {
    run_salted(cfg, 0, workers)
}

fn run_salted(cfg: &ExperimentConfig, salt: u8, workers: usize) -> Result<SimReport> {
    cfg.validate()?;
    let base = BaseDensity::new(cfg.dist)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut points = Vec::with_capacity(cfg.n_values.len() * cfg.mu_grid.len());
    for (n_idx, &n) in cfg.n_values.iter().enumerate() {
        for (mu_idx, &mu) in cfg.mu_grid.iter().enumerate() {
            let model = ScaleLocationModel::new(base.clone(), mu, cfg.sigma)?;
            let trials: Vec<Trial> = pool.install(|| {
                (0..cfg.n_trials)
                    .into_par_iter()
                    .map_init(
                        || vec![0.0; n],
                        |buf, trial| {
                            let mut rng = trial_rng(cfg.master_seed, salt, n_idx, mu_idx, trial);
                            model.fill(&mut rng, buf);
                            match cfg.protocol.run(buf, &base) {
                                Ok(r) => Trial::Ok {
                                    err: r.mu_hat - mu,
                                    sigma_err: r.sigma_hat.map(|s| s - cfg.sigma),
                                    clipped: r.any_clipped(),
                                },
                                Err(Error::DegenerateQuantiles { .. }) => Trial::Failed,
                                Err(e) => panic!("protocol error outside the failure contract: {e}"),
                            }
                        },
                    )
                    .collect()
            });
            points.push(summarize(cfg, &base, &model, n, &trials)?);
        }
    }

    let aggregates = cfg
        .n_values
        .iter()
        .map(|&n| {
            let at_n: Vec<&PointResult> = points.iter().filter(|p| p.n == n).collect();
            let worst = at_n
                .iter()
                .fold(at_n[0], |best, p| if p.mse > best.mse { p } else { best });
            Aggregate {
                n,
                worst_case_mse: worst.mse,
                worst_case_mu: worst.mu,
                average_mse: at_n.iter().map(|p| p.mse).sum::<f64>() / at_n.len() as f64,
            }
        })
        .collect();

    Ok(SimReport {
        provenance: Provenance {
            schema_version: SCHEMA_VERSION.to_string(),
            code_version: CODE_VERSION.to_string(),
            master_seed: cfg.master_seed,
            config_hash: cfg.hash(),
            salt,
        },
        config: cfg.clone(),
        points,
        aggregates,
        benchmarks: Benchmarks {
            c_adapt: mse_adaptive_constant(&base),
            c_non: constants_for(&base).ok().map(|c| c.c_non),
        },
    })
}

fn summarize(
    cfg: &ExperimentConfig,
    base: &BaseDensity,
    model: &ScaleLocationModel,
    n: usize,
    trials: &[Trial],
) -> Result<PointResult> {
    let mu = model.mu();
    let failures = trials.iter().filter(|t| matches!(t, Trial::Failed)).count();
    let rate = failures as f64 / trials.len() as f64;
    if rate > MAX_FAILURE_RATE {
        return Err(Error::ExcessiveFailures { n, mu, rate });
    }
    let ok: Vec<(f64, Option<f64>, bool)> = trials
        .iter()
        .filter_map(|t| match *t {
            Trial::Ok { err, sigma_err, clipped } => Some((err, sigma_err, clipped)),
            Trial::Failed => None,
        })
        .collect();
    let (mse, mse_stderr) = mean_stderr(ok.iter().map(|t| t.0 * t.0));
    let (mean_error, mean_error_stderr) = mean_stderr(ok.iter().map(|t| t.0));
    let (sigma_mse, sigma_mse_stderr) = if ok.iter().all(|t| t.1.is_some()) {
        let (m, s) = mean_stderr(ok.iter().map(|t| t.1.unwrap_or(0.0).powi(2)));
        (Some(m), s)
    } else {
        (None, None)
    };
    let (theory_mse, theory_sigma_mse) = match &cfg.protocol {
        Protocol::NonAdaptive(c) => match mse_nonadaptive_asymptotic(c, base, mu, cfg.sigma) {
            Ok((m, s)) => (Some(m / n as f64), Some(s / n as f64)),
            Err(_) => (None, None),
        },
        Protocol::Adaptive(_) => (Some(mse_adaptive_asymptotic(base, cfg.sigma) / n as f64), None),
        Protocol::MultiThreshold(c) => {
            let th = multi_threshold_theory(c, model, n)?;
            (Some((th.expected_value - mu).powi(2) + th.variance_exact), None)
        }
    };
    Ok(PointResult {
        n,
        mu,
        trials_ok: ok.len(),
        failures,
        clip_rate: if ok.is_empty() {
            0.0
        } else {
            ok.iter().filter(|t| t.2).count() as f64 / ok.len() as f64
        },
        mse,
        mse_stderr,
        mean_error,
        mean_error_stderr,
        sigma_mse,
        sigma_mse_stderr,
        theory_mse,
        theory_sigma_mse,
    })
}

/// One report per split, each on streams salted by the split's position.
///
/// For the non-adaptive protocol a split `FixedFractions { k1, k2 }` with
/// `k1 + k2 = 1` sets the group shares; for the adaptive protocol it replaces
/// the first-round split.
pub fn sweep_splits(cfg: &ExperimentConfig, splits: &[Split], workers: usize) -> Result<Vec<SimReport>> {
    if splits.len() >= u8::MAX as usize {
        return Err(Error::Config("at most 254 splits per sweep".into()));
    }
    splits
        .iter()
        .enumerate()
        .map(|(i, &split)| {
            let mut c = cfg.clone();
            c.protocol = match (cfg.protocol, split) {
                (Protocol::NonAdaptive(na), Split::FixedFractions { k1, k2 }) => {
                    if (k1 + k2 - 1.0).abs() > 1e-9 {
                        return Err(Error::Config(format!("non-adaptive split ({k1}, {k2}) must sum to 1")));
                    }
                    Protocol::NonAdaptive(NonAdaptiveConfig { k1, ..na })
                }
                (Protocol::NonAdaptive(_), Split::TheoremRule) => {
                    return Err(Error::Config("the theorem split applies to the adaptive protocol only".into()))
                }
                (Protocol::Adaptive(a), s) => Protocol::Adaptive(AdaptiveConfig { split: s, ..a }),
                (Protocol::MultiThreshold(_), _) => {
                    return Err(Error::Config("the multi-threshold protocol has no split".into()))
                }
            };
            run_salted(&c, (i + 1) as u8, workers)
        })
        .collect()
}

/// Optional Monte Carlo column for [`sweep_beta`]: adaptive protocol with the
/// theorem split at one `(mu, n)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEmpirical {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub n_trials: usize,
    pub master_seed: u64,
    pub mu_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub beta: f64,
    pub c_non: f64,
    pub c_adapt: f64,
    pub ratio: f64,
    /// `n MSE / sigma^2` of the adaptive protocol.
    pub empirical_nmse: Option<f64>,
    pub empirical_nmse_stderr: Option<f64>,
}

pub fn sweep_beta(betas: &[f64], empirical: Option<&BetaEmpirical>, workers: usize) -> Result<Vec<BetaRow>> {
    for &b in betas {
        if !(b > 1.0 && b <= 2.5) {
            return Err(Error::Domain(format!("beta grid must lie in (1, 2.5], got {b}")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let constants: Vec<Result<_>> =
        pool.install(|| betas.par_iter().map(|&b| constants_for(&BaseDensity::ggd(b)?)).collect());
    betas
        .iter()
        .zip(constants)
        .map(|(&beta, c)| {
            let c = c?;
            let (empirical_nmse, empirical_nmse_stderr) = match empirical {
                None => (None, None),
                Some(e) => {
                    let (theta1, theta2) = equal_thirds_thresholds(e.mu_range.0, e.mu_range.1)?;
                    let cfg = ExperimentConfig {
                        dist: DensityKind::Ggd { beta },
                        protocol: Protocol::Adaptive(AdaptiveConfig {
                            theta1,
                            theta2,
                            split: Split::TheoremRule,
                        }),
                        mu_grid: vec![e.mu],
                        sigma: e.sigma,
                        n_values: vec![e.n],
                        n_trials: e.n_trials,
                        master_seed: e.master_seed,
                        mu_range: e.mu_range,
                    };
                    let r = run_experiment_with(&cfg, workers)?;
                    let p = &r.points[0];
                    let scale = p.n as f64 / (e.sigma * e.sigma);
                    (Some(p.mse * scale), p.mse_stderr.map(|s| s * scale))
                }
            };
            Ok(BetaRow {
                beta,
                c_non: c.c_non,
                c_adapt: c.c_adapt,
                ratio: c.ratio,
                empirical_nmse,
                empirical_nmse_stderr,
            })
        })
        .collect()
}
