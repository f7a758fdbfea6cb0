//! Threshold protocols: every user sends one bit `1{X < theta}` (or its
//! complement) and the server inverts the empirical fractions.

use serde::{Deserialize, Serialize};

use crate::dist::{BaseDensity, ScaleLocationModel};
use crate::error::{Error, Result};
use crate::numerics::{bisect, integrate, integrate_to_infinity, Tolerance};

/// Densities below this make the delta-method variance blow up.
const DIVERGENCE_PDF: f64 = 1e-12;

/// The one-bit threshold encoder. Ties encode to 0.
#[inline]
pub fn encode_threshold(x: f64, theta: f64) -> bool {
    x < theta
}

/// Number of ones among `total` transmitted bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitCount {
    pub ones: usize,
    pub total: usize,
}

impl BitCount {
    pub fn from_bits(bits: &[bool]) -> Self {
        Self {
            ones: bits.iter().filter(|&&b| b).count(),
            total: bits.len(),
        }
    }

    /// Encodes `samples` against `theta` and counts the ones.
    pub fn encode(samples: &[f64], theta: f64) -> Self {
        Self {
            ones: samples.iter().filter(|&&x| encode_threshold(x, theta)).count(),
            total: samples.len(),
        }
    }

    /// Empirical fraction clipped into `[1/(2n), 1 - 1/(2n)]`, and whether
    /// clipping was needed.
    pub fn clipped_fraction(self) -> (f64, bool) {
        let n = self.total as f64;
        let raw = self.ones as f64 / n;
        let lo = 0.5 / n;
        let clipped = raw.clamp(lo, 1.0 - lo);
        (clipped, clipped != raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonAdaptiveConfig {
    pub theta1: f64,
    pub theta2: f64,
    /// Share of users assigned to `theta1`; the rest go to `theta2`.
    pub k1: f64,
}

impl NonAdaptiveConfig {
    pub fn new(theta1: f64, theta2: f64, k1: f64) -> Result<Self> {
        let cfg = Self { theta1, theta2, k1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn k2(&self) -> f64 {
        1.0 - self.k1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta1.is_finite() && self.theta2.is_finite() && self.theta1 < self.theta2) {
            return Err(Error::Config(format!(
                "thresholds must be finite with theta1 < theta2, got ({}, {})",
                self.theta1, self.theta2
            )));
        }
        if !(self.k1 > 0.0 && self.k1 < 1.0) {
            return Err(Error::Config(format!("k1 must lie in (0, 1), got {}", self.k1)));
        }
        Ok(())
    }

    /// `(n1, n2)` for `n` users; both at least 1.
    pub fn group_sizes(&self, n: usize) -> Result<(usize, usize)> {
        let n1 = (self.k1 * n as f64).round() as usize;
        if n1 == 0 || n1 >= n {
            return Err(Error::Config(format!("k1={} leaves an empty group at n={n}", self.k1)));
        }
        Ok((n1, n - n1))
    }
}

/// How the adaptive protocol divides users between its two rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Split {
    /// `n1 = n2 = n3 / ln n3`.
    TheoremRule,
    /// `n1 = k1 n`, `n2 = k2 n`, remainder in round two.
    FixedFractions { k1: f64, k2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub split: Split,
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        NonAdaptiveConfig::new(self.theta1, self.theta2, 0.5)?;
        if let Split::FixedFractions { k1, k2 } = self.split {
            if !(k1 > 0.0 && k2 > 0.0 && k1 + k2 < 1.0) {
                return Err(Error::Config(format!(
                    "fixed fractions need k1, k2 > 0 and k1 + k2 < 1, got ({k1}, {k2})"
                )));
            }
        }
        Ok(())
    }
}

/// Uniform threshold grid `theta_j = j delta`, `j = -m..=m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiThresholdConfig {
    pub m: usize,
    pub delta: f64,
}

impl MultiThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!(
                "multi-threshold grid needs m >= 1 and delta > 0, got m={}, delta={}",
                self.m, self.delta
            )));
        }
        Ok(())
    }

    /// Users per threshold group.
    pub fn group_size(&self, n: usize) -> Result<usize> {
        self.validate()?;
        if n == 0 || !n.is_multiple_of(2 * self.m) {
            return Err(Error::Config(format!("n={n} is not a positive multiple of 2m={}", 2 * self.m)));
        }
        Ok(n / (2 * self.m))
    }

    /// Group indices in transmission order: `-m..=-1`, then `1..=m`.
    pub fn groups(&self) -> impl Iterator<Item = i64> {
        let m = self.m as i64;
        (-m..=-1).chain(1..=m)
    }

    /// Cell midpoint used by group `j`: `(j + 1/2) delta` below zero,
    /// `(j - 1/2) delta` above.
    pub fn midpoint(&self, j: i64) -> f64 {
        let shift = if j < 0 { 0.5 } else { -0.5 };
        (j as f64 + shift) * self.delta
    }

    /// `theta_m - theta_{-m}`.
    pub fn span(&self) -> f64 {
        2.0 * self.m as f64 * self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub mu_hat: f64,
    pub sigma_hat: Option<f64>,
    /// Clipped empirical fractions `F1, F2[, F3]`.
    pub fractions: Vec<f64>,
    pub clipped: Vec<bool>,
}

impl EstimateResult {
    pub fn any_clipped(&self) -> bool {
        self.clipped.iter().any(|&c| c)
    }
}

/// Inverts two empirical quantiles into `(mu_hat, sigma_hat)`.
pub fn nonadaptive_from_counts(
    c1: BitCount,
    c2: BitCount,
    cfg: &NonAdaptiveConfig,
    d: &BaseDensity,
) -> Result<EstimateResult> {
    if c1.total == 0 || c2.total == 0 {
        return Err(Error::Config("each threshold group needs at least one user".into()));
    }
    let (f1, clip1) = c1.clipped_fraction();
    let (f2, clip2) = c2.clipped_fraction();
    let a1 = d.quantile(f1)?;
    let a2 = d.quantile(f2)?;
    let gap = a1 - a2;
    let sigma_hat = (cfg.theta1 - cfg.theta2) / gap;
    if gap.abs() < 1e-12 || !(sigma_hat > 0.0) {
        return Err(Error::DegenerateQuantiles { alpha1: a1, alpha2: a2 });
    }
    Ok(EstimateResult {
        mu_hat: (a1 * cfg.theta2 - a2 * cfg.theta1) / gap,
        sigma_hat: Some(sigma_hat),
        fractions: vec![f1, f2],
        clipped: vec![clip1, clip2],
    })
}

/// Two-threshold estimator from the transmitted bits of each group.
pub fn nonadaptive_estimate(
    bits1: &[bool],
    bits2: &[bool],
    cfg: &NonAdaptiveConfig,
    d: &BaseDensity,
) -> Result<EstimateResult> {
    nonadaptive_from_counts(BitCount::from_bits(bits1), BitCount::from_bits(bits2), cfg, d)
}

/// Runs the two-threshold protocol on raw samples: the first `k1 n` users
/// encode against `theta1`, the rest against `theta2`.
pub fn nonadaptive_on_samples(samples: &[f64], cfg: &NonAdaptiveConfig, d: &BaseDensity) -> Result<EstimateResult> {
    let (n1, _) = cfg.group_sizes(samples.len())?;
    let (first, second) = samples.split_at(n1);
    nonadaptive_from_counts(BitCount::encode(first, cfg.theta1), BitCount::encode(second, cfg.theta2), cfg, d)
}

/// `(n1, n2, n3)` with `n1 + n2 + n3 = n`, all positive.
pub fn split_solver(n: usize, rule: Split) -> Result<(usize, usize, usize)> {
    let (n1, n2) = match rule {
        Split::TheoremRule => {
            if n < 30 {
                return Err(Error::Domain(format!("the theorem split needs n >= 30, got {n}")));
            }
            let nf = n as f64;
            let x = bisect(|x| x + 2.0 * x / x.ln() - nf, std::f64::consts::E, nf, 1e-9)?;
            let n3 = (x.round() as usize).min(n);
            let half = (n - n3) / 2;
            (half, half)
        }
        Split::FixedFractions { k1, k2 } => {
            if !(k1 > 0.0 && k2 > 0.0 && k1 + k2 < 1.0) {
                return Err(Error::Config(format!("invalid fixed fractions ({k1}, {k2})")));
            }
            ((k1 * n as f64).round() as usize, (k2 * n as f64).round() as usize)
        }
    };
    if n1 == 0 || n2 == 0 || n1 + n2 >= n {
        return Err(Error::Domain(format!("n={n} is too small for a three-way split")));
    }
    Ok((n1, n2, n - n1 - n2))
}

/// Two-round protocol. Round one runs the two-threshold estimator on the
/// first `n1 + n2` users; the server broadcasts `mu_c` and the remaining `n3`
/// users encode against it. Returns `mu_f = mu_c - F^{-1}(F3) sigma_c`.
pub fn adaptive_estimate(samples: &[f64], cfg: &AdaptiveConfig, d: &BaseDensity) -> Result<EstimateResult> {
    cfg.validate()?;
    let (n1, n2, _) = split_solver(samples.len(), cfg.split)?;
    let c1 = BitCount::encode(&samples[..n1], cfg.theta1);
    let c2 = BitCount::encode(&samples[n1..n1 + n2], cfg.theta2);
    let round1 = NonAdaptiveConfig {
        theta1: cfg.theta1,
        theta2: cfg.theta2,
        k1: n1 as f64 / (n1 + n2) as f64,
    };
    let coarse = nonadaptive_from_counts(c1, c2, &round1, d)?;
    let c3 = BitCount::encode(&samples[n1 + n2..], coarse.mu_hat);
    adaptive_second_round(&coarse, c3, d)
}

/// Server side of round two, given the round-one result and round-two bits.
pub fn adaptive_second_round(coarse: &EstimateResult, c3: BitCount, d: &BaseDensity) -> Result<EstimateResult> {
    let sigma_c = coarse
        .sigma_hat
        .ok_or_else(|| Error::Config("round one must estimate sigma".into()))?;
    let (f3, clip3) = c3.clipped_fraction();
    let mut fractions = coarse.fractions.clone();
    let mut clipped = coarse.clipped.clone();
    fractions.push(f3);
    clipped.push(clip3);
    Ok(EstimateResult {
        mu_hat: coarse.mu_hat - d.quantile(f3)? * sigma_c,
        sigma_hat: Some(sigma_c),
        fractions,
        clipped,
    })
}

/// `lim n MSE(mu_hat)` and `lim n MSE(sigma_hat)` of the two-threshold
/// estimator, from the delta method applied to the two empirical quantiles:
///
/// ```text
/// n MSE(mu)    = sigma^2 / (t1 - t2)^2 [ (t2 - mu)^2 s1^2 / (k1 f1^2) + (t1 - mu)^2 s2^2 / (k2 f2^2) ]
/// n MSE(sigma) = sigma^4 / (t1 - t2)^2 [ s1^2 / (k1 f1^2) + s2^2 / (k2 f2^2) ]
/// ```
///
/// with `si^2 = F(zi)(1 - F(zi))`, `fi = f(zi)`, `zi = (ti - mu) / sigma`.
pub fn mse_nonadaptive_asymptotic(cfg: &NonAdaptiveConfig, d: &BaseDensity, mu: f64, sigma: f64) -> Result<(f64, f64)> {
    cfg.validate()?;
    let group = |theta: f64, k: f64| -> Result<f64> {
        let z = (theta - mu) / sigma;
        let f = d.pdf(z);
        if f < DIVERGENCE_PDF {
            return Err(Error::Divergence { z, density: f });
        }
        Ok(d.cdf(z) * d.cdf(-z) / (k * f * f))
    };
    let w1 = group(cfg.theta1, cfg.k1)?;
    let w2 = group(cfg.theta2, cfg.k2())?;
    let gap2 = (cfg.theta1 - cfg.theta2).powi(2);
    let mu_term = sigma * sigma / gap2 * ((cfg.theta2 - mu).powi(2) * w1 + (cfg.theta1 - mu).powi(2) * w2);
    let sigma_term = sigma.powi(4) / gap2 * (w1 + w2);
    Ok((mu_term, sigma_term))
}

/// `lim n MSE(mu_f) = sigma^2 / (4 f(0)^2)` for the two-round protocol.
pub fn mse_adaptive_asymptotic(d: &BaseDensity, sigma: f64) -> f64 {
    sigma * sigma * 0.25 / (d.f0() * d.f0())
}

/// Riemann-sum estimator. Samples are taken in `2m` consecutive groups of
/// `K = n / (2m)`, ordered as [`MultiThresholdConfig::groups`]. Group `j < 0`
/// reports `1{X < midpoint}`, group `j > 0` reports `1{X > midpoint}`.
pub fn multi_threshold_estimate(samples: &[f64], cfg: &MultiThresholdConfig) -> Result<f64> {
    let k = cfg.group_size(samples.len())?;
    let mut sum = 0i64;
    for (chunk, j) in samples.chunks_exact(k).zip(cfg.groups()) {
        let mid = cfg.midpoint(j);
        if j < 0 {
            sum -= chunk.iter().filter(|&&x| encode_threshold(x, mid)).count() as i64;
        } else {
            sum += chunk.iter().filter(|&&x| x > mid).count() as i64;
        }
    }
    Ok(cfg.delta * sum as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiThresholdTheory {
    /// `L m delta^2` with `L` the largest density of the model.
    pub bias_bound: f64,
    /// Exact finite-grid variance `(delta^2 / K) sum_j F(mid_j)(1 - F(mid_j))`.
    pub variance_exact: f64,
    /// Continuum approximation `(delta / K) int F (1 - F) dx`.
    pub variance_integral: f64,
    /// Exact expectation of the estimator.
    pub expected_value: f64,
}

pub fn multi_threshold_theory(cfg: &MultiThresholdConfig, model: &ScaleLocationModel, n: usize) -> Result<MultiThresholdTheory> {
    let k = cfg.group_size(n)? as f64;
    let (mut mean, mut var_sum) = (0.0, 0.0);
    for j in cfg.groups() {
        let mid = cfg.midpoint(j);
        let z = model.standardize(mid);
        let (below, above) = (model.base.cdf(z), model.base.cdf(-z));
        mean += if j < 0 { -below } else { above };
        var_sum += below * above;
    }
    let base = &model.base;
    let tol = Tolerance::new(1e-13, 1e-12);
    // F(z)(1 - F(z)) = F(z) F(-z) is even, so integrate one side and double.
    let half = integrate(|z| base.cdf(z) * base.cdf(-z), 0.0, 1.0, tol)?.value
        + integrate_to_infinity(|z| base.cdf(z) * base.cdf(-z), 1.0, tol)?.value;
    let integral = 2.0 * model.sigma() * half;
    Ok(MultiThresholdTheory {
        bias_bound: model.max_pdf() * cfg.m as f64 * cfg.delta * cfg.delta,
        variance_exact: cfg.delta * cfg.delta * var_sum / k,
        variance_integral: cfg.delta * integral / k,
        expected_value: cfg.delta * mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DensityKind;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<BaseDensity> {
        DensityKind::table_families()
            .into_iter()
            .map(|k| BaseDensity::new(k).unwrap())
            .collect()
    }

    /// Counts that reproduce the population fractions exactly, up to `1/total`.
    fn exact_count(model: &ScaleLocationModel, theta: f64, total: usize) -> BitCount {
        BitCount {
            ones: (model.cdf(theta) * total as f64).round() as usize,
            total,
        }
    }

    #[test]
    fn encoder_definition() {
        assert!(encode_threshold(0.2, 0.5));
        assert!(!encode_threshold(0.5, 0.5));
    }

    #[test]
    fn encoder_mean_at_median() {
        let model = ScaleLocationModel::new(BaseDensity::ggd(2.0).unwrap(), 0.7, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let ones = (0..n).filter(|_| encode_threshold(model.sample(&mut rng), 0.7)).count();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn population_inversion_is_exact() {
        let cfg = NonAdaptiveConfig::new(-1.0, 1.0, 0.5).unwrap();
        for d in families() {
            let model = ScaleLocationModel::new(d.clone(), 0.3, 2.0).unwrap();
            // Feed the exact population fractions through the quantile inversion.
            let a1 = d.quantile(model.cdf(-1.0)).unwrap();
            let a2 = d.quantile(model.cdf(1.0)).unwrap();
            let mu = (a1 * cfg.theta2 - a2 * cfg.theta1) / (a1 - a2);
            let sigma = (cfg.theta1 - cfg.theta2) / (a1 - a2);
            assert!((mu - 0.3).abs() < 1e-9 && (sigma - 2.0).abs() < 1e-9, "{}", d.kind());
            // And through the count interface with a large exact population.
            let total = 1 << 40;
            let r = nonadaptive_from_counts(exact_count(&model, -1.0, total), exact_count(&model, 1.0, total), &cfg, &d)
                .unwrap();
            assert!((r.mu_hat - 0.3).abs() < 1e-9, "{}", d.kind());
            assert!((r.sigma_hat.unwrap() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn clipping_keeps_estimate_finite() {
        let cfg = NonAdaptiveConfig::new(-1.0, 1.0, 0.5).unwrap();
        let d = BaseDensity::logistic();
        let r = nonadaptive_estimate(&[true; 100], &[false; 100], &cfg, &d).unwrap_err();
        // All-ones below and all-zeros above puts alpha1 far above alpha2.
        assert!(matches!(r, Error::DegenerateQuantiles { .. }));
        let r = nonadaptive_estimate(&[false; 100], &[true; 100], &cfg, &d).unwrap();
        assert_eq!(r.fractions, vec![1.0 / 200.0, 1.0 - 1.0 / 200.0]);
        assert_eq!(r.clipped, vec![true, true]);
        assert!(r.mu_hat.is_finite() && r.sigma_hat.unwrap() > 0.0);
    }

    #[test]
    fn degenerate_when_fractions_equal() {
        let cfg = NonAdaptiveConfig::new(-1.0, 1.0, 0.5).unwrap();
        let bits = [true, false, true, false];
        assert!(matches!(
            nonadaptive_estimate(&bits, &bits, &cfg, &BaseDensity::logistic()),
            Err(Error::DegenerateQuantiles { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(NonAdaptiveConfig::new(1.0, -1.0, 0.5).is_err());
        assert!(NonAdaptiveConfig::new(1.0, 1.0, 0.5).is_err());
        assert!(NonAdaptiveConfig::new(-1.0, 1.0, 1.0).is_err());
        let bad = AdaptiveConfig {
            theta1: -1.0,
            theta2: 1.0,
            split: Split::FixedFractions { k1: 0.5, k2: 0.5 },
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mse_formula_zero_weight_when_mu_on_threshold() {
        let cfg = NonAdaptiveConfig::new(-1.0, 1.0, 0.5).unwrap();
        let d = BaseDensity::ggd(2.0).unwrap();
        let (at_theta1, _) = mse_nonadaptive_asymptotic(&cfg, &d, -1.0, 1.0).unwrap();
        // Only the (t2 - mu)^2 term survives: (1/4) * 4 * F(0)^2 / (k1 f(0)^2).
        let w1 = 0.25 / (0.5 * d.f0() * d.f0());
        assert!((at_theta1 - w1).abs() < 1e-12);
    }

    #[test]
    fn mse_formula_symmetric_case() {
        let cfg = NonAdaptiveConfig::new(-0.8, 0.8, 0.5).unwrap();
        let d = BaseDensity::ggd(2.0).unwrap();
        let (m, s) = mse_nonadaptive_asymptotic(&cfg, &d, 0.0, 1.0).unwrap();
        let f = d.pdf(0.8);
        let var = d.cdf(0.8) * d.cdf(-0.8);
        let w = var / (0.5 * f * f);
        assert!((m - (0.64 * w * 2.0) / 2.56).abs() < 1e-12);
        assert!((s - 2.0 * w / 2.56).abs() < 1e-12);
    }

    #[test]
    fn mse_formula_divergence() {
        let cfg = NonAdaptiveConfig::new(-1.0, 1.0, 0.5).unwrap();
        assert!(matches!(
            mse_nonadaptive_asymptotic(&cfg, &BaseDensity::ggd(2.0).unwrap(), 50.0, 1.0),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn nonadaptive_monte_carlo_matches_formula() {
        // Reduced size: n = 10000, 800 trials; the formula is an n -> inf limit.
        let d = BaseDensity::ggd(2.0).unwrap();
        let model = ScaleLocationModel::new(d.clone(), 0.0, 1.0).unwrap();
        let cfg = NonAdaptiveConfig::new(-0.8333, 0.8333, 0.5).unwrap();
        let (n, trials) = (10_000, 800);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut buf = vec![0.0; n];
        let errs: Vec<f64> = (0..trials)
            .map(|_| {
                model.fill(&mut rng, &mut buf);
                let r = nonadaptive_on_samples(&buf, &cfg, &d).unwrap();
                n as f64 * r.mu_hat.powi(2)
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / trials as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        let (theory, _) = mse_nonadaptive_asymptotic(&cfg, &d, 0.0, 1.0).unwrap();
        assert!((mean - theory).abs() < 3.0 * sd / (trials as f64).sqrt(), "{mean} vs {theory}");
    }

    #[test]
    fn split_solver_rules() {
        let (n1, n2, n3) = split_solver(40_000, Split::TheoremRule).unwrap();
        assert_eq!(n1 + n2 + n3, 40_000);
        assert_eq!(n1, n2);
        // Independent oracle: n3 / ln n3 close to n1.
        let x = bisect(|x| x + 2.0 * x / x.ln() - 40_000.0, 3.0, 40_000.0, 1e-10).unwrap();
        assert!((n3 as f64 - x).abs() <= 2.0);
        assert!((n1 as f64 - n3 as f64 / (n3 as f64).ln()).abs() <= 1.5);
        assert_eq!(split_solver(1000, Split::FixedFractions { k1: 0.05, k2: 0.05 }).unwrap(), (50, 50, 900));
        let (a, b, c) = split_solver(30, Split::TheoremRule).unwrap();
        assert!(a >= 1 && b >= 1 && c >= 1 && a + b + c == 30);
        assert!(split_solver(29, Split::TheoremRule).is_err());
    }

    #[test]
    fn adaptive_population_identity() {
        let d = BaseDensity::hyperbolic_secant();
        let coarse = EstimateResult {
            mu_hat: -1.0,
            sigma_hat: Some(2.0),
            fractions: vec![0.2, 0.8],
            clipped: vec![false, false],
        };
        let r = adaptive_second_round(&coarse, BitCount { ones: 500, total: 1000 }, &d).unwrap();
        assert_eq!(r.mu_hat, -1.0);
        assert_eq!(r.fractions.len(), 3);
    }

    #[test]
    fn adaptive_monte_carlo_reduced() {
        // Only the n3 second-round users carry the final estimate, so at
        // finite n the leading term is C_adapt * n / n3 rather than C_adapt.
        let d = BaseDensity::hyperbolic_secant();
        let model = ScaleLocationModel::new(d.clone(), -1.0, 2.0).unwrap();
        let cfg = AdaptiveConfig {
            theta1: -0.8333,
            theta2: 0.8333,
            split: Split::TheoremRule,
        };
        let (n, trials) = (20_000, 600);
        let (_, _, n3) = split_solver(n, cfg.split).unwrap();
        let expected = n as f64 / n3 as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut buf = vec![0.0; n];
        let errs: Vec<f64> = (0..trials)
            .map(|_| {
                model.fill(&mut rng, &mut buf);
                let r = adaptive_estimate(&buf, &cfg, &d).unwrap();
                n as f64 * (r.mu_hat + 1.0).powi(2) / 4.0
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / trials as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        let se = sd / (trials as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "{mean} +- {se} vs {expected}");
    }

    #[test]
    fn decoder_sees_only_bits() {
        let d = BaseDensity::logistic();
        let cfg = AdaptiveConfig {
            theta1: -0.8,
            theta2: 0.8,
            split: Split::TheoremRule,
        };
        let model = ScaleLocationModel::new(d.clone(), 0.2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut xs = vec![0.0; 5000];
        model.fill(&mut rng, &mut xs);
        let base = adaptive_estimate(&xs, &cfg, &d).unwrap();
        let (n1, n2, _) = split_solver(xs.len(), cfg.split).unwrap();
        // Move every sample toward (but not across) its threshold.
        let mut moved = xs.clone();
        for (i, x) in moved.iter_mut().enumerate() {
            let theta = if i < n1 {
                cfg.theta1
            } else if i < n1 + n2 {
                cfg.theta2
            } else {
                base_mu_c(&xs, &cfg, &d)
            };
            *x = theta + 0.5 * (*x - theta);
        }
        assert_eq!(adaptive_estimate(&moved, &cfg, &d).unwrap(), base);
    }

    fn base_mu_c(xs: &[f64], cfg: &AdaptiveConfig, d: &BaseDensity) -> f64 {
        let (n1, n2, _) = split_solver(xs.len(), cfg.split).unwrap();
        let na = NonAdaptiveConfig::new(cfg.theta1, cfg.theta2, n1 as f64 / (n1 + n2) as f64).unwrap();
        nonadaptive_on_samples(&xs[..n1 + n2], &na, d).unwrap().mu_hat
    }

    #[test]
    fn multi_threshold_zero_samples() {
        let cfg = MultiThresholdConfig { m: 4, delta: 0.5 };
        assert_eq!(multi_threshold_estimate(&[0.0; 80], &cfg).unwrap(), 0.0);
        assert!(matches!(multi_threshold_estimate(&[0.0; 81], &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn multi_threshold_exact_expectation_bias() {
        let model = ScaleLocationModel::new(BaseDensity::ggd(2.0).unwrap(), 0.4, 1.0).unwrap();
        let cfg = MultiThresholdConfig { m: 200, delta: 0.05 };
        let th = multi_threshold_theory(&cfg, &model, 400).unwrap();
        assert!((th.expected_value - 0.4).abs() <= th.bias_bound);
        assert!((th.bias_bound - model.max_pdf() * 200.0 * 0.0025).abs() < 1e-15);
        let half = MultiThresholdConfig { m: 400, delta: 0.025 };
        let th2 = multi_threshold_theory(&half, &model, 800).unwrap();
        assert!((th2.bias_bound - th.bias_bound / 2.0).abs() < 1e-15);
    }

    #[test]
    fn multi_threshold_variance_integral_form() {
        let model = ScaleLocationModel::new(BaseDensity::ggd(2.0).unwrap(), 0.0, 1.0).unwrap();
        let cfg = MultiThresholdConfig { m: 400, delta: 0.02 };
        let th = multi_threshold_theory(&cfg, &model, 800 * 10).unwrap();
        assert!((th.variance_integral - th.variance_exact).abs() / th.variance_exact < 0.02);
        // For the normal, int Phi(1 - Phi) = 1 / sqrt(pi).
        let k = 10.0;
        let oracle = cfg.delta / k / std::f64::consts::PI.sqrt();
        assert!((th.variance_integral - oracle).abs() < 1e-10);
    }

    #[test]
    fn adaptive_asymptotic_values() {
        assert!((mse_adaptive_asymptotic(&BaseDensity::hyperbolic_secant(), 1.0) - 1.0).abs() < 1e-15);
        let s = mse_adaptive_asymptotic(&BaseDensity::sin2_custom(), 2.0);
        assert!((s - 5.5472).abs() / 5.5472 < 2e-3);
        let g = mse_adaptive_asymptotic(&BaseDensity::ggd(2.0).unwrap(), 1.0);
        assert!((g - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn location_equivariance(shift in -5.0f64..5.0, seed in any::<u64>()) {
            let d = BaseDensity::logistic();
            let model = ScaleLocationModel::new(d.clone(), 0.0, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut xs = vec![0.0; 400];
            model.fill(&mut rng, &mut xs);
            let cfg = NonAdaptiveConfig::new(-0.7, 0.6, 0.5).unwrap();
            let moved = NonAdaptiveConfig::new(-0.7 + shift, 0.6 + shift, 0.5).unwrap();
            // Compare bit patterns through the counts so float rounding in the
            // shifted samples cannot flip a tie.
            let (n1, _) = cfg.group_sizes(xs.len()).unwrap();
            let c1 = BitCount::encode(&xs[..n1], cfg.theta1);
            let c2 = BitCount::encode(&xs[n1..], cfg.theta2);
            if let Ok(r) = nonadaptive_from_counts(c1, c2, &cfg, &d) {
                let s = nonadaptive_from_counts(c1, c2, &moved, &d).unwrap();
                prop_assert!((s.mu_hat - r.mu_hat - shift).abs() < 1e-9);
                prop_assert!((s.sigma_hat.unwrap() - r.sigma_hat.unwrap()).abs() < 1e-9);
            }
        }

        #[test]
        fn scale_equivariance(scale in 0.1f64..10.0, ones1 in 1usize..199, ones2 in 1usize..199) {
            let d = BaseDensity::hyperbolic_secant();
            let cfg = NonAdaptiveConfig::new(-0.5, 0.9, 0.5).unwrap();
            let scaled = NonAdaptiveConfig::new(-0.5 * scale, 0.9 * scale, 0.5).unwrap();
            let c1 = BitCount { ones: ones1, total: 200 };
            let c2 = BitCount { ones: ones2, total: 200 };
            if let Ok(r) = nonadaptive_from_counts(c1, c2, &cfg, &d) {
                let s = nonadaptive_from_counts(c1, c2, &scaled, &d).unwrap();
                prop_assert!((s.mu_hat - scale * r.mu_hat).abs() < 1e-9 * scale.max(1.0) * (1.0 + r.mu_hat.abs()));
                prop_assert!((s.sigma_hat.unwrap() - scale * r.sigma_hat.unwrap()).abs() < 1e-9 * scale * r.sigma_hat.unwrap());
            }
        }

        #[test]
        fn multi_threshold_is_bounded(m in 1usize..20, delta in 0.01f64..1.0, k in 1usize..20, seed in any::<u64>()) {
            let cfg = MultiThresholdConfig { m, delta };
            let model = ScaleLocationModel::new(BaseDensity::logistic(), 3.0, 5.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut xs = vec![0.0; 2 * m * k];
            model.fill(&mut rng, &mut xs);
            let est = multi_threshold_estimate(&xs, &cfg).unwrap();
            prop_assert!(est.abs() <= m as f64 * delta * (1.0 + 1e-12));
        }

        #[test]
        fn clipped_fraction_in_open_unit_interval(ones in 0usize..1000, extra in 1usize..1000) {
            let c = BitCount { ones, total: ones + extra };
            let (f, _) = c.clipped_fraction();
            prop_assert!(f > 0.0 && f < 1.0);
        }
    }

    /// Adaptive MSE falls with n and `n MSE / sigma^2` moves toward C_adapt.
    #[test]
    fn adaptive_consistency_trend() {
        let d = BaseDensity::hyperbolic_secant();
        let (mu, sigma) = (0.3, 2.0);
        let model = ScaleLocationModel::new(d.clone(), mu, sigma).unwrap();
        let cfg = AdaptiveConfig {
            theta1: -0.8333,
            theta2: 0.8333,
            split: Split::TheoremRule,
        };
        let trials = 400;
        let c_adapt = 0.25 / (d.f0() * d.f0());
        let stats: Vec<(f64, f64, f64)> = [5_000, 20_000, 80_000]
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
                let mut buf = vec![0.0; n];
                let sq: Vec<f64> = (0..trials)
                    .map(|_| {
                        model.fill(&mut rng, &mut buf);
                        (adaptive_estimate(&buf, &cfg, &d).unwrap().mu_hat - mu).powi(2)
                    })
                    .collect();
                let mse = sq.iter().sum::<f64>() / trials as f64;
                let sd = (sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
                (mse, sd / (trials as f64).sqrt(), n as f64 / (sigma * sigma))
            })
            .collect();
        for w in stats.windows(2) {
            let ((m0, s0, k0), (m1, s1, k1)) = (w[0], w[1]);
            assert!(m1 < m0, "MSE must fall: {m0} -> {m1}");
            let (g0, g1) = ((k0 * m0 - c_adapt).abs(), (k1 * m1 - c_adapt).abs());
            let slack = 3.0 * (k0 * s0).hypot(k1 * s1);
            assert!(g1 <= g0 + slack, "distance to C_adapt grew: {g0} -> {g1} (slack {slack})");
        }
    }
}
