//! Zero-mean, unit-variance symmetric base densities and their
//! scale-location transforms.
//!
//! Every family is evaluated through its upper tail `P(X > a)` for `a >= 0`,
//! so both tails of the CDF keep full relative precision and `cdf(0) = 1/2`
//! holds exactly.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::distr::Open01;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::numerics::{
    gauss_legendre8, integrate, integrate_to_infinity, newton_bisect_increasing, Tolerance,
};

/// Shape parameters of the custom strictly log-concave "sin2" density
/// `exp(-psi(x)) / Z` with
/// `psi(x) = 1.48 (|x|/s)^1.5 + 0.5 (x/s)^4 + 0.0675 sin^2(4x/s) + 1`.
pub mod sin2 {
    pub const SCALE: f64 = 2.023076;
    pub const ABS_COEF: f64 = 1.48;
    pub const ABS_POWER: f64 = 1.5;
    pub const QUARTIC_COEF: f64 = 0.5;
    pub const WIGGLE_COEF: f64 = 0.0675;
    pub const WIGGLE_FREQ: f64 = 4.0;
    pub const OFFSET: f64 = 1.0;
    /// The tail mass beyond this point is below 1e-260.
    pub const SUPPORT: f64 = 12.0;
    pub const PANEL_WIDTH: f64 = 1.0 / 256.0;
}

/// Unit-variance logistic scale `sqrt(3) / pi`.
pub const LOGISTIC_SCALE: f64 = 0.551_328_895_421_792_1;

/// Which base family a density belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensityKind {
    /// Generalized Gaussian with shape `beta`, scaled to unit variance.
    Ggd { beta: f64 },
    Logistic,
    HyperbolicSecant,
    Sin2Custom,
}

impl DensityKind {
    /// Short identifier used on the command line and in CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            DensityKind::Ggd { .. } => "ggd",
            DensityKind::Logistic => "logistic",
            DensityKind::HyperbolicSecant => "hypsecant",
            DensityKind::Sin2Custom => "sin2",
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            DensityKind::Ggd { beta } => Some(*beta),
            _ => None,
        }
    }

    /// GGD is strictly log-concave only for `beta > 1`; the other three always are.
    pub fn is_strictly_log_concave(&self) -> bool {
        match self {
            DensityKind::Ggd { beta } => *beta > 1.0,
            _ => true,
        }
    }

    /// The four families used throughout the tables, in declaration order.
    pub fn table_families() -> [DensityKind; 4] {
        [
            DensityKind::Ggd { beta: 1.5 },
            DensityKind::Logistic,
            DensityKind::HyperbolicSecant,
            DensityKind::Sin2Custom,
        ]
    }
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityKind::Ggd { beta } => write!(f, "ggd(beta={beta})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone)]
enum Family {
    Ggd {
        beta: f64,
        alpha: f64,
        /// `ln(beta / (2 alpha Gamma(1/beta)))`
        ln_norm: f64,
        magnitude: Gamma<f64>,
    },
    Logistic,
    HyperbolicSecant,
    Sin2(Arc<Sin2Table>),
}

/// Cumulative tail masses of the sin2 density on a uniform panel grid over
/// `[0, SUPPORT]`, integrated panel by panel with 8-point Gauss–Legendre.
#[derive(Debug)]
struct Sin2Table {
    /// Unnormalized total mass, i.e. the normalizing constant.
    z: f64,
    ln_z: f64,
    /// `upper[i] = P(X > i * PANEL_WIDTH)`; `upper[panels] = 0`.
    upper: Vec<f64>,
    /// `ABS_COEF |u|^1.5` for the rejection proposal in `u = x / SCALE`.
    proposal: Gamma<f64>,
}

fn sin2_psi(x: f64) -> f64 {
    use sin2::*;
    let u = x.abs() / SCALE;
    ABS_COEF * u * u.sqrt() + QUARTIC_COEF * u.powi(4) + WIGGLE_COEF * (WIGGLE_FREQ * x / SCALE).sin().powi(2) + OFFSET
}

fn sin2_psi_prime(x: f64) -> f64 {
    use sin2::*;
    let u = x.abs() / SCALE;
    let abs_term = ABS_COEF * ABS_POWER * u.sqrt() / SCALE;
    x.signum() * abs_term * (x != 0.0) as u8 as f64
        + 4.0 * QUARTIC_COEF * (x / SCALE).powi(3) / SCALE
        + WIGGLE_COEF * (WIGGLE_FREQ / SCALE) * (2.0 * WIGGLE_FREQ * x / SCALE).sin()
}

fn sin2_psi_second(x: f64) -> f64 {
    use sin2::*;
    let u = x.abs() / SCALE;
    let abs_term = ABS_COEF * ABS_POWER * (ABS_POWER - 1.0) / (u.sqrt() * SCALE * SCALE);
    abs_term
        + 12.0 * QUARTIC_COEF * (x / SCALE).powi(2) / (SCALE * SCALE)
        + WIGGLE_COEF * 2.0 * (WIGGLE_FREQ / SCALE).powi(2) * (2.0 * WIGGLE_FREQ * x / SCALE).cos()
}

impl Sin2Table {
    fn build() -> Self {
        use sin2::{PANEL_WIDTH, SUPPORT};
        let panels = (SUPPORT / PANEL_WIDTH).round() as usize;
        let kernel = |x: f64| (-sin2_psi(x)).exp();
        let masses: Vec<f64> = (0..panels)
            .map(|i| {
                let a = i as f64 * PANEL_WIDTH;
                gauss_legendre8(kernel, a, a + PANEL_WIDTH)
            })
            .collect();
        let mut upper = vec![0.0; panels + 1];
        for i in (0..panels).rev() {
            upper[i] = upper[i + 1] + masses[i];
        }
        let z = 2.0 * upper[0];
        for u in &mut upper {
            *u /= z;
        }
        upper[0] = 0.5;
        Self {
            z,
            ln_z: z.ln(),
            upper,
            proposal: Gamma::new(1.0 / sin2::ABS_POWER, 1.0).expect("valid gamma shape"),
        }
    }

    /// Exact rejection sampler: propose from `exp(-ABS_COEF |u|^1.5)` and
    /// accept with the remaining factor `exp(-quartic - wiggle) <= 1`.
    /// About five in six proposals are accepted.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use sin2::*;
        loop {
            let g: f64 = self.proposal.sample(rng);
            let m = (g / ABS_COEF).powf(1.0 / ABS_POWER);
            let u = if rng.random::<bool>() { m } else { -m };
            let log_accept = -(QUARTIC_COEF * u.powi(4) + WIGGLE_COEF * (WIGGLE_FREQ * u).sin().powi(2));
            let v: f64 = rng.sample(Open01);
            if v.ln() < log_accept {
                return SCALE * u;
            }
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        (-sin2_psi(x) - self.ln_z).exp()
    }

    fn panel_of(&self, a: f64) -> usize {
        ((a / sin2::PANEL_WIDTH) as usize).min(self.upper.len() - 2)
    }

    fn tail(&self, a: f64) -> f64 {
        if a >= sin2::SUPPORT {
            return 0.0;
        }
        let i = self.panel_of(a);
        let right = (i + 1) as f64 * sin2::PANEL_WIDTH;
        self.upper[i + 1] + gauss_legendre8(|x| self.pdf(x), a, right)
    }

    /// Solves `tail(a) = q` for `0 < q <= 1/2`.
    fn inverse_tail(&self, q: f64) -> f64 {
        if q >= 0.5 {
            return 0.0;
        }
        // Largest panel start whose tail mass is still >= q.
        let i = self.upper.partition_point(|&u| u >= q) - 1;
        let left = i as f64 * sin2::PANEL_WIDTH;
        let right = left + sin2::PANEL_WIDTH;
        let target = self.upper[i] - q;
        let f_left = self.pdf(left);
        let start = left + target / f_left;
        newton_bisect_increasing(
            |a| (gauss_legendre8(|x| self.pdf(x), left, a) - target, self.pdf(a)),
            left,
            right,
            start,
            1e-15,
        )
    }
}

/// A zero-mean, unit-variance symmetric density `f_X = exp(-phi)`.
///
/// Immutable after construction; cloning shares any precomputed tables.
#[derive(Debug, Clone)]
pub struct BaseDensity {
    kind: DensityKind,
    family: Family,
    f0: f64,
    normalizer: f64,
}

impl BaseDensity {
    pub fn new(kind: DensityKind) -> Result<Self> {
        match kind {
            DensityKind::Ggd { beta } => Self::ggd(beta),
            DensityKind::Logistic => Ok(Self::logistic()),
            DensityKind::HyperbolicSecant => Ok(Self::hyperbolic_secant()),
            DensityKind::Sin2Custom => Ok(Self::sin2_custom()),
        }
    }

    /// Unit-variance generalized Gaussian, `alpha = sqrt(Gamma(1/beta) / Gamma(3/beta))`.
    pub fn ggd(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Domain(format!("GGD shape must be positive and finite, got {beta}")));
        }
        let alpha = (0.5 * (ln_gamma(1.0 / beta) - ln_gamma(3.0 / beta))).exp();
        let ln_gamma_inv = ln_gamma(1.0 / beta);
        let ln_norm = beta.ln() - LN_2 - alpha.ln() - ln_gamma_inv;
        let magnitude = Gamma::new(1.0 / beta, 1.0)
            .map_err(|e| Error::Domain(format!("GGD magnitude sampler: {e}")))?;
        Ok(Self {
            kind: DensityKind::Ggd { beta },
            family: Family::Ggd {
                beta,
                alpha,
                ln_norm,
                magnitude,
            },
            f0: ln_norm.exp(),
            normalizer: (-ln_norm).exp(),
        })
    }

    /// Logistic with scale `sqrt(3)/pi`.
    pub fn logistic() -> Self {
        Self {
            kind: DensityKind::Logistic,
            family: Family::Logistic,
            f0: 0.25 / LOGISTIC_SCALE,
            normalizer: LOGISTIC_SCALE,
        }
    }

    /// `f(x) = sech(pi x / 2) / 2`.
    pub fn hyperbolic_secant() -> Self {
        Self {
            kind: DensityKind::HyperbolicSecant,
            family: Family::HyperbolicSecant,
            f0: 0.5,
            normalizer: 2.0,
        }
    }

    pub fn sin2_custom() -> Self {
        let table = Sin2Table::build();
        Self {
            kind: DensityKind::Sin2Custom,
            f0: (-sin2::OFFSET - table.ln_z).exp(),
            normalizer: table.z,
            family: Family::Sin2(Arc::new(table)),
        }
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    /// Density at the origin, which is also its maximum.
    pub fn f0(&self) -> f64 {
        self.f0
    }

    /// Normalizing constant `Z` of the family kernel (`Z_std` for sin2).
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.family {
            Family::Ggd {
                beta, alpha, ln_norm, ..
            } => (ln_norm - (x.abs() / alpha).powf(*beta)).exp(),
            Family::Logistic => {
                let e = (-x.abs() / LOGISTIC_SCALE).exp();
                e / (LOGISTIC_SCALE * (1.0 + e) * (1.0 + e))
            }
            Family::HyperbolicSecant => 0.5 / (FRAC_PI_2 * x).cosh(),
            Family::Sin2(t) => t.pdf(x),
        }
    }

    /// `phi(x) = -ln pdf(x)`, evaluated analytically.
    pub fn phi(&self, x: f64) -> f64 {
        match &self.family {
            Family::Ggd {
                beta, alpha, ln_norm, ..
            } => (x.abs() / alpha).powf(*beta) - ln_norm,
            Family::Logistic => {
                let z = x.abs() / LOGISTIC_SCALE;
                z + 2.0 * (-z).exp().ln_1p() + LOGISTIC_SCALE.ln()
            }
            Family::HyperbolicSecant => {
                let y = FRAC_PI_2 * x.abs();
                y + (-2.0 * y).exp().ln_1p()
            }
            Family::Sin2(t) => sin2_psi(x) + t.ln_z,
        }
    }

    pub fn phi_prime(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Ggd { beta, alpha, .. } => x.signum() * (beta / alpha) * (x.abs() / alpha).powf(beta - 1.0),
            Family::Logistic => (x / (2.0 * LOGISTIC_SCALE)).tanh() / LOGISTIC_SCALE,
            Family::HyperbolicSecant => FRAC_PI_2 * (FRAC_PI_2 * x).tanh(),
            Family::Sin2(_) => sin2_psi_prime(x),
        }
    }

    /// Second derivative of `phi`; infinite at the origin for GGD `beta < 2` and sin2.
    pub fn phi_second(&self, x: f64) -> f64 {
        match &self.family {
            Family::Ggd { beta, alpha, .. } => {
                (beta * (beta - 1.0) / (alpha * alpha)) * (x.abs() / alpha).powf(beta - 2.0)
            }
            Family::Logistic => {
                let t = (x / (2.0 * LOGISTIC_SCALE)).tanh();
                (1.0 - t * t) / (2.0 * LOGISTIC_SCALE * LOGISTIC_SCALE)
            }
            Family::HyperbolicSecant => {
                let t = (FRAC_PI_2 * x).tanh();
                FRAC_PI_2 * FRAC_PI_2 * (1.0 - t * t)
            }
            Family::Sin2(_) => sin2_psi_second(x),
        }
    }

    /// Upper tail `P(X > a)` for `a >= 0`.
    fn tail(&self, a: f64) -> f64 {
        debug_assert!(a >= 0.0);
        if a == 0.0 {
            return 0.5;
        }
        match &self.family {
            Family::Ggd { beta, alpha, .. } => 0.5 * gamma_ur(1.0 / beta, (a / alpha).powf(*beta)),
            Family::Logistic => 1.0 / (1.0 + (a / LOGISTIC_SCALE).exp()),
            Family::HyperbolicSecant => (2.0 / PI) * (-FRAC_PI_2 * a).exp().atan(),
            Family::Sin2(t) => t.tail(a),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.tail(-x)
        } else if x == 0.0 {
            0.5
        } else {
            1.0 - self.tail(x)
        }
    }

    /// Solves `tail(a) = q` for `0 < q < 1/2`, returning `a > 0`.
    fn inverse_tail(&self, q: f64) -> f64 {
        match &self.family {
            Family::Ggd { alpha, .. } => {
                let mut hi = *alpha;
                while self.tail(hi) > q && hi < 1e6 {
                    hi *= 2.0;
                }
                newton_bisect_increasing(|a| (q - self.tail(a), self.pdf(a)), 0.0, hi, 0.5 * hi, 1e-15)
            }
            Family::Logistic => LOGISTIC_SCALE * ((1.0 - q) / q).ln(),
            Family::HyperbolicSecant => -(2.0 / PI) * (FRAC_PI_2 * q).tan().ln(),
            Family::Sin2(t) => t.inverse_tail(q),
        }
    }

    /// Inverse CDF. Errors unless `0 < p < 1`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {p}")));
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        if p == 0.5 {
            0.0
        } else if p < 0.5 {
            -self.inverse_tail(p)
        } else {
            // 1 - p is exact for p >= 1/2.
            self.inverse_tail(1.0 - p)
        }
    }

    /// One draw from the base density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::Ggd {
                beta,
                alpha,
                magnitude,
                ..
            } => {
                let g: f64 = magnitude.sample(rng);
                let m = alpha * g.powf(1.0 / beta);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
            Family::Sin2(t) => t.sample(rng),
            _ => {
                let u: f64 = rng.sample(Open01);
                self.quantile_unchecked(u)
            }
        }
    }

    /// Second moment by adaptive quadrature; 1 up to the family's stated precision.
    pub fn variance(&self) -> Result<f64> {
        let tol = Tolerance::new(1e-13, 1e-12);
        let mut total = 0.0;
        // Split at 1 to isolate the cusp of phi'' at the origin.
        total += integrate(|x| x * x * self.pdf(x), 0.0, 1.0, tol)?.value;
        total += integrate_to_infinity(|x| x * x * self.pdf(x), 1.0, tol)?.value;
        Ok(2.0 * total)
    }
}

/// `f_{X,mu,sigma}(x) = f_X((x - mu) / sigma) / sigma`.
#[derive(Debug, Clone)]
pub struct ScaleLocationModel {
    pub base: BaseDensity,
    mu: f64,
    sigma: f64,
}

impl ScaleLocationModel {
    pub fn new(base: BaseDensity, mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive and finite, got {sigma}")));
        }
        if !mu.is_finite() {
            return Err(Error::Domain(format!("mu must be finite, got {mu}")));
        }
        Ok(Self { base, mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.base.pdf(self.standardize(x)) / self.sigma
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.base.cdf(self.standardize(x))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.mu + self.sigma * self.base.quantile(p)?)
    }

    /// Largest density value, attained at `mu`.
    pub fn max_pdf(&self) -> f64 {
        self.base.f0() / self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.mu + self.sigma * self.base.sample(rng)
    }

    /// Fills `out` with independent draws.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.sample(rng);
        }
    }
}
