//! Exponentially-modified Gaussian (EMG) distribution.
//!
//! The EMG is the convolution of a Gaussian `N(mu, sigma^2)` with a one-sided
//! exponential of scale `tau`, with the exponential tail pointing toward
//! later times. It is the shape of a single photon-number peak in an
//! arrival-time histogram.
//!
//! Evaluation switches to the scaled complementary error function once the
//! `erfc` argument exceeds [`ERFCX_CROSSOVER`], so densities stay finite for
//! `sigma / tau` ratios far beyond what the textbook formula tolerates.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::{LN_2, PI, SQRT_2};

use crate::error::{Error, Result};

/// `2 sqrt(2 ln 2)`: ratio of a Gaussian's FWHM to its standard deviation.
pub const GAUSSIAN_FWHM_FACTOR: f64 = 2.354_820_045_030_949_3;

/// Above this `erfc` argument the density is evaluated through `erfcx`.
pub const ERFCX_CROSSOVER: f64 = 6.0;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Scaled complementary error function `exp(x^2) erfc(x)`.
///
/// Below the crossover it is formed directly; above it the Laplace continued
/// fraction is summed bottom-up, which converges quickly for `x >= 6`.
pub fn erfcx(x: f64) -> f64 {
    if x < ERFCX_CROSSOVER {
        return (x * x).exp() * erfc(x);
    }
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + (k as f64 * 0.5) / tail;
    }
    1.0 / (tail * PI.sqrt())
}

/// Standard normal CDF.
pub fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / SQRT_2)
}

/// Parameters of one EMG component, in picoseconds.
///
/// `sigma` and `tau` are non-negative. Both may be zero, which describes a
/// point mass at `mu`: it can be sampled and has a step CDF, but it has no
/// density or FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgParams {
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwhmResult {
    pub mode: f64,
    pub peak_height: f64,
    pub left_half: f64,
    pub right_half: f64,
    pub fwhm: f64,
}

impl EmgParams {
    pub fn new(mu: f64, sigma: f64, tau: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain("mu must be finite"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::domain("sigma must be ≥ 0"));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::domain("tau must be ≥ 0"));
        }
        Ok(Self { mu, sigma, tau })
    }

    pub fn is_point_mass(&self) -> bool {
        self.sigma == 0.0 && self.tau == 0.0
    }

    /// Total width `sqrt(sigma^2 + tau^2)`, the standard deviation of the EMG.
    pub fn sigma_tot(&self) -> f64 {
        self.sigma.hypot(self.tau)
    }

    pub fn mean(&self) -> f64 {
        self.mu + self.tau
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma + self.tau * self.tau
    }

    pub fn shifted(&self, dt: f64) -> Self {
        Self { mu: self.mu + dt, ..*self }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { mu: self.mu * c, sigma: self.sigma * c, tau: self.tau * c }
    }

    /// Probability density at `t`.
    ///
    /// A point mass has zero density away from `mu` and infinite density at it.
    pub fn pdf(&self, t: f64) -> f64 {
        let Self { mu, sigma, tau } = *self;
        if tau == 0.0 {
            if sigma == 0.0 {
                return if t == mu { f64::INFINITY } else { 0.0 };
            }
            let u = (t - mu) / sigma;
            return FRAC_1_SQRT_2PI / sigma * (-0.5 * u * u).exp();
        }
        if sigma == 0.0 {
            return if t < mu { 0.0 } else { (-(t - mu) / tau).exp() / tau };
        }
        let u = (t - mu) / sigma;
        let r = sigma / tau;
        let z = (r - u) / SQRT_2;
        if z > ERFCX_CROSSOVER {
            0.5 / tau * (-0.5 * u * u).exp() * erfcx(z)
        } else {
            0.5 / tau * (r * (0.5 * r - u)).exp() * erfc(z)
        }
    }

    /// The exponential-tail correction shared by `cdf` and `sf`:
    /// `exp(r^2/2 - u r) Phi(u - r)`.
    fn tail_term(&self, t: f64) -> f64 {
        let u = (t - self.mu) / self.sigma;
        let r = self.sigma / self.tau;
        let z = (r - u) / SQRT_2;
        if z > ERFCX_CROSSOVER {
            0.5 * (-0.5 * u * u).exp() * erfcx(z)
        } else {
            0.5 * (r * (0.5 * r - u)).exp() * erfc(z)
        }
    }

    /// `P(X <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let Self { mu, sigma, tau } = *self;
        if tau == 0.0 {
            if sigma == 0.0 {
                return if t >= mu { 1.0 } else { 0.0 };
            }
            return std_normal_cdf((t - mu) / sigma);
        }
        if sigma == 0.0 {
            return if t < mu { 0.0 } else { -(-(t - mu) / tau).exp_m1() };
        }
        let u = (t - mu) / sigma;
        (std_normal_cdf(u) - self.tail_term(t)).clamp(0.0, 1.0)
    }

    /// `P(X > t)`, accurate in the upper tail.
    pub fn sf(&self, t: f64) -> f64 {
        let Self { mu, sigma, tau } = *self;
        if tau == 0.0 {
            if sigma == 0.0 {
                return if t >= mu { 0.0 } else { 1.0 };
            }
            return std_normal_cdf(-(t - mu) / sigma);
        }
        if sigma == 0.0 {
            return if t < mu { 1.0 } else { (-(t - mu) / tau).exp() };
        }
        let u = (t - mu) / sigma;
        (std_normal_cdf(-u) + self.tail_term(t)).clamp(0.0, 1.0)
    }

    /// `P(X < t)`. Differs from [`cdf`](Self::cdf) only for a point mass.
    pub fn prob_below(&self, t: f64) -> f64 {
        if self.is_point_mass() {
            return if t > self.mu { 1.0 } else { 0.0 };
        }
        self.cdf(t)
    }

    /// Probability mass in `[lo, hi)`, taken from whichever tail keeps the
    /// difference well conditioned.
    pub fn interval_prob(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let p_lo = self.cdf(lo);
        if p_lo < 0.5 {
            (self.cdf(hi) - p_lo).max(0.0)
        } else {
            (self.sf(lo) - self.sf(hi)).max(0.0)
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(Exp1);
        self.mu + self.sigma * g + self.tau * e
    }

    /// Draws `count` samples as Gaussian plus exponential delay.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    /// Search interval for the mode and the half-maximum crossings.
    pub fn bracket(&self) -> (f64, f64) {
        (
            self.mu - 6.0 * self.sigma,
            self.mu + 6.0 * self.sigma + 10.0 * self.tau,
        )
    }

    /// Location and height of the density maximum.
    pub fn mode(&self) -> Result<(f64, f64)> {
        if self.is_point_mass() {
            return Err(Error::domain("sigma and tau must not both be zero"));
        }
        if self.sigma == 0.0 {
            return Ok((self.mu, 1.0 / self.tau));
        }
        let (lo, hi) = self.bracket();
        let mode = golden_max(|t| self.pdf(t), lo, hi, 1e-13 * (self.sigma + self.tau));
        let height = self.pdf(mode);
        if !(height > self.pdf(lo) && height > self.pdf(hi)) || !height.is_finite() {
            return Err(Error::NumericalFailure { what: "EMG mode search", lo, hi });
        }
        Ok((mode, height))
    }

    /// Full width at half maximum, with the mode and both half-height points.
    pub fn fwhm(&self) -> Result<FwhmResult> {
        let (mode, peak_height) = self.mode()?;
        if self.sigma == 0.0 {
            // Pure exponential: the density jumps to its maximum at mu.
            let right_half = self.mu + self.tau * LN_2;
            return Ok(FwhmResult {
                mode,
                peak_height,
                left_half: self.mu,
                right_half,
                fwhm: right_half - self.mu,
            });
        }
        let half = 0.5 * peak_height;
        let (lo, hi) = self.bracket();
        if !(self.pdf(lo) < half && self.pdf(hi) < half) {
            return Err(Error::NumericalFailure { what: "EMG half-maximum bracket", lo, hi });
        }
        let tol = 1e-9_f64.min(1e-12 * (self.sigma + self.tau));
        let f = |t: f64| self.pdf(t) - half;
        let left_half = bisect(f, lo, mode, tol);
        let right_half = bisect(f, mode, hi, tol);
        Ok(FwhmResult {
            mode,
            peak_height,
            left_half,
            right_half,
            fwhm: right_half - left_half,
        })
    }
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..400 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Bisection for a sign change of `f` on `[a, b]`. The endpoints must have
/// opposite signs (zero counts as either).
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if b - a <= tol || m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
