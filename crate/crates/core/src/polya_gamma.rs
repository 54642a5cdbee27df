//! Exact sampling from the Pólya-Gamma distribution `PG(b, c)` for integer `b`.
//!
//! `PG(1, c)` is drawn with the alternating-series rejection sampler of
//! Devroye as adapted by Polson, Scott and Windle: propose from a mixture of a
//! truncated exponential (right of `t = 0.64`) and a truncated inverse Gaussian
//! (left of `t`), then accept or reject by bracketing the target density
//! between successive partial sums of its series representation. `PG(b, c)` is
//! the sum of `b` independent `PG(1, c)` draws.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};

/// Truncation point between the two proposal pieces.
const TRUNC: f64 = 0.64;

/// Parameters of `PG(b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    pub b: u32,
    pub c: f64,
}

impl PgParams {
    pub fn new(b: u32, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidInput(format!("PG tilt must be finite, got {c}")));
        }
        Ok(Self { b, c })
    }
}

/// How `PG(b, c)` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgMethod {
    /// Sum of `b` exact `PG(1, c)` draws.
    #[default]
    Exact,
    /// Exact below the threshold; a moment-matched Gaussian (clamped at 0)
    /// for `b` strictly above it.
    GaussianAbove(u32),
}

/// `E[PG(b, c)] = b / (2c) * tanh(c / 2)`, `b / 4` at `c = 0`.
pub fn pg_mean(params: PgParams) -> f64 {
    let b = params.b as f64;
    let c = params.c.abs();
    if c < 1e-4 {
        // tanh(x)/x = 1 - x^2/3 + 2x^4/15 with x = c/2
        let x2 = c * c / 4.0;
        b / 4.0 * (1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0)
    } else {
        b / (2.0 * c) * (c / 2.0).tanh()
    }
}

/// `Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2))`, `b / 24` at `c = 0`.
pub fn pg_variance(params: PgParams) -> f64 {
    let b = params.b as f64;
    let c = params.c.abs();
    if c < 1e-3 {
        // (sinh c - c)/c^3 = 1/6 + c^2/120 + c^4/5040
        let c2 = c * c;
        let ratio = 1.0 / 6.0 + c2 / 120.0 + c2 * c2 / 5040.0;
        b * ratio / (4.0 * (c / 2.0).cosh().powi(2))
    } else if c > 700.0 {
        // sinh and cosh overflow; the ratio has converged to b / (2 c^3)
        b / (2.0 * c.powi(3))
    } else {
        b * (c.sinh() - c) / (4.0 * c.powi(3) * (c / 2.0).cosh().powi(2))
    }
}

/// One draw from `PG(b, c)` using the exact sampler.
pub fn pg_draw<R: Rng + ?Sized>(params: PgParams, rng: &mut R) -> f64 {
    pg_draw_with(params, PgMethod::Exact, rng)
}

/// One draw from `PG(b, c)` using the given method.
pub fn pg_draw_with<R: Rng + ?Sized>(params: PgParams, method: PgMethod, rng: &mut R) -> f64 {
    if params.b == 0 {
        return 0.0;
    }
    if let PgMethod::GaussianAbove(threshold) = method {
        if params.b > threshold {
            let z: f64 = StandardNormal.sample(rng);
            return (pg_mean(params) + z * pg_variance(params).sqrt()).max(0.0);
        }
    }
    let unit = PolyaGammaOne::new(params.c);
    (0..params.b).map(|_| unit.sample(rng)).sum()
}

/// Exact sampler for `PG(1, c)` with the per-`c` constants precomputed, so
/// repeated draws at the same tilt skip the setup cost.
#[derive(Debug, Clone, Copy)]
pub struct PolyaGammaOne {
    /// `|c| / 2`, the tilt of the underlying `J*(1, z)` variable.
    z: f64,
    /// `pi^2 / 8 + z^2 / 2`, the rate of the right-hand exponential proposal.
    rate: f64,
    /// Probability of proposing from the right-hand piece.
    right_mass: f64,
}

impl PolyaGammaOne {
    pub fn new(c: f64) -> Self {
        let z = 0.5 * c.abs();
        let rate = 0.125 * PI * PI + 0.5 * z * z;
        Self {
            z,
            rate,
            right_mass: right_mass(z, rate),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = if rng.random::<f64>() < self.right_mass {
                let e: f64 = Exp1.sample(rng);
                TRUNC + e / self.rate
            } else {
                truncated_inverse_gaussian(self.z, rng)
            };
            let mut s = series_coef(0, x);
            let y = rng.random::<f64>() * s;
            let mut n = 0u32;
            loop {
                n += 1;
                if n % 2 == 1 {
                    s -= series_coef(n, x);
                    if y <= s {
                        return 0.25 * x;
                    }
                } else {
                    s += series_coef(n, x);
                    if y > s {
                        break;
                    }
                }
            }
        }
    }
}

/// Mixture weight `p / (p + q)` of the truncated exponential proposal.
fn right_mass(z: f64, rate: f64) -> f64 {
    let root = (1.0 / TRUNC).sqrt();
    let b = root * (TRUNC * z - 1.0);
    let a = -root * (TRUNC * z + 1.0);
    let x0 = rate.ln() + rate * TRUNC;
    let xb = x0 - z + log_normal_cdf(b);
    let xa = x0 + z + log_normal_cdf(a);
    let q_over_p = 2.0 * FRAC_2_PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Coefficient `a_n(x)` of the alternating series for the `J*(1, 0)` density,
/// piecewise around the truncation point.
fn series_coef(n: u32, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        let log_a = -1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x;
        log_a.exp()
    } else {
        0.0
    }
}

/// Inverse Gaussian `IG(mu = 1/z, shape = 1)` truncated to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > TRUNC {
        // Propose from the truncated z = 0 law (a scaled inverse chi-square),
        // accept with probability exp(-z^2 x / 2).
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    let d = 1.0 + TRUNC * e1;
                    break TRUNC / (d * d);
                }
            };
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        // Michael-Schucany-Haas draw, repeated until it lands below TRUNC.
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let my = mu * y;
            let mut x = mu + 0.5 * mu * my - 0.5 * mu * (4.0 * my + my * my).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < TRUNC {
                return x;
            }
        }
    }
}

/// `ln Phi(x)` for the standard normal CDF, accurate far into the left tail.
pub(crate) fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}
