//! Log-densities and samplers for the likelihood and prior families.
//!
//! Every log-density has a validating public entry point. The model's hot
//! path uses the `*_ln` variants, which take the rate on the log scale and
//! never fail: an overflowing rate simply yields `-inf`.

use rand::Rng;
use rand_distr::{Bernoulli, Cauchy, Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_2_OVER_PI: f64 = -0.451_582_705_289_454_9;

/// Expected fault count per session; strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Rate(f64);

impl Rate {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Rate(value))
        } else {
            Err(Error::domain(format!("rate must be positive and finite, got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::domain(format!("probability must lie in [0, 1], got {value}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Natural log of the gamma function (Lanczos, g = 7, nine terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * LN_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln(k!)`
pub fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        0.0
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let lo = a.min(b);
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if hi == f64::INFINITY {
        return f64::INFINITY;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// `ln((1/n) Σ e^{x_i})`
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

pub fn poisson_logpmf(k: u64, lambda: Rate) -> f64 {
    poisson_logpmf_ln(k, lambda.0.ln(), ln_factorial(k))
}

/// Poisson log-pmf with the rate given as `ln λ` and `ln k!` precomputed.
#[inline]
pub fn poisson_logpmf_ln(k: u64, ln_lambda: f64, ln_k_fact: f64) -> f64 {
    let lambda = ln_lambda.exp();
    if k == 0 {
        return -lambda;
    }
    k as f64 * ln_lambda - lambda - ln_k_fact
}

pub fn zip_logpmf(k: u64, lambda: Rate, p: Probability) -> f64 {
    let p = p.0;
    zip_logpmf_ln(k, lambda.0.ln(), p.ln(), (-p).ln_1p(), ln_factorial(k))
}

/// Zero-inflated Poisson log-pmf from log-scale components.
///
/// `ln_p` and `ln_1m_p` are `ln p` and `ln(1 - p)`; passing them separately
/// keeps both accurate when `p` is close to 0 or 1.
#[inline]
pub fn zip_logpmf_ln(k: u64, ln_lambda: f64, ln_p: f64, ln_1m_p: f64, ln_k_fact: f64) -> f64 {
    if k == 0 {
        log_sum_exp2(ln_p, ln_1m_p - ln_lambda.exp())
    } else if ln_1m_p == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        ln_1m_p + poisson_logpmf_ln(k, ln_lambda, ln_k_fact)
    }
}

pub fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("normal sd must be positive, got {sigma}")));
    }
    Ok(normal_lpdf(x, mu, sigma))
}

#[inline]
pub(crate) fn normal_lpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -sigma.ln() - 0.5 * LN_2PI - 0.5 * z * z
}

pub fn half_cauchy_logpdf(x: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::domain(format!("half-Cauchy scale must be positive, got {scale}")));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!("half-Cauchy support is x >= 0, got {x}")));
    }
    Ok(half_cauchy_lpdf(x, scale))
}

#[inline]
pub(crate) fn half_cauchy_lpdf(x: f64, scale: f64) -> f64 {
    let r = x / scale;
    LN_2_OVER_PI - scale.ln() - (r * r).ln_1p()
}

pub fn inv_logit(x: f64) -> Probability {
    Probability(inv_logit_raw(x))
}

#[inline]
pub(crate) fn inv_logit_raw(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: Probability) -> Result<f64> {
    let p = p.0;
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::domain(format!("logit is undefined at p = {p}")));
    }
    Ok((p / (1.0 - p)).ln())
}

/// `ln(1 + e^x)`, stable in both tails.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// A distribution family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Poisson { lambda: f64 },
    ZeroInflatedPoisson { lambda: f64, p: f64 },
    Normal { mu: f64, sigma: f64 },
    HalfCauchy { scale: f64 },
    Bernoulli { p: f64 },
    Uniform { low: f64, high: f64 },
}

impl Family {
    /// Draws one value. Counts and indicators are returned as whole-valued floats.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Family::Poisson { lambda } => {
                let lambda = Rate::new(lambda)?;
                Ok(draw_poisson(lambda.0, rng))
            }
            Family::ZeroInflatedPoisson { lambda, p } => {
                let lambda = Rate::new(lambda)?;
                let p = Probability::new(p)?;
                Ok(draw_zip(lambda.0, p.0, rng) as f64)
            }
            Family::Normal { mu, sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
                    return Err(Error::domain(format!("invalid normal({mu}, {sigma})")));
                }
                let d = Normal::new(mu, sigma).map_err(|e| Error::domain(e.to_string()))?;
                Ok(d.sample(rng))
            }
            Family::HalfCauchy { scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::domain(format!("invalid half-Cauchy scale {scale}")));
                }
                let d = Cauchy::new(0.0, scale).map_err(|e| Error::domain(e.to_string()))?;
                Ok(d.sample(rng).abs())
            }
            Family::Bernoulli { p } => {
                let p = Probability::new(p)?;
                let d = Bernoulli::new(p.0).map_err(|e| Error::domain(e.to_string()))?;
                Ok(if d.sample(rng) { 1.0 } else { 0.0 })
            }
            Family::Uniform { low, high } => {
                if !(low < high) || !low.is_finite() || !high.is_finite() {
                    return Err(Error::domain(format!("invalid uniform[{low}, {high})")));
                }
                let d = Uniform::new(low, high).map_err(|e| Error::domain(e.to_string()))?;
                Ok(d.sample(rng))
            }
        }
    }

    /// Analytic mean, where finite.
    pub fn mean(&self) -> Option<f64> {
        match *self {
            Family::Poisson { lambda } => Some(lambda),
            Family::ZeroInflatedPoisson { lambda, p } => Some((1.0 - p) * lambda),
            Family::Normal { mu, .. } => Some(mu),
            Family::HalfCauchy { .. } => None,
            Family::Bernoulli { p } => Some(p),
            Family::Uniform { low, high } => Some(0.5 * (low + high)),
        }
    }
}

/// Poisson draw for an already validated rate.
pub(crate) fn draw_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    // Poisson::new only fails for non-positive or absurdly large rates.
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng),
        Err(_) => lambda.round(),
    }
}

pub(crate) fn draw_zip<R: Rng + ?Sized>(lambda: f64, p: f64, rng: &mut R) -> u64 {
    let structural_zero = rng.random::<f64>() < p;
    if structural_zero {
        0
    } else {
        draw_poisson(lambda, rng) as u64
    }
}
