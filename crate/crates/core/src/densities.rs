//! Log-density kernels and their derivatives.
//!
//! Every kernel is exact except [`log_horseshoe_approx`], which blends the two
//! closed-form bounds on the horseshoe density (the exact density involves the
//! exponential integral and is not provided). The `delta` field of
//! [`ScaledDensityParams`] is the grid variance factor of an increment.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Global scale and grid variance factor shared by the increment densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledDensityParams {
    pub gamma: f64,
    pub delta: f64,
}

impl ScaledDensityParams {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        positive("gamma", gamma)?;
        positive("delta", delta)?;
        Ok(Self { gamma, delta })
    }

    /// `delta * gamma^2`, the variance scale of the conditional normal.
    fn spread(&self) -> f64 {
        self.delta * self.gamma * self.gamma
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {v}")))
    }
}

pub fn log_normal(u: f64, mean: f64, sd: f64) -> Result<f64> {
    finite("u", u)?;
    finite("mean", mean)?;
    positive("sd", sd)?;
    let z = (u - mean) / sd;
    Ok(-0.5 * LN_2PI - sd.ln() - 0.5 * z * z)
}

pub fn d_log_normal(u: f64, mean: f64, sd: f64) -> Result<f64> {
    log_normal(u, mean, sd)?;
    Ok(-(u - mean) / (sd * sd))
}

pub fn log_half_cauchy(x: f64, scale: f64) -> Result<f64> {
    positive("x", x)?;
    positive("scale", scale)?;
    let r = x / scale;
    Ok(LN_2 - PI.ln() - scale.ln() - r.mul_add(r, 1.0).ln())
}

pub fn d_log_half_cauchy(x: f64, scale: f64) -> Result<f64> {
    log_half_cauchy(x, scale)?;
    Ok(-2.0 * x / (scale * scale + x * x))
}

pub fn half_cauchy_cdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 / PI * (x / scale).atan()
    }
}

/// Marginal of `u | tau ~ N(0, delta tau^2)` with `tau^2 ~ Exp(1 / (2 gamma^2))`:
/// a Laplace density with scale `sqrt(delta) gamma` and variance `2 delta gamma^2`.
pub fn log_laplace_marginal(u: f64, p: ScaledDensityParams) -> Result<f64> {
    finite("u", u)?;
    let b = p.spread().sqrt();
    Ok(-LN_2 - b.ln() - u.abs() / b)
}

pub fn d_log_laplace_marginal(u: f64, p: ScaledDensityParams) -> Result<f64> {
    log_laplace_marginal(u, p)?;
    Ok(-u.signum() / p.spread().sqrt())
}

/// Blend weight on the lower bound that makes the approximation integrate to one.
pub fn horseshoe_blend_weight() -> f64 {
    (PI.sqrt() - 2.0) / (2f64.sqrt() - 2.0)
}

fn horseshoe_prefactor(p: ScaledDensityParams) -> f64 {
    (2.0 * PI.powi(3) * p.spread()).sqrt().recip()
}

/// Lower and upper bounds `(B1(u), B2(u))` on the horseshoe marginal density.
///
/// `B1 = C/2 ln(1 + 4 a / u^2)` and `B2 = C ln(1 + 2 a / u^2)` with
/// `a = delta gamma^2`, `C = (2 pi^3 a)^(-1/2)`.
pub fn horseshoe_bounds(u: f64, p: ScaledDensityParams) -> Result<(f64, f64)> {
    nonzero_u(u)?;
    let a = p.spread();
    let c = horseshoe_prefactor(p);
    let u2 = u * u;
    Ok((0.5 * c * (4.0 * a / u2).ln_1p(), c * (2.0 * a / u2).ln_1p()))
}

fn nonzero_u(u: f64) -> Result<()> {
    finite("u", u)?;
    if u == 0.0 {
        return Err(Error::invalid("the horseshoe density is unbounded at u = 0"));
    }
    Ok(())
}

/// Closed-form approximation `w B1(u) + (1 - w) B2(u)` to the horseshoe density.
pub fn log_horseshoe_approx(u: f64, p: ScaledDensityParams) -> Result<f64> {
    nonzero_u(u)?;
    let w = horseshoe_blend_weight();
    let a = p.spread();
    let u2 = u * u;
    let blend = 0.5 * w * (4.0 * a / u2).ln_1p() + (1.0 - w) * (2.0 * a / u2).ln_1p();
    Ok(horseshoe_prefactor(p).ln() + blend.ln())
}

pub fn d_log_horseshoe_approx(u: f64, p: ScaledDensityParams) -> Result<f64> {
    nonzero_u(u)?;
    let w = horseshoe_blend_weight();
    let a = p.spread();
    let u2 = u * u;
    let blend = 0.5 * w * (4.0 * a / u2).ln_1p() + (1.0 - w) * (2.0 * a / u2).ln_1p();
    // d/du ln(1 + c/u^2) = -2c / (u (u^2 + c))
    let d_blend = 0.5 * w * (-8.0 * a / (u * (u2 + 4.0 * a)))
        + (1.0 - w) * (-4.0 * a / (u * (u2 + 2.0 * a)));
    Ok(d_blend / blend)
}

pub fn log_exponential(x: f64, rate: f64) -> Result<f64> {
    positive("x", x)?;
    positive("rate", rate)?;
    Ok(rate.ln() - rate * x)
}

pub fn d_log_exponential(x: f64, rate: f64) -> Result<f64> {
    log_exponential(x, rate)?;
    Ok(-rate)
}

pub fn log_inv_gamma(x: f64, shape: f64, scale: f64) -> Result<f64> {
    positive("x", x)?;
    positive("shape", shape)?;
    positive("scale", scale)?;
    Ok(shape * scale.ln() - libm::lgamma(shape) - (shape + 1.0) * x.ln() - scale / x)
}

pub fn d_log_inv_gamma(x: f64, shape: f64, scale: f64) -> Result<f64> {
    log_inv_gamma(x, shape, scale)?;
    Ok(-(shape + 1.0) / x + scale / (x * x))
}
