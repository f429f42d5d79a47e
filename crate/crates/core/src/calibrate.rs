//! Calibration of the half-Cauchy scale `zeta` on the global smoothing
//! parameter.
//!
//! For a proper order-k random field with `Var(theta[1]) = omega^2` and unit
//! increment variance, `sigma_ref` is the geometric mean of the marginal
//! standard deviations of `theta`. Requiring `P(gamma sigma_ref > U) = alpha`
//! under `gamma ~ C+(0, zeta)` gives
//! `zeta = U / (sigma_ref tan(pi/2 (1 - alpha)))`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DiffOrder;
use crate::model::{mean_sd, transform_to_theta_scale, ObservationModel};

/// Default tail probability for the upper bound on the marginal sd.
pub const DEFAULT_ALPHA: f64 = 0.05;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_size(k: DiffOrder, n: usize) -> Result<()> {
    if n < k.get() + 2 {
        return Err(Error::invalid(format!(
            "an order-{k} precision matrix needs n >= {}, got {n}",
            k.get() + 2
        )));
    }
    Ok(())
}

/// Precision matrix of `theta` on a unit grid.
///
/// `theta[1] ~ N(mu, omega2)`, the initial first difference (order 2) and all
/// order-k differences are `N(0, gamma^2)`. Order 1 gives the tridiagonal
/// `Q1 = [gamma^2/omega2 + 1, -1; -1, 2, -1; ...; -1, 1] / gamma^2`, order 2 the
/// pentadiagonal `Q2` with leading row `[gamma^2/omega2 + 2, -3, 1]`.
pub fn precision_matrix(k: DiffOrder, n: usize, omega2: f64, gamma: f64) -> Result<DMatrix<f64>> {
    check_size(k, n)?;
    check_positive("omega2", omega2)?;
    check_positive("gamma", gamma)?;
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut add_row = |coef: &[(usize, f64)]| {
        for &(i, a) in coef {
            for &(j, b) in coef {
                q[(i, j)] += a * b;
            }
        }
    };
    if k == DiffOrder::Second {
        add_row(&[(0, -1.0), (1, 1.0)]);
    }
    for j in 0..n - k.get() {
        match k {
            DiffOrder::First => add_row(&[(j, -1.0), (j + 1, 1.0)]),
            DiffOrder::Second => add_row(&[(j, 1.0), (j + 1, -2.0), (j + 2, 1.0)]),
        }
    }
    q /= gamma * gamma;
    q[(0, 0)] += 1.0 / omega2;
    Ok(q)
}

/// Closed-form covariance `Q^-1`.
///
/// Writing `theta[i] = theta[1] + gamma sum_{l<i} c(i, l) w[l]` with iid
/// standard normal `w`, `c = 1` for order 1 and `c = i - l` for order 2, gives
/// `Sigma[i][j] = omega2 + gamma^2 sum_{l < min(i, j)} c(i, l) c(j, l)`.
pub fn covariance_matrix(k: DiffOrder, n: usize, omega2: f64, gamma: f64) -> Result<DMatrix<f64>> {
    check_size(k, n)?;
    check_positive("omega2", omega2)?;
    check_positive("gamma", gamma)?;
    let g2 = gamma * gamma;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        // 1-based indices i + 1, j + 1; lags l = 1..min(i, j).
        let (a, b) = (i + 1, j + 1);
        let s: f64 = match k {
            DiffOrder::First => (a.min(b) - 1) as f64,
            DiffOrder::Second => (1..a.min(b)).map(|l| ((a - l) * (b - l)) as f64).sum(),
        };
        omega2 + g2 * s
    }))
}

/// Diagonal of the covariance: `omega2 + (i - 1) gamma^2` (order 1) or
/// `omega2 + i (i - 1)(2i - 1)/6 gamma^2` (order 2), for `i = 1..=n`.
pub fn marginal_variances(k: DiffOrder, n: usize, omega2: f64, gamma: f64) -> Vec<f64> {
    let g2 = gamma * gamma;
    (1..=n)
        .map(|i| {
            let i = i as f64;
            let c = match k {
                DiffOrder::First => i - 1.0,
                DiffOrder::Second => i * (i - 1.0) * (2.0 * i - 1.0) / 6.0,
            };
            omega2 + c * g2
        })
        .collect()
}

/// Geometric mean of the marginal standard deviations at `gamma = 1`.
pub fn marginal_sd_ref(k: DiffOrder, n: usize, omega2: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sigma_ref needs at least one grid point"));
    }
    check_positive("omega2", omega2)?;
    let v = marginal_variances(k, n, omega2, 1.0);
    Ok((v.iter().map(|s| 0.5 * s.ln()).sum::<f64>() / n as f64).exp())
}

/// `U / (sigma_ref tan(pi/2 (1 - alpha)))`.
pub fn zeta(upper: f64, sigma_ref: f64, alpha: f64) -> Result<f64> {
    check_positive("U", upper)?;
    check_positive("sigma_ref", sigma_ref)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(upper / (sigma_ref * (FRAC_PI_2 * (1.0 - alpha)).tan()))
}

/// Standard deviation of the data on the scale of `theta`.
pub fn estimate_upper_bound(y: &[f64], obs: &ObservationModel) -> Result<f64> {
    transformed_stats(y, obs).map(|(_, sd)| sd)
}

fn transformed_stats(y: &[f64], obs: &ObservationModel) -> Result<(f64, f64)> {
    if y.len() < 2 {
        return Err(Error::invalid("at least two observations are needed"));
    }
    let t = transform_to_theta_scale(y, obs)?;
    let (mean, sd) = mean_sd(&t);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("transformed data have zero variance".into()));
    }
    Ok((mean, sd))
}

/// `zeta` for a regular grid densified by factor `m`: `m^-1/2 zeta` for order 1
/// and `m^-3/2 zeta` for order 2.
pub fn rescale_zeta(zeta_old: f64, k: DiffOrder, m: f64) -> Result<f64> {
    check_positive("densify factor", m)?;
    Ok(match k {
        DiffOrder::First => zeta_old / m.sqrt(),
        DiffOrder::Second => zeta_old / m.powf(1.5),
    })
}

/// Moves a calibrated `zeta` between model orders with the same `U` and `alpha`.
pub fn convert_order(zeta_from: f64, sigma_ref_from: f64, sigma_ref_to: f64) -> Result<f64> {
    check_positive("sigma_ref", sigma_ref_from)?;
    check_positive("sigma_ref", sigma_ref_to)?;
    Ok(zeta_from * sigma_ref_from / sigma_ref_to)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInputs {
    pub k: DiffOrder,
    pub n: usize,
    pub omega2: f64,
    pub upper: f64,
    pub alpha: f64,
}

/// Every intermediate of a calibration, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub k: DiffOrder,
    pub n: usize,
    pub upper: f64,
    pub omega2: f64,
    pub alpha: f64,
    pub sigma_ref: f64,
    pub zeta: f64,
}

impl CalibrationInputs {
    /// Estimates `U` and `omega^2` as the sd and variance of the transformed data.
    pub fn from_data(y: &[f64], obs: &ObservationModel, k: DiffOrder, alpha: f64) -> Result<Self> {
        let (_, sd) = transformed_stats(y, obs)?;
        Ok(CalibrationInputs {
            k,
            n: y.len(),
            omega2: sd * sd,
            upper: sd,
            alpha,
        })
    }

    pub fn run(&self) -> Result<Calibration> {
        let sigma_ref = marginal_sd_ref(self.k, self.n, self.omega2)?;
        Ok(Calibration {
            k: self.k,
            n: self.n,
            upper: self.upper,
            omega2: self.omega2,
            alpha: self.alpha,
            sigma_ref,
            zeta: zeta(self.upper, sigma_ref, self.alpha)?,
        })
    }
}

/// Data-driven calibration: `U` and `omega^2` from the transformed data.
pub fn calibrate(y: &[f64], obs: &ObservationModel, k: DiffOrder, alpha: f64) -> Result<Calibration> {
    CalibrationInputs::from_data(y, obs, k, alpha)?.run()
}
