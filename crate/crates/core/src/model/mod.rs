//! Model specification, unconstrained parameter layout and log-posteriors.
//!
//! The trend is fully non-centered. With standard normal innovations `z`,
//!
//! ```text
//! theta[1]          = mu + omega z[1]
//! theta[2]          = theta[1] + alpha z_init                     (k = 2 only)
//! increment j       = sqrt(d[j]) tau[j] z[j]
//! ```
//!
//! and `theta` is rebuilt by inverting the (possibly irregular) difference
//! operator. Half-Cauchy scales use `base |nu| exp(eta / 2)` with
//! `nu ~ N(0, 1)` and `exp(eta) ~ InvGamma(1/2, 1/2)`; Laplace local scales use
//! `tau^2 = 2 gamma^2 exp(psi)` with `exp(psi) ~ Exp(1)`.
//!
//! Unconstrained vector layout, in order:
//!
//! | block        | length          | content                                      |
//! |--------------|-----------------|----------------------------------------------|
//! | `z1`         | 1               | first trend value                            |
//! | `z_init`     | k - 1           | initial first difference (k = 2)             |
//! | `z`          | n - k           | increment innovations                        |
//! | local        | per family      | `alpha` auxiliaries, then `tau[j]` in j order |
//! | global       | 2 or 0          | `(nu, eta)` for gamma unless fixed           |
//! | observation  | 2 or 0          | `(nu, eta)` for sigma (normal observations)  |
//!
//! Local auxiliaries are `(nu, eta)` pairs for the horseshoe, one `psi` per
//! scale for the Laplace, and none for the normal prior (`tau = gamma`).

mod posterior;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiffOrder, Grid};

pub use posterior::{
    log_posterior_hierarchical, log_posterior_marginal, Constrained, Posterior, PosteriorEval,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorFamily {
    Normal,
    Laplace,
    Horseshoe,
}

impl PriorFamily {
    pub const ALL: [PriorFamily; 3] = [PriorFamily::Normal, PriorFamily::Laplace, PriorFamily::Horseshoe];

    pub fn name(self) -> &'static str {
        match self {
            PriorFamily::Normal => "normal",
            PriorFamily::Laplace => "laplace",
            PriorFamily::Horseshoe => "horseshoe",
        }
    }
}

impl std::fmt::Display for PriorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PriorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gmrf" => Ok(PriorFamily::Normal),
            "laplace" => Ok(PriorFamily::Laplace),
            "horseshoe" | "hs" => Ok(PriorFamily::Horseshoe),
            other => Err(Error::invalid(format!("unknown prior family '{other}'"))),
        }
    }
}

/// Prior on a positive scale: half-Cauchy with the given scale, or pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePrior {
    HalfCauchy { scale: f64 },
    Fixed(f64),
}

impl ScalePrior {
    fn validate(&self, what: &str) -> Result<()> {
        let v = match *self {
            ScalePrior::HalfCauchy { scale } => scale,
            ScalePrior::Fixed(v) => v,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("{what} scale must be positive and finite, got {v}")))
        }
    }

    fn n_aux(&self) -> usize {
        match self {
            ScalePrior::HalfCauchy { .. } => 2,
            ScalePrior::Fixed(_) => 0,
        }
    }
}

/// Default half-Cauchy scale on the observation standard deviation.
pub const DEFAULT_SIGMA_SCALE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationModel {
    Normal { sigma: ScalePrior },
    Poisson,
    Binomial { trials: Vec<u64> },
}

impl ObservationModel {
    /// Normal observations with `sigma ~ C+(0, 5)`.
    pub fn normal() -> Self {
        ObservationModel::Normal {
            sigma: ScalePrior::HalfCauchy { scale: DEFAULT_SIGMA_SCALE },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObservationModel::Normal { .. } => "normal",
            ObservationModel::Poisson => "poisson",
            ObservationModel::Binomial { .. } => "binomial",
        }
    }

    /// Checks that `y` is in the support of the observation model.
    pub fn validate_data(&self, y: &[f64]) -> Result<()> {
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite observation {bad}")));
        }
        match self {
            ObservationModel::Normal { sigma } => sigma.validate("sigma"),
            ObservationModel::Poisson => {
                if let Some(bad) = y.iter().find(|&&v| v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::invalid(format!(
                        "Poisson observations must be nonnegative integers, got {bad}"
                    )));
                }
                Ok(())
            }
            ObservationModel::Binomial { trials } => {
                if trials.len() != y.len() {
                    return Err(Error::LengthMismatch {
                        expected: y.len(),
                        found: trials.len(),
                    });
                }
                for (i, (&v, &m)) in y.iter().zip(trials).enumerate() {
                    if m == 0 {
                        return Err(Error::invalid(format!("binomial trials at index {i} are zero")));
                    }
                    if v < 0.0 || v.fract() != 0.0 || v > m as f64 {
                        return Err(Error::invalid(format!(
                            "binomial observation {v} at index {i} is outside 0..={m}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Whether local scales are sampled (hierarchical) or integrated out (marginal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    #[default]
    Hierarchical,
    Marginal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub grid: Grid,
    pub k: DiffOrder,
    pub prior: PriorFamily,
    pub obs: ObservationModel,
    pub gamma: ScalePrior,
    pub theta1_mean: f64,
    pub theta1_sd: f64,
    pub formulation: Formulation,
}

/// Default half-Cauchy scale on the global smoothing parameter.
pub const DEFAULT_ZETA: f64 = 0.01;

impl ModelSpec {
    /// A hierarchical model with `theta[1] ~ N(0, 1)` and `gamma ~ C+(0, 0.01)`.
    pub fn new(grid: Grid, k: DiffOrder, prior: PriorFamily, obs: ObservationModel) -> Self {
        ModelSpec {
            grid,
            k,
            prior,
            obs,
            gamma: ScalePrior::HalfCauchy { scale: DEFAULT_ZETA },
            theta1_mean: 0.0,
            theta1_sd: 1.0,
            formulation: Formulation::Hierarchical,
        }
    }

    pub fn with_theta1_prior(mut self, mean: f64, sd: f64) -> Self {
        self.theta1_mean = mean;
        self.theta1_sd = sd;
        self
    }

    pub fn with_global_scale(mut self, gamma: ScalePrior) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_formulation(mut self, formulation: Formulation) -> Self {
        self.formulation = formulation;
        self
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.check_order(self.k)?;
        self.gamma.validate("gamma")?;
        if !self.theta1_mean.is_finite() {
            return Err(Error::invalid("theta1 prior mean must be finite"));
        }
        if !(self.theta1_sd > 0.0 && self.theta1_sd.is_finite()) {
            return Err(Error::invalid(format!(
                "theta1 prior sd must be positive, got {}",
                self.theta1_sd
            )));
        }
        if let ObservationModel::Normal { sigma } = &self.obs {
            sigma.validate("sigma")?;
        }
        if self.formulation == Formulation::Marginal && self.prior == PriorFamily::Horseshoe {
            return Err(Error::Unsupported(
                "the marginal formulation mixes poorly for the horseshoe; use the hierarchical one"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }
}

/// Offsets of each block in the unconstrained vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub k: usize,
    /// Auxiliaries per local scale (0, 1 or 2).
    pub aux_per_scale: usize,
    /// Number of local scales: `k - 1` initial plus `n - k` increments.
    pub n_scales: usize,
    pub local_start: usize,
    pub gamma_start: Option<usize>,
    pub sigma_start: Option<usize>,
    pub dim: usize,
}

impl Layout {
    fn new(spec: &ModelSpec) -> Self {
        let n = spec.n();
        let k = spec.k.get();
        let aux_per_scale = match (spec.formulation, spec.prior) {
            (Formulation::Marginal, _) | (_, PriorFamily::Normal) => 0,
            (_, PriorFamily::Laplace) => 1,
            (_, PriorFamily::Horseshoe) => 2,
        };
        let n_scales = n - 1;
        let local_start = n;
        let mut next = local_start + aux_per_scale * n_scales;
        let gamma_start = (spec.gamma.n_aux() > 0).then_some(next);
        next += spec.gamma.n_aux();
        let sigma_start = match &spec.obs {
            ObservationModel::Normal { sigma } if sigma.n_aux() > 0 => {
                next += 2;
                Some(next - 2)
            }
            _ => None,
        };
        Layout {
            n,
            k,
            aux_per_scale,
            n_scales,
            local_start,
            gamma_start,
            sigma_start,
            dim: next,
        }
    }

    /// Index of the innovation for increment `j` (0-based).
    pub fn innovation(&self, j: usize) -> usize {
        self.k + j
    }
}

/// Maps observations to the scale of `theta`: identity for normal data,
/// `ln(y + 0.5)` for counts and `logit((y + q) / m)` for binomial data with
/// `q = 0.005` at `y = 0` and `q = -0.005` at `y = m`.
pub fn transform_to_theta_scale(y: &[f64], obs: &ObservationModel) -> Result<Vec<f64>> {
    obs.validate_data(y)?;
    Ok(match obs {
        ObservationModel::Normal { .. } => y.to_vec(),
        ObservationModel::Poisson => y.iter().map(|v| (v + 0.5).ln()).collect(),
        ObservationModel::Binomial { trials } => y
            .iter()
            .zip(trials)
            .map(|(&v, &m)| {
                let m = m as f64;
                let q = if v == 0.0 {
                    0.005
                } else if v == m {
                    -0.005
                } else {
                    0.0
                };
                let p = (v + q) / m;
                (p / (1.0 - p)).ln()
            })
            .collect(),
    })
}

/// Sample mean and sample standard deviation (n - 1 denominator).
pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Data-driven prior `theta[1] ~ N(mu, omega^2)`: the mean and twice the
/// standard deviation of the transformed data.
pub fn default_theta1_prior(y: &[f64], obs: &ObservationModel) -> Result<(f64, f64)> {
    if y.len() < 2 {
        return Err(Error::invalid("at least two observations are needed"));
    }
    let t = transform_to_theta_scale(y, obs)?;
    let (mean, sd) = mean_sd(&t);
    if !(sd > 0.0) {
        return Err(Error::Degenerate(
            "transformed data have zero standard deviation, so omega would be 0".into(),
        ));
    }
    Ok((mean, 2.0 * sd))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(prior: PriorFamily, k: DiffOrder, obs: ObservationModel) -> ModelSpec {
        ModelSpec::new(Grid::unit(10), k, prior, obs)
    }

    #[test]
    fn layout_dimensions() {
        let n = 10;
        let d = |p, k, o| spec(p, k, o).layout().dim;
        assert_eq!(d(PriorFamily::Normal, DiffOrder::First, ObservationModel::Poisson), n + 2);
        assert_eq!(d(PriorFamily::Normal, DiffOrder::Second, ObservationModel::normal()), n + 4);
        assert_eq!(d(PriorFamily::Laplace, DiffOrder::First, ObservationModel::Poisson), 2 * n + 1);
        assert_eq!(d(PriorFamily::Laplace, DiffOrder::Second, ObservationModel::Poisson), 2 * n + 1);
        assert_eq!(d(PriorFamily::Horseshoe, DiffOrder::First, ObservationModel::Poisson), 3 * n);
        let pinned = spec(PriorFamily::Normal, DiffOrder::First, ObservationModel::Normal {
            sigma: ScalePrior::Fixed(1.0),
        })
        .with_global_scale(ScalePrior::Fixed(0.5));
        assert_eq!(pinned.layout().dim, n);
        let marginal = spec(PriorFamily::Laplace, DiffOrder::Second, ObservationModel::Poisson)
            .with_formulation(Formulation::Marginal);
        assert_eq!(marginal.layout().dim, n + 2);
    }

    #[test]
    fn default_theta1_prior_examples() {
        let (mu, omega) = default_theta1_prior(&[1.0, 3.0], &ObservationModel::normal()).unwrap();
        assert_eq!(mu, 2.0);
        assert!((omega - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            default_theta1_prior(&[0.0, 0.0], &ObservationModel::Poisson),
            Err(Error::Degenerate(_))
        ));
        assert!(default_theta1_prior(&[1.0], &ObservationModel::normal()).is_err());
        let obs = ObservationModel::Binomial { trials: vec![39, 39] };
        let t = transform_to_theta_scale(&[0.0, 39.0], &obs).unwrap();
        assert!(t.iter().all(|v| v.is_finite()));
        assert!((t[0] - (0.005f64 / 38.995).ln()).abs() < 1e-12);
        assert!((t[0] + t[1]).abs() < 1e-12);
    }

    #[test]
    fn data_validation() {
        assert!(ObservationModel::Poisson.validate_data(&[0.0, 1.5]).is_err());
        assert!(ObservationModel::Poisson.validate_data(&[0.0, -1.0]).is_err());
        let obs = ObservationModel::Binomial { trials: vec![3, 3] };
        assert!(obs.validate_data(&[0.0, 4.0]).is_err());
        assert!(obs.validate_data(&[0.0, 3.0]).is_ok());
        assert!(obs.validate_data(&[0.0]).is_err());
    }

    #[test]
    fn horseshoe_marginal_is_rejected() {
        let s = spec(PriorFamily::Horseshoe, DiffOrder::First, ObservationModel::Poisson)
            .with_formulation(Formulation::Marginal);
        assert!(matches!(s.validate(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn prior_family_parses() {
        assert_eq!("Horseshoe".parse::<PriorFamily>().unwrap(), PriorFamily::Horseshoe);
        assert!("ridge".parse::<PriorFamily>().is_err());
    }
}
