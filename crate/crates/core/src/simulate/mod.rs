//! Benchmark trends, observation generators and accuracy metrics.
//!
//! Trends are returned on the scale of `theta`: the identity for normal data,
//! `ln f` for Poisson data and `logit p` for binomial data. The smooth trend is
//! one realization of a squared-exponential Gaussian process drawn with a fixed
//! seed ([`GP_SEED`]); the same standardized path is scaled to mean 10 and
//! variance 430 for normal and Poisson data and to mean -0.5 and variance 3 on
//! the logit scale for binomial data. The default seed gives a path that is
//! positive everywhere, so the same natural-scale curve serves as a Poisson rate.

mod study;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DiffOrder;
use crate::model::ObservationModel;

pub use study::{
    run_study, scenario_seed, study_files, AggregateMetric, RowTiming, ScenarioSummary, StudyConfig,
    StudyReport, StudyRow, ROWS_FILE, SUMMARY_FILE, TIMING_FILE,
};

/// Seed of the Gaussian-process trend realization.
pub const GP_SEED: u64 = 99;
pub const GP_LENGTH_SCALE: f64 = 10.0;
/// Binomial trials per observation in the benchmark scenarios.
pub const BENCHMARK_TRIALS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    Constant,
    PiecewiseConstant,
    SmoothGp,
    VaryingSmooth,
}

impl TrendKind {
    pub const ALL: [TrendKind; 4] = [
        TrendKind::Constant,
        TrendKind::PiecewiseConstant,
        TrendKind::SmoothGp,
        TrendKind::VaryingSmooth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrendKind::Constant => "constant",
            TrendKind::PiecewiseConstant => "piecewise",
            TrendKind::SmoothGp => "smooth",
            TrendKind::VaryingSmooth => "varying",
        }
    }

    /// First-order models for the flat trends, second-order for the smooth ones.
    pub fn model_order(self) -> DiffOrder {
        match self {
            TrendKind::Constant | TrendKind::PiecewiseConstant => DiffOrder::First,
            TrendKind::SmoothGp | TrendKind::VaryingSmooth => DiffOrder::Second,
        }
    }
}

impl std::str::FromStr for TrendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrendKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown trend '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsKind {
    Normal { sigma: f64 },
    Poisson,
    Binomial { trials: u64 },
}

impl ObsKind {
    pub fn label(&self) -> String {
        match self {
            ObsKind::Normal { sigma } => format!("normal{sigma}"),
            ObsKind::Poisson => "poisson".into(),
            ObsKind::Binomial { trials } => format!("binomial{trials}"),
        }
    }

    /// The observation model used to fit data of this kind.
    pub fn model(&self, n: usize, sigma_scale: f64) -> ObservationModel {
        match *self {
            ObsKind::Normal { .. } => ObservationModel::Normal {
                sigma: crate::model::ScalePrior::HalfCauchy { scale: sigma_scale },
            },
            ObsKind::Poisson => ObservationModel::Poisson,
            ObsKind::Binomial { trials } => ObservationModel::Binomial {
                trials: vec![trials; n],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendScenario {
    pub kind: TrendKind,
    pub obs: ObsKind,
    pub n: usize,
    /// Seed of the Gaussian-process realization (smooth trend only).
    pub seed: u64,
}

impl TrendScenario {
    pub fn new(kind: TrendKind, obs: ObsKind) -> Self {
        TrendScenario {
            kind,
            obs,
            n: 100,
            seed: GP_SEED,
        }
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.kind.name(), self.obs.label())
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `g(t) = sin(4t/n - 2) + 2 exp(-30 (4t/n - 2)^2)`.
pub fn varying_smooth_g(t: f64, n: f64) -> f64 {
    let s = 4.0 * t / n - 2.0;
    s.sin() + 2.0 * (-30.0 * s * s).exp()
}

/// Levels and right-closed break points (as fractions of n) of the piecewise trend.
const PIECEWISE_BREAKS: [f64; 3] = [0.2, 0.4, 0.6];
const PIECEWISE_LEVELS: [f64; 4] = [25.0, 10.0, 35.0, 15.0];
const PIECEWISE_PROBS: [f64; 4] = [0.65, 0.25, 0.85, 0.45];

fn piecewise_segment(t: usize, n: usize) -> usize {
    PIECEWISE_BREAKS
        .iter()
        .position(|&b| (t as f64) <= b * n as f64 + 1e-9)
        .unwrap_or(PIECEWISE_BREAKS.len())
}

/// A standardized squared-exponential GP path on `t = 1..=n` (unit variance).
pub fn standard_gp_path(n: usize, length_scale: f64, seed: u64) -> Result<Vec<f64>> {
    let k = DMatrix::from_fn(n, n, |i, j| {
        let d = i as f64 - j as f64;
        (-d * d / (2.0 * length_scale * length_scale)).exp() + if i == j { 1e-8 } else { 0.0 }
    });
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Degenerate("GP covariance is not positive definite".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((chol.l() * z).iter().copied().collect())
}

/// Trend values on the `theta` scale for `sc`.
pub fn trend_values(sc: &TrendScenario) -> Result<Vec<f64>> {
    let n = sc.n;
    if n < 2 {
        return Err(Error::invalid("trend needs at least two points"));
    }
    let ts = 1..=n;
    // Natural-scale values for normal/Poisson, logit values for binomial.
    let binomial = matches!(sc.obs, ObsKind::Binomial { .. });
    let values: Vec<f64> = match sc.kind {
        TrendKind::Constant => vec![if binomial { 0.0 } else { 20.0 }; n],
        TrendKind::PiecewiseConstant => ts
            .map(|t| {
                let s = piecewise_segment(t, n);
                if binomial {
                    logit(PIECEWISE_PROBS[s])
                } else {
                    PIECEWISE_LEVELS[s]
                }
            })
            .collect(),
        TrendKind::SmoothGp => {
            let h = standard_gp_path(n, GP_LENGTH_SCALE, sc.seed)?;
            let (mu, var) = if binomial { (-0.5, 3.0) } else { (10.0, 430.0) };
            let sd: f64 = f64::sqrt(var);
            h.iter().map(|v| mu + sd * v).collect()
        }
        TrendKind::VaryingSmooth => ts
            .map(|t| {
                let g = varying_smooth_g(t as f64, n as f64);
                if binomial {
                    1.25 * g
                } else {
                    20.0 + 10.0 * g
                }
            })
            .collect(),
    };
    match sc.obs {
        ObsKind::Poisson => {
            if let Some(bad) = values.iter().find(|&&f| f <= 0.0) {
                return Err(Error::Degenerate(format!(
                    "Poisson mean {bad} is not positive for trend {}",
                    sc.kind.name()
                )));
            }
            Ok(values.iter().map(|f| f.ln()).collect())
        }
        _ => Ok(values),
    }
}

/// Independent observations given `theta` on the link scale.
pub fn simulate_observations<R: Rng>(theta: &[f64], obs: &ObsKind, rng: &mut R) -> Result<Vec<f64>> {
    match *obs {
        ObsKind::Normal { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::invalid(format!("observation sd must be positive, got {sigma}")));
            }
            Ok(theta
                .iter()
                .map(|t| t + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect())
        }
        ObsKind::Poisson => theta
            .iter()
            .map(|t| {
                let d = Poisson::new(t.exp()).map_err(|e| Error::invalid(e.to_string()))?;
                Ok(d.sample(rng))
            })
            .collect(),
        ObsKind::Binomial { trials } => theta
            .iter()
            .map(|t| {
                let p = 1.0 / (1.0 + (-t).exp());
                let d = Binomial::new(trials, p).map_err(|e| Error::invalid(e.to_string()))?;
                Ok(d.sample(rng) as f64)
            })
            .collect(),
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Signal-to-noise ratio: sd of the trend's expected observations over the
/// typical observation sd (`sigma`, `sqrt(mean rate)` or
/// `sqrt(mean m p (1 - p))`).
pub fn signal_to_noise(theta: &[f64], obs: &ObsKind) -> f64 {
    match *obs {
        ObsKind::Normal { sigma } => population_sd(theta) / sigma,
        ObsKind::Poisson => {
            let rate: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
            population_sd(&rate) / mean(&rate).sqrt()
        }
        ObsKind::Binomial { trials } => {
            let m = trials as f64;
            let p: Vec<f64> = theta.iter().map(|t| 1.0 / (1.0 + (-t).exp())).collect();
            let expected: Vec<f64> = p.iter().map(|p| m * p).collect();
            let noise: Vec<f64> = p.iter().map(|p| m * p * (1.0 - p)).collect();
            population_sd(&expected) / mean(&noise).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mad: f64,
    pub mciw: f64,
    pub masv: f64,
    pub tmasv: f64,
}

/// Mean absolute sequential variation `sum |x[i+1] - x[i]| / (n - 1)`.
pub fn masv(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (x.len() - 1) as f64
}

/// MAD of the posterior medians, mean 95% interval width, MASV of the medians
/// and the true MASV.
pub fn metrics(median: &[f64], lo: &[f64], hi: &[f64], truth: &[f64]) -> Result<Metrics> {
    let n = truth.len();
    for v in [median, lo, hi] {
        if v.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: v.len() });
        }
    }
    if n == 0 {
        return Err(Error::invalid("metrics need at least one point"));
    }
    if let Some(i) = (0..n).find(|&i| lo[i] > hi[i]) {
        return Err(Error::invalid(format!(
            "credible interval at index {i} is reversed ({} > {})",
            lo[i], hi[i]
        )));
    }
    let nf = n as f64;
    Ok(Metrics {
        mad: median.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / nf,
        mciw: hi.iter().zip(lo).map(|(h, l)| h - l).sum::<f64>() / nf,
        masv: masv(median),
        tmasv: masv(truth),
    })
}
