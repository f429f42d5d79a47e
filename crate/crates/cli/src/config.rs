//! Run configuration, read from TOML or JSON and overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spmrf::calibrate::DEFAULT_ALPHA;
use spmrf::grid::DiffOrder;
use spmrf::model::{Formulation, ObservationModel, PriorFamily, ScalePrior, DEFAULT_SIGMA_SCALE, DEFAULT_ZETA};
use spmrf::sampler::SamplerConfig;
use spmrf::simulate::{ObsKind, StudyConfig, TrendKind, TrendScenario, BENCHMARK_TRIALS, GP_SEED};

use crate::error::{CliError, Result};

/// Global-scale hyperparameter: calibrated from the data, or given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZetaRepr", into = "ZetaRepr")]
pub enum ZetaSetting {
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ZetaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<ZetaRepr> for ZetaSetting {
    type Error = CliError;

    fn try_from(r: ZetaRepr) -> Result<Self> {
        match r {
            ZetaRepr::Number(v) => ZetaSetting::value(v),
            ZetaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<ZetaSetting> for ZetaRepr {
    fn from(z: ZetaSetting) -> Self {
        match z {
            ZetaSetting::Auto => ZetaRepr::Text("auto".into()),
            ZetaSetting::Value(v) => ZetaRepr::Number(v),
        }
    }
}

impl ZetaSetting {
    fn value(v: f64) -> Result<Self> {
        if v > 0.0 && v.is_finite() {
            Ok(ZetaSetting::Value(v))
        } else {
            Err(CliError::config(format!("zeta must be positive and finite, got {v}")))
        }
    }
}

impl FromStr for ZetaSetting {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ZetaSetting::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| CliError::config(format!("zeta must be 'auto' or a number, got '{s}'")))?;
        ZetaSetting::value(v)
    }
}

impl fmt::Display for ZetaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZetaSetting::Auto => f.write_str("auto"),
            ZetaSetting::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ObsFamily {
    Normal,
    Poisson,
    Binomial,
}

impl ObsFamily {
    pub fn name(self) -> &'static str {
        match self {
            ObsFamily::Normal => "normal",
            ObsFamily::Poisson => "poisson",
            ObsFamily::Binomial => "binomial",
        }
    }

    /// Observation model for data with the given binomial trials.
    pub fn model(self, sigma_scale: f64, trials: Option<&[u64]>) -> Result<ObservationModel> {
        Ok(match self {
            ObsFamily::Normal => ObservationModel::Normal {
                sigma: ScalePrior::HalfCauchy { scale: sigma_scale },
            },
            ObsFamily::Poisson => ObservationModel::Poisson,
            ObsFamily::Binomial => ObservationModel::Binomial {
                trials: trials
                    .ok_or_else(|| CliError::config("binomial data need a trials column"))?
                    .to_vec(),
            },
        })
    }

    /// Inverse link: identity, `exp` or the logistic function.
    pub fn natural(self, theta: f64) -> f64 {
        match self {
            ObsFamily::Normal => theta,
            ObsFamily::Poisson => theta.exp(),
            ObsFamily::Binomial => 1.0 / (1.0 + (-theta).exp()),
        }
    }
}

pub fn parse_formulation(s: &str) -> Result<Formulation> {
    match s {
        "hierarchical" => Ok(Formulation::Hierarchical),
        "marginal" => Ok(Formulation::Marginal),
        _ => Err(CliError::config(format!("unknown formulation '{s}'"))),
    }
}

pub fn parse_order(k: usize) -> Result<DiffOrder> {
    Ok(DiffOrder::try_from(k)?)
}

/// Everything needed to reproduce a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub x_col: String,
    pub y_col: String,
    pub trials_col: String,
    pub obs: ObsFamily,
    pub prior: PriorFamily,
    pub order: usize,
    pub zeta: ZetaSetting,
    /// Tail probability used when calibrating zeta.
    pub alpha: f64,
    pub sigma_scale: f64,
    pub formulation: Formulation,
    pub sampler: SamplerConfig,
    /// Not recorded in manifests, so reruns elsewhere produce identical files.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub write_draws: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            x_col: "x".into(),
            y_col: "y".into(),
            trials_col: "m".into(),
            obs: ObsFamily::Normal,
            prior: PriorFamily::Horseshoe,
            order: 1,
            zeta: ZetaSetting::Auto,
            alpha: DEFAULT_ALPHA,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            formulation: Formulation::Hierarchical,
            sampler: SamplerConfig::default(),
            out_dir: PathBuf::from("spmrf-out"),
            write_draws: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        parse_order(self.order)?;
        if let ZetaSetting::Value(v) = self.zeta {
            ZetaSetting::value(v)?;
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(CliError::config("sigma_scale must be positive"));
        }
        self.sampler.validate()?;
        Ok(())
    }

    pub fn order(&self) -> Result<DiffOrder> {
        parse_order(self.order)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_file(path)
    }
}

/// Reads a TOML file, or a JSON file that is either the config itself or a
/// run manifest carrying it under `config`.
pub fn load_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        Ok(serde_json::from_value(value)?)
    } else {
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Simulation-study settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub trends: Vec<TrendKind>,
    pub obs: ObsFamily,
    /// Observation sd for normal data.
    pub sigma: f64,
    pub trials: u64,
    pub n: usize,
    pub gp_seed: u64,
    pub priors: Vec<PriorFamily>,
    pub replicates: usize,
    pub zeta: f64,
    pub sigma_scale: f64,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub out_dir: PathBuf,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            trends: TrendKind::ALL.to_vec(),
            obs: ObsFamily::Normal,
            sigma: 4.5,
            trials: BENCHMARK_TRIALS,
            n: 100,
            gp_seed: GP_SEED,
            priors: PriorFamily::ALL.to_vec(),
            replicates: 20,
            zeta: DEFAULT_ZETA,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            seed: 1,
            sampler: SamplerConfig::default(),
            out_dir: PathBuf::from("spmrf-study"),
        }
    }
}

impl SimulateConfig {
    pub fn obs_kind(&self) -> ObsKind {
        match self.obs {
            ObsFamily::Normal => ObsKind::Normal { sigma: self.sigma },
            ObsFamily::Poisson => ObsKind::Poisson,
            ObsFamily::Binomial => ObsKind::Binomial { trials: self.trials },
        }
    }

    pub fn study(&self) -> Result<StudyConfig> {
        let obs = self.obs_kind();
        let scenarios = self
            .trends
            .iter()
            .map(|&kind| TrendScenario { n: self.n, seed: self.gp_seed, ..TrendScenario::new(kind, obs) })
            .collect();
        let cfg = StudyConfig {
            scenarios,
            priors: self.priors.clone(),
            replicates: self.replicates,
            sampler: self.sampler.clone(),
            zeta: self.zeta,
            sigma_scale: self.sigma_scale,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
