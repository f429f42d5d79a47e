//! Command-line flags. Every flag overrides the matching config-file field.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spmrf::model::{Formulation, PriorFamily};
use spmrf::sampler::SamplerConfig;
use spmrf::simulate::TrendKind;

use crate::config::{parse_formulation, ObsFamily, RunConfig, SimulateConfig, ZetaSetting};

#[derive(Debug, Parser)]
#[command(name = "spmrf", version, about = "Shrinkage-prior Markov random field trend smoothing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a trend to a CSV series and write summaries, diagnostics and plot data.
    Fit(FitArgs),
    /// Report the calibrated global-scale hyperparameter and its intermediates.
    Calibrate(CalibrateArgs),
    /// Run a simulation study, or a hyperparameter sweep on a dataset.
    Simulate(SimulateArgs),
    /// Posterior over the location of the largest drop in a fitted trend.
    Changepoint(ChangepointArgs),
    /// Recompute diagnostics from a draws file.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Headered CSV file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub x_col: Option<String>,
    #[arg(long)]
    pub y_col: Option<String>,
    /// Binomial trials column.
    #[arg(long)]
    pub trials_col: Option<String>,
    #[arg(long, value_enum)]
    pub obs: Option<ObsFamily>,
    /// Difference order, 1 or 2.
    #[arg(long)]
    pub order: Option<usize>,
    /// Tail probability for zeta calibration.
    #[arg(long)]
    pub alpha: Option<f64>,
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &self.x_col {
            cfg.x_col = v.clone();
        }
        if let Some(v) = &self.y_col {
            cfg.y_col = v.clone();
        }
        if let Some(v) = &self.trials_col {
            cfg.trials_col = v.clone();
        }
        if let Some(v) = self.obs {
            cfg.obs = v;
        }
        if let Some(v) = self.order {
            cfg.order = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct SamplerArgs {
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Post-warmup iterations per chain, before thinning.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long)]
    pub max_treedepth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "SPMRF_THREADS")]
    pub threads: Option<usize>,
}

impl SamplerArgs {
    fn apply(&self, s: &mut SamplerConfig) {
        let set = |dst: &mut usize, src: Option<usize>| {
            if let Some(v) = src {
                *dst = v;
            }
        };
        set(&mut s.chains, self.chains);
        set(&mut s.warmup, self.warmup);
        set(&mut s.iters, self.iters);
        set(&mut s.thin, self.thin);
        set(&mut s.max_treedepth, self.max_treedepth);
        if let Some(v) = self.target_accept {
            s.target_accept = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if self.threads.is_some() {
            s.threads = self.threads;
        }
    }
}

fn formulation(s: &str) -> Result<Formulation, String> {
    parse_formulation(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// TOML config, or the manifest.json of an earlier fit.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// normal, laplace or horseshoe.
    #[arg(long)]
    pub prior: Option<PriorFamily>,
    /// "auto" to calibrate from the data, or a positive value.
    #[arg(long)]
    pub zeta: Option<ZetaSetting>,
    /// Half-Cauchy scale on the observation sd (normal data).
    #[arg(long)]
    pub sigma_scale: Option<f64>,
    /// hierarchical or marginal.
    #[arg(long, value_parser = formulation)]
    pub formulation: Option<Formulation>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, env = "SPMRF_OUT_DIR")]
    pub out: Option<PathBuf>,
    /// Also write the thinned draws.
    #[arg(long)]
    pub draws: bool,
}

impl FitArgs {
    pub fn resolve(&self) -> crate::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.data.apply(&mut cfg);
        if let Some(v) = self.prior {
            cfg.prior = v;
        }
        if let Some(v) = self.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = self.sigma_scale {
            cfg.sigma_scale = v;
        }
        if let Some(v) = self.formulation {
            cfg.formulation = v;
        }
        self.sampler.apply(&mut cfg.sampler);
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        cfg.write_draws |= self.draws;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Upper bound U on the trend sd; skips the data.
    #[arg(long)]
    pub upper: Option<f64>,
    /// Reference marginal sd, used with --upper.
    #[arg(long)]
    pub sigma_ref: Option<f64>,
    /// Variance of the first trend value, used with --upper and --n.
    #[arg(long)]
    pub omega2: Option<f64>,
    /// Grid size, used with --omega2.
    #[arg(long)]
    pub n: Option<usize>,
    /// Also write calibration.json here.
    #[arg(long, env = "SPMRF_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML study config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trends to simulate: constant, piecewise, smooth, varying.
    #[arg(long, value_delimiter = ',')]
    pub trends: Option<Vec<TrendKind>>,
    /// normal, laplace or horseshoe, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub priors: Option<Vec<PriorFamily>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Grid size of the simulated series.
    #[arg(long)]
    pub n: Option<usize>,
    /// Observation sd for simulated normal data.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Half-Cauchy scale on the global smoothing parameter.
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Fit every prior at several zeta values to --input instead of simulating.
    #[arg(long)]
    pub sweep_zeta: bool,
    /// Zeta levels of the sweep.
    #[arg(long, value_delimiter = ',', default_values_t = crate::commands::SWEEP_ZETAS)]
    pub zetas: Vec<f64>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, env = "SPMRF_OUT_DIR")]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn study(&self) -> crate::Result<SimulateConfig> {
        let mut cfg: SimulateConfig = match &self.config {
            Some(p) => crate::config::load_file(p)?,
            None => SimulateConfig::default(),
        };
        if let Some(v) = &self.trends {
            cfg.trends = v.clone();
        }
        if let Some(v) = &self.priors {
            cfg.priors = v.clone();
        }
        if let Some(v) = self.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = self.data.obs {
            cfg.obs = v;
        }
        if let Some(v) = self.sampler.seed {
            cfg.seed = v;
        }
        self.sampler.apply(&mut cfg.sampler);
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        Ok(cfg)
    }

    /// Data and sampler settings for a sweep.
    pub fn sweep(&self) -> crate::Result<(RunConfig, Vec<PriorFamily>)> {
        let mut cfg = RunConfig::default();
        self.data.apply(&mut cfg);
        self.sampler.apply(&mut cfg.sampler);
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        cfg.validate()?;
        let priors = self.priors.clone().unwrap_or_else(|| PriorFamily::ALL.to_vec());
        Ok((cfg, priors))
    }
}

#[derive(Debug, Args)]
pub struct ChangepointArgs {
    /// Output directory of a fit run with --draws.
    #[arg(long)]
    pub fit_dir: PathBuf,
    /// Measure drops in the trend itself rather than in the natural-scale mean.
    #[arg(long)]
    pub link_scale: bool,
    /// Defaults to the fit directory.
    #[arg(long, env = "SPMRF_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, env = "SPMRF_OUT_DIR")]
    pub out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "spmrf", "fit", "--input", "d.csv", "--obs", "poisson", "--prior", "laplace", "--zeta", "0.2",
            "--chains", "2", "--seed", "9", "--out", "o",
        ])
        .unwrap();
        let Command::Fit(args) = cli.command else { panic!("expected fit") };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.obs, ObsFamily::Poisson);
        assert_eq!(cfg.prior, PriorFamily::Laplace);
        assert_eq!(cfg.zeta, ZetaSetting::Value(0.2));
        assert_eq!((cfg.sampler.chains, cfg.sampler.seed), (2, 9));
        assert_eq!(cfg.out_dir, PathBuf::from("o"));
    }

    #[test]
    fn sweep_defaults_to_three_levels() {
        let cli = Cli::try_parse_from(["spmrf", "simulate", "--sweep-zeta", "--input", "c.csv"]).unwrap();
        let Command::Simulate(args) = cli.command else { panic!("expected simulate") };
        assert_eq!(args.zetas, vec![1.0, 0.01, 0.0001]);
        assert!(Cli::try_parse_from(["spmrf", "fit", "--zeta", "-3"]).is_err());
    }
}
