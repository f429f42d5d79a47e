//! Subcommand implementations. Each returns its results so the binary only
//! has to print and map errors to exit codes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use spmrf::calibrate::{calibrate, marginal_sd_ref, zeta as zeta_formula, Calibration};
use spmrf::diagnostics::{summarize, FitSummary};
use spmrf::grid::{DiffOrder, Grid};
use spmrf::model::{default_theta1_prior, ModelSpec, ObservationModel, PriorFamily, ScalePrior};
use spmrf::sampler::{nuts_run, PosteriorSamples};
use spmrf::simulate::{run_study, StudyReport};

use crate::changepoint::{changepoint_posterior, ChangepointPosterior};
use crate::config::{RunConfig, SimulateConfig, ZetaSetting};
use crate::data::{read_series, Series};
use crate::error::{CliError, Result};
use crate::output::*;

pub const CHANGEPOINT_FILE: &str = "changepoint.csv";
pub const CHANGEPOINT_SUMMARY_FILE: &str = "changepoint.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_FITS_FILE: &str = "sweep_fits.csv";
/// Hyperparameter levels of the default sensitivity sweep.
pub const SWEEP_ZETAS: [f64; 3] = [1.0, 0.01, 0.0001];

/// Where the global-scale hyperparameter came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZetaRecord {
    pub source: &'static str,
    pub value: f64,
    pub calibration: Option<Calibration>,
}

pub struct FitOutput {
    pub spec: ModelSpec,
    pub zeta: ZetaRecord,
    pub theta1_prior: (f64, f64),
    pub samples: PosteriorSamples,
    pub summary: FitSummary,
    pub points: Vec<TrendPoint>,
}

pub fn load_series(cfg: &RunConfig) -> Result<Series> {
    let input = cfg.input.as_deref().ok_or_else(|| CliError::config("no input file given"))?;
    let trials = matches!(cfg.obs, crate::config::ObsFamily::Binomial).then_some(cfg.trials_col.as_str());
    read_series(input, &cfg.x_col, &cfg.y_col, trials)
}

fn observation_model(cfg: &RunConfig, series: &Series) -> Result<ObservationModel> {
    cfg.obs.model(cfg.sigma_scale, series.trials.as_deref())
}

pub fn resolve_zeta(cfg: &RunConfig, series: &Series) -> Result<ZetaRecord> {
    Ok(match cfg.zeta {
        ZetaSetting::Value(value) => ZetaRecord { source: "fixed", value, calibration: None },
        ZetaSetting::Auto => {
            let c = calibrate(&series.y, &observation_model(cfg, series)?, cfg.order()?, cfg.alpha)?;
            ZetaRecord { source: "auto", value: c.zeta, calibration: Some(c) }
        }
    })
}

/// Fits the configured model to `series` without writing anything.
pub fn run_fit(cfg: &RunConfig, series: &Series) -> Result<FitOutput> {
    cfg.validate()?;
    let obs = observation_model(cfg, series)?;
    let zeta = resolve_zeta(cfg, series)?;
    let theta1_prior = default_theta1_prior(&series.y, &obs)?;
    let spec = ModelSpec::new(Grid::new(series.x.clone())?, cfg.order()?, cfg.prior, obs)
        .with_theta1_prior(theta1_prior.0, theta1_prior.1)
        .with_global_scale(ScalePrior::HalfCauchy { scale: zeta.value })
        .with_formulation(cfg.formulation);
    let samples = nuts_run(&spec, &series.y, &cfg.sampler)?;
    let summary = summarize(&samples)?;
    let points = trend_points(&samples, &summary, &series.x, cfg.obs)?;
    Ok(FitOutput { spec, zeta, theta1_prior, samples, summary, points })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    seed: u64,
    zeta: ZetaRecord,
    theta1_prior: Theta1Prior,
    n: usize,
    regular_grid: bool,
    files: Vec<&'static str>,
}

#[derive(Serialize)]
struct Theta1Prior {
    mean: f64,
    sd: f64,
}

#[derive(Serialize)]
struct ParamRate<'a> {
    name: &'a str,
    ess_per_sec: f64,
}

#[derive(Serialize)]
struct Timing<'a> {
    total_cpu: f64,
    sampling_cpu: f64,
    min_ess_per_sec: f64,
    mean_ess_per_sec: f64,
    chains: Vec<spmrf::sampler::ChainTiming>,
    params: Vec<ParamRate<'a>>,
}

fn zeta_line(z: &ZetaRecord) -> String {
    match &z.calibration {
        Some(c) => format!(
            "zeta: {} (calibrated: U = {}, omega^2 = {}, sigma_ref = {}, alpha = {})",
            sig4(z.value),
            sig4(c.upper),
            sig4(c.omega2),
            sig4(c.sigma_ref),
            sig4(c.alpha)
        ),
        None => format!("zeta: {} (fixed)", sig4(z.value)),
    }
}

/// Human-readable fit report. It holds no timings, so it is reproducible.
pub fn fit_report(cfg: &RunConfig, fit: &FitOutput) -> String {
    let s = &fit.summary;
    let sc = &cfg.sampler;
    let ess_min = s
        .params
        .iter()
        .filter(|p| !p.ess.degenerate)
        .map(|p| p.ess.value)
        .fold(f64::INFINITY, f64::min);
    let mut out = String::new();
    out.push_str("spmrf fit\n");
    out.push_str(&format!(
        "model: {} prior, order {}, {} observations, n = {}\n",
        cfg.prior,
        cfg.order,
        cfg.obs.name(),
        fit.spec.n()
    ));
    out.push_str(&zeta_line(&fit.zeta));
    out.push('\n');
    out.push_str(&format!(
        "sampler: {} chains, {} warmup, {} iterations, thin {}, seed {}\n",
        sc.chains, sc.warmup, sc.iters, sc.thin, sc.seed
    ));
    out.push_str(&format!(
        "divergences: {}, treedepth saturated: {}\n",
        s.divergences, s.treedepth_saturated
    ));
    out.push_str(&format!("max R-hat: {}, min ESS: {}\n", sig4(s.max_rhat), sig4(ess_min)));
    if let Some(g) = s.param("gamma") {
        out.push_str(&format!("gamma: median {} [{}, {}]\n", sig4(g.median), sig4(g.q025), sig4(g.q975)));
    }
    if let Some(g) = s.param("sigma") {
        out.push_str(&format!("sigma: median {} [{}, {}]\n", sig4(g.median), sig4(g.q025), sig4(g.q975)));
    }
    out
}

/// Writes every fit artifact into `dir` and returns the written paths.
pub fn write_fit(cfg: &RunConfig, series: &Series, fit: &FitOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = vec![SUMMARY_FILE, DIAGNOSTICS_FILE, REPORT_FILE, PLOT_FILE];
    write_summary(&dir.join(SUMMARY_FILE), &fit.points)?;
    write_diagnostics(&dir.join(DIAGNOSTICS_FILE), &fit.summary)?;
    fs::write(dir.join(REPORT_FILE), fit_report(cfg, fit))?;
    write_plot(&dir.join(PLOT_FILE), &fit.points, &series.observed())?;
    if cfg.write_draws {
        write_draws(&dir.join(DRAWS_FILE), &fit.samples)?;
        files.push(DRAWS_FILE);
    }
    files.push(TIMING_FILE);
    let s = &fit.summary;
    write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            total_cpu: s.total_cpu,
            sampling_cpu: s.sampling_cpu,
            min_ess_per_sec: s.min_ess_per_sec,
            mean_ess_per_sec: s.mean_ess_per_sec,
            chains: fit.samples.chains.iter().map(|c| c.timing).collect(),
            params: s.params.iter().map(|p| ParamRate { name: &p.name, ess_per_sec: p.ess_per_sec }).collect(),
        },
    )?;
    files.push(MANIFEST_FILE);
    write_json(
        &dir.join(MANIFEST_FILE),
        &Manifest {
            tool: "spmrf",
            version: env!("CARGO_PKG_VERSION"),
            command: "fit",
            config: cfg,
            seed: cfg.sampler.seed,
            zeta: fit.zeta,
            theta1_prior: Theta1Prior { mean: fit.theta1_prior.0, sd: fit.theta1_prior.1 },
            n: series.len(),
            regular_grid: fit.spec.grid.is_regular(),
            files: files.clone(),
        },
    )?;
    Ok(files.into_iter().map(|f| dir.join(f)).collect())
}

/// Loads data, fits and writes all artifacts into `cfg.out_dir`.
pub fn fit(cfg: &RunConfig) -> Result<FitOutput> {
    let series = load_series(cfg)?;
    let out = run_fit(cfg, &series)?;
    write_fit(cfg, &series, &out, &cfg.out_dir)?;
    Ok(out)
}

/// Every intermediate of a calibration; data-derived fields are absent when
/// the inputs were given directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub order: Option<usize>,
    pub n: Option<usize>,
    pub upper: f64,
    pub omega2: Option<f64>,
    pub sigma_ref: f64,
    pub alpha: f64,
    pub zeta: f64,
}

impl From<Calibration> for CalibrationReport {
    fn from(c: Calibration) -> Self {
        CalibrationReport {
            order: Some(c.k.get()),
            n: Some(c.n),
            upper: c.upper,
            omega2: Some(c.omega2),
            sigma_ref: c.sigma_ref,
            alpha: c.alpha,
            zeta: c.zeta,
        }
    }
}

impl CalibrationReport {
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), sig4);
        format!(
            "order: {}\nn: {}\nU: {}\nomega^2: {}\nsigma_ref: {}\nalpha: {}\nzeta: {}\n",
            self.order.map_or("-".into(), |k| k.to_string()),
            self.n.map_or("-".into(), |n| n.to_string()),
            sig4(self.upper),
            opt(self.omega2),
            sig4(self.sigma_ref),
            sig4(self.alpha),
            sig4(self.zeta)
        )
    }
}

/// Calibration from explicit inputs: `sigma_ref` directly, or from `omega2`
/// with the grid size and order.
pub fn calibrate_direct(
    upper: f64,
    sigma_ref: Option<f64>,
    omega2: Option<f64>,
    n: Option<usize>,
    k: DiffOrder,
    alpha: f64,
) -> Result<CalibrationReport> {
    let (sigma_ref, n, order) = match (sigma_ref, omega2, n) {
        (Some(s), _, _) => (s, n, None),
        (None, Some(w), Some(n)) => (marginal_sd_ref(k, n, w)?, Some(n), Some(k.get())),
        _ => return Err(CliError::config("give --sigma-ref, or --omega2 with --n")),
    };
    Ok(CalibrationReport {
        order,
        n,
        upper,
        omega2,
        sigma_ref,
        alpha,
        zeta: zeta_formula(upper, sigma_ref, alpha)?,
    })
}

pub fn calibrate_data(cfg: &RunConfig) -> Result<CalibrationReport> {
    let series = load_series(cfg)?;
    let obs = observation_model(cfg, &series)?;
    Ok(calibrate(&series.y, &obs, cfg.order()?, cfg.alpha)?.into())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(t) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| spmrf::Error::Sampler(e.to_string()))?
            .install(f)),
        None => Ok(f()),
    }
}

/// Runs a simulation study, writing `study.csv`, `study_timing.csv` and
/// `study_summary.csv`. Fits run in parallel across the configured threads.
pub fn simulate(cfg: &SimulateConfig) -> Result<StudyReport> {
    let mut study = cfg.study()?;
    let threads = study.sampler.threads.take();
    let dir = cfg.out_dir.clone();
    Ok(with_threads(threads, move || run_study(&study, Some(&dir)))??)
}

/// One fit of a sensitivity sweep.
pub struct SweepFit {
    pub prior: PriorFamily,
    pub zeta: f64,
    pub fit: FitOutput,
}

/// Fits every prior at every `zeta` to the configured data.
pub fn sweep(cfg: &RunConfig, priors: &[PriorFamily], zetas: &[f64]) -> Result<Vec<SweepFit>> {
    let series = load_series(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut fits = Vec::new();
    for &prior in priors {
        for &z in zetas {
            let run = RunConfig { prior, zeta: ZetaSetting::Value(z), ..cfg.clone() };
            fits.push(SweepFit { prior, zeta: z, fit: run_fit(&run, &series)? });
        }
    }
    let mut w = fs::File::create(cfg.out_dir.join(SWEEP_FILE))?;
    writeln!(w, "prior,zeta,location,median,lower,upper")?;
    for f in &fits {
        for p in &f.fit.points {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                f.prior,
                full(f.zeta),
                full(p.location),
                full(p.natural_median),
                full(p.natural_q025),
                full(p.natural_q975)
            )?;
        }
    }
    let mut w = fs::File::create(cfg.out_dir.join(SWEEP_FITS_FILE))?;
    writeln!(w, "prior,zeta,divergences,max_rhat,gamma_median")?;
    for f in &fits {
        let s = &f.fit.summary;
        let gamma = s.param("gamma").map_or(f64::NAN, |g| g.median);
        writeln!(w, "{},{},{},{},{}", f.prior, full(f.zeta), s.divergences, full(s.max_rhat), full(gamma))?;
    }
    Ok(fits)
}

/// Trend draws of a fit, one slice per draw.
pub fn theta_draws(samples: &PosteriorSamples) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = samples
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("theta["))
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(spmrf::Error::InvalidInput("draws contain no theta columns".into()).into());
    }
    let mut out = Vec::with_capacity(samples.total_draws());
    for (c, chain) in samples.chains.iter().enumerate() {
        for i in 0..chain.n_draws {
            let d = samples.draw(c, i);
            out.push(idx.iter().map(|&j| d[j]).collect());
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ChangepointSummary {
    draws: usize,
    mode: f64,
    q25: f64,
    q75: f64,
    iqr: f64,
    order: usize,
    scale: &'static str,
}

/// Change-point posterior of the fit stored in `fit_dir`, written to `out_dir`.
/// Drops are measured on the natural scale (the rate for Poisson data) unless
/// `link_scale` is set. Returns the posterior and whether the fit was of order 2.
pub fn changepoint(fit_dir: &Path, out_dir: &Path, link_scale: bool) -> Result<(ChangepointPosterior, bool)> {
    let draws_path = fit_dir.join(DRAWS_FILE);
    if !draws_path.exists() {
        return Err(CliError::config(format!(
            "{} not found; refit with --draws",
            draws_path.display()
        )));
    }
    let cfg: RunConfig = crate::config::load_file(&fit_dir.join(MANIFEST_FILE))?;
    let x = read_locations(&fit_dir.join(SUMMARY_FILE))?;
    let samples = read_draws(&draws_path)?;
    let mut theta = theta_draws(&samples)?;
    if !link_scale {
        for v in theta.iter_mut().flatten() {
            *v = cfg.obs.natural(*v);
        }
    }
    let cp = changepoint_posterior(theta.iter().map(Vec::as_slice), &x)?;

    fs::create_dir_all(out_dir)?;
    let mut w = fs::File::create(out_dir.join(CHANGEPOINT_FILE))?;
    writeln!(w, "location,count,probability")?;
    for (i, loc) in cp.locations.iter().enumerate() {
        writeln!(w, "{},{},{}", full(*loc), cp.counts[i], full(cp.probability(i)))?;
    }
    write_json(
        &out_dir.join(CHANGEPOINT_SUMMARY_FILE),
        &ChangepointSummary {
            draws: cp.draws,
            mode: cp.mode,
            q25: cp.q25,
            q75: cp.q75,
            iqr: cp.iqr,
            order: cfg.order,
            scale: if link_scale { "link" } else { "natural" },
        },
    )?;
    Ok((cp, cfg.order == 2))
}

/// Recomputes per-parameter diagnostics from a draws file into `out_dir`.
pub fn diagnose(draws: &Path, out_dir: &Path) -> Result<FitSummary> {
    let samples = read_draws(draws)?;
    let summary = summarize(&samples)?;
    fs::create_dir_all(out_dir)?;
    write_diagnostics(&out_dir.join(DIAGNOSTICS_FILE), &summary)?;
    Ok(summary)
}
