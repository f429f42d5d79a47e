use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{metrics, simulate_observations, trend_values, TrendScenario};
use crate::diagnostics::summarize;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{default_theta1_prior, ModelSpec, Posterior, PriorFamily, ScalePrior, DEFAULT_SIGMA_SCALE, DEFAULT_ZETA};
use crate::sampler::{sample, splitmix64, SamplerConfig};

pub const ROWS_FILE: &str = "study.csv";
pub const TIMING_FILE: &str = "study_timing.csv";
pub const SUMMARY_FILE: &str = "study_summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<TrendScenario>,
    pub priors: Vec<PriorFamily>,
    pub replicates: usize,
    pub sampler: SamplerConfig,
    /// Half-Cauchy scale on the global smoothing parameter.
    pub zeta: f64,
    /// Half-Cauchy scale on the observation sd (normal data).
    pub sigma_scale: f64,
    /// Base seed for data generation and per-fit sampler seeds.
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(scenarios: Vec<TrendScenario>, replicates: usize) -> Self {
        StudyConfig {
            scenarios,
            priors: PriorFamily::ALL.to_vec(),
            replicates,
            sampler: SamplerConfig::default(),
            zeta: DEFAULT_ZETA,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("a study needs at least one replicate"));
        }
        if self.scenarios.is_empty() || self.priors.is_empty() {
            return Err(Error::invalid("a study needs at least one scenario and one prior"));
        }
        if !(self.zeta > 0.0 && self.sigma_scale > 0.0) {
            return Err(Error::invalid("zeta and sigma_scale must be positive"));
        }
        let mut labels: Vec<String> = self.scenarios.iter().map(|s| s.label()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.scenarios.len() {
            return Err(Error::invalid("scenario labels must be unique"));
        }
        self.sampler.validate()
    }
}

/// One fit of one prior to one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: String,
    pub prior: PriorFamily,
    pub replicate: usize,
    /// Empty on success, otherwise the error message.
    pub error: String,
    pub mad: f64,
    pub mciw: f64,
    pub masv: f64,
    pub tmasv: f64,
    pub min_ess: f64,
    pub mean_ess: f64,
    pub max_rhat: f64,
    pub divergences: usize,
    /// Machine-dependent timings, kept out of the main results file.
    #[serde(skip)]
    pub timing: Option<RowTiming>,
}

impl StudyRow {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }

    /// Mean ESS per sampling CPU second, when timing is known.
    pub fn mean_ess_per_sec(&self) -> Option<f64> {
        self.timing.map(|t| self.mean_ess / t.sampling_cpu)
    }

    fn key(&self) -> (String, PriorFamily, usize) {
        (self.scenario.clone(), self.prior, self.replicate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowTiming {
    pub total_cpu: f64,
    pub sampling_cpu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimingRecord {
    scenario: String,
    prior: PriorFamily,
    replicate: usize,
    total_cpu: f64,
    sampling_cpu: f64,
}

/// Mean with a two-sided 95% Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetric {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl AggregateMetric {
    pub fn from_values(x: &[f64]) -> Self {
        let n = x.len();
        if n == 0 {
            return AggregateMetric { mean: f64::NAN, lo: f64::NAN, hi: f64::NAN };
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return AggregateMetric { mean, lo: f64::NAN, hi: f64::NAN };
        }
        let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("degrees of freedom are positive")
            .inverse_cdf(0.975);
        let half = t * sd / (n as f64).sqrt();
        AggregateMetric { mean, lo: mean - half, hi: mean + half }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub prior: PriorFamily,
    pub fits: usize,
    pub failures: usize,
    pub mad: AggregateMetric,
    pub mciw: AggregateMetric,
    pub masv: AggregateMetric,
    pub tmasv: f64,
    /// Mean over fits of the mean ESS per sampling CPU second (NaN when unknown).
    pub mean_ess_per_sec: f64,
    pub min_ess_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    /// Rows sorted by scenario order, prior order and replicate.
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<ScenarioSummary>,
}

impl StudyReport {
    pub fn summary(&self, scenario: &str, prior: PriorFamily) -> Option<&ScenarioSummary> {
        self.summaries.iter().find(|s| s.scenario == scenario && s.prior == prior)
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of the dataset for `replicate` of `scenario`; shared by all priors.
pub fn scenario_seed(base: u64, scenario: &TrendScenario, replicate: usize) -> u64 {
    splitmix64(base ^ splitmix64(fnv1a(&scenario.label()) ^ splitmix64(replicate as u64)))
}

fn fit_seed(base: u64, scenario: &TrendScenario, replicate: usize, prior: PriorFamily) -> u64 {
    splitmix64(scenario_seed(base, scenario, replicate) ^ fnv1a(prior.name()))
}

fn fit_one(cfg: &StudyConfig, sc: &TrendScenario, replicate: usize, prior: PriorFamily) -> StudyRow {
    let mut row = StudyRow {
        scenario: sc.label(),
        prior,
        replicate,
        error: String::new(),
        mad: f64::NAN,
        mciw: f64::NAN,
        masv: f64::NAN,
        tmasv: f64::NAN,
        min_ess: f64::NAN,
        mean_ess: f64::NAN,
        max_rhat: f64::NAN,
        divergences: 0,
        timing: None,
    };
    let result = (|| -> Result<()> {
        let truth = trend_values(sc)?;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed(cfg.seed, sc, replicate));
        let y = simulate_observations(&truth, &sc.obs, &mut rng)?;
        let obs = sc.obs.model(sc.n, cfg.sigma_scale);
        let (mu, omega) = default_theta1_prior(&y, &obs)?;
        let spec = ModelSpec::new(Grid::unit(sc.n), sc.kind.model_order(), prior, obs)
            .with_theta1_prior(mu, omega)
            .with_global_scale(ScalePrior::HalfCauchy { scale: cfg.zeta });
        let post = Posterior::new(&spec, &y)?;
        let scfg = SamplerConfig {
            seed: fit_seed(cfg.seed, sc, replicate, prior),
            ..cfg.sampler.clone()
        };
        let samples = sample(&post, &scfg)?;
        let summary = summarize(&samples)?;
        let theta = summary.theta();
        let med: Vec<f64> = theta.iter().map(|p| p.median).collect();
        let lo: Vec<f64> = theta.iter().map(|p| p.q025).collect();
        let hi: Vec<f64> = theta.iter().map(|p| p.q975).collect();
        let m = metrics(&med, &lo, &hi, &truth)?;
        let ess: Vec<f64> = summary
            .params
            .iter()
            .filter(|p| !p.ess.degenerate)
            .map(|p| p.ess.value)
            .collect();
        row.mad = m.mad;
        row.mciw = m.mciw;
        row.masv = m.masv;
        row.tmasv = m.tmasv;
        row.min_ess = ess.iter().copied().fold(f64::INFINITY, f64::min);
        row.mean_ess = ess.iter().sum::<f64>() / ess.len() as f64;
        row.max_rhat = summary.max_rhat;
        row.divergences = summary.divergences;
        row.timing = Some(RowTiming {
            total_cpu: summary.total_cpu,
            sampling_cpu: summary.sampling_cpu,
        });
        Ok(())
    })();
    if let Err(e) = result {
        row.error = e.to_string();
    }
    row
}

fn read_rows(dir: &Path) -> Result<Vec<StudyRow>> {
    let path = dir.join(ROWS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rows: Vec<StudyRow> = csv::Reader::from_path(&path)?
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    let timing_path = dir.join(TIMING_FILE);
    if timing_path.exists() {
        let records: Vec<TimingRecord> = csv::Reader::from_path(&timing_path)?
            .deserialize()
            .collect::<std::result::Result<_, _>>()?;
        let map: BTreeMap<_, _> = records
            .into_iter()
            .map(|r| ((r.scenario, r.prior, r.replicate), RowTiming { total_cpu: r.total_cpu, sampling_cpu: r.sampling_cpu }))
            .collect();
        for row in &mut rows {
            row.timing = map.get(&row.key()).copied();
        }
    }
    Ok(rows)
}

struct Appender {
    rows: csv::Writer<File>,
    timing: csv::Writer<File>,
}

impl Appender {
    fn open(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<(File, bool)> {
            let path = dir.join(name);
            let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
            Ok((OpenOptions::new().create(true).append(true).open(path)?, fresh))
        };
        let (rf, rfresh) = open(ROWS_FILE)?;
        let (tf, tfresh) = open(TIMING_FILE)?;
        Ok(Appender {
            rows: csv::WriterBuilder::new().has_headers(rfresh).from_writer(rf),
            timing: csv::WriterBuilder::new().has_headers(tfresh).from_writer(tf),
        })
    }

    fn push(&mut self, row: &StudyRow) -> Result<()> {
        self.rows.serialize(row)?;
        self.rows.flush()?;
        if let Some(t) = row.timing {
            self.timing.serialize(TimingRecord {
                scenario: row.scenario.clone(),
                prior: row.prior,
                replicate: row.replicate,
                total_cpu: t.total_cpu,
                sampling_cpu: t.sampling_cpu,
            })?;
            self.timing.flush()?;
        }
        Ok(())
    }
}

fn write_sorted(dir: &Path, rows: &[StudyRow], summaries: &[ScenarioSummary]) -> Result<()> {
    let tmp = dir.join(format!("{ROWS_FILE}.tmp"));
    let mut w = csv::Writer::from_path(&tmp)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    drop(w);
    fs::rename(&tmp, dir.join(ROWS_FILE))?;

    let mut w = csv::Writer::from_path(dir.join(TIMING_FILE))?;
    for r in rows {
        if let Some(t) = r.timing {
            w.serialize(TimingRecord {
                scenario: r.scenario.clone(),
                prior: r.prior,
                replicate: r.replicate,
                total_cpu: t.total_cpu,
                sampling_cpu: t.sampling_cpu,
            })?;
        }
    }
    w.flush()?;

    let mut f = File::create(dir.join(SUMMARY_FILE))?;
    writeln!(f, "scenario,prior,fits,failures,mad_mean,mad_lo,mad_hi,mciw_mean,mciw_lo,mciw_hi,masv_mean,masv_lo,masv_hi,tmasv")?;
    for s in summaries {
        let m = |a: &AggregateMetric| format!("{:.16e},{:.16e},{:.16e}", a.mean, a.lo, a.hi);
        writeln!(
            f,
            "{},{},{},{},{},{},{},{:.16e}",
            s.scenario,
            s.prior,
            s.fits,
            s.failures,
            m(&s.mad),
            m(&s.mciw),
            m(&s.masv),
            s.tmasv
        )?;
    }
    Ok(())
}

fn summarize_rows(cfg: &StudyConfig, rows: &[StudyRow]) -> Vec<ScenarioSummary> {
    let mut out = Vec::new();
    for sc in &cfg.scenarios {
        let label = sc.label();
        for &prior in &cfg.priors {
            let group: Vec<&StudyRow> = rows.iter().filter(|r| r.scenario == label && r.prior == prior).collect();
            let ok: Vec<&&StudyRow> = group.iter().filter(|r| r.ok()).collect();
            let col = |f: fn(&StudyRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            let rates: Vec<f64> = ok.iter().filter_map(|r| r.mean_ess_per_sec()).collect();
            let min_rates: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.timing.map(|t| r.min_ess / t.sampling_cpu))
                .collect();
            let avg = |x: &[f64]| if x.is_empty() { f64::NAN } else { x.iter().sum::<f64>() / x.len() as f64 };
            out.push(ScenarioSummary {
                scenario: label.clone(),
                prior,
                fits: ok.len(),
                failures: group.len() - ok.len(),
                mad: AggregateMetric::from_values(&col(|r| r.mad)),
                mciw: AggregateMetric::from_values(&col(|r| r.mciw)),
                masv: AggregateMetric::from_values(&col(|r| r.masv)),
                tmasv: ok.first().map_or(f64::NAN, |r| r.tmasv),
                mean_ess_per_sec: avg(&rates),
                min_ess_per_sec: avg(&min_rates),
            });
        }
    }
    out
}

/// Fits every prior to `replicates` simulated datasets of each scenario.
///
/// With `out_dir`, each finished fit is appended to `study.csv` (results) and
/// `study_timing.csv` (CPU seconds) as it completes, fits already present are
/// skipped on a rerun, and the files are rewritten in sorted order at the end
/// together with `study_summary.csv`. Failed fits are recorded, not fatal.
pub fn run_study(cfg: &StudyConfig, out_dir: Option<&Path>) -> Result<StudyReport> {
    cfg.validate()?;
    let existing = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            read_rows(dir)?
        }
        None => Vec::new(),
    };
    let done: BTreeMap<_, StudyRow> = existing.into_iter().map(|r| (r.key(), r)).collect();

    let mut jobs = Vec::new();
    for sc in &cfg.scenarios {
        for replicate in 0..cfg.replicates {
            for &prior in &cfg.priors {
                jobs.push((*sc, replicate, prior));
            }
        }
    }
    let pending: Vec<_> = jobs
        .iter()
        .filter(|(sc, r, p)| !done.contains_key(&(sc.label(), *p, *r)))
        .copied()
        .collect();

    let appender = match out_dir {
        Some(dir) => Some(Mutex::new(Appender::open(dir)?)),
        None => None,
    };
    let fresh: Vec<StudyRow> = pending
        .par_iter()
        .map(|(sc, replicate, prior)| -> Result<StudyRow> {
            let row = fit_one(cfg, sc, *replicate, *prior);
            if let Some(a) = &appender {
                a.lock().map_err(|_| Error::Sampler("study writer poisoned".into()))?.push(&row)?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    drop(appender);

    let mut by_key = done;
    for row in fresh {
        by_key.insert(row.key(), row);
    }
    let scenario_rank: BTreeMap<String, usize> =
        cfg.scenarios.iter().enumerate().map(|(i, s)| (s.label(), i)).collect();
    let prior_rank = |p: PriorFamily| cfg.priors.iter().position(|&q| q == p).unwrap_or(usize::MAX);
    let mut rows: Vec<StudyRow> = jobs
        .iter()
        .filter_map(|(sc, r, p)| by_key.get(&(sc.label(), *p, *r)).cloned())
        .collect();
    rows.sort_by_key(|r| (scenario_rank[&r.scenario], prior_rank(r.prior), r.replicate));

    let summaries = summarize_rows(cfg, &rows);
    if let Some(dir) = out_dir {
        write_sorted(dir, &rows, &summaries)?;
    }
    Ok(StudyReport { rows, summaries })
}

/// Paths of the files written by [`run_study`].
pub fn study_files(dir: &Path) -> [PathBuf; 3] {
    [dir.join(ROWS_FILE), dir.join(TIMING_FILE), dir.join(SUMMARY_FILE)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_interval() {
        let a = AggregateMetric::from_values(&[1.0, 2.0, 3.0]);
        assert_eq!(a.mean, 2.0);
        // t(0.975, 2) = 4.302653
        assert!((a.hi - 2.0 - 4.302_652_729_7 / 3f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn zero_replicates_rejected() {
        let cfg = StudyConfig::new(vec![TrendScenario::new(super::super::TrendKind::Constant, super::super::ObsKind::Poisson)], 0);
        assert!(run_study(&cfg, None).is_err());
    }
}
