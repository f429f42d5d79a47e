//! File writers and readers. Machine files carry 17 significant digits so that
//! every `f64` survives a write and re-read unchanged.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use spmrf::diagnostics::{quantile, FitSummary};
use spmrf::sampler::{ChainResult, ChainTiming, PosteriorSamples};
use spmrf::Error;

use crate::config::ObsFamily;
use crate::error::Result;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const DRAWS_FILE: &str = "draws.csv";
pub const PLOT_FILE: &str = "plot.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
/// CPU times and ESS per second; the only fit output that varies between runs.
pub const TIMING_FILE: &str = "timing.json";

/// Full-precision rendering used in every machine-readable file.
pub fn full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Four significant figures for human-readable reports.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-3..5).contains(&mag) {
        return format!("{x:.3e}");
    }
    let s = format!("{:.*}", (3 - mag).max(0) as usize, x);
    // Rounding can carry into the next decade, e.g. 9.9996 -> 10.000.
    let carried = s.parse::<f64>().map_or(mag, |v| v.abs().log10().floor() as i32);
    if carried > mag {
        format!("{:.*}", (3 - carried).max(0) as usize, x)
    } else {
        s
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Posterior median and 95% band of one trend value on both scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendPoint {
    pub location: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub natural_median: f64,
    pub natural_q025: f64,
    pub natural_q975: f64,
}

/// Trend summaries with natural-scale quantiles taken from transformed draws.
pub fn trend_points(samples: &PosteriorSamples, summary: &FitSummary, x: &[f64], obs: ObsFamily) -> Result<Vec<TrendPoint>> {
    let theta = summary.theta();
    if theta.len() != x.len() {
        return Err(Error::LengthMismatch { expected: x.len(), found: theta.len() }.into());
    }
    theta
        .iter()
        .zip(x)
        .map(|(p, &location)| {
            let idx = samples
                .param_index(&p.name)
                .ok_or_else(|| Error::InvalidInput(format!("no draws for {}", p.name)))?;
            let natural: Vec<f64> = samples.pooled(idx).into_iter().map(|t| obs.natural(t)).collect();
            Ok(TrendPoint {
                location,
                median: p.median,
                q025: p.q025,
                q975: p.q975,
                natural_median: quantile(&natural, 0.5),
                natural_q025: quantile(&natural, 0.025),
                natural_q975: quantile(&natural, 0.975),
            })
        })
        .collect()
}

pub fn write_summary(path: &Path, points: &[TrendPoint]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "location,median,q025,q975,natural_median,natural_q025,natural_q975")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            full(p.location),
            full(p.median),
            full(p.q025),
            full(p.q975),
            full(p.natural_median),
            full(p.natural_q025),
            full(p.natural_q975)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Location, observation and natural-scale median with its 95% band.
pub fn write_plot(path: &Path, points: &[TrendPoint], observed: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "location,observed,median,lower,upper")?;
    for (p, y) in points.iter().zip(observed) {
        writeln!(
            w,
            "{},{},{},{},{}",
            full(p.location),
            full(*y),
            full(p.natural_median),
            full(p.natural_q025),
            full(p.natural_q975)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Per-parameter moments, quantiles, ESS and R-hat. ESS per second lives in
/// the timing file.
pub fn write_diagnostics(path: &Path, summary: &FitSummary) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "name,mean,sd,median,q025,q975,ess,rhat,degenerate")?;
    for p in &summary.params {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.name,
            full(p.mean),
            full(p.sd),
            full(p.median),
            full(p.q025),
            full(p.q975),
            full(p.ess.value),
            full(p.rhat.value),
            p.ess.degenerate || p.rhat.degenerate
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_draws(path: &Path, samples: &PosteriorSamples) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "chain,draw")?;
    for name in &samples.names {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (c, chain) in samples.chains.iter().enumerate() {
        for i in 0..chain.n_draws {
            write!(w, "{c},{i}")?;
            for v in samples.draw(c, i) {
                write!(w, ",{}", full(*v))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a draws file back into samples with zero timings and sampler statistics.
pub fn read_draws(path: &Path) -> Result<PosteriorSamples> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "chain" || &headers[1] != "draw" {
        return Err(Error::InvalidInput(format!("{}: not a draws file", path.display())).into());
    }
    let names: Vec<String> = headers.iter().skip(2).map(String::from).collect();
    let mut chains: Vec<ChainResult> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let bad = || Error::InvalidInput(format!("{}: malformed row {:?}", path.display(), record.position().map(|p| p.line())));
        let c: usize = record[0].parse().map_err(|_| bad())?;
        if c == chains.len() {
            chains.push(ChainResult {
                draws: Vec::new(),
                n_draws: 0,
                divergences: 0,
                warmup_divergences: 0,
                treedepth_saturated: 0,
                n_leapfrog: 0,
                mean_accept_stat: f64::NAN,
                step_size: f64::NAN,
                inv_metric: Vec::new(),
                timing: ChainTiming::default(),
            });
        } else if c + 1 != chains.len() {
            return Err(bad().into());
        }
        let chain = chains.last_mut().expect("a chain was pushed");
        for field in record.iter().skip(2) {
            chain.draws.push(field.parse().map_err(|_| bad())?);
        }
        chain.n_draws += 1;
    }
    if chains.is_empty() || chains.iter().any(|c| c.n_draws != chains[0].n_draws) {
        return Err(Error::InvalidInput(format!("{}: chains are empty or of unequal length", path.display())).into());
    }
    Ok(PosteriorSamples { names, chains })
}

/// Locations from the first column of a summary file.
pub fn read_locations(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .records()
        .map(|r| {
            let r = r?;
            r[0].parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("{}: bad location '{}'", path.display(), &r[0])).into())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_figures() {
        assert_eq!(sig4(0.010_503), "0.01050");
        assert_eq!(sig4(6.4716), "6.472");
        assert_eq!(sig4(906.71), "906.7");
        assert_eq!(sig4(9.999_96), "10.00");
        assert_eq!(sig4(5.89e-5), "5.890e-5");
        assert_eq!(sig4(-1234.6), "-1235");
        assert_eq!(sig4(0.0), "0");
    }

    #[test]
    fn full_precision_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(full(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
