//! Convergence and efficiency diagnostics and posterior summaries.
//!
//! R-hat and ESS both work on split chains: each chain is cut into a first
//! and second half (dropping the middle draw when the length is odd). ESS
//! follows Geyer's initial monotone sequence estimator with autocovariances
//! computed by FFT, and is capped at the total number of draws.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::PosteriorSamples;

/// ESS never exceeds `ESS_CAP_FACTOR` times the number of draws.
pub const ESS_CAP_FACTOR: f64 = 1.0;

/// A diagnostic value with a flag for degenerate (zero-variance) input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub value: f64,
    pub degenerate: bool,
}

fn split_chains(chains: &[Vec<f64>]) -> Result<Vec<&[f64]>> {
    let Some(first) = chains.first() else {
        return Err(Error::invalid("no chains supplied"));
    };
    let n = first.len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("chains must have equal lengths"));
    }
    if n < 4 {
        return Err(Error::invalid(format!("chains need at least 4 draws, got {n}")));
    }
    let half = n / 2;
    Ok(chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split potential scale reduction factor.
///
/// Zero total variance gives 1 flagged as degenerate; zero within-chain but
/// positive between-chain variance gives infinity.
pub fn rhat(chains: &[Vec<f64>]) -> Result<Diagnostic> {
    let split = split_chains(chains)?;
    let n = split[0].len() as f64;
    let means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let w = mean(&split.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let b = n * sample_var(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 {
            Diagnostic { value: 1.0, degenerate: true }
        } else {
            Diagnostic { value: f64::INFINITY, degenerate: false }
        });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok(Diagnostic {
        value: (var_plus / w).sqrt(),
        degenerate: false,
    })
}

/// Biased autocovariance at lags `0..n`, via zero-padded FFT.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf[..n].iter().map(|c| c.re * scale).collect()
}

/// Effective sample size over all chains.
pub fn ess(chains: &[Vec<f64>]) -> Result<Diagnostic> {
    let split = split_chains(chains)?;
    let m = split.len();
    let n = split[0].len();
    let acov: Vec<Vec<f64>> = split.iter().map(|c| autocovariance(c)).collect();
    let acov_mean: Vec<f64> = (0..n).map(|t| acov.iter().map(|a| a[t]).sum::<f64>() / m as f64).collect();
    let nf = n as f64;
    let means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let mean_var = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let var_plus = mean_var * (nf - 1.0) / nf + sample_var(&means);
    let total = (m * n) as f64;
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return Ok(Diagnostic { value: f64::NAN, degenerate: true });
    }

    let rho = |t: usize| 1.0 - (mean_var - acov_mean[t]) / var_plus;
    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut t = 1;
    while t + 5 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat[t + 1] = even;
            rho_hat[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if even > 0.0 && max_t + 1 < n {
        rho_hat[max_t + 1] = even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let tail = if max_t + 1 < n { rho_hat[max_t + 1] } else { 0.0 };
    let tau = -1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + tail;
    let value = (total / tau).min(ESS_CAP_FACTOR * total);
    Ok(Diagnostic { value, degenerate: false })
}

/// Linearly interpolated quantile of `sorted` (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-7 quantile of unsorted draws.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

pub fn ess_per_second(ess: f64, sampling_seconds: f64) -> f64 {
    ess / sampling_seconds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub ess: Diagnostic,
    pub rhat: Diagnostic,
    pub ess_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub params: Vec<ParamSummary>,
    /// Minimum and mean ESS per sampling CPU second over non-degenerate parameters.
    pub min_ess_per_sec: f64,
    pub mean_ess_per_sec: f64,
    pub total_cpu: f64,
    pub sampling_cpu: f64,
    pub divergences: usize,
    pub treedepth_saturated: usize,
    pub max_rhat: f64,
}

impl FitSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Summaries of `theta[1..=n]` in grid order.
    pub fn theta(&self) -> Vec<&ParamSummary> {
        self.params.iter().filter(|p| p.name.starts_with("theta[")).collect()
    }
}

/// Per-parameter summaries plus global efficiency figures.
pub fn summarize(samples: &PosteriorSamples) -> Result<FitSummary> {
    if samples.total_draws() == 0 {
        return Err(Error::invalid("no draws to summarize"));
    }
    let sampling_cpu = samples.sampling_cpu();
    let mut params = Vec::with_capacity(samples.n_params());
    for (p, name) in samples.names.iter().enumerate() {
        let chains = samples.param_chains(p);
        let mut pooled = chains.concat();
        let mean_v = mean(&pooled);
        let sd = if pooled.len() > 1 { sample_var(&pooled).sqrt() } else { 0.0 };
        pooled.sort_by(f64::total_cmp);
        let (ess_d, rhat_d) = if chains[0].len() >= 4 {
            (ess(&chains)?, rhat(&chains)?)
        } else {
            let nan = Diagnostic { value: f64::NAN, degenerate: true };
            (nan, nan)
        };
        params.push(ParamSummary {
            name: name.clone(),
            mean: mean_v,
            sd,
            median: quantile_sorted(&pooled, 0.5),
            q025: quantile_sorted(&pooled, 0.025),
            q975: quantile_sorted(&pooled, 0.975),
            ess_per_sec: ess_per_second(ess_d.value, sampling_cpu),
            ess: ess_d,
            rhat: rhat_d,
        });
    }
    let rates: Vec<f64> = params
        .iter()
        .filter(|p| !p.ess.degenerate && p.ess_per_sec.is_finite())
        .map(|p| p.ess_per_sec)
        .collect();
    let (min_r, mean_r) = if rates.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (rates.iter().copied().fold(f64::INFINITY, f64::min), mean(&rates))
    };
    let max_rhat = params
        .iter()
        .filter(|p| !p.rhat.degenerate)
        .map(|p| p.rhat.value)
        .fold(f64::NAN, f64::max);
    Ok(FitSummary {
        params,
        min_ess_per_sec: min_r,
        mean_ess_per_sec: mean_r,
        total_cpu: samples.total_cpu(),
        sampling_cpu,
        divergences: samples.divergences(),
        treedepth_saturated: samples.treedepth_saturated(),
        max_rhat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_of_five() {
        assert_eq!(quantile(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5), 3.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert!((quantile(&[0.0, 10.0], 0.025) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ess_per_second_example() {
        assert_eq!(ess_per_second(2000.0, 100.0), 20.0);
    }

    #[test]
    fn stuck_chains() {
        let r = rhat(&[vec![0.0; 100], vec![1.0; 100]]).unwrap();
        assert!(r.value > 10.0);
        let r = rhat(&[vec![2.0; 100], vec![2.0; 100]]).unwrap();
        assert!(r.degenerate && r.value == 1.0);
        assert!(ess(&[vec![2.0; 100]]).unwrap().degenerate);
    }

    #[test]
    fn trend_inflates_split_rhat() {
        let chain: Vec<f64> = (0..200).map(|i| i as f64 / 20.0 + (i as f64 * 0.7).sin()).collect();
        assert!(rhat(&[chain]).unwrap().value > 1.1);
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
        let a = autocovariance(&x);
        let m = mean(&x);
        for t in [0, 1, 5, 36] {
            let direct: f64 = (0..x.len() - t).map(|i| (x[i] - m) * (x[i + t] - m)).sum::<f64>() / x.len() as f64;
            assert!((a[t] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_short_or_ragged_chains() {
        assert!(rhat(&[vec![1.0, 2.0, 3.0]]).is_err());
        assert!(ess(&[vec![1.0; 10], vec![1.0; 9]]).is_err());
        assert!(rhat(&[]).is_err());
    }

    proptest! {
        #[test]
        fn quantiles_are_monotone_and_permutation_invariant(
            mut x in prop::collection::vec(-100.0f64..100.0, 1..60),
            p in 0.0f64..1.0,
            q in 0.0f64..1.0,
        ) {
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(quantile(&x, lo) <= quantile(&x, hi));
            let before = quantile(&x, p);
            x.reverse();
            prop_assert_eq!(before, quantile(&x, p));
        }

        #[test]
        fn diagnostics_are_affine_invariant(
            seed in 0u64..1000,
            a in 0.1f64..50.0,
            b in -100.0f64..100.0,
        ) {
            let chains: Vec<Vec<f64>> = (0..3u64)
                .map(|c| (0..64u64).map(|i| (((seed + 31 * c + 7 * i) * 2_654_435_761) % 1000) as f64 / 1000.0).collect())
                .collect();
            let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| a * v + b).collect()).collect();
            let (r0, r1) = (rhat(&chains).unwrap().value, rhat(&moved).unwrap().value);
            let (e0, e1) = (ess(&chains).unwrap().value, ess(&moved).unwrap().value);
            prop_assert!((r0 - r1).abs() < 1e-8 * r0);
            prop_assert!((e0 - e1).abs() < 1e-6 * e0);
            prop_assert!(e0 <= ESS_CAP_FACTOR * 3.0 * 64.0);
        }
    }
}
