//! No-U-Turn Hamiltonian Monte Carlo with warmup adaptation.
//!
//! Each chain owns a `ChaCha8Rng` seeded with `seed ^ splitmix64(chain + 1)`,
//! so results do not depend on whether chains run sequentially or in
//! parallel. Warmup tunes the step size by dual averaging toward
//! `target_accept` and estimates a diagonal inverse metric over doubling
//! windows; sampling then runs with frozen tuning and keeps every
//! `thin`-th iteration.

mod adapt;
mod nuts;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Posterior};

pub use adapt::{BASE_WINDOW, INIT_BUFFER_FRACTION, TERM_BUFFER_FRACTION};
pub use nuts::{hamiltonian, kinetic_energy, leapfrog, MAX_DELTA_H};

/// A differentiable log density on an unconstrained space.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    /// Non-finite values are treated as divergences by the sampler.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Names of the values appended by [`Target::constrain_into`].
    fn param_names(&self) -> Vec<String>;

    /// Appends the reported (constrained) parameters for state `x`.
    fn constrain_into(&self, x: &[f64], out: &mut Vec<f64>);
}

/// Half-width of the uniform initialization box on unconstrained coordinates.
pub const INIT_RADIUS: f64 = 2.0;
/// Initialization attempts before giving up.
pub const INIT_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub iters: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_treedepth: usize,
    pub seed: u64,
    /// Worker threads for running chains; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 500,
            iters: 2500,
            thin: 5,
            target_accept: 0.8,
            max_treedepth: 10,
            seed: 1,
            threads: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::invalid("at least one chain is required"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        if self.iters / self.thin == 0 {
            return Err(Error::invalid(format!(
                "iters = {} with thin = {} retains no draws",
                self.iters, self.thin
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if self.max_treedepth == 0 {
            return Err(Error::invalid("max_treedepth must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        self.iters / self.thin
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainTiming {
    pub warmup_cpu: f64,
    pub sampling_cpu: f64,
    pub warmup_wall: f64,
    pub sampling_wall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    /// Row-major `n_draws x n_params` constrained draws.
    pub draws: Vec<f64>,
    pub n_draws: usize,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub treedepth_saturated: usize,
    pub n_leapfrog: u64,
    pub mean_accept_stat: f64,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub timing: ChainTiming,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub chains: Vec<ChainResult>,
}

impl PosteriorSamples {
    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.n_draws)
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.n_draws).sum()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of parameter `p` in chain `c`.
    pub fn chain_param(&self, c: usize, p: usize) -> Vec<f64> {
        let np = self.n_params();
        let chain = &self.chains[c];
        (0..chain.n_draws).map(|i| chain.draws[i * np + p]).collect()
    }

    /// Draws of parameter `p`, one vector per chain.
    pub fn param_chains(&self, p: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains()).map(|c| self.chain_param(c, p)).collect()
    }

    /// Draws of parameter `p` from all chains, concatenated in chain order.
    pub fn pooled(&self, p: usize) -> Vec<f64> {
        self.param_chains(p).concat()
    }

    /// Draw `i` of chain `c` across all parameters.
    pub fn draw(&self, c: usize, i: usize) -> &[f64] {
        let np = self.n_params();
        &self.chains[c].draws[i * np..(i + 1) * np]
    }

    pub fn divergences(&self) -> usize {
        self.chains.iter().map(|c| c.divergences).sum()
    }

    pub fn treedepth_saturated(&self) -> usize {
        self.chains.iter().map(|c| c.treedepth_saturated).sum()
    }

    /// Sampling-phase CPU seconds summed over chains.
    pub fn sampling_cpu(&self) -> f64 {
        self.chains.iter().map(|c| c.timing.sampling_cpu).sum()
    }

    /// Warmup plus sampling CPU seconds summed over chains.
    pub fn total_cpu(&self) -> f64 {
        self.chains
            .iter()
            .map(|c| c.timing.warmup_cpu + c.timing.sampling_cpu)
            .sum()
    }
}

/// The splitmix64 finalizer, used to derive per-chain seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ splitmix64(chain as u64 + 1))
}

fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// Draws a starting state uniformly on `(-2, 2)^dim`, retrying until the log
/// density and its gradient are finite.
pub fn init_state<T: Target + ?Sized, R: Rng>(target: &T, rng: &mut R) -> Result<Vec<f64>> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    for _ in 0..INIT_ATTEMPTS {
        let x: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-INIT_RADIUS..INIT_RADIUS))
            .collect();
        let lp = target.log_density_grad(&x, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(x);
        }
    }
    Err(Error::Initialization {
        attempts: INIT_ATTEMPTS,
    })
}

fn run_chain<T: Target + ?Sized>(target: &T, cfg: &SamplerConfig, chain: usize) -> Result<ChainResult> {
    let mut rng = chain_rng(cfg.seed, chain);
    let dim = target.dim();
    let n_params = target.param_names().len();
    let cpu0 = thread_cpu_seconds();
    let wall0 = Instant::now();

    let q = init_state(target, &mut rng)?;
    let mut z = nuts::Point::new(target, q);
    let mut inv_metric = vec![1.0; dim];
    let mut eps = nuts::init_stepsize(target, &z, &inv_metric, 1.0, &mut rng).map_err(Error::Sampler)?;
    let mut dual = adapt::DualAveraging::new(cfg.target_accept);
    dual.set_mu((10.0 * eps).ln());
    let mut windows = adapt::WindowedMetric::new(cfg.warmup, dim);

    let mut warmup_divergences = 0;
    for _ in 0..cfg.warmup {
        let info = nuts::transition(target, &mut z, &inv_metric, eps, cfg.max_treedepth, &mut rng);
        warmup_divergences += info.divergent as usize;
        eps = dual.learn(info.accept_stat);
        if windows.learn(&mut inv_metric, &z.q) {
            // The new metric changes the scale of a good step size.
            eps = nuts::init_stepsize(target, &z, &inv_metric, eps, &mut rng).map_err(Error::Sampler)?;
            dual.set_mu((10.0 * eps).ln());
            dual.restart();
        }
    }
    if cfg.warmup > 0 {
        eps = dual.final_stepsize();
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Sampler(format!("adapted step size {eps} is not usable")));
    }

    let cpu1 = thread_cpu_seconds();
    let wall1 = Instant::now();

    let n_draws = cfg.draws_per_chain();
    let mut draws = Vec::with_capacity(n_draws * n_params);
    let mut divergences = 0;
    let mut saturated = 0;
    let mut n_leapfrog = 0u64;
    let mut accept_sum = 0.0;
    for i in 0..cfg.iters {
        let info = nuts::transition(target, &mut z, &inv_metric, eps, cfg.max_treedepth, &mut rng);
        divergences += info.divergent as usize;
        saturated += (info.depth >= cfg.max_treedepth) as usize;
        n_leapfrog += info.n_leapfrog as u64;
        accept_sum += info.accept_stat;
        if (i + 1) % cfg.thin == 0 {
            target.constrain_into(&z.q, &mut draws);
        }
    }
    debug_assert_eq!(draws.len(), n_draws * n_params);

    let cpu2 = thread_cpu_seconds();
    let wall2 = Instant::now();
    Ok(ChainResult {
        draws,
        n_draws,
        divergences,
        warmup_divergences,
        treedepth_saturated: saturated,
        n_leapfrog,
        mean_accept_stat: accept_sum / cfg.iters as f64,
        step_size: eps,
        inv_metric,
        timing: ChainTiming {
            warmup_cpu: cpu1 - cpu0,
            sampling_cpu: cpu2 - cpu1,
            warmup_wall: (wall1 - wall0).as_secs_f64(),
            sampling_wall: (wall2 - wall1).as_secs_f64(),
        },
    })
}

/// Runs `cfg.chains` independent NUTS chains on `target`.
pub fn sample<T: Target + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    if target.dim() == 0 {
        return Err(Error::invalid("target has no parameters"));
    }
    let run = |c: usize| run_chain(target, cfg, c);
    let results: Vec<Result<ChainResult>> = match cfg.threads {
        Some(1) => (0..cfg.chains).map(run).collect(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Sampler(e.to_string()))?
            .install(|| (0..cfg.chains).into_par_iter().map(run).collect()),
        None => (0..cfg.chains).into_par_iter().map(run).collect(),
    };
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSamples {
        names: target.param_names(),
        chains,
    })
}

/// Fits `spec` to `y` with the hierarchical or marginal posterior named by
/// `spec.formulation`.
pub fn nuts_run(spec: &ModelSpec, y: &[f64], cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    let post = Posterior::new(spec, y)?;
    sample(&post, cfg)
}
