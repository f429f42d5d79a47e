use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spmrf::calibrate::precision_matrix;
use spmrf::diagnostics::ess;
use spmrf::densities::half_cauchy_cdf;
use spmrf::grid::{DiffOrder, Grid};
use spmrf::model::{ModelSpec, ObservationModel, Posterior, PriorFamily, ScalePrior};
use spmrf::sampler::*;
use spmrf::Error;
use spmrf_testkit::{inverse, ks_critical, ks_statistic, normal_cdf};

struct StdNormal(usize);

impl Target for StdNormal {
    fn dim(&self) -> usize {
        self.0
    }
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = -v;
        }
        -0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
    fn param_names(&self) -> Vec<String> {
        (0..self.0).map(|i| format!("x[{i}]")).collect()
    }
    fn constrain_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(x);
    }
}

/// Finite only inside the unit ball.
struct Ball;

impl Target for Ball {
    fn dim(&self) -> usize {
        3
    }
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        if x.iter().map(|v| v * v).sum::<f64>() < 0.25 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
    fn param_names(&self) -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }
    fn constrain_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(x);
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn config(chains: usize, iters: usize, thin: usize, seed: u64) -> SamplerConfig {
    SamplerConfig { chains, warmup: 500, iters, thin, seed, threads: Some(1), ..Default::default() }
}

#[test]
fn standard_normal_moments() {
    let s = sample(&StdNormal(5), &config(4, 2500, 5, 21)).unwrap();
    assert_eq!(s.total_draws(), 2000);
    assert_eq!(s.divergences(), 0);
    for p in 0..5 {
        let (m, sd) = mean_sd(&s.pooled(p));
        let n_eff = ess(&s.param_chains(p)).unwrap().value;
        let mcse = sd / n_eff.sqrt();
        assert!(m.abs() < 3.0 * mcse, "coord {p}: mean {m}, mcse {mcse}");
        assert!((sd - 1.0).abs() < 0.1, "coord {p}: sd {sd}");
    }
}

#[test]
fn conjugate_gmrf_posterior_mean() {
    let n = 25;
    let (mu, omega, gamma, sigma) = (1.0, 3.0, 0.5, 1.2);
    let y: Vec<f64> = (0..n).map(|i| 2.0 * (i as f64 / 4.0).sin() + 0.1 * i as f64).collect();
    let spec = ModelSpec::new(
        Grid::unit(n),
        DiffOrder::First,
        PriorFamily::Normal,
        ObservationModel::Normal { sigma: ScalePrior::Fixed(sigma) },
    )
    .with_theta1_prior(mu, omega)
    .with_global_scale(ScalePrior::Fixed(gamma));

    let q = precision_matrix(DiffOrder::First, n, omega * omega, gamma).unwrap();
    let post_prec = &q + DMatrix::identity(n, n) / (sigma * sigma);
    // Q mu 1 only has the theta[1] term because Q annihilates constants elsewhere.
    let rhs = &q * DVector::from_element(n, mu) + DVector::from_column_slice(&y) / (sigma * sigma);
    let exact = inverse(&post_prec) * rhs;

    let s = nuts_run(&spec, &y, &config(4, 2500, 5, 5)).unwrap();
    assert_eq!(s.divergences(), 0);
    for i in 0..n {
        let p = s.param_index(&format!("theta[{}]", i + 1)).unwrap();
        let (m, sd) = mean_sd(&s.pooled(p));
        let mcse = sd / ess(&s.param_chains(p)).unwrap().value.sqrt();
        assert!((m - exact[i]).abs() < 3.0 * mcse, "theta[{}]: {m} vs {} (mcse {mcse})", i + 1, exact[i]);
    }
}

#[test]
fn identical_seeds_give_identical_draws() {
    let spec = ModelSpec::new(Grid::unit(12), DiffOrder::Second, PriorFamily::Horseshoe, ObservationModel::Poisson);
    let y = [3.0, 5.0, 2.0, 4.0, 8.0, 9.0, 7.0, 12.0, 10.0, 4.0, 3.0, 2.0];
    let cfg = SamplerConfig { chains: 2, warmup: 100, iters: 100, thin: 2, seed: 9, ..Default::default() };
    let a = nuts_run(&spec, &y, &cfg).unwrap();
    let b = nuts_run(&spec, &y, &cfg).unwrap();
    for (ca, cb) in a.chains.iter().zip(&b.chains) {
        assert_eq!(ca.draws, cb.draws);
        assert_eq!(ca.step_size.to_bits(), cb.step_size.to_bits());
    }
    let c = nuts_run(&spec, &y, &SamplerConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.chains[0].draws, c.chains[0].draws);
}

#[test]
fn one_dimensional_normal_passes_ks() {
    let s = sample(&StdNormal(1), &config(4, 12_500, 5, 2)).unwrap();
    let draws = s.pooled(0);
    assert_eq!(draws.len(), 10_000);
    let d = ks_statistic(&draws, |x| normal_cdf(x, 0.0, 1.0));
    assert!(d < ks_critical(draws.len(), 0.01), "D = {d}");
}

#[test]
fn half_cauchy_construction_passes_ks() {
    let spec = ModelSpec::new(Grid::unit(3), DiffOrder::First, PriorFamily::Normal, ObservationModel::Poisson)
        .with_global_scale(ScalePrior::HalfCauchy { scale: 1.0 });
    let post = Posterior::prior_only(&spec).unwrap();
    let s = sample(&post, &config(4, 12_500, 5, 17)).unwrap();
    let g = s.pooled(s.param_index("gamma").unwrap());
    let d = ks_statistic(&g, |x| half_cauchy_cdf(x, 1.0));
    assert!(d < ks_critical(g.len(), 0.01), "D = {d}");
}

#[test]
fn leapfrog_error_is_second_order() {
    let spec = ModelSpec::new(Grid::unit(10), DiffOrder::First, PriorFamily::Laplace, ObservationModel::Poisson);
    let y = [1.0, 0.0, 2.0, 5.0, 3.0, 1.0, 0.0, 2.0, 4.0, 1.0];
    let post = Posterior::new(&spec, &y).unwrap();
    let dim = post.dim();
    let q0 = init_state(&post, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let p0: Vec<f64> = (0..dim).map(|i| ((i as f64) * 0.7).cos()).collect();
    let metric = vec![1.0; dim];
    let energy_error = |eps: f64, steps: usize| {
        let (mut q, mut p) = (q0.clone(), p0.clone());
        let mut grad = vec![0.0; dim];
        let lp0 = post.log_density_grad(&q, &mut grad);
        let mut lp = lp0;
        for _ in 0..steps {
            lp = leapfrog(&post, &mut q, &mut p, &mut grad, &metric, eps);
        }
        (hamiltonian(lp, &p, &metric) - hamiltonian(lp0, &p0, &metric)).abs()
    };
    let coarse = energy_error(0.01, 20);
    let fine = energy_error(0.001, 200);
    let ratio = coarse / fine;
    assert!((50.0..=200.0).contains(&ratio), "ratio {ratio} ({coarse} / {fine})");
}

#[test]
fn init_state_contracts() {
    let spec = ModelSpec::new(Grid::unit(20), DiffOrder::Second, PriorFamily::Horseshoe, ObservationModel::normal());
    let post = Posterior::new(&spec, &[0.5; 20]).unwrap();
    let a = init_state(&post, &mut chain_rng(1, 0)).unwrap();
    let b = init_state(&post, &mut chain_rng(1, 1)).unwrap();
    assert_eq!(a.len(), post.layout().dim);
    assert_ne!(a, b);
    assert!(a.iter().all(|v| v.abs() < INIT_RADIUS));
    assert!(post.log_density(&a).unwrap().is_finite());

    // Uniform draws on (-2, 2)^3 land in the radius-0.5 ball with probability
    // about 0.008, so the retry budget is almost always exhausted.
    let err = init_state(&Ball, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(matches!(err, Error::Initialization { attempts: INIT_ATTEMPTS }));
}
