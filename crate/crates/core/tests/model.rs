use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spmrf::calibrate::precision_matrix;
use spmrf::densities::{log_laplace_marginal, ScaledDensityParams};
use spmrf::grid::{DiffOrder, Grid};
use spmrf::model::*;
use spmrf::Error;
use spmrf_testkit::{fd_gradient, integrate_real_line, mvn_log_density_precision, rel_err};

const ORDERS: [DiffOrder; 2] = [DiffOrder::First, DiffOrder::Second];

fn irregular_grid() -> Grid {
    Grid::new(vec![0.0, 0.7, 1.0, 2.4, 3.0, 3.5, 5.1, 6.0]).unwrap()
}

fn observations(obs: &str) -> (ObservationModel, Vec<f64>) {
    match obs {
        "normal" => (ObservationModel::normal(), vec![1.2, 0.4, -0.3, 2.2, 2.0, 1.1, 0.9, -1.5]),
        "poisson" => (ObservationModel::Poisson, vec![0.0, 3.0, 1.0, 7.0, 2.0, 0.0, 4.0, 1.0]),
        _ => (
            ObservationModel::Binomial { trials: vec![10, 12, 10, 8, 20, 10, 5, 10] },
            vec![0.0, 4.0, 10.0, 3.0, 11.0, 6.0, 5.0, 2.0],
        ),
    }
}

fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0;
    for prior in PriorFamily::ALL {
        for obs in ["normal", "poisson", "binomial"] {
            for k in ORDERS {
                for formulation in [Formulation::Hierarchical, Formulation::Marginal] {
                    let (model, y) = observations(obs);
                    let spec = ModelSpec::new(irregular_grid(), k, prior, model)
                        .with_theta1_prior(0.5, 1.5)
                        .with_global_scale(ScalePrior::HalfCauchy { scale: 0.3 })
                        .with_formulation(formulation);
                    let post = match Posterior::new(&spec, &y) {
                        Err(Error::Unsupported(_)) => {
                            assert_eq!((prior, formulation), (PriorFamily::Horseshoe, Formulation::Marginal));
                            continue;
                        }
                        other => other.unwrap(),
                    };
                    for _ in 0..20 {
                        let x = random_state(post.layout().dim, &mut rng);
                        let eval = post.log_posterior(&x).unwrap();
                        let fd = fd_gradient(|v| post.log_density(v).unwrap(), &x, 1e-6);
                        for (i, (a, f)) in eval.grad.iter().zip(&fd).enumerate() {
                            assert!(
                                rel_err(*a, *f) < 1e-5,
                                "{prior} {obs} k={k} {formulation:?} coord {i}: {a} vs {f}"
                            );
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    assert_eq!(checked, 20 * (3 * 3 * 2 * 2 - 3 * 2));
}

#[test]
fn parameter_counts() {
    let n = 100;
    let normal = |prior| ModelSpec::new(Grid::unit(n), DiffOrder::First, prior, ObservationModel::normal());
    assert_eq!(normal(PriorFamily::Normal).layout().dim, n + 2 + 2);
    assert_eq!(normal(PriorFamily::Laplace).layout().dim, 2 * n + 1 + 2);
    let hs = ModelSpec::new(Grid::unit(n), DiffOrder::Second, PriorFamily::Horseshoe, ObservationModel::Poisson);
    assert_eq!(hs.layout().dim, 3 * n);
    let post = Posterior::new(&normal(PriorFamily::Normal), &vec![0.0; n]).unwrap();
    use spmrf::sampler::Target;
    assert_eq!(post.param_names().len(), n + 2);
}

/// Precision of the normal-prior field built directly from difference rows.
fn dense_precision(k: DiffOrder, n: usize, omega: f64, gamma: f64) -> DMatrix<f64> {
    let rows = n - k.get() + usize::from(k == DiffOrder::Second);
    let mut d = DMatrix::<f64>::zeros(rows, n);
    let mut r = 0;
    if k == DiffOrder::Second {
        d[(0, 0)] = -1.0;
        d[(0, 1)] = 1.0;
        r = 1;
    }
    for j in 0..n - k.get() {
        match k {
            DiffOrder::First => {
                d[(r + j, j)] = -1.0;
                d[(r + j, j + 1)] = 1.0;
            }
            DiffOrder::Second => {
                d[(r + j, j)] = 1.0;
                d[(r + j, j + 1)] = -2.0;
                d[(r + j, j + 2)] = 1.0;
            }
        }
    }
    let mut q = d.transpose() * &d / (gamma * gamma);
    q[(0, 0)] += 1.0 / (omega * omega);
    q
}

#[test]
fn normal_prior_matches_dense_gaussian() {
    let n = 9;
    let (omega, gamma, sigma) = (1.7, 0.6, 0.9);
    let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.8).sin() * 3.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in ORDERS {
        let q = dense_precision(k, n, omega, gamma);
        let lib_q = precision_matrix(k, n, omega * omega, gamma).unwrap();
        assert!((&q - &lib_q).abs().max() < 1e-12);
        let spec = ModelSpec::new(
            Grid::unit(n),
            k,
            PriorFamily::Normal,
            ObservationModel::Normal { sigma: ScalePrior::Fixed(sigma) },
        )
        .with_theta1_prior(0.4, omega)
        .with_global_scale(ScalePrior::Fixed(gamma));
        let post = Posterior::new(&spec, &y).unwrap();
        assert_eq!(post.layout().dim, n);
        let mean = vec![0.4; n];
        let oracle = |x: &[f64]| {
            let theta = post.constrain(x).unwrap().theta;
            let lik: f64 = theta
                .iter()
                .zip(&y)
                .map(|(t, v)| -0.5 * ((v - t) / sigma).powi(2) - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
                .sum();
            mvn_log_density_precision(&theta, &mean, &q) + lik
        };
        let diffs: Vec<f64> = (0..4)
            .map(|_| {
                let x = random_state(n, &mut rng);
                post.log_density(&x).unwrap() - oracle(&x)
            })
            .collect();
        for d in &diffs[1..] {
            assert!((d - diffs[0]).abs() < 1e-9, "k={k}: {diffs:?}");
        }
        // The map z -> theta is linear with Jacobian omega gamma^(n-1), so the
        // constant is exactly its log.
        let log_jac = omega.ln() + (n - 1) as f64 * gamma.ln();
        assert!((diffs[0] - log_jac).abs() < 1e-9, "k={k}: {} vs {log_jac}", diffs[0]);
    }
}

#[test]
fn normal_prior_formulations_agree() {
    let (model, y) = observations("poisson");
    for k in ORDERS {
        let spec = ModelSpec::new(irregular_grid(), k, PriorFamily::Normal, model.clone());
        let h = Posterior::hierarchical(&spec, &y).unwrap();
        let m = Posterior::marginal(&spec, &y).unwrap();
        assert_eq!(h.layout(), m.layout());
        let x = random_state(h.layout().dim, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(h.log_posterior(&x).unwrap(), m.log_posterior(&x).unwrap());
    }
}

#[test]
fn laplace_two_point_assembly() {
    let (gamma, spacing) = (0.35, 2.5);
    let spec = ModelSpec::new(
        Grid::new(vec![1.0, 1.0 + spacing]).unwrap(),
        DiffOrder::First,
        PriorFamily::Laplace,
        ObservationModel::Poisson,
    )
    .with_theta1_prior(-0.2, 1.3)
    .with_global_scale(ScalePrior::Fixed(gamma))
    .with_formulation(Formulation::Marginal);
    // Two points are below the minimum grid size for a fitted model.
    assert!(Posterior::prior_only(&spec).is_err());

    let spec = ModelSpec {
        grid: Grid::new(vec![1.0, 1.0 + spacing, 4.0]).unwrap(),
        ..spec
    };
    let post = Posterior::prior_only(&spec).unwrap();
    let p = ScaledDensityParams::new(gamma, spacing).unwrap();
    let p2 = ScaledDensityParams::new(gamma, 0.5).unwrap();
    for x in [[0.3, -1.2, 0.4], [-1.0, 0.05, 2.0]] {
        let th = post.constrain(&x).unwrap().theta;
        let init = -0.5 * ((th[0] + 0.2) / 1.3).powi(2) - 1.3f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        // Density of theta plus the log Jacobian of x -> theta.
        let by_hand = init
            + log_laplace_marginal(th[1] - th[0], p).unwrap()
            + log_laplace_marginal(th[2] - th[1], p2).unwrap()
            + 1.3f64.ln()
            + (spacing.sqrt() * gamma).ln()
            + (0.5f64.sqrt() * gamma).ln();
        assert!((post.log_density(&x).unwrap() - by_hand).abs() < 1e-12);
    }
}

#[test]
fn hierarchical_laplace_integrates_to_marginal() {
    // n = 3, k = 1: integrate the two psi auxiliaries numerically. At fixed
    // (z1, w), the hierarchical innovation is z = w / b(psi) with Jacobian 1 / b.
    let gamma = 0.8;
    let grid = Grid::new(vec![0.0, 1.0, 3.0]).unwrap();
    let base = ModelSpec::new(grid, DiffOrder::First, PriorFamily::Laplace, ObservationModel::Poisson)
        .with_global_scale(ScalePrior::Fixed(gamma));
    let hier = Posterior::prior_only(&base).unwrap();
    let marg = Posterior::prior_only(&base.clone().with_formulation(Formulation::Marginal)).unwrap();
    let b = |psi: f64| (2.0 * psi.exp()).sqrt();
    for point in [[0.2, 0.7, -1.4], [-0.5, 0.05, 2.2]] {
        let [z1, w1, w2] = point;
        let inner = |psi1: f64| {
            integrate_real_line(
                |psi2: f64| {
                    let x = [z1, w1 / b(psi1), w2 / b(psi2), psi1, psi2];
                    (hier.log_density(&x).unwrap()).exp() / (b(psi1) * b(psi2))
                },
                1e-10,
            )
        };
        let total = integrate_real_line(inner, 1e-9);
        let expected = marg.log_density(&point).unwrap();
        assert!((total.ln() - expected).abs() < 1e-4, "{} vs {expected}", total.ln());
    }
}

#[test]
fn shifting_data_and_prior_mean_leaves_posterior_unchanged() {
    let (model, y) = observations("normal");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = 12.5;
    let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
    for prior in PriorFamily::ALL {
        for k in ORDERS {
            let spec = ModelSpec::new(irregular_grid(), k, prior, model.clone()).with_theta1_prior(0.3, 2.0);
            let moved = spec.clone().with_theta1_prior(0.3 + c, 2.0);
            let a = Posterior::new(&spec, &y).unwrap();
            let b = Posterior::new(&moved, &shifted).unwrap();
            for _ in 0..5 {
                let x = random_state(a.layout().dim, &mut rng);
                let (la, lb) = (a.log_density(&x).unwrap(), b.log_density(&x).unwrap());
                assert!((la - lb).abs() < 1e-9 * la.abs().max(1.0), "{prior} k={k}");
                let (ta, tb) = (a.constrain(&x).unwrap().theta, b.constrain(&x).unwrap().theta);
                assert!(ta.iter().zip(&tb).all(|(p, q)| (q - p - c).abs() < 1e-9));
            }
        }
    }
}

#[test]
fn theta1_prior_defaults_from_data() {
    let (mu, omega) = default_theta1_prior(&[1.0, 3.0], &ObservationModel::normal()).unwrap();
    assert_eq!(mu, 2.0);
    assert!((omega - 2.0 * 2f64.sqrt()).abs() < 1e-15);
    assert!(matches!(
        default_theta1_prior(&[2.0, 2.0, 2.0], &ObservationModel::normal()),
        Err(Error::Degenerate(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constrained_trend_recovers_innovations(
        seed in any::<u64>(),
        second in any::<bool>(),
        prior_idx in 0usize..3,
    ) {
        let k = if second { DiffOrder::Second } else { DiffOrder::First };
        let spec = ModelSpec::new(irregular_grid(), k, PriorFamily::ALL[prior_idx], ObservationModel::Poisson);
        let post = Posterior::prior_only(&spec).unwrap();
        let x = random_state(post.layout().dim, &mut ChaCha8Rng::seed_from_u64(seed));
        let c = post.constrain(&x).unwrap();
        let scales: Vec<f64> = if c.tau.is_empty() { vec![c.gamma; 8 - k.get()] } else { c.tau.clone() };
        let diffs = spec.grid.difference(&c.theta, k).unwrap();
        let d = spec.grid.scale_factors(k);
        for j in 0..diffs.len() {
            let z = diffs[j] / (d[j].sqrt() * scales[j]);
            prop_assert!((z - x[k.get() + j]).abs() < 1e-7 * (1.0 + z.abs()), "j={} {} vs {}", j, z, x[k.get() + j]);
        }
        prop_assert!((c.theta[0] - (spec.theta1_mean + spec.theta1_sd * x[0])).abs() < 1e-12);
    }
}
