//! Numerical oracles for tests: adaptive quadrature, finite differences,
//! Kolmogorov-Smirnov checks and dense Gaussian algebra. Nothing here shares
//! code with the library under test.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Exp};
use statrs::distribution::{ContinuousCDF, Normal};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss-Kronrod 7/15 estimate and error bound on `[a, b]`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK[..7].iter().enumerate() {
        let s = f(c - h * x) + f(c + h * x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature on a finite interval.
///
/// Panics if the error bound is not met within the interval budget.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..20_000 {
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol {
            return parts.iter().map(|p| p.2 .0).sum();
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
    panic!("quadrature did not converge to {abs_tol}");
}

/// `int_0^inf f(u) du` via `u = exp(s)`, `s = t / (1 - t^2)`, `t in (-1, 1)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> f64 {
    let g = |t: f64| {
        let d = 1.0 - t * t;
        if d <= 0.0 {
            return 0.0;
        }
        let s = t / d;
        let u = s.exp();
        if u == 0.0 || !u.is_finite() {
            return 0.0;
        }
        let v = f(u) * u * (1.0 + t * t) / (d * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, -1.0, 1.0, abs_tol)
}

/// `int_R f(u) du`, split at zero so an integrable singularity there is safe.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> f64 {
    integrate_half_line(|u| f(u), 0.5 * abs_tol) + integrate_half_line(|u| f(-u), 0.5 * abs_tol)
}

/// Central finite-difference gradient with step `h`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central finite-difference derivative of a scalar function.
pub fn fd_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `|a - f| / max(1, |f|)`.
pub fn rel_err(analytic: f64, reference: f64) -> f64 {
    (analytic - reference).abs() / reference.abs().max(1.0)
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).max((i as f64 + 1.0) / n - c)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value `sqrt(-ln(alpha / 2) / 2) / sqrt(n)`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).unwrap().cdf(x)
}

/// Exact multivariate normal log density with precision matrix `q`.
pub fn mvn_log_density_precision(x: &[f64], mean: &[f64], q: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let chol = q.clone().cholesky().expect("precision must be positive definite");
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let r = DVector::from_iterator(n, x.iter().zip(mean).map(|(a, b)| a - b));
    let quad = (r.transpose() * q * &r)[(0, 0)];
    0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * quad
}

/// Dense inverse via LU.
pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("matrix must be invertible")
}

/// Sample mean and the standard error of the mean assuming independence.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn normal_pdf(u: f64, sd: f64) -> f64 {
    (-0.5 * (u / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Monte Carlo estimate `(mean, standard error)` of `E[N(u; 0, scale(w))]`
/// over `draws` samples of `w` from `mixing`.
fn mc_mixture<F: Fn(&mut ChaCha8Rng) -> f64>(u: f64, draws: usize, seed: u64, sd_of: F) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..draws {
        let v = normal_pdf(u, sd_of(&mut rng));
        sum += v;
        sum2 += v * v;
    }
    let n = draws as f64;
    let m = sum / n;
    (m, ((sum2 / n - m * m) / (n - 1.0)).max(0.0).sqrt())
}

/// Density of `u | tau ~ N(0, delta tau^2)`, `tau^2 ~ Exp(rate 1 / (2 gamma^2))`.
pub fn mc_laplace_mixture_density(u: f64, gamma: f64, delta: f64, draws: usize, seed: u64) -> (f64, f64) {
    let exp = Exp::new(1.0 / (2.0 * gamma * gamma)).unwrap();
    mc_mixture(u, draws, seed, |rng| (delta * rng.sample(exp)).sqrt())
}

/// Density of `u | lambda ~ N(0, delta gamma^2 lambda^2)`, `lambda ~ C+(0, 1)`.
pub fn mc_horseshoe_mixture_density(u: f64, gamma: f64, delta: f64, draws: usize, seed: u64) -> (f64, f64) {
    let cauchy = Cauchy::new(0.0, 1.0).unwrap();
    mc_mixture(u, draws, seed, |rng| {
        let lambda: f64 = rng.sample(cauchy);
        delta.sqrt() * gamma * lambda.abs()
    })
}
