use serde::{Deserialize, Serialize};

use super::{Formulation, Layout, ModelSpec, ObservationModel, PriorFamily, ScalePrior};
use crate::error::{Error, Result};
use crate::grid::DiffOrder;
use crate::sampler::Target;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-posterior value and gradient in unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEval {
    pub logp: f64,
    pub grad: Vec<f64>,
}

/// Model parameters on their natural scale.
///
/// `tau` and `alpha` are empty under the marginal formulation, where the local
/// scales are integrated out; under the normal prior they all equal `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constrained {
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: f64,
    pub sigma: Option<f64>,
}

/// A model bound to its data; implements [`Target`] for the sampler.
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: ModelSpec,
    layout: Layout,
    data: Option<Data>,
    sqrt_d: Vec<f64>,
    ratios: Vec<f64>,
    names: Vec<String>,
}

#[derive(Debug, Clone)]
struct Data {
    y: Vec<f64>,
    trials: Vec<f64>,
    /// Sum of the parameter-free likelihood terms.
    constant: f64,
}

/// `base |nu| exp(eta / 2)` with the log prior of `(nu, eta)` and its partials.
struct HalfCauchyAux {
    value: f64,
    logp: f64,
    d_nu: f64,
    d_eta: f64,
    /// d value / d nu; d value / d eta is `value / 2`.
    dv_dnu: f64,
}

fn half_cauchy_aux(base: f64, nu: f64, eta: f64) -> HalfCauchyAux {
    let root = (0.5 * eta).exp();
    let e_neg = (-eta).exp();
    HalfCauchyAux {
        value: base * nu.abs() * root,
        logp: -2.0 * HALF_LN_2PI - 0.5 * nu * nu - 0.5 * eta - 0.5 * e_neg,
        d_nu: -nu,
        d_eta: -0.5 + 0.5 * e_neg,
        dv_dnu: base * sign(nu) * root,
    }
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn ln_choose(m: f64, y: f64) -> f64 {
    libm::lgamma(m + 1.0) - libm::lgamma(y + 1.0) - libm::lgamma(m - y + 1.0)
}

impl Posterior {
    /// Binds `spec` to observations `y` using `spec.formulation`.
    pub fn new(spec: &ModelSpec, y: &[f64]) -> Result<Self> {
        if y.len() != spec.n() {
            return Err(Error::LengthMismatch {
                expected: spec.n(),
                found: y.len(),
            });
        }
        spec.obs.validate_data(y)?;
        let (trials, constant) = match &spec.obs {
            ObservationModel::Normal { .. } => (Vec::new(), -HALF_LN_2PI * y.len() as f64),
            ObservationModel::Poisson => {
                (Vec::new(), -y.iter().map(|&v| libm::lgamma(v + 1.0)).sum::<f64>())
            }
            ObservationModel::Binomial { trials } => {
                let m: Vec<f64> = trials.iter().map(|&t| t as f64).collect();
                let c = y.iter().zip(&m).map(|(&v, &t)| ln_choose(t, v)).sum();
                (m, c)
            }
        };
        let data = Data {
            y: y.to_vec(),
            trials,
            constant,
        };
        Self::build(spec, Some(data))
    }

    pub fn hierarchical(spec: &ModelSpec, y: &[f64]) -> Result<Self> {
        Self::new(&spec.clone().with_formulation(Formulation::Hierarchical), y)
    }

    pub fn marginal(spec: &ModelSpec, y: &[f64]) -> Result<Self> {
        Self::new(&spec.clone().with_formulation(Formulation::Marginal), y)
    }

    /// The prior alone (a flat likelihood).
    pub fn prior_only(spec: &ModelSpec) -> Result<Self> {
        Self::build(spec, None)
    }

    fn build(spec: &ModelSpec, data: Option<Data>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let sqrt_d = spec.grid.scale_factors(spec.k).iter().map(|d| d.sqrt()).collect();
        let ratios = match spec.k {
            DiffOrder::First => Vec::new(),
            DiffOrder::Second => spec.grid.spacing_ratios(),
        };
        let mut post = Posterior {
            spec: spec.clone(),
            layout,
            data,
            sqrt_d,
            ratios,
            names: Vec::new(),
        };
        post.names = post.constrained_names();
        Ok(post)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn reports_local_scales(&self) -> bool {
        self.spec.formulation == Formulation::Hierarchical && self.spec.prior != PriorFamily::Normal
    }

    fn constrained_names(&self) -> Vec<String> {
        let n = self.layout.n;
        let k = self.layout.k;
        let mut names: Vec<String> = (1..=n).map(|i| format!("theta[{i}]")).collect();
        if self.reports_local_scales() {
            names.extend((1..=n - k).map(|j| format!("tau[{j}]")));
            names.extend((1..k).map(|h| format!("alpha[{h}]")));
        }
        names.push("gamma".into());
        if matches!(self.spec.obs, ObservationModel::Normal { .. }) {
            names.push("sigma".into());
        }
        names
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.layout.dim {
            return Err(Error::LengthMismatch {
                expected: self.layout.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Log density and gradient; fails only on a layout mismatch.
    pub fn log_posterior(&self, x: &[f64]) -> Result<PosteriorEval> {
        self.check_len(x)?;
        let mut grad = vec![0.0; x.len()];
        let logp = self.eval(x, Some(&mut grad));
        Ok(PosteriorEval { logp, grad })
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.eval(x, None))
    }

    pub fn constrain(&self, x: &[f64]) -> Result<Constrained> {
        self.check_len(x)?;
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite unconstrained value {bad}")));
        }
        let f = self.forward(x);
        let k = self.layout.k;
        let (tau, alpha) = if self.spec.formulation == Formulation::Marginal {
            (Vec::new(), Vec::new())
        } else {
            let scales: Vec<f64> = f.b.iter().map(|b| f.gamma * b).collect();
            (scales[k - 1..].to_vec(), scales[..k - 1].to_vec())
        };
        Ok(Constrained {
            theta: f.theta,
            tau,
            alpha,
            gamma: f.gamma,
            sigma: f.sigma.map(|s| s.value),
        })
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let l = &self.layout;
        let (n, k) = (l.n, l.k);
        let mut lp = 0.0;

        let gamma_aux = match (self.spec.gamma, l.gamma_start) {
            (ScalePrior::HalfCauchy { scale }, Some(g)) => {
                let a = half_cauchy_aux(scale, x[g], x[g + 1]);
                lp += a.logp;
                Some(a)
            }
            _ => None,
        };
        let gamma = match (&gamma_aux, self.spec.gamma) {
            (Some(a), _) => a.value,
            (None, ScalePrior::Fixed(v)) => v,
            (None, ScalePrior::HalfCauchy { .. }) => unreachable!("layout reserves gamma auxiliaries"),
        };

        let sigma = match &self.spec.obs {
            ObservationModel::Normal { sigma } => Some(match (*sigma, l.sigma_start) {
                (ScalePrior::HalfCauchy { scale }, Some(s)) => {
                    let a = half_cauchy_aux(scale, x[s], x[s + 1]);
                    lp += a.logp;
                    a
                }
                (ScalePrior::Fixed(v), _) => HalfCauchyAux {
                    value: v,
                    logp: 0.0,
                    d_nu: 0.0,
                    d_eta: 0.0,
                    dv_dnu: 0.0,
                },
                (ScalePrior::HalfCauchy { .. }, None) => unreachable!("layout reserves sigma auxiliaries"),
            }),
            _ => None,
        };

        // Local scale factors b with scale = gamma * b.
        let mut b = vec![1.0; l.n_scales];
        if l.aux_per_scale > 0 {
            let aux = &x[l.local_start..l.local_start + l.aux_per_scale * l.n_scales];
            match self.spec.prior {
                PriorFamily::Horseshoe => {
                    for (s, pair) in aux.chunks_exact(2).enumerate() {
                        let a = half_cauchy_aux(1.0, pair[0], pair[1]);
                        lp += a.logp;
                        b[s] = a.value;
                    }
                }
                PriorFamily::Laplace => {
                    for (s, &psi) in aux.iter().enumerate() {
                        let e = psi.exp();
                        lp += psi - e;
                        b[s] = (2.0 * e).sqrt();
                    }
                }
                PriorFamily::Normal => unreachable!("normal prior has no local auxiliaries"),
            }
        }

        // Innovation priors: the first trend value is always standard normal.
        lp += -HALF_LN_2PI - 0.5 * x[0] * x[0];
        let laplace_innov =
            self.spec.formulation == Formulation::Marginal && self.spec.prior == PriorFamily::Laplace;
        for &z in &x[1..n] {
            lp += if laplace_innov {
                -std::f64::consts::LN_2 - z.abs()
            } else {
                -HALF_LN_2PI - 0.5 * z * z
            };
        }

        let mut theta = vec![0.0; n];
        theta[0] = self.spec.theta1_mean + self.spec.theta1_sd * x[0];
        if k == 2 {
            theta[1] = theta[0] + gamma * b[0] * x[1];
        }
        for j in 0..n - k {
            let inc = self.sqrt_d[j] * gamma * b[k - 1 + j] * x[k + j];
            theta[j + k] = match k {
                1 => theta[j] + inc,
                _ => (1.0 + self.ratios[j]) * theta[j + 1] - self.ratios[j] * theta[j] + inc,
            };
        }

        Forward {
            lp,
            theta,
            b,
            gamma,
            gamma_aux,
            sigma,
            laplace_innov,
        }
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let f = self.forward(x);
        let l = &self.layout;
        let (n, k) = (l.n, l.k);
        let mut lp = f.lp;
        let mut g_theta = vec![0.0; n];
        let mut g_sigma = 0.0;

        if let Some(data) = &self.data {
            lp += data.constant;
            match &self.spec.obs {
                ObservationModel::Normal { .. } => {
                    let s = f.sigma.as_ref().expect("normal observations carry sigma").value;
                    let inv_s2 = 1.0 / (s * s);
                    let mut ss = 0.0;
                    for i in 0..n {
                        let r = data.y[i] - f.theta[i];
                        ss += r * r;
                        g_theta[i] = r * inv_s2;
                    }
                    lp += -(n as f64) * s.ln() - 0.5 * ss * inv_s2;
                    g_sigma = -(n as f64) / s + ss * inv_s2 / s;
                }
                ObservationModel::Poisson => {
                    for i in 0..n {
                        let rate = f.theta[i].exp();
                        lp += data.y[i] * f.theta[i] - rate;
                        g_theta[i] = data.y[i] - rate;
                    }
                }
                ObservationModel::Binomial { .. } => {
                    for i in 0..n {
                        let t = f.theta[i];
                        let m = data.trials[i];
                        lp += data.y[i] * t - m * log1p_exp(t);
                        g_theta[i] = data.y[i] - m * sigmoid(t);
                    }
                }
            }
        }

        let Some(grad) = grad else {
            return lp;
        };
        grad.fill(0.0);

        // Innovation prior gradients.
        grad[0] = -x[0];
        for i in 1..n {
            grad[i] = if f.laplace_innov { -x[i].signum() } else { -x[i] };
        }

        // Reverse pass through the recurrence; g_scale[s] is d lp / d (gamma b[s]).
        let mut a = g_theta;
        let mut g_scale = vec![0.0; l.n_scales];
        for j in (0..n - k).rev() {
            let g_inc = a[j + k];
            let s = k - 1 + j;
            grad[k + j] += self.sqrt_d[j] * f.gamma * f.b[s] * g_inc;
            g_scale[s] = self.sqrt_d[j] * x[k + j] * g_inc;
            if k == 1 {
                a[j] += g_inc;
            } else {
                a[j + 1] += (1.0 + self.ratios[j]) * g_inc;
                a[j] -= self.ratios[j] * g_inc;
            }
        }
        if k == 2 {
            grad[1] += f.gamma * f.b[0] * a[1];
            g_scale[0] = x[1] * a[1];
            a[0] += a[1];
        }
        grad[0] += self.spec.theta1_sd * a[0];

        let mut g_gamma = 0.0;
        for s in 0..l.n_scales {
            g_gamma += f.b[s] * g_scale[s];
        }
        if l.aux_per_scale > 0 {
            let base = l.local_start;
            match self.spec.prior {
                PriorFamily::Horseshoe => {
                    for s in 0..l.n_scales {
                        let (inu, ieta) = (base + 2 * s, base + 2 * s + 1);
                        let (nu, eta) = (x[inu], x[ieta]);
                        let g_b = f.gamma * g_scale[s];
                        grad[inu] += -nu + g_b * sign(nu) * (0.5 * eta).exp();
                        grad[ieta] += -0.5 + 0.5 * (-eta).exp() + g_b * 0.5 * f.b[s];
                    }
                }
                PriorFamily::Laplace => {
                    for s in 0..l.n_scales {
                        let i = base + s;
                        let g_b = f.gamma * g_scale[s];
                        grad[i] += 1.0 - x[i].exp() + g_b * 0.5 * f.b[s];
                    }
                }
                PriorFamily::Normal => {}
            }
        }

        if let (Some(ga), Some(g)) = (&f.gamma_aux, l.gamma_start) {
            grad[g] += ga.d_nu + g_gamma * ga.dv_dnu;
            grad[g + 1] += ga.d_eta + g_gamma * 0.5 * ga.value;
        }
        if let (Some(sa), Some(s)) = (&f.sigma, l.sigma_start) {
            grad[s] += sa.d_nu + g_sigma * sa.dv_dnu;
            grad[s + 1] += sa.d_eta + g_sigma * 0.5 * sa.value;
        }
        lp
    }
}

struct Forward {
    lp: f64,
    theta: Vec<f64>,
    b: Vec<f64>,
    gamma: f64,
    gamma_aux: Option<HalfCauchyAux>,
    sigma: Option<HalfCauchyAux>,
    laplace_innov: bool,
}

impl Target for Posterior {
    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn constrain_into(&self, x: &[f64], out: &mut Vec<f64>) {
        let f = self.forward(x);
        out.extend_from_slice(&f.theta);
        if self.reports_local_scales() {
            let k = self.layout.k;
            out.extend(f.b[k - 1..].iter().map(|b| f.gamma * b));
            out.extend(f.b[..k - 1].iter().map(|b| f.gamma * b));
        }
        out.push(f.gamma);
        if let Some(s) = &f.sigma {
            out.push(s.value);
        }
    }
}

/// Hierarchical log-posterior of `spec` at `x`, with local scales sampled.
pub fn log_posterior_hierarchical(spec: &ModelSpec, x: &[f64], y: &[f64]) -> Result<PosteriorEval> {
    Posterior::hierarchical(spec, y)?.log_posterior(x)
}

/// Marginal log-posterior of `spec` at `x`, with local scales integrated out.
/// The horseshoe is rejected with [`Error::Unsupported`].
pub fn log_posterior_marginal(spec: &ModelSpec, x: &[f64], y: &[f64]) -> Result<PosteriorEval> {
    Posterior::marginal(spec, y)?.log_posterior(x)
}
