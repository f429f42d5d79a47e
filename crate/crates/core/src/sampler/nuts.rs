//! Multinomial NUTS transition with the generalized U-turn criterion.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Target;

/// Energy error, in nats, beyond which a trajectory is divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Point {
    pub fn new<T: Target + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density_grad(&q, &mut grad);
        let p = vec![0.0; q.len()];
        Point { q, p, grad, logp }
    }

    fn copy_from(&mut self, other: &Point) {
        self.q.copy_from_slice(&other.q);
        self.p.copy_from_slice(&other.p);
        self.grad.copy_from_slice(&other.grad);
        self.logp = other.logp;
    }
}

/// Kinetic energy `p' M^-1 p / 2` for a diagonal inverse metric.
pub fn kinetic_energy(p: &[f64], inv_metric: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
}

/// Hamiltonian `-log p(q) + K(p)`.
pub fn hamiltonian(logp: f64, p: &[f64], inv_metric: &[f64]) -> f64 {
    -logp + kinetic_energy(p, inv_metric)
}

/// One leapfrog step of size `eps`, updating `q`, `p` and `grad` in place.
/// Returns the log density at the new position.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    inv_metric: &[f64],
    eps: f64,
) -> f64 {
    for (pi, g) in p.iter_mut().zip(grad.iter()) {
        *pi += 0.5 * eps * g;
    }
    for ((qi, pi), m) in q.iter_mut().zip(p.iter()).zip(inv_metric) {
        *qi += eps * m * pi;
    }
    let logp = target.log_density_grad(q, grad);
    for (pi, g) in p.iter_mut().zip(grad.iter()) {
        *pi += 0.5 * eps * g;
    }
    logp
}

pub(crate) fn sample_momentum<R: Rng>(p: &mut [f64], inv_metric: &[f64], rng: &mut R) {
    for (pi, m) in p.iter_mut().zip(inv_metric) {
        let z: f64 = rng.sample(StandardNormal);
        *pi = z / m.sqrt();
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

fn sharp(p: &[f64], inv_metric: &[f64]) -> Vec<f64> {
    p.iter().zip(inv_metric).map(|(a, m)| a * m).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TransitionInfo {
    pub accept_stat: f64,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
}

struct Tree<'a, T: Target + ?Sized> {
    target: &'a T,
    inv_metric: &'a [f64],
    eps: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// Boundary momenta of a subtree.
struct Edge {
    p: Vec<f64>,
    p_sharp: Vec<f64>,
}

impl<T: Target + ?Sized> Tree<'_, T> {
    /// Extends the trajectory from `z` by `2^depth` steps in direction `sign`.
    /// Returns `(valid, log_sum_weight, begin, end)` and leaves the proposal in
    /// `propose` and the trajectory end in `z`.
    #[allow(clippy::too_many_arguments)]
    fn build<R: Rng>(
        &mut self,
        depth: usize,
        z: &mut Point,
        propose: &mut Point,
        rho: &mut [f64],
        sign: f64,
        rng: &mut R,
    ) -> (bool, f64, Edge, Edge) {
        if depth == 0 {
            z.logp = leapfrog(self.target, &mut z.q, &mut z.p, &mut z.grad, self.inv_metric, sign * self.eps);
            self.n_leapfrog += 1;
            let mut h = hamiltonian(z.logp, &z.p, self.inv_metric);
            if h.is_nan() {
                h = f64::INFINITY;
            }
            let valid = h - self.h0 <= MAX_DELTA_H;
            if !valid {
                self.divergent = true;
            }
            let log_w = self.h0 - h;
            self.sum_metro_prob += if log_w > 0.0 { 1.0 } else { log_w.exp() };
            propose.copy_from(z);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            let p_sharp = sharp(&z.p, self.inv_metric);
            let edge = || Edge {
                p: z.p.clone(),
                p_sharp: p_sharp.clone(),
            };
            return (valid, log_w, edge(), edge());
        }

        let dim = z.q.len();
        let mut rho_init = vec![0.0; dim];
        let (valid_init, lsw_init, beg, init_end) = self.build(depth - 1, z, propose, &mut rho_init, sign, rng);
        if !valid_init {
            return (false, lsw_init, beg, init_end);
        }

        let mut propose_final = z.clone();
        let mut rho_final = vec![0.0; dim];
        let (valid_final, lsw_final, final_beg, end) =
            self.build(depth - 1, z, &mut propose_final, &mut rho_final, sign, rng);
        if !valid_final {
            return (false, lsw_final, beg, end);
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        if lsw_final > lsw_subtree || rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            propose.copy_from(&propose_final);
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = criterion(&beg.p_sharp, &end.p_sharp, &rho_subtree);
        persist &= criterion(&beg.p_sharp, &final_beg.p_sharp, &add(&rho_init, &final_beg.p));
        persist &= criterion(&init_end.p_sharp, &end.p_sharp, &add(&rho_final, &init_end.p));
        (persist, lsw_subtree, beg, end)
    }
}

/// One NUTS transition from `z`, which is replaced by the selected point.
pub(crate) fn transition<T: Target + ?Sized, R: Rng>(
    target: &T,
    z: &mut Point,
    inv_metric: &[f64],
    eps: f64,
    max_depth: usize,
    rng: &mut R,
) -> TransitionInfo {
    sample_momentum(&mut z.p, inv_metric, rng);
    let h0 = hamiltonian(z.logp, &z.p, inv_metric);

    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    let p_sharp0 = sharp(&z.p, inv_metric);
    let mut fwd_bck = Edge { p: z.p.clone(), p_sharp: p_sharp0.clone() };
    let mut fwd_fwd = Edge { p: z.p.clone(), p_sharp: p_sharp0.clone() };
    let mut bck_fwd = Edge { p: z.p.clone(), p_sharp: p_sharp0.clone() };
    let mut bck_bck = Edge { p: z.p.clone(), p_sharp: p_sharp0 };

    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;
    let mut depth = 0;
    let mut tree = Tree {
        target,
        inv_metric,
        eps,
        h0,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };
    let dim = z.q.len();

    while depth < max_depth {
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let (valid, lsw_subtree);
        if rng.random::<f64>() > 0.5 {
            rho_bck.copy_from_slice(&rho);
            bck_fwd = Edge { p: fwd_bck.p.clone(), p_sharp: fwd_bck.p_sharp.clone() };
            let (v, w, beg, end) = tree.build(depth, &mut z_fwd, &mut z_propose, &mut rho_fwd, 1.0, rng);
            valid = v;
            lsw_subtree = w;
            fwd_bck = beg;
            fwd_fwd = end;
        } else {
            rho_fwd.copy_from_slice(&rho);
            fwd_bck = Edge { p: bck_fwd.p.clone(), p_sharp: bck_fwd.p_sharp.clone() };
            let (v, w, beg, end) = tree.build(depth, &mut z_bck, &mut z_propose, &mut rho_bck, -1.0, rng);
            valid = v;
            lsw_subtree = w;
            bck_fwd = beg;
            bck_bck = end;
        }
        if !valid {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight || rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
            z_sample.copy_from(&z_propose);
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = criterion(&bck_bck.p_sharp, &fwd_fwd.p_sharp, &rho);
        persist &= criterion(&bck_bck.p_sharp, &fwd_bck.p_sharp, &add(&rho_bck, &fwd_bck.p));
        persist &= criterion(&bck_fwd.p_sharp, &fwd_fwd.p_sharp, &add(&rho_fwd, &bck_fwd.p));
        if !persist {
            break;
        }
    }

    let info = TransitionInfo {
        accept_stat: tree.sum_metro_prob / tree.n_leapfrog as f64,
        depth,
        n_leapfrog: tree.n_leapfrog,
        divergent: tree.divergent,
    };
    z.copy_from(&z_sample);
    info
}

/// Heuristic initial step size: doubles or halves `eps` until the one-step
/// acceptance probability crosses 0.8.
pub(crate) fn init_stepsize<T: Target + ?Sized, R: Rng>(
    target: &T,
    z: &Point,
    inv_metric: &[f64],
    mut eps: f64,
    rng: &mut R,
) -> Result<f64, String> {
    if eps == 0.0 || eps > 1e7 || !eps.is_finite() {
        return Ok(eps);
    }
    let threshold = 0.8f64.ln();
    let mut trial = z.clone();
    let mut direction = 0.0;
    loop {
        trial.copy_from(z);
        sample_momentum(&mut trial.p, inv_metric, rng);
        let h0 = hamiltonian(trial.logp, &trial.p, inv_metric);
        trial.logp = leapfrog(target, &mut trial.q, &mut trial.p, &mut trial.grad, inv_metric, eps);
        let mut h = hamiltonian(trial.logp, &trial.p, inv_metric);
        if h.is_nan() {
            h = f64::INFINITY;
        }
        let delta_h = h0 - h;
        if direction == 0.0 {
            direction = if delta_h > threshold { 1.0 } else { -1.0 };
            continue;
        }
        if (direction > 0.0 && !(delta_h > threshold)) || (direction < 0.0 && !(delta_h < threshold)) {
            break;
        }
        eps = if direction > 0.0 { 2.0 * eps } else { 0.5 * eps };
        if eps > 1e7 {
            return Err("step size diverged; the posterior may be improper".into());
        }
        if eps == 0.0 {
            return Err("no acceptably small step size found".into());
        }
    }
    Ok(eps)
}
