//! Warmup adaptation: dual averaging of the step size and windowed estimation
//! of a diagonal inverse metric.

/// Nesterov dual averaging toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    delta: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(delta: f64) -> Self {
        DualAveraging {
            delta,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: 0.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    pub fn set_mu(&mut self, mu: f64) {
        self.mu = mu;
    }

    pub fn restart(&mut self) {
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Returns the next step size given the latest acceptance statistic.
    pub fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let stat = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// The averaged step size used after warmup.
    pub fn final_stepsize(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn restart(&mut self) {
        self.n = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }

    fn add(&mut self, q: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }
}

/// Fractions of warmup spent before and after the metric windows.
pub const INIT_BUFFER_FRACTION: f64 = 0.15;
pub const TERM_BUFFER_FRACTION: f64 = 0.10;
pub const BASE_WINDOW: usize = 25;

/// Doubling metric-adaptation windows between a fast initial buffer and a
/// fast terminal buffer.
#[derive(Debug, Clone)]
pub(crate) struct WindowedMetric {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    estimator: Welford,
}

impl WindowedMetric {
    pub fn new(num_warmup: usize, dim: usize) -> Self {
        let init_buffer = (INIT_BUFFER_FRACTION * num_warmup as f64) as usize;
        let term_buffer = (TERM_BUFFER_FRACTION * num_warmup as f64) as usize;
        let base = BASE_WINDOW.min(num_warmup.saturating_sub(init_buffer + term_buffer));
        WindowedMetric {
            num_warmup,
            init_buffer,
            term_buffer,
            window_size: base,
            next_window: (init_buffer + base).saturating_sub(1),
            counter: 0,
            estimator: Welford::new(dim),
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn window_ends(&self) -> bool {
        self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.num_warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Records a warmup draw; at the end of a window, overwrites `inv_metric`
    /// with the regularized variance estimate and returns true.
    pub fn learn(&mut self, inv_metric: &mut [f64], q: &[f64]) -> bool {
        if self.window_size == 0 {
            self.counter += 1;
            return false;
        }
        if self.in_window() {
            self.estimator.add(q);
        }
        if self.window_ends() {
            self.compute_next_window();
            let n = self.estimator.n as f64;
            for (m, s) in inv_metric.iter_mut().zip(&self.estimator.m2) {
                let var = s / (n - 1.0);
                *m = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
            }
            self.estimator.restart();
            self.counter += 1;
            return true;
        }
        self.counter += 1;
        false
    }
}
