//! Change points as the location of the largest drop between consecutive
//! values of a trend, on whichever scale the caller supplies.

use serde::Serialize;
use spmrf::diagnostics::quantile;
use spmrf::Error;

use crate::error::Result;

/// Index `i` maximizing `theta[i] - theta[i + 1]`, smallest on ties.
pub fn max_drop_index(theta: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, w) in theta.windows(2).enumerate() {
        let drop = w[0] - w[1];
        if best.is_none_or(|(_, b)| drop > b) {
            best = Some((i, drop));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangepointPosterior {
    /// Candidate locations `x[1..]`: a drop between `x[i]` and `x[i + 1]` is
    /// placed at `x[i + 1]`.
    pub locations: Vec<f64>,
    pub counts: Vec<usize>,
    pub draws: usize,
    /// Most frequent location, smallest on ties.
    pub mode: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
}

impl ChangepointPosterior {
    pub fn probability(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.draws as f64
    }
}

/// Posterior over change-point locations from per-draw trend vectors.
pub fn changepoint_posterior<'a, I>(theta_draws: I, x: &[f64]) -> Result<ChangepointPosterior>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if x.len() < 2 {
        return Err(Error::InvalidInput("change points need at least two locations".into()).into());
    }
    let mut counts = vec![0usize; x.len() - 1];
    let mut picked = Vec::new();
    for theta in theta_draws {
        if theta.len() != x.len() {
            return Err(Error::LengthMismatch { expected: x.len(), found: theta.len() }.into());
        }
        let i = max_drop_index(theta).expect("two or more values");
        counts[i] += 1;
        picked.push(x[i + 1]);
    }
    if picked.is_empty() {
        return Err(Error::InvalidInput("no draws".into()).into());
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let mode_idx = counts.iter().position(|&c| c == top).expect("counts is nonempty");
    let (q25, q75) = (quantile(&picked, 0.25), quantile(&picked, 0.75));
    Ok(ChangepointPosterior {
        locations: x[1..].to_vec(),
        counts,
        draws: picked.len(),
        mode: x[mode_idx + 1],
        q25,
        q75,
        iqr: q75 - q25,
    })
}
