//! Observation locations, forward differences and increment variance factors.
//!
//! Regular and irregular grids share one code path: the irregular second-order
//! increment `theta[j+2] - (1 + r) theta[j+1] + r theta[j]` with
//! `r = delta[j+1] / delta[j]` reduces to the ordinary second difference when
//! the spacings are equal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether all spacings are equal.
pub const REGULARITY_TOLERANCE: f64 = 1e-12;

/// Order of the differences that carry the smoothing prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum DiffOrder {
    First,
    Second,
}

impl DiffOrder {
    pub fn get(self) -> usize {
        match self {
            DiffOrder::First => 1,
            DiffOrder::Second => 2,
        }
    }
}

impl TryFrom<usize> for DiffOrder {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        match k {
            1 => Ok(DiffOrder::First),
            2 => Ok(DiffOrder::Second),
            _ => Err(Error::Unsupported(format!(
                "difference order {k}; only orders 1 and 2 are implemented"
            ))),
        }
    }
}

impl From<DiffOrder> for usize {
    fn from(k: DiffOrder) -> usize {
        k.get()
    }
}

impl std::fmt::Display for DiffOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.get())
    }
}

/// Strictly increasing observation locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    locations: Vec<f64>,
    spacings: Vec<f64>,
    regular: bool,
}

impl Grid {
    /// Builds a grid from strictly increasing, finite locations.
    ///
    /// Duplicate locations are rejected; replicate observations must be
    /// aggregated by the caller first.
    pub fn new(locations: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::invalid("grid needs at least one location"));
        }
        if let Some(bad) = locations.iter().find(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite grid location {bad}")));
        }
        let spacings: Vec<f64> = locations.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(j) = spacings.iter().position(|&d| d <= 0.0) {
            let msg = if spacings[j] == 0.0 {
                format!("duplicate grid location {}", locations[j])
            } else {
                format!(
                    "grid locations must be increasing ({} follows {})",
                    locations[j + 1],
                    locations[j]
                )
            };
            return Err(Error::invalid(msg));
        }
        let regular = match spacings.first() {
            None => true,
            Some(&h) => spacings
                .iter()
                .all(|&d| (d - h).abs() <= REGULARITY_TOLERANCE * h.abs()),
        };
        Ok(Grid {
            locations,
            spacings,
            regular,
        })
    }

    /// Integer time indices `1..=n`.
    pub fn unit(n: usize) -> Self {
        Self::regular(n, 1.0, 1.0).expect("unit grid is valid")
    }

    pub fn regular(n: usize, start: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        Self::new((0..n).map(|i| start + spacing * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn is_regular(&self) -> bool {
        self.regular
    }

    /// Checks the minimum size for a model of order `k`: one increment plus
    /// the `k` initial components.
    pub fn check_order(&self, k: DiffOrder) -> Result<()> {
        if self.len() < k.get() + 2 {
            return Err(Error::invalid(format!(
                "an order-{k} model needs at least {} grid points, got {}",
                k.get() + 2,
                self.len()
            )));
        }
        Ok(())
    }

    /// Ratios `delta[j+1] / delta[j]` used by the second-order increment.
    pub fn spacing_ratios(&self) -> Vec<f64> {
        self.spacings.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Order-k forward differences of `theta` on this grid.
    pub fn difference(&self, theta: &[f64], k: DiffOrder) -> Result<Vec<f64>> {
        if theta.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: theta.len(),
            });
        }
        if theta.len() <= k.get() {
            return Err(Error::invalid(format!(
                "order-{k} differences need more than {k} values"
            )));
        }
        Ok(match k {
            DiffOrder::First => theta.windows(2).map(|w| w[1] - w[0]).collect(),
            DiffOrder::Second => theta
                .windows(3)
                .zip(self.spacing_ratios())
                .map(|(w, r)| w[2] - (1.0 + r) * w[1] + r * w[0])
                .collect(),
        })
    }

    /// Variance multipliers `d[j]` with `Var(increment j | tau) = d[j] tau[j]^2`.
    ///
    /// `d[j] = delta[j]` for first order and
    /// `d[j] = delta[j+1]^2 (delta[j] + delta[j+1]) / 2` for second order.
    pub fn scale_factors(&self, k: DiffOrder) -> Vec<f64> {
        match k {
            DiffOrder::First => self.spacings.clone(),
            DiffOrder::Second => self
                .spacings
                .windows(2)
                .map(|w| w[1] * w[1] * (w[0] + w[1]) / 2.0)
                .collect(),
        }
    }
}

/// Free-function form of [`Grid::difference`].
pub fn difference(theta: &[f64], k: DiffOrder, grid: &Grid) -> Result<Vec<f64>> {
    grid.difference(theta, k)
}

/// Free-function form of [`Grid::scale_factors`].
pub fn scale_factors(k: DiffOrder, grid: &Grid) -> Vec<f64> {
    grid.scale_factors(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_difference_on_unit_grid() {
        let g = Grid::unit(3);
        assert_eq!(g.difference(&[3.0, 1.0, 4.0], DiffOrder::First).unwrap(), vec![-2.0, 3.0]);
    }

    #[test]
    fn second_difference_on_unit_grid() {
        let g = Grid::unit(3);
        assert_eq!(g.difference(&[3.0, 1.0, 4.0], DiffOrder::Second).unwrap(), vec![5.0]);
    }

    #[test]
    fn irregular_second_difference() {
        // delta = (1, 2): theta3 - 3 theta2 + 2 theta1
        let g = Grid::new(vec![0.0, 1.0, 3.0]).unwrap();
        assert!(!g.is_regular());
        let theta = [0.7, -1.3, 2.9];
        let d = g.difference(&theta, DiffOrder::Second).unwrap();
        assert!((d[0] - (2.9 - 3.0 * -1.3 + 2.0 * 0.7)).abs() < 1e-14);
    }

    #[test]
    fn second_order_is_iterated_first_order_on_regular_grid() {
        let g = Grid::unit(6);
        let theta = [1.0, 4.0, 9.0, 16.0, 25.0, 36.0];
        let once = g.difference(&theta, DiffOrder::First).unwrap();
        let twice = Grid::unit(5).difference(&once, DiffOrder::First).unwrap();
        assert_eq!(g.difference(&theta, DiffOrder::Second).unwrap(), twice);
    }

    #[test]
    fn unit_grid_scale_factors_are_one() {
        let g = Grid::unit(7);
        assert!(g.scale_factors(DiffOrder::First).iter().all(|&d| d == 1.0));
        assert!(g.scale_factors(DiffOrder::Second).iter().all(|&d| d == 1.0));
        assert_eq!(g.scale_factors(DiffOrder::Second).len(), 5);
    }

    #[test]
    fn irregular_second_order_scale_factor() {
        let g = Grid::new(vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(g.scale_factors(DiffOrder::Second), vec![6.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Grid::new(vec![1.0, 2.0, 2.0]).is_err());
        assert!(Grid::new(vec![1.0, 0.5]).is_err());
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![0.0, f64::NAN]).is_err());
        assert!(DiffOrder::try_from(3).is_err());
        assert!(Grid::unit(3).difference(&[1.0, 2.0], DiffOrder::First).is_err());
        assert!(Grid::unit(3).check_order(DiffOrder::Second).is_err());
        assert!(Grid::unit(4).check_order(DiffOrder::Second).is_ok());
    }

    #[test]
    fn regular_detection_uses_relative_tolerance() {
        let g = Grid::new(vec![0.0, 0.1, 0.2, 0.30000000000000004]).unwrap();
        assert!(g.is_regular());
        let g = Grid::new(vec![0.0, 0.1, 0.2, 0.3001]).unwrap();
        assert!(!g.is_regular());
    }

    #[test]
    fn densified_grid_rescales_factors() {
        let m = 4.0;
        let coarse = Grid::regular(10, 0.0, 1.0).unwrap();
        let fine = Grid::regular(37, 0.0, 1.0 / m).unwrap();
        let c1 = coarse.scale_factors(DiffOrder::First)[0];
        let f1 = fine.scale_factors(DiffOrder::First)[0];
        let c2 = coarse.scale_factors(DiffOrder::Second)[0];
        let f2 = fine.scale_factors(DiffOrder::Second)[0];
        assert!((f1 - c1 / m).abs() < 1e-15);
        assert!((f2 - c2 / m.powi(3)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn difference_is_linear(
            theta in prop::collection::vec(-10.0f64..10.0, 8),
            phi in prop::collection::vec(-10.0f64..10.0, 8),
            gaps in prop::collection::vec(0.1f64..3.0, 7),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mut locs = vec![0.0];
            for g in &gaps {
                locs.push(locs.last().unwrap() + g);
            }
            let grid = Grid::new(locs).unwrap();
            for k in [DiffOrder::First, DiffOrder::Second] {
                let combo: Vec<f64> = theta.iter().zip(&phi).map(|(t, p)| a * t + b * p).collect();
                let lhs = grid.difference(&combo, k).unwrap();
                let dt = grid.difference(&theta, k).unwrap();
                let dp = grid.difference(&phi, k).unwrap();
                for j in 0..lhs.len() {
                    let rhs = a * dt[j] + b * dp[j];
                    prop_assert!((lhs[j] - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
                }
            }
        }

        #[test]
        fn regular_spacing_reduces_to_standard_forms(h in 0.01f64..10.0, n in 4usize..20) {
            let grid = Grid::regular(n, -2.0, h).unwrap();
            prop_assert!(grid.is_regular());
            for d in grid.scale_factors(DiffOrder::First) {
                prop_assert!((d - h).abs() <= 1e-9 * h);
            }
            for d in grid.scale_factors(DiffOrder::Second) {
                prop_assert!((d - h * h * h).abs() <= 1e-9 * h * h * h);
            }
            for r in grid.spacing_ratios() {
                prop_assert!((r - 1.0).abs() < 1e-9);
            }
        }
    }
}
