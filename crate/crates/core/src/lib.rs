//! Locally adaptive Bayesian trend estimation with shrinkage-prior Markov
//! random fields.
//!
//! A latent trend `theta` observed on an ordered grid has independent priors
//! on its order-k differences. The difference prior is normal (a Gaussian
//! Markov random field), Laplace, or horseshoe; the latter two are written as
//! scale mixtures of normals with one local scale per increment. Posteriors
//! are explored with the No-U-Turn sampler in [`sampler`], and the remaining
//! modules cover prior calibration, simulation studies and MCMC diagnostics.
//!
//! ```no_run
//! use spmrf::{grid::{DiffOrder, Grid}, model::*, sampler::{nuts_run, SamplerConfig}};
//!
//! let y = vec![4.0, 5.0, 4.0, 0.0, 1.0, 4.0, 3.0, 4.0, 0.0, 6.0];
//! let (mu, omega) = default_theta1_prior(&y, &ObservationModel::Poisson).unwrap();
//! let spec = ModelSpec::new(Grid::unit(y.len()), DiffOrder::First, PriorFamily::Horseshoe, ObservationModel::Poisson)
//!     .with_theta1_prior(mu, omega)
//!     .with_global_scale(ScalePrior::HalfCauchy { scale: 0.01 });
//! let samples = nuts_run(&spec, &y, &SamplerConfig::default()).unwrap();
//! println!("{} retained draws", samples.total_draws());
//! ```

pub mod calibrate;
pub mod densities;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod model;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
