//! Inference for the stochastic Gompertz population model observed through
//! Poisson counts.
//!
//! The log abundance `Z[t]` follows a stationary AR(1),
//! `Z[t+1] = a + (1 + b) Z[t] + e[t]` with `e[t] ~ N(0, sigma2)`, and each
//! count is `N*[t] ~ Poisson(exp(Z[t]))`. Everything is parameterized by the
//! stationary mean `theta1`, stationary variance `theta2` and
//! density-dependence coefficient `b in (-2, 0)`.
//!
//! Two estimators are provided:
//!
//! * [`mcem::mcem_fit`]: maximum likelihood by Monte Carlo EM, with standard
//!   errors from Louis' identity.
//! * [`bayes::gibbs_fit`]: a Gibbs sampler under a normal-inverse-gamma prior on
//!   `(theta1, theta2)` and a uniform prior on `b`.
//!
//! Both rely on the exact accept-reject sampler for one latent site in
//! [`latent`]. All numerics are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod ar1;
pub mod bayes;
pub mod diagnostics;
pub mod error;
pub mod lambert;
pub mod latent;
pub mod linalg;
pub mod mcem;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
pub use model::{NoiseModel, ObservedSeries};
pub use scalar::Scalar;

pub type Params = model::ModelParams<f64>;
pub type Natural = model::NaturalParams<f64>;
pub type Trajectory = model::LatentTrajectory<f64>;
pub type Prior = bayes::PriorHyper<f64>;
pub type Chain = bayes::PosteriorChain<f64>;
pub type MleFit = mcem::MleFit<f64>;
pub type ChainSummary = diagnostics::ChainSummary<f64>;

pub type Params32 = model::ModelParams<f32>;
pub type Trajectory32 = model::LatentTrajectory<f32>;
