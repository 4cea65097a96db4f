//! Target models: unnormalized densities paired with a unit-hypercube
//! reparameterization of their proposal.

mod chaos;
mod conjugate;
mod dataset;
mod gmm;
mod linear_gaussian;
mod network;

pub use chaos::{pickover_step, ChaosModel, ChaosTruth};
pub use conjugate::{ConjugateGaussian, ScaledProposal};
pub use dataset::Dataset;
pub use gmm::{GmmData, GmmModel};
pub use linear_gaussian::LinearGaussianSsm;
pub use network::{Graph, NetworkModel};

use crate::rng::StreamRng;

/// A target whose proposal is the push-forward of `Uniform([0,1]^dim)`
/// through [`TargetModel::transform`].
///
/// Only the ratio `γ(x)/q(x)` is needed, so `q` may be implicit.
pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    /// The reparameterization `g`.
    fn transform(&self, z: &[f64]) -> Vec<f64>;

    /// `log γ(x) - log q(x)`.
    fn log_weight(&self, x: &[f64]) -> f64;

    /// A known integrand `f(x)`, for models that define one.
    fn integrand(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// A state-space model with global parameters `θ` controlled by the tree and
/// latent states integrated out by a particle filter.
///
/// The proposal on `θ` is its prior, so a sweep's marginal-likelihood estimate
/// is the (unbiased) importance weight.
pub trait StateSpaceModel: Send + Sync {
    fn theta_dim(&self) -> usize;

    /// Prior reparameterization of `θ`.
    fn theta_from_unit(&self, z: &[f64]) -> Vec<f64>;

    fn log_prior(&self, theta: &[f64]) -> f64;

    fn state_dim(&self) -> usize;

    fn series_len(&self) -> usize;

    fn sample_initial(&self, theta: &[f64], rng: &mut StreamRng, out: &mut [f64]);

    /// Draws the state at step `t` given the state at `t - 1` (or the initial state for `t = 0`).
    fn sample_transition(
        &self,
        theta: &[f64],
        t: usize,
        prev: &[f64],
        rng: &mut StreamRng,
        out: &mut [f64],
    );

    fn log_observation(&self, theta: &[f64], t: usize, state: &[f64]) -> f64;
}
