//! Inference trees: adaptive hierarchical partitioning of a proposal's
//! reparameterized space for Monte Carlo inference.
//!
//! The unit hypercube `[0,1]^D` is mapped onto the proposal through a
//! reparameterization `g`. A binary tree of hyperrectangles partitions that
//! cube; every node runs a base inference algorithm under the proposal
//! truncated to its region and combines its local estimate with those of its
//! children. Leaves are chosen by a bandit-style traversal and refined by
//! either more runs or a split.

pub mod base_infer;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod integration;
pub mod logweight_density;
pub mod models;
pub mod numeric;
pub mod refine;
pub mod reparam;
pub mod rng;
pub(crate) mod serde_float;
pub mod trainer;
pub mod traversal;
pub mod tree;

pub use error::{Error, Result};
