//! Axis-aligned boxes in the unit hypercube and truncated-proposal weights.
//!
//! A model's proposal is reparameterized as `x = g(z)` with `z` uniform on
//! `[0,1]^T`. A region of parameter space is then a box `B` in `z`-space, and
//! the proposal truncated to it is sampled by drawing `z` uniformly in `B`.
//! Its importance weight is `γ(x)/q(x) · |B|`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TargetModel;

/// Relative guard keeping split points away from interval endpoints.
pub const SPLIT_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRect {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl HyperRect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidRect(format!(
                "bound lengths {} and {} must match and be positive",
                lo.len(),
                hi.len()
            )));
        }
        for (t, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(0.0..=1.0).contains(&l) || !(0.0..=1.0).contains(&h) || l >= h {
                return Err(Error::InvalidRect(format!(
                    "dimension {t}: [{l}, {h}] is not a non-empty subinterval of [0,1]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        assert!(dim > 0, "hypercube dimension must be positive");
        Self { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, dim: usize) -> f64 {
        self.hi[dim] - self.lo[dim]
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// Log-volume; stays finite for deep trees where the product underflows.
    pub fn log_volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l).ln()).sum()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Open interval of admissible split points on `dim`, after the guard margin.
    pub fn split_range(&self, dim: usize) -> (f64, f64) {
        let margin = SPLIT_GUARD * self.width(dim);
        (self.lo[dim] + margin, self.hi[dim] - margin)
    }

    /// Cuts the box at `point` along `dim`, returning `(left, right)`.
    pub fn split(&self, dim: usize, point: f64) -> Result<(HyperRect, HyperRect)> {
        if dim >= self.dim() {
            return Err(Error::InvalidRect(format!("split dimension {dim} out of range")));
        }
        let (lo, hi) = self.split_range(dim);
        if !(point > lo && point < hi) {
            return Err(Error::InvalidSplit { dim, point, lo: self.lo[dim], hi: self.hi[dim] });
        }
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[dim] = point;
        right.lo[dim] = point;
        Ok((left, right))
    }

    /// Uniform draw from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let u: f64 = rng.random();
                (l + u * (h - l)).clamp(l, h)
            })
            .collect()
    }
}

/// Maps `z` through the model's reparameterization and returns `(x, log w)`
/// with `w = γ(x)/q(x) · |rect|`. A zero density yields `log w = -inf`;
/// NaN or `+inf` is reported as an error.
pub fn truncated_weight(
    model: &dyn TargetModel,
    rect: &HyperRect,
    z: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let x = model.transform(z);
    let log_ratio = model.log_weight(&x);
    if log_ratio.is_nan() || log_ratio == f64::INFINITY {
        return Err(Error::NonFiniteDensity {
            value: log_ratio,
            context: format!("z = {z:?}"),
        });
    }
    Ok((x, log_ratio + rect.log_volume()))
}
