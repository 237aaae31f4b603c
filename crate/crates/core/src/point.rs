use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible Euclidean norm of a fibre direction for any
/// derivative-taking operation.
pub const ZERO_DIRECTION_GUARD: f64 = 1e-12;

/// A point of the tangent bundle in manifold induced coordinates `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentBundlePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TangentBundlePoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "x and y must have the same length");
        Self { x, y }
    }

    pub fn dimension(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    pub fn fibre_norm(&self) -> f64 {
        norm(&self.y)
    }

    pub(crate) fn check_dimension(&self, n: usize) -> Result<()> {
        if self.x.len() != n || self.y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.x.len().max(self.y.len()),
            });
        }
        Ok(())
    }

    /// Rejects non-finite coordinates and fibre directions below the zero guard.
    pub(crate) fn check_off_zero_section(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFiniteField);
        }
        let norm = self.fibre_norm();
        if norm < ZERO_DIRECTION_GUARD {
            return Err(Error::NearZeroDirection { norm });
        }
        Ok(())
    }

    /// The point with fibre coordinates scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.iter().map(|v| v * lambda).collect(),
        }
    }

    /// Maximum absolute coordinate difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.y.iter().zip(&other.y))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
