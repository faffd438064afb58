//! Parametric distribution families over hypothesis space.
//!
//! A family maps a parameter vector `theta` to a probability distribution
//! `rho(h; theta)` over hypotheses `h`, and exposes the pieces natural
//! gradient descent needs: log-density, score (gradient of log-density in
//! `theta`), seeded sampling, and a closed-form Fisher information matrix.

mod gaussian;
mod tabular;

pub use gaussian::{Gaussian2DFamily, GaussianDiagonalFamily, GaussianScalarFamily};
pub use tabular::TabularSoftmaxFamily;

use nalgebra::DVector;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::natgrad::FisherMatrix;

/// Dense parameter vector of a distribution family.
pub type ParamVector = DVector<f64>;

/// A point in hypothesis space: an index into a finite support, or a point
/// in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Hypothesis {
    pub fn scalar(x: f64) -> Self {
        Hypothesis::Continuous(vec![x])
    }

    pub fn point(xs: &[f64]) -> Self {
        Hypothesis::Continuous(xs.to_vec())
    }

    pub fn index(&self) -> Result<usize> {
        match self {
            Hypothesis::Discrete(i) => Ok(*i),
            Hypothesis::Continuous(_) => {
                Err(Error::invalid("expected a discrete hypothesis index"))
            }
        }
    }

    pub fn coords(&self) -> Result<&[f64]> {
        match self {
            Hypothesis::Continuous(xs) => Ok(xs),
            Hypothesis::Discrete(_) => Err(Error::invalid("expected a continuous hypothesis")),
        }
    }

    pub fn as_scalar(&self) -> Result<f64> {
        let xs = self.coords()?;
        if xs.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: xs.len() });
        }
        Ok(xs[0])
    }
}

/// Hypothesis space of a family: a finite support of `m` points or `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Finite(usize),
    Continuous(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    TabularSoftmax,
    GaussianScalar,
    GaussianDiagonal,
    GaussianFull2d,
}

/// Interface bundling log-density, score, sampling, and the analytic Fisher.
///
/// `log_prob` must be twice differentiable in `theta` for every supported
/// hypothesis, and `exp(log_prob)` must normalize over the support.
pub trait DistributionFamily {
    fn kind(&self) -> FamilyKind;

    /// Length `n` of the parameter vector.
    fn param_dim(&self) -> usize;

    fn support(&self) -> Support;

    /// Log-probability (finite support) or log-density (continuous support).
    fn log_prob(&self, theta: &ParamVector, h: &Hypothesis) -> Result<f64>;

    /// Score `s_i = d/d theta_i log rho(h; theta)`, length `param_dim`.
    fn score(&self, theta: &ParamVector, h: &Hypothesis) -> Result<ParamVector>;

    /// `count` i.i.d. draws from `rho(.; theta)`; deterministic given the
    /// generator state.
    fn sample(
        &self,
        theta: &ParamVector,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Hypothesis>>;

    /// Closed-form Fisher information at `theta` (covariance of the score).
    fn analytic_fisher(&self, theta: &ParamVector) -> Result<FisherMatrix>;

    /// Finite-support view of the family, for operations that only exist on
    /// tabular supports (exact expectations, replicator comparisons).
    fn as_tabular(&self) -> Option<&TabularSoftmaxFamily> {
        None
    }
}

/// Validates `theta` against a family's declared dimension and finiteness.
pub(crate) fn check_theta(family: &(impl DistributionFamily + ?Sized), theta: &ParamVector) -> Result<()> {
    if theta.len() != family.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: family.param_dim(),
            got: theta.len(),
        });
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("parameter vector has non-finite entries"));
    }
    Ok(())
}

pub(crate) fn check_coords(expected: usize, h: &Hypothesis) -> Result<&[f64]> {
    let xs = h.coords()?;
    if xs.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: xs.len() });
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("hypothesis has non-finite coordinates"));
    }
    Ok(xs)
}
