//! Gaussian families in mean / log-scale coordinates.
//!
//! Scale parameters are carried as logarithms so every finite parameter
//! vector maps to a proper distribution and the Fisher stays positive
//! definite (no boundary at sigma = 0).

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{check_coords, check_theta, DistributionFamily, FamilyKind, Hypothesis, ParamVector, Support};
use crate::error::Result;
use crate::natgrad::FisherMatrix;

const LN_2PI: f64 = 1.8378770664093453;

/// 1-D Gaussian with `theta = (mu, log sigma)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianScalarFamily;

impl DistributionFamily for GaussianScalarFamily {
    fn kind(&self) -> FamilyKind {
        FamilyKind::GaussianScalar
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn support(&self) -> Support {
        Support::Continuous(1)
    }

    fn log_prob(&self, theta: &ParamVector, h: &Hypothesis) -> Result<f64> {
        check_theta(self, theta)?;
        let x = check_coords(1, h)?[0];
        let (mu, log_sigma) = (theta[0], theta[1]);
        let z = (x - mu) * (-log_sigma).exp();
        Ok(-0.5 * LN_2PI - log_sigma - 0.5 * z * z)
    }

    fn score(&self, theta: &ParamVector, h: &Hypothesis) -> Result<ParamVector> {
        check_theta(self, theta)?;
        let x = check_coords(1, h)?[0];
        let (mu, log_sigma) = (theta[0], theta[1]);
        let inv_var = (-2.0 * log_sigma).exp();
        let d = x - mu;
        Ok(DVector::from_vec(vec![d * inv_var, d * d * inv_var - 1.0]))
    }

    fn sample(
        &self,
        theta: &ParamVector,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Hypothesis>> {
        check_theta(self, theta)?;
        let (mu, sigma) = (theta[0], theta[1].exp());
        Ok((0..count)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                Hypothesis::Continuous(vec![mu + sigma * z])
            })
            .collect())
    }

    fn analytic_fisher(&self, theta: &ParamVector) -> Result<FisherMatrix> {
        check_theta(self, theta)?;
        let inv_var = (-2.0 * theta[1]).exp();
        Ok(FisherMatrix::from_symmetric_unchecked(DMatrix::from_diagonal(
            &DVector::from_vec(vec![inv_var, 2.0]),
        )))
    }
}

/// Axis-aligned Gaussian on `R^d` with `theta = (mu_1..mu_d, log sigma_1..log sigma_d)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianDiagonalFamily {
    dim: usize,
}

impl GaussianDiagonalFamily {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl DistributionFamily for GaussianDiagonalFamily {
    fn kind(&self) -> FamilyKind {
        FamilyKind::GaussianDiagonal
    }

    fn param_dim(&self) -> usize {
        2 * self.dim
    }

    fn support(&self) -> Support {
        Support::Continuous(self.dim)
    }

    fn log_prob(&self, theta: &ParamVector, h: &Hypothesis) -> Result<f64> {
        check_theta(self, theta)?;
        let xs = check_coords(self.dim, h)?;
        let mut acc = -0.5 * LN_2PI * self.dim as f64;
        for (i, &x) in xs.iter().enumerate() {
            let (mu, log_sigma) = (theta[i], theta[self.dim + i]);
            let z = (x - mu) * (-log_sigma).exp();
            acc -= log_sigma + 0.5 * z * z;
        }
        Ok(acc)
    }

    fn score(&self, theta: &ParamVector, h: &Hypothesis) -> Result<ParamVector> {
        check_theta(self, theta)?;
        let xs = check_coords(self.dim, h)?;
        let mut s = DVector::zeros(2 * self.dim);
        for (i, &x) in xs.iter().enumerate() {
            let (mu, log_sigma) = (theta[i], theta[self.dim + i]);
            let inv_var = (-2.0 * log_sigma).exp();
            let d = x - mu;
            s[i] = d * inv_var;
            s[self.dim + i] = d * d * inv_var - 1.0;
        }
        Ok(s)
    }

    fn sample(
        &self,
        theta: &ParamVector,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Hypothesis>> {
        check_theta(self, theta)?;
        Ok((0..count)
            .map(|_| {
                let xs = (0..self.dim)
                    .map(|i| {
                        let z: f64 = rng.sample(StandardNormal);
                        theta[i] + theta[self.dim + i].exp() * z
                    })
                    .collect();
                Hypothesis::Continuous(xs)
            })
            .collect())
    }

    fn analytic_fisher(&self, theta: &ParamVector) -> Result<FisherMatrix> {
        check_theta(self, theta)?;
        let mut diag = DVector::zeros(2 * self.dim);
        for i in 0..self.dim {
            diag[i] = (-2.0 * theta[self.dim + i]).exp();
            diag[self.dim + i] = 2.0;
        }
        Ok(FisherMatrix::from_symmetric_unchecked(DMatrix::from_diagonal(&diag)))
    }
}

/// Full-covariance 2-D Gaussian with five degrees of freedom:
/// `theta = (mu_1, mu_2, log l11, l21, log l22)` for the Cholesky factor
/// `L = [[l11, 0], [l21, l22]]`, `Sigma = L L^T`.
///
/// The log-diagonal keeps `Sigma` symmetric positive definite for every
/// finite `theta` and leaves no redundant directions, so the Fisher is
/// positive definite everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gaussian2DFamily;

struct Chol {
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Chol {
    fn from_theta(theta: &ParamVector) -> Self {
        Chol { l11: theta[2].exp(), l21: theta[3], l22: theta[4].exp() }
    }

    /// z = L^{-1} (x - mu), by forward substitution.
    fn whiten(&self, u1: f64, u2: f64) -> (f64, f64) {
        let z1 = u1 / self.l11;
        let z2 = (u2 - self.l21 * z1) / self.l22;
        (z1, z2)
    }

    /// w = L^{-T} z, by back substitution.
    fn unwhiten_t(&self, z1: f64, z2: f64) -> (f64, f64) {
        let w2 = z2 / self.l22;
        let w1 = (z1 - self.l21 * w2) / self.l11;
        (w1, w2)
    }

    fn covariance(&self) -> Matrix2<f64> {
        let l = Matrix2::new(self.l11, 0.0, self.l21, self.l22);
        l * l.transpose()
    }
}

impl DistributionFamily for Gaussian2DFamily {
    fn kind(&self) -> FamilyKind {
        FamilyKind::GaussianFull2d
    }

    fn param_dim(&self) -> usize {
        5
    }

    fn support(&self) -> Support {
        Support::Continuous(2)
    }

    fn log_prob(&self, theta: &ParamVector, h: &Hypothesis) -> Result<f64> {
        check_theta(self, theta)?;
        let xs = check_coords(2, h)?;
        let chol = Chol::from_theta(theta);
        let (z1, z2) = chol.whiten(xs[0] - theta[0], xs[1] - theta[1]);
        // log det L = theta[2] + theta[4]
        Ok(-LN_2PI - theta[2] - theta[4] - 0.5 * (z1 * z1 + z2 * z2))
    }

    fn score(&self, theta: &ParamVector, h: &Hypothesis) -> Result<ParamVector> {
        check_theta(self, theta)?;
        let xs = check_coords(2, h)?;
        let chol = Chol::from_theta(theta);
        let (z1, z2) = chol.whiten(xs[0] - theta[0], xs[1] - theta[1]);
        let (w1, w2) = chol.unwhiten_t(z1, z2);
        Ok(DVector::from_vec(vec![
            w1,
            w2,
            chol.l11 * w1 * z1 - 1.0,
            w2 * z1,
            chol.l22 * w2 * z2 - 1.0,
        ]))
    }

    fn sample(
        &self,
        theta: &ParamVector,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Hypothesis>> {
        check_theta(self, theta)?;
        let chol = Chol::from_theta(theta);
        Ok((0..count)
            .map(|_| {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                Hypothesis::Continuous(vec![
                    theta[0] + chol.l11 * z1,
                    theta[1] + chol.l21 * z1 + chol.l22 * z2,
                ])
            })
            .collect())
    }

    fn analytic_fisher(&self, theta: &ParamVector) -> Result<FisherMatrix> {
        check_theta(self, theta)?;
        let chol = Chol::from_theta(theta);
        let sigma = chol.covariance();
        let sigma_inv = sigma.try_inverse().expect("covariance is SPD for finite theta");

        // d Sigma / d theta_k for the three Cholesky coordinates.
        let dl = [
            Matrix2::new(chol.l11, 0.0, 0.0, 0.0),
            Matrix2::new(0.0, 0.0, 1.0, 0.0),
            Matrix2::new(0.0, 0.0, 0.0, chol.l22),
        ];
        let l = Matrix2::new(chol.l11, 0.0, chol.l21, chol.l22);
        let dsigma: Vec<Matrix2<f64>> =
            dl.iter().map(|d| d * l.transpose() + l * d.transpose()).collect();

        let mut fisher = DMatrix::zeros(5, 5);
        // Mean block: Sigma^{-1}; mean/covariance cross terms vanish.
        for i in 0..2 {
            for j in 0..2 {
                fisher[(i, j)] = sigma_inv[(i, j)];
            }
        }
        for a in 0..3 {
            for b in a..3 {
                let v = 0.5 * (sigma_inv * dsigma[a] * sigma_inv * dsigma[b]).trace();
                fisher[(2 + a, 2 + b)] = v;
                fisher[(2 + b, 2 + a)] = v;
            }
        }
        Ok(FisherMatrix::from_symmetric_unchecked(fisher))
    }
}

/// Checks `score` against central finite differences of `log_prob`.
#[cfg(test)]
pub(crate) fn finite_difference_score(
    family: &dyn DistributionFamily,
    theta: &ParamVector,
    h: &Hypothesis,
    step: f64,
) -> ParamVector {
    DVector::from_fn(family.param_dim(), |i, _| {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += step;
        minus[i] -= step;
        (family.log_prob(&plus, h).unwrap() - family.log_prob(&minus, h).unwrap()) / (2.0 * step)
    })
}
