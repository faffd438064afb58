//! Softmax-parameterized distributions over a finite support.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{check_theta, DistributionFamily, FamilyKind, Hypothesis, ParamVector, Support};
use crate::error::{Error, Result};
use crate::natgrad::FisherMatrix;

/// `rho(h; theta) = exp((F theta)_h) / sum_k exp((F theta)_k)` for a feature
/// matrix `F` of shape `m x n`.
///
/// With `F = I` every point of the simplex interior is reachable (full
/// parameterization); with `n < m` the family is a curved submanifold of the
/// simplex. Probabilities are strictly positive for all finite `theta`, so no
/// hypothesis can ever be extinguished by a parameter update.
#[derive(Debug, Clone)]
pub struct TabularSoftmaxFamily {
    features: DMatrix<f64>,
}

impl TabularSoftmaxFamily {
    /// Full parameterization on `m` hypotheses (`F = I`).
    pub fn identity(m: usize) -> Self {
        Self { features: DMatrix::identity(m, m) }
    }

    /// Underparameterized family from an `m x n` feature matrix.
    pub fn with_features(features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() < 2 || features.ncols() < 1 {
            return Err(Error::invalid("feature matrix must be at least 2 x 1"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix has non-finite entries"));
        }
        Ok(Self { features })
    }

    pub fn support_size(&self) -> usize {
        self.features.nrows()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Probability vector `softmax(F theta)`.
    pub fn probabilities(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        check_theta(self, theta)?;
        let logits = &self.features * theta;
        let max = logits.max();
        let mut probs = logits.map(|v| (v - max).exp());
        let total = probs.sum();
        probs /= total;
        Ok(probs)
    }

    /// Score vectors for every support point, as rows of an `m x n` matrix.
    pub fn score_table(&self, theta: &ParamVector) -> Result<DMatrix<f64>> {
        let probs = self.probabilities(theta)?;
        let mean_feature = self.features.transpose() * &probs;
        let mut table = self.features.clone();
        for mut row in table.row_iter_mut() {
            row -= mean_feature.transpose();
        }
        Ok(table)
    }

    fn check_index(&self, h: &Hypothesis) -> Result<usize> {
        let idx = h.index()?;
        if idx >= self.support_size() {
            return Err(Error::invalid(format!(
                "hypothesis index {idx} out of range for support size {}",
                self.support_size()
            )));
        }
        Ok(idx)
    }
}

impl DistributionFamily for TabularSoftmaxFamily {
    fn kind(&self) -> FamilyKind {
        FamilyKind::TabularSoftmax
    }

    fn param_dim(&self) -> usize {
        self.features.ncols()
    }

    fn support(&self) -> Support {
        Support::Finite(self.support_size())
    }

    fn log_prob(&self, theta: &ParamVector, h: &Hypothesis) -> Result<f64> {
        check_theta(self, theta)?;
        let idx = self.check_index(h)?;
        let logits = &self.features * theta;
        let max = logits.max();
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(logits[idx] - lse)
    }

    fn score(&self, theta: &ParamVector, h: &Hypothesis) -> Result<ParamVector> {
        let idx = self.check_index(h)?;
        let probs = self.probabilities(theta)?;
        let mean_feature = self.features.transpose() * probs;
        Ok(self.features.row(idx).transpose() - mean_feature)
    }

    fn sample(
        &self,
        theta: &ParamVector,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Hypothesis>> {
        let probs = self.probabilities(theta)?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = self.support_size() - 1;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            out.push(Hypothesis::Discrete(chosen));
        }
        Ok(out)
    }

    fn analytic_fisher(&self, theta: &ParamVector) -> Result<FisherMatrix> {
        // F^T (diag(rho) - rho rho^T) F, accumulated as a weighted sum of
        // centered-feature outer products so the result is PSD by construction.
        let probs = self.probabilities(theta)?;
        let n = self.param_dim();
        let mean_feature = self.features.transpose() * &probs;
        let mut fisher = DMatrix::zeros(n, n);
        for (h, &p) in probs.iter().enumerate() {
            let centered = self.features.row(h).transpose() - &mean_feature;
            fisher.ger(p, &centered, &centered, 1.0);
        }
        Ok(FisherMatrix::from_symmetric_unchecked(fisher))
    }

    fn as_tabular(&self) -> Option<&TabularSoftmaxFamily> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_softmax_log_prob() {
        let fam = TabularSoftmaxFamily::identity(2);
        let theta = DVector::zeros(2);
        let lp = fam.log_prob(&theta, &Hypothesis::Discrete(0)).unwrap();
        assert_relative_eq!(lp, 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn softmax_score_is_indicator_minus_probability() {
        let fam = TabularSoftmaxFamily::identity(2);
        let theta = DVector::zeros(2);
        let s = fam.score(&theta, &Hypothesis::Discrete(0)).unwrap();
        assert_relative_eq!(s[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(s[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn probabilities_normalize_and_stay_positive() {
        let fam = TabularSoftmaxFamily::identity(4);
        let theta = DVector::from_vec(vec![300.0, -300.0, 2.0, 0.0]);
        let p = fam.probabilities(&theta).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn near_degenerate_softmax_sampling() {
        let fam = TabularSoftmaxFamily::identity(2);
        let theta = DVector::from_vec(vec![10.0, -10.0]);
        let mut r = rng::seeded(11);
        let draws = fam.sample(&theta, 100, &mut r).unwrap();
        assert!(draws.iter().all(|h| matches!(h, Hypothesis::Discrete(0))));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let fam = TabularSoftmaxFamily::identity(3);
        let theta = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let a = fam.sample(&theta, 50, &mut rng::seeded(5)).unwrap();
        let b = fam.sample(&theta, 50, &mut rng::seeded(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fisher_matches_simplex_formula_at_uniform() {
        let fam = TabularSoftmaxFamily::identity(2);
        let theta = DVector::zeros(2);
        let f = fam.analytic_fisher(&theta).unwrap();
        let expected = [[0.25, -0.25], [-0.25, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(f.matrix()[(i, j)], expected[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn identity_fisher_has_gauge_null_direction() {
        let fam = TabularSoftmaxFamily::identity(5);
        let theta = DVector::from_fn(5, |i, _| 0.3 * i as f64 - 0.7);
        let f = fam.analytic_fisher(&theta).unwrap();
        let ones = DVector::from_element(5, 1.0);
        // The all-ones direction leaves softmax invariant.
        assert!((f.matrix() * &ones).norm() < 1e-12);
        let min_eig = f.matrix().clone().symmetric_eigen().eigenvalues.min();
        assert!(min_eig.abs() < 1e-10);
    }

    #[test]
    fn rejects_out_of_range_index_and_bad_theta() {
        let fam = TabularSoftmaxFamily::identity(3);
        let theta = DVector::zeros(3);
        assert!(fam.log_prob(&theta, &Hypothesis::Discrete(3)).is_err());
        let short = DVector::zeros(2);
        assert!(fam.log_prob(&short, &Hypothesis::Discrete(0)).is_err());
        let nan = DVector::from_vec(vec![f64::NAN, 0.0, 0.0]);
        assert!(fam.probabilities(&nan).is_err());
    }

    #[test]
    fn exact_expected_score_is_zero() {
        let fam = TabularSoftmaxFamily::identity(6);
        let theta = DVector::from_fn(6, |i, _| (i as f64 * 0.77).sin());
        let probs = fam.probabilities(&theta).unwrap();
        let table = fam.score_table(&theta).unwrap();
        let mean = table.transpose() * probs;
        assert!(mean.norm() < 1e-14);
    }
}
