//! Natural gradient descent under the Fisher-Rao metric.
//!
//! One step estimates the loss gradient from sampled hypotheses, forms a
//! Fisher matrix, solves the metric equation `F thetadot = -grad` through a
//! Moore-Penrose pseudo-inverse, and advances `theta` by an explicit Euler
//! update.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{DistributionFamily, Hypothesis, ParamVector, TabularSoftmaxFamily};
use crate::trajectory::{LossStats, StepRecord, Trajectory};

/// Symmetric positive semi-definite Fisher information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    mat: DMatrix<f64>,
}

impl FisherMatrix {
    /// Validates squareness, finiteness, and symmetry.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::invalid("Fisher matrix must be square"));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Fisher matrix has non-finite entries"));
        }
        let scale = mat.amax().max(f64::MIN_POSITIVE);
        for i in 0..mat.nrows() {
            for j in (i + 1)..mat.ncols() {
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::invalid("Fisher matrix is not symmetric"));
                }
            }
        }
        Ok(FisherMatrix { mat })
    }

    /// Wraps a matrix already symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(mat: DMatrix<f64>) -> Self {
        debug_assert!(mat.is_square());
        FisherMatrix { mat }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.mat
    }
}

/// How the Fisher matrix of a step is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FisherMode {
    /// Closed-form Fisher of the family.
    Analytic,
    /// Monte Carlo second moment of sampled scores.
    Empirical,
}

/// How the loss gradient of a step is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Score-function estimate from sampled hypotheses.
    MonteCarlo,
    /// Exact expectation over the support of a tabular family.
    ExactTabular,
}

/// Per-step configuration of the natural gradient engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Euler step size, > 0.
    pub learning_rate: f64,
    /// Hypotheses sampled per step, >= 2.
    pub mc_samples: usize,
    pub fisher_mode: FisherMode,
    pub gradient_mode: GradientMode,
    /// Relative eigenvalue cutoff of the pseudo-inverse, in (0, 1).
    pub pinv_threshold: f64,
    /// Subtract the mean sampled loss before weighting scores.
    pub baseline: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            learning_rate: 1e-3,
            mc_samples: 40,
            fisher_mode: FisherMode::Analytic,
            gradient_mode: GradientMode::MonteCarlo,
            pinv_threshold: 1e-10,
            baseline: true,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive and finite"));
        }
        if self.mc_samples < 2 {
            return Err(Error::invalid("at least 2 Monte Carlo samples are required"));
        }
        if !(self.pinv_threshold > 0.0 && self.pinv_threshold < 1.0) {
            return Err(Error::invalid("pseudo-inverse threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A loss function over hypotheses, possibly noisy.
///
/// Implementations must keep any noise unbiased: the expected value of
/// `evaluate(h)` over the noise is the loss the optimizer is meant to
/// minimize.
pub trait LossOracle {
    fn evaluate(&self, h: &Hypothesis) -> f64;

    /// Whether concurrent evaluation preserves the oracle's contract. The
    /// engine itself always evaluates sequentially in sample order so that
    /// runs are reproducible from the seed.
    fn concurrency_safe(&self) -> bool {
        false
    }
}

impl<F: Fn(&Hypothesis) -> f64> LossOracle for F {
    fn evaluate(&self, h: &Hypothesis) -> f64 {
        self(h)
    }
}

fn check_loss(value: f64, h: &Hypothesis) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::EvaluationFailure { hypothesis: format!("{h:?}"), value });
    }
    Ok(value)
}

/// Monte Carlo estimate of the loss gradient from `n` sampled hypotheses.
///
/// Without a baseline this is `(1/N) sum_k L(h_k) s(theta; h_k)`. With the
/// baseline enabled, the mean sampled loss is subtracted and the sum is
/// rescaled by `1/(N-1)`, i.e. the Bessel-corrected sample covariance of
/// loss and score. Both variants are unbiased for the gradient of expected
/// loss, because the expected score is zero; the baseline variant merely has
/// lower variance.
///
/// Returns the gradient estimate together with the sampled losses.
pub fn mc_loss_gradient(
    family: &dyn DistributionFamily,
    theta: &ParamVector,
    loss: &dyn LossOracle,
    n: usize,
    rng: &mut dyn RngCore,
    baseline: bool,
) -> Result<(ParamVector, Vec<f64>)> {
    if n < 2 {
        return Err(Error::invalid("gradient estimation needs at least 2 samples"));
    }
    let draws = family.sample(theta, n, rng)?;
    let mut losses = Vec::with_capacity(n);
    for h in &draws {
        losses.push(check_loss(loss.evaluate(h), h)?);
    }
    let b = if baseline { losses.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let denom = if baseline { (n - 1) as f64 } else { n as f64 };
    let mut grad = DVector::zeros(family.param_dim());
    for (h, &l) in draws.iter().zip(&losses) {
        grad.axpy((l - b) / denom, &family.score(theta, h)?, 1.0);
    }
    Ok((grad, losses))
}

/// Monte Carlo Fisher: `(1/N) sum_k s(theta; h_k) s(theta; h_k)^T`.
///
/// The plain second moment of the score is a consistent covariance estimate
/// because the expected score is zero. Symmetric PSD by construction.
pub fn empirical_fisher(
    family: &dyn DistributionFamily,
    theta: &ParamVector,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<FisherMatrix> {
    if n < 1 {
        return Err(Error::invalid("empirical Fisher needs at least 1 sample"));
    }
    let dim = family.param_dim();
    let mut acc = DMatrix::zeros(dim, dim);
    for h in family.sample(theta, n, rng)? {
        let s = family.score(theta, &h)?;
        acc.ger(1.0, &s, &s, 1.0);
    }
    acc /= n as f64;
    Ok(FisherMatrix::from_symmetric_unchecked(acc))
}

/// Exact gradient of expected loss for a tabular family, by summing over the
/// support: `grad_i = sum_h rho(h) L(h) s_i(h)`.
///
/// Returns `(gradient, expected loss, per-hypothesis losses)`.
pub fn exact_tabular_gradient(
    family: &TabularSoftmaxFamily,
    theta: &ParamVector,
    loss: &dyn LossOracle,
) -> Result<(ParamVector, f64, Vec<f64>)> {
    let probs = family.probabilities(theta)?;
    let mut losses = Vec::with_capacity(family.support_size());
    for h in 0..family.support_size() {
        let hyp = Hypothesis::Discrete(h);
        losses.push(check_loss(loss.evaluate(&hyp), &hyp)?);
    }
    let grad = exact_gradient_from_losses(family, theta, &losses)?;
    let mean: f64 = probs.iter().zip(&losses).map(|(&p, &l)| p * l).sum();
    Ok((grad, mean, losses))
}

/// Exact tabular gradient from a precomputed per-hypothesis loss vector.
pub fn exact_gradient_from_losses(
    family: &TabularSoftmaxFamily,
    theta: &ParamVector,
    losses: &[f64],
) -> Result<ParamVector> {
    if losses.len() != family.support_size() {
        return Err(Error::DimensionMismatch {
            expected: family.support_size(),
            got: losses.len(),
        });
    }
    let probs = family.probabilities(theta)?;
    let table = family.score_table(theta)?;
    let weighted = DVector::from_fn(losses.len(), |h, _| probs[h] * losses[h]);
    Ok(table.transpose() * weighted)
}

/// Minimum-norm solution of the conjugate flow equation `F thetadot = -grad`.
///
/// The pseudo-inverse is formed by symmetric eigendecomposition: eigenvalues
/// above `threshold * lambda_max` are inverted, the rest are zeroed. When
/// `grad` lies in the range of `F`, the returned velocity satisfies the
/// equation exactly and is orthogonal to the null space of `F`.
pub fn solve_conjugate_flow(
    fisher: &FisherMatrix,
    gradient: &ParamVector,
    pinv_threshold: f64,
) -> Result<ParamVector> {
    if gradient.len() != fisher.dim() {
        return Err(Error::DimensionMismatch { expected: fisher.dim(), got: gradient.len() });
    }
    if gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("gradient has non-finite entries"));
    }
    if !(pinv_threshold > 0.0 && pinv_threshold < 1.0) {
        return Err(Error::invalid("pseudo-inverse threshold must lie in (0, 1)"));
    }
    let eigen = fisher.mat.clone().symmetric_eigen();
    let lambda_max = eigen.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if lambda_max == 0.0 {
        return Ok(DVector::zeros(fisher.dim()));
    }
    let cutoff = pinv_threshold * lambda_max;
    // thetadot = -V diag(1/lambda or 0) V^T grad
    let projected = eigen.eigenvectors.transpose() * gradient;
    let scaled = DVector::from_fn(projected.len(), |i, _| {
        let lambda = eigen.eigenvalues[i];
        if lambda > cutoff {
            -projected[i] / lambda
        } else {
            0.0
        }
    });
    Ok(&eigen.eigenvectors * scaled)
}

/// Explicit Euler update `theta' = theta + eta * thetadot`.
pub fn euler_step(theta: &ParamVector, thetadot: &ParamVector, eta: f64) -> Result<ParamVector> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid("step size must be positive and finite"));
    }
    if thetadot.len() != theta.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), got: thetadot.len() });
    }
    if thetadot.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluationFailure {
            hypothesis: "parameter velocity".to_string(),
            value: f64::NAN,
        });
    }
    Ok(theta + eta * thetadot)
}

/// Runs diverge once the parameter norm passes this bound.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Outcome of an aborted run: the error plus everything recorded so far.
#[derive(Debug)]
pub struct RunError {
    pub cause: Error,
    pub partial: Trajectory,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} steps recorded)", self.cause, self.partial.len())
    }
}

impl std::error::Error for RunError {}

/// Iterates gradient estimation, Fisher solve, and Euler updates for
/// `steps` steps, recording one `StepRecord` per step.
///
/// Aborts with the partial trajectory if a loss evaluates non-finite or the
/// parameter norm crosses [`DIVERGENCE_BOUND`].
pub fn run_fr_ngd(
    family: &dyn DistributionFamily,
    theta0: &ParamVector,
    loss: &dyn LossOracle,
    config: &StepConfig,
    steps: usize,
    seed: u64,
    rng: &mut dyn RngCore,
) -> std::result::Result<Trajectory, Box<RunError>> {
    let mut trajectory = Trajectory::new(
        seed,
        serde_json::to_value(config).expect("step config serializes"),
    );
    let fail = |cause: Error, partial: Trajectory| Box::new(RunError { cause, partial });

    if steps < 1 {
        return Err(fail(Error::invalid("at least one step is required"), trajectory));
    }
    if let Err(e) = config.validate() {
        return Err(fail(e, trajectory));
    }
    let mut theta = theta0.clone();
    trajectory.final_theta = theta.iter().copied().collect();

    for step in 0..steps {
        match step_once(family, &theta, loss, config, rng) {
            Ok((next, record_losses, thetadot_norm)) => {
                trajectory.steps.push(StepRecord {
                    step,
                    time: step as f64 * config.learning_rate,
                    theta: theta.iter().copied().collect(),
                    loss: LossStats::from_samples(&record_losses),
                    thetadot_norm,
                    true_log_sigma: None,
                });
                theta = next;
                trajectory.final_theta = theta.iter().copied().collect();
            }
            Err(e) => return Err(fail(e, trajectory)),
        }
        if theta.amax() > DIVERGENCE_BOUND {
            let cause = Error::Diverged {
                step,
                reason: format!("parameter magnitude {} exceeds {DIVERGENCE_BOUND}", theta.amax()),
            };
            return Err(fail(cause, trajectory));
        }
    }
    Ok(trajectory)
}

fn step_once(
    family: &dyn DistributionFamily,
    theta: &ParamVector,
    loss: &dyn LossOracle,
    config: &StepConfig,
    rng: &mut dyn RngCore,
) -> Result<(ParamVector, Vec<f64>, f64)> {
    let (gradient, losses) = match config.gradient_mode {
        GradientMode::MonteCarlo => {
            mc_loss_gradient(family, theta, loss, config.mc_samples, rng, config.baseline)?
        }
        GradientMode::ExactTabular => {
            let tabular = tabular_of(family)?;
            let (grad, _, losses) = exact_tabular_gradient(tabular, theta, loss)?;
            (grad, losses)
        }
    };
    let fisher = match config.fisher_mode {
        FisherMode::Analytic => family.analytic_fisher(theta)?,
        FisherMode::Empirical => empirical_fisher(family, theta, config.mc_samples, rng)?,
    };
    let thetadot = solve_conjugate_flow(&fisher, &gradient, config.pinv_threshold)?;
    let next = euler_step(theta, &thetadot, config.learning_rate)?;
    Ok((next, losses, thetadot.norm()))
}

fn tabular_of(family: &dyn DistributionFamily) -> Result<&TabularSoftmaxFamily> {
    family
        .as_tabular()
        .ok_or_else(|| Error::invalid("exact gradient mode requires a tabular family"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::GaussianScalarFamily;
    use crate::rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tabular2() -> TabularSoftmaxFamily {
        TabularSoftmaxFamily::identity(2)
    }

    fn loss01(h: &Hypothesis) -> f64 {
        match h {
            Hypothesis::Discrete(0) => 0.0,
            Hypothesis::Discrete(_) => 1.0,
            _ => unreachable!(),
        }
    }

    #[test]
    fn exact_gradient_two_point_support() {
        let fam = tabular2();
        let theta = DVector::zeros(2);
        let (grad, mean, _) = exact_tabular_gradient(&fam, &theta, &loss01).unwrap();
        assert_relative_eq!(mean, 0.5, epsilon = 1e-15);
        assert_relative_eq!(grad[0], -0.25, epsilon = 1e-15);
        assert_relative_eq!(grad[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn constant_loss_with_baseline_gives_zero_gradient() {
        let fam = tabular2();
        let theta = DVector::from_vec(vec![0.4, -0.4]);
        let constant = |_: &Hypothesis| 7.5;
        let mut r = rng::seeded(3);
        let (grad, losses) =
            mc_loss_gradient(&fam, &theta, &constant, 64, &mut r, true).unwrap();
        assert!(grad.norm() < 1e-14, "gradient {grad:?}");
        assert!(losses.iter().all(|&l| l == 7.5));
    }

    #[test]
    fn constant_loss_without_baseline_is_scaled_mean_score() {
        let fam = tabular2();
        let theta = DVector::from_vec(vec![0.2, -0.1]);
        let c = 3.0;
        let constant = move |_: &Hypothesis| c;
        let mut r = rng::seeded(4);
        let (grad, _) = mc_loss_gradient(&fam, &theta, &constant, 32, &mut r, false).unwrap();
        // Same draws to reconstruct the mean score.
        let mut r2 = rng::seeded(4);
        let draws = fam.sample(&theta, 32, &mut r2).unwrap();
        let mut mean_score = DVector::zeros(2);
        for h in &draws {
            mean_score += fam.score(&theta, h).unwrap();
        }
        mean_score /= 32.0;
        assert!((grad - c * mean_score).norm() < 1e-14);
    }

    #[test]
    fn quadratic_loss_gradient_matches_closed_form() {
        // L(h) = h^2 under N(mu, sigma^2): expected loss = mu^2 + sigma^2,
        // gradient in (mu, log sigma) = (2 mu, 2 sigma^2).
        let fam = GaussianScalarFamily;
        let theta = DVector::zeros(2);
        let square = |h: &Hypothesis| {
            let x = h.coords().unwrap()[0];
            x * x
        };
        let n = 1_000_000;
        let mut r = rng::seeded(12);
        let (grad, _) = mc_loss_gradient(&fam, &theta, &square, n, &mut r, true).unwrap();
        // Component standard errors at theta = 0: sd(h^2 * h) = sqrt(15),
        // sd(h^2 (h^2-1)) = sqrt(E[x^8] - 2 E[x^6] + E[x^4] - 4) = sqrt(3 * 26) ~ 8.8.
        let se0 = 15f64.sqrt() / (n as f64).sqrt();
        let se1 = (105.0f64 - 2.0 * 15.0 + 3.0 - 4.0).sqrt() / (n as f64).sqrt();
        assert!((grad[0] - 0.0).abs() < 3.0 * se0, "grad0 {}", grad[0]);
        assert!((grad[1] - 2.0).abs() < 3.0 * se1, "grad1 {}", grad[1]);
    }

    #[test]
    fn mc_gradient_is_unbiased_against_support_sum() {
        // Average many independent estimates and compare with the exact
        // gradient at 4 standard errors, with and without the baseline.
        let fam = TabularSoftmaxFamily::identity(3);
        let theta = DVector::from_vec(vec![0.5, -0.2, 0.0]);
        let losses = [0.3, 1.7, -0.9];
        let oracle = move |h: &Hypothesis| losses[h.index().unwrap()];
        let exact = exact_gradient_from_losses(&fam, &theta, &losses).unwrap();

        for baseline in [true, false] {
            let reps = 10_000;
            let n = 8;
            let mut r = rng::seeded(if baseline { 21 } else { 22 });
            let mut sum = DVector::zeros(3);
            let mut sumsq = DVector::zeros(3);
            for _ in 0..reps {
                let (g, _) = mc_loss_gradient(&fam, &theta, &oracle, n, &mut r, baseline).unwrap();
                sum += &g;
                sumsq += g.component_mul(&g);
            }
            let mean = sum / reps as f64;
            for i in 0..3 {
                let var = sumsq[i] / reps as f64 - mean[i] * mean[i];
                let se = (var / reps as f64).sqrt();
                assert!(
                    (mean[i] - exact[i]).abs() < 4.0 * se,
                    "baseline={baseline} component {i}: mean {} vs exact {} (se {se})",
                    mean[i],
                    exact[i]
                );
            }
        }
    }

    #[test]
    fn exact_gradient_is_baseline_invariant() {
        let fam = TabularSoftmaxFamily::identity(4);
        let theta = DVector::from_vec(vec![0.1, 0.4, -0.3, 0.9]);
        let losses = [2.0, -1.0, 0.5, 3.5];
        let shifted: Vec<f64> = losses.iter().map(|l| l - 1.25).collect();
        let a = exact_gradient_from_losses(&fam, &theta, &losses).unwrap();
        let b = exact_gradient_from_losses(&fam, &theta, &shifted).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn empirical_fisher_converges_to_analytic() {
        let fam = GaussianScalarFamily;
        let theta = DVector::zeros(2);
        let mut r = rng::seeded(5);
        let emp = empirical_fisher(&fam, &theta, 1_000_000, &mut r).unwrap();
        let ana = fam.analytic_fisher(&theta).unwrap();
        let scale = ana.matrix().amax();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (emp.matrix()[(i, j)] - ana.matrix()[(i, j)]).abs() < 0.01 * scale,
                    "entry ({i},{j}): {} vs {}",
                    emp.matrix()[(i, j)],
                    ana.matrix()[(i, j)]
                );
            }
        }
    }

    #[test]
    fn single_sample_fisher_is_rank_one_psd() {
        let fam = GaussianScalarFamily;
        let theta = DVector::from_vec(vec![0.5, 0.1]);
        let mut r = rng::seeded(6);
        let f = empirical_fisher(&fam, &theta, 1, &mut r).unwrap();
        let eig = f.matrix().clone().symmetric_eigen();
        let positive: Vec<f64> =
            eig.eigenvalues.iter().copied().filter(|&v| v > 1e-12).collect();
        assert_eq!(positive.len(), 1);
        assert!(eig.eigenvalues.min() > -1e-12);
    }

    #[test]
    fn exact_tabular_fisher_equals_simplex_formula() {
        let fam = TabularSoftmaxFamily::identity(5);
        let theta = DVector::from_fn(5, |i, _| 0.21 * i as f64 - 0.4);
        let probs = fam.probabilities(&theta).unwrap();
        let fisher = fam.analytic_fisher(&theta).unwrap();
        let direct = DMatrix::from_diagonal(&probs) - &probs * probs.transpose();
        assert!((fisher.matrix() - direct).amax() < 1e-14);
    }

    #[test]
    fn identity_metric_reduces_to_naive_descent() {
        let fisher = FisherMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = solve_conjugate_flow(&fisher, &g, 1e-10).unwrap();
        assert!((v + g).norm() < 1e-14);
    }

    #[test]
    fn singular_direction_is_nulled() {
        let fisher =
            FisherMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]))).unwrap();
        let g = DVector::from_vec(vec![4.0, 0.0]);
        let v = solve_conjugate_flow(&fisher, &g, 1e-10).unwrap();
        assert_relative_eq!(v[0], -2.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn two_point_flow_solution() {
        let fam = tabular2();
        let theta = DVector::zeros(2);
        let (grad, _, _) = exact_tabular_gradient(&fam, &theta, &loss01).unwrap();
        let fisher = fam.analytic_fisher(&theta).unwrap();
        let v = solve_conjugate_flow(&fisher, &grad, 1e-10).unwrap();
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(v[1], -0.5, epsilon = 1e-12);
        // F thetadot = -grad holds.
        assert!((fisher.matrix() * &v + &grad).norm() < 1e-12);
    }

    #[test]
    fn non_symmetric_fisher_is_rejected() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.5;
        assert!(FisherMatrix::new(m).is_err());
        let nan = DMatrix::from_element(2, 2, f64::NAN);
        assert!(FisherMatrix::new(nan).is_err());
    }

    #[test]
    fn euler_step_examples() {
        let theta = DVector::from_vec(vec![1.0, 2.0]);
        let zero = DVector::zeros(2);
        assert_eq!(euler_step(&theta, &zero, 0.1).unwrap(), theta);

        let origin = DVector::zeros(2);
        let v = DVector::from_vec(vec![1.0, -1.0]);
        let moved = euler_step(&origin, &v, 1e-3).unwrap();
        assert_relative_eq!(moved[0], 0.001, epsilon = 1e-15);
        assert_relative_eq!(moved[1], -0.001, epsilon = 1e-15);

        let bad = DVector::from_vec(vec![f64::NAN, 0.0]);
        assert!(euler_step(&origin, &bad, 1e-3).is_err());
    }

    #[test]
    fn euler_step_raises_probability_of_better_hypothesis() {
        let fam = tabular2();
        let theta = DVector::zeros(2);
        let v = DVector::from_vec(vec![0.5, -0.5]);
        let next = euler_step(&theta, &v, 1e-2).unwrap();
        assert_relative_eq!(next[0], 0.005, epsilon = 1e-15);
        assert_relative_eq!(next[1], -0.005, epsilon = 1e-15);
        let p0 = fam.probabilities(&theta).unwrap()[0];
        let p1 = fam.probabilities(&next).unwrap()[0];
        assert!(p1 > p0, "lower-loss hypothesis should gain mass");
    }

    #[test]
    fn run_stays_at_start_under_constant_loss_with_baseline() {
        let fam = tabular2();
        let theta0 = DVector::from_vec(vec![0.3, -0.3]);
        let constant = |_: &Hypothesis| 2.0;
        let config = StepConfig { learning_rate: 1e-2, ..StepConfig::default() };
        let mut r = rng::seeded(8);
        let traj = run_fr_ngd(&fam, &theta0, &constant, &config, 25, 8, &mut r).unwrap();
        assert_eq!(traj.len(), 25);
        let final_theta = DVector::from_vec(traj.final_theta.clone());
        assert!((final_theta - theta0).norm() < 1e-12);
    }

    #[test]
    fn run_aborts_on_non_finite_loss_with_partial_trajectory() {
        let fam = tabular2();
        let theta0 = DVector::zeros(2);
        let counter = std::cell::Cell::new(0usize);
        let flaky = move |_: &Hypothesis| {
            let k = counter.get();
            counter.set(k + 1);
            if k >= 12 {
                f64::NAN
            } else {
                1.0
            }
        };
        let config =
            StepConfig { learning_rate: 1e-2, mc_samples: 4, ..StepConfig::default() };
        let mut r = rng::seeded(9);
        let err = run_fr_ngd(&fam, &theta0, &flaky, &config, 10, 9, &mut r).unwrap_err();
        assert!(matches!(err.cause, Error::EvaluationFailure { .. }));
        assert_eq!(err.partial.len(), 3, "three full steps of 4 samples completed");
    }

    #[test]
    fn run_divergence_guard_trips() {
        let fam = GaussianScalarFamily;
        let theta0 = DVector::zeros(2);
        let square = |h: &Hypothesis| {
            let x = h.coords().unwrap()[0];
            x * x
        };
        let config = StepConfig { learning_rate: 1e12, ..StepConfig::default() };
        let mut r = rng::seeded(10);
        let err = run_fr_ngd(&fam, &theta0, &square, &config, 50, 10, &mut r).unwrap_err();
        assert!(matches!(err.cause, Error::Diverged { .. }));
    }

    proptest! {
        #[test]
        fn pinv_contract_on_random_psd_matrices(
            entries in proptest::collection::vec(-1.0f64..1.0, 12),
            gvals in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            // F = A A^T (PSD, often rank-deficient is exercised separately).
            let a = DMatrix::from_vec(3, 4, entries);
            let f = FisherMatrix::new(&a * a.transpose()).unwrap();
            let eig = f.matrix().clone().symmetric_eigen();
            let lambda_max = eig.eigenvalues.amax();
            prop_assume!(lambda_max > 1e-6);

            // Project g into range(F) so the equation is consistent.
            let g_raw = DVector::from_vec(gvals);
            let mut g = DVector::zeros(3);
            for k in 0..3 {
                if eig.eigenvalues[k] > 1e-10 * lambda_max {
                    let basis = eig.eigenvectors.column(k);
                    g += basis * (basis.dot(&g_raw));
                }
            }
            let v = solve_conjugate_flow(&f, &g, 1e-10).unwrap();
            let residual = (f.matrix() * &v + &g).norm();
            prop_assert!(residual <= 1e-8 * g.norm().max(1e-12) + 1e-12);

            // Velocity orthogonal to the null space.
            for k in 0..3 {
                if eig.eigenvalues[k] <= 1e-10 * lambda_max {
                    let basis = eig.eigenvectors.column(k);
                    prop_assert!(basis.dot(&v).abs() < 1e-8 * v.norm().max(1.0));
                }
            }
        }
    }
}
