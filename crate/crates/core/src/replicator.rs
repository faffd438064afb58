//! Exact replicator dynamics on finite supports.
//!
//! These operations are the ground truth for everything else in the crate:
//! the continuous-time replicator right-hand side, its exact discrete-time
//! solution under piecewise-constant losses, the Bayes update it reduces to
//! when losses are negative log-likelihoods, and the deviation functional
//! that scores how closely a parameterized flow tracks the replicator
//! target.

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::families::{DistributionFamily, ParamVector, TabularSoftmaxFamily};
use crate::natgrad::{exact_gradient_from_losses, solve_conjugate_flow, FisherMatrix};

/// A finite-support population state: probabilities plus the instantaneous
/// loss of each hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularState {
    rho: DVector<f64>,
    losses: DVector<f64>,
}

impl TabularState {
    pub fn new(rho: DVector<f64>, losses: DVector<f64>) -> Result<Self> {
        if rho.len() != losses.len() {
            return Err(Error::DimensionMismatch { expected: rho.len(), got: losses.len() });
        }
        if rho.is_empty() {
            return Err(Error::invalid("state must have at least one hypothesis"));
        }
        if rho.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        if (rho.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "probabilities must sum to 1 (got {})",
                rho.sum()
            )));
        }
        if losses.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("losses must be finite"));
        }
        Ok(TabularState { rho, losses })
    }

    /// State whose probabilities come from a tabular family at `theta`.
    pub fn from_family(
        family: &TabularSoftmaxFamily,
        theta: &ParamVector,
        losses: DVector<f64>,
    ) -> Result<Self> {
        TabularState::new(family.probabilities(theta)?, losses)
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn losses(&self) -> &DVector<f64> {
        &self.losses
    }

    /// Expected loss under the current probabilities.
    pub fn mean_loss(&self) -> f64 {
        self.rho.dot(&self.losses)
    }
}

/// Continuous-time replicator velocity:
/// `rhodot(h) = rho(h) (mean loss - loss(h))`. Sums to zero.
pub fn replicator_rhs(state: &TabularState) -> DVector<f64> {
    let mean = state.mean_loss();
    DVector::from_fn(state.len(), |h, _| state.rho[h] * (mean - state.losses[h]))
}

/// Exact replicator step over an interval of length `dt` during which the
/// losses are constant: `rho'(h) = rho(h) exp(-loss(h) dt) / normalizer`.
///
/// Fitness weights are shifted by the smallest loss carried by surviving
/// mass before exponentiating, so the normalizer stays away from overflow
/// and underflow for any finite losses.
pub fn replicator_exact_step(state: &TabularState, dt: f64) -> Result<TabularState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("time step must be positive and finite"));
    }
    let shift = state
        .rho
        .iter()
        .zip(state.losses.iter())
        .filter(|(&p, _)| p > 0.0)
        .map(|(_, &l)| l)
        .fold(f64::INFINITY, f64::min);
    let mut weights = DVector::from_fn(state.len(), |h, _| {
        state.rho[h] * (-(state.losses[h] - shift) * dt).exp()
    });
    let total = weights.sum();
    weights /= total;
    TabularState::new(weights, state.losses.clone())
}

/// One discrete Bayes update: `posterior ∝ prior * likelihood`.
pub fn bayes_update(prior: &DVector<f64>, likelihoods: &DVector<f64>) -> Result<DVector<f64>> {
    if prior.len() != likelihoods.len() {
        return Err(Error::DimensionMismatch { expected: prior.len(), got: likelihoods.len() });
    }
    if prior.iter().any(|&p| !p.is_finite() || p < 0.0) || (prior.sum() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("prior must be a probability vector"));
    }
    if likelihoods.iter().any(|&l| !l.is_finite() || l < 0.0) {
        return Err(Error::invalid("likelihoods must be finite and non-negative"));
    }
    let mut posterior = prior.component_mul(likelihoods);
    let evidence = posterior.sum();
    if evidence <= 0.0 {
        return Err(Error::UndefinedPosterior);
    }
    posterior /= evidence;
    Ok(posterior)
}

/// Deviation of a parameter velocity from the replicator target, measured in
/// the Fisher metric of the distribution.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    /// `E = 1/2 sum_h rho(h) (s(h).thetadot - (mean loss - loss(h)))^2`, >= 0.
    pub deviation: f64,
    /// Gradient of `E` in `thetadot`: `F thetadot + grad of expected loss`.
    pub gradient: ParamVector,
    /// Hessian of `E` in `thetadot`: the Fisher matrix itself.
    pub hessian: FisherMatrix,
}

fn check_state_matches(
    family: &TabularSoftmaxFamily,
    theta: &ParamVector,
    state: &TabularState,
) -> Result<()> {
    if state.len() != family.support_size() {
        return Err(Error::DimensionMismatch {
            expected: family.support_size(),
            got: state.len(),
        });
    }
    let probs = family.probabilities(theta)?;
    let gap = (&probs - &state.rho).amax();
    if gap > 1e-8 {
        return Err(Error::invalid(format!(
            "state probabilities disagree with the family at theta (max gap {gap:.3e})"
        )));
    }
    Ok(())
}

/// Evaluates the deviation functional, its gradient, and its Hessian at
/// `thetadot` for a tabular family whose distribution matches `state`.
pub fn natural_deviation(
    family: &TabularSoftmaxFamily,
    theta: &ParamVector,
    thetadot: &ParamVector,
    state: &TabularState,
) -> Result<DeviationReport> {
    check_state_matches(family, theta, state)?;
    if thetadot.len() != family.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: family.param_dim(),
            got: thetadot.len(),
        });
    }
    let table = family.score_table(theta)?;
    let mean = state.mean_loss();
    let realized = table * thetadot;
    let mut deviation = 0.0;
    for h in 0..state.len() {
        let target = mean - state.losses[h];
        let miss = realized[h] - target;
        deviation += 0.5 * state.rho[h] * miss * miss;
    }
    let fisher = family.analytic_fisher(theta)?;
    let loss_grad =
        exact_gradient_from_losses(family, theta, state.losses.as_slice())?;
    let gradient = fisher.matrix() * thetadot + loss_grad;
    Ok(DeviationReport { deviation, gradient, hessian: fisher })
}

/// Natural-gradient velocity from exact tabular quantities, and the
/// push-forward of that velocity into distribution space.
pub fn tabular_flow_velocity(
    family: &TabularSoftmaxFamily,
    theta: &ParamVector,
    state: &TabularState,
    pinv_threshold: f64,
) -> Result<(ParamVector, DVector<f64>)> {
    check_state_matches(family, theta, state)?;
    let fisher = family.analytic_fisher(theta)?;
    let grad = exact_gradient_from_losses(family, theta, state.losses.as_slice())?;
    let thetadot = solve_conjugate_flow(&fisher, &grad, pinv_threshold)?;
    let table = family.score_table(theta)?;
    let log_velocity = table * &thetadot;
    let rhodot = DVector::from_fn(state.len(), |h, _| state.rho[h] * log_velocity[h]);
    Ok((thetadot, rhodot))
}

/// Outcome of a least-squares minimality probe around the natural-gradient
/// velocity.
#[derive(Debug, Clone)]
pub struct MinimalityReport {
    pub passed: bool,
    pub deviation_at_optimum: f64,
    /// Largest value of `E(opt) - E(opt + eps v)` over probed directions;
    /// positive means some direction improved on the optimum.
    pub worst_violation: f64,
    pub worst_direction: Option<ParamVector>,
    /// Norm of the deviation gradient after projecting out null(F).
    pub projected_gradient_norm: f64,
}

/// Checks that the natural-gradient velocity minimizes the deviation
/// functional: no random perturbation of size `eps` improves it, and the
/// gradient vanishes along the row space of the Fisher.
pub fn verify_cns_minimality(
    family: &TabularSoftmaxFamily,
    theta: &ParamVector,
    state: &TabularState,
    perturbations: usize,
    eps: f64,
    rng: &mut dyn RngCore,
) -> Result<MinimalityReport> {
    let (thetadot, _) = tabular_flow_velocity(family, theta, state, 1e-10)?;
    let at_opt = natural_deviation(family, theta, &thetadot, state)?;

    // Project the gradient onto range(F); along null directions the
    // functional is flat and the gradient need not vanish pointwise.
    let eigen = at_opt.hessian.matrix().clone().symmetric_eigen();
    let lambda_max = eigen.eigenvalues.amax();
    let mut projected = ParamVector::zeros(theta.len());
    for k in 0..eigen.eigenvalues.len() {
        if lambda_max > 0.0 && eigen.eigenvalues[k] > 1e-10 * lambda_max {
            let basis = eigen.eigenvectors.column(k);
            projected += basis * basis.dot(&at_opt.gradient);
        }
    }
    let projected_gradient_norm = projected.norm();

    let n = family.param_dim();
    let mut worst_violation = f64::NEG_INFINITY;
    let mut worst_direction = None;
    for _ in 0..perturbations {
        let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        v /= norm;
        let perturbed = &thetadot + eps * &v;
        let e = natural_deviation(family, theta, &perturbed, state)?.deviation;
        let violation = at_opt.deviation - e;
        if violation > worst_violation {
            worst_violation = violation;
            worst_direction = Some(v);
        }
    }
    if perturbations == 0 {
        worst_violation = 0.0;
    }

    let slack = 1e-12 * at_opt.deviation.max(1.0);
    let passed = worst_violation <= slack && projected_gradient_norm < 1e-8;
    Ok(MinimalityReport {
        passed,
        deviation_at_optimum: at_opt.deviation,
        worst_violation,
        worst_direction,
        projected_gradient_norm,
    })
}

/// Residual of the Price equation for the trait `u(h) = alpha . s(theta; h)`
/// under the flow `theta(t) = theta + t thetadot`.
///
/// Both time derivatives are evaluated by central finite differences along
/// the flow, so a correct implementation leaves a residual of order `dt^2`.
pub fn price_check(
    family: &TabularSoftmaxFamily,
    theta: &ParamVector,
    thetadot: &ParamVector,
    state: &TabularState,
    alpha: &ParamVector,
    dt: f64,
) -> Result<f64> {
    check_state_matches(family, theta, state)?;
    if alpha.len() != family.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: family.param_dim(),
            got: alpha.len(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let plus = theta + dt * thetadot;
    let minus = theta - dt * thetadot;

    let trait_values = |at: &ParamVector| -> Result<DVector<f64>> {
        Ok(family.score_table(at)? * alpha)
    };
    let u_plus = trait_values(&plus)?;
    let u_minus = trait_values(&minus)?;
    let u_now = trait_values(theta)?;

    let rho_plus = family.probabilities(&plus)?;
    let rho_minus = family.probabilities(&minus)?;

    let d_mean = (rho_plus.dot(&u_plus) - rho_minus.dot(&u_minus)) / (2.0 * dt);
    let udot = (&u_plus - &u_minus) / (2.0 * dt);
    let expected_udot = state.rho.dot(&udot);

    let mean_u = state.rho.dot(&u_now);
    let mean_l = state.mean_loss();
    let covariance = (0..state.len())
        .map(|h| state.rho[h] * (u_now[h] - mean_u) * (state.losses[h] - mean_l))
        .sum::<f64>();

    Ok((d_mean - (-covariance + expected_udot)).abs())
}

/// Price-equation residual for a fixed per-hypothesis trait vector (no
/// dependence on `theta`, so the drift term vanishes).
pub fn price_check_values(
    family: &TabularSoftmaxFamily,
    theta: &ParamVector,
    thetadot: &ParamVector,
    state: &TabularState,
    values: &DVector<f64>,
    dt: f64,
) -> Result<f64> {
    check_state_matches(family, theta, state)?;
    if values.len() != state.len() {
        return Err(Error::DimensionMismatch { expected: state.len(), got: values.len() });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let plus = family.probabilities(&(theta + dt * thetadot))?;
    let minus = family.probabilities(&(theta - dt * thetadot))?;
    let d_mean = (plus.dot(values) - minus.dot(values)) / (2.0 * dt);

    let mean_u = state.rho.dot(values);
    let mean_l = state.mean_loss();
    let covariance = (0..state.len())
        .map(|h| state.rho[h] * (values[h] - mean_u) * (state.losses[h] - mean_l))
        .sum::<f64>();
    Ok((d_mean + covariance).abs())
}
