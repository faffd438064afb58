//! Time-indexed run records shared by the optimizer and inference drivers.

use serde::{Deserialize, Serialize};

/// Summary statistics of the loss values observed in one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl LossStats {
    /// Descriptive statistics of a non-empty sample.
    pub fn from_samples(losses: &[f64]) -> Self {
        let n = losses.len() as f64;
        let mean = losses.iter().sum::<f64>() / n;
        let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
        let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        LossStats { mean, std: var.sqrt(), min, max }
    }
}

/// One recorded step of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Accumulated flow time (optimizer) or observation time (inference).
    pub time: f64,
    /// Parameter vector at the start of the step, before the update.
    pub theta: Vec<f64>,
    pub loss: LossStats,
    /// Euclidean norm of the parameter velocity applied in this step.
    pub thetadot_norm: f64,
    /// Ground-truth log sigma(t), recorded by inference runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub true_log_sigma: Option<f64>,
}

/// Full record of a run: reproducible from `(config, seed)` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    /// Immutable snapshot of the configuration that produced this run.
    pub config: serde_json::Value,
    pub steps: Vec<StepRecord>,
    /// Parameter vector after the last update.
    pub final_theta: Vec<f64>,
}

impl Trajectory {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        Trajectory { seed, config, steps: Vec::new(), final_theta: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_stats_of_constant_sample() {
        let s = LossStats::from_samples(&[3.0, 3.0, 3.0]);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.min, 3.0);
        assert_eq!(s.max, 3.0);
    }

    #[test]
    fn loss_stats_mixed_sample() {
        let s = LossStats::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        assert!((s.std - 1.118033988749895).abs() < 1e-12);
    }
}
