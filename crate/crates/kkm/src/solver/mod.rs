//! The three kernel k-means solvers plus Euclidean references, sharing
//! batch sampling, learning-rate schedules, and stopping rules.
//!
//! RNG protocol, identical across solvers: a fit draws its initialization
//! first, then one batch of b indices per iteration, all from the single
//! run RNG on one thread. Two fits given the same seed therefore see the
//! same initialization and the same batch sequence.

pub mod euclidean;
pub mod full;
pub mod minibatch;
pub mod truncated;

use rand::Rng;

use crate::error::{Error, Result};

/// Per-cluster step size schedule for the mini-batch solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearningRate {
    /// alpha = sqrt(b_j / b).
    SqrtRatio,
    /// alpha = b_j / N_j with N_j the cumulative sample count including the
    /// current batch (N_j starts at 1), so the rate decays toward zero.
    CountBased,
}

impl LearningRate {
    pub fn as_str(self) -> &'static str {
        match self {
            LearningRate::SqrtRatio => "sqrt",
            LearningRate::CountBased => "count",
        }
    }
}

/// Mutable schedule state: CountBased tracks one cumulative count per
/// center.
#[derive(Debug, Clone)]
pub struct LrState {
    kind: LearningRate,
    counts: Vec<f64>,
}

impl LrState {
    pub fn new(kind: LearningRate, k: usize) -> Self {
        LrState {
            kind,
            counts: vec![1.0; k],
        }
    }

    /// Step size for center j that received b_j of the b batch points.
    /// Zero when the center received nothing (that center is untouched this
    /// iteration and its count does not advance).
    pub fn alpha(&mut self, j: usize, b_j: usize, b: usize) -> f64 {
        if b_j == 0 {
            return 0.0;
        }
        match self.kind {
            LearningRate::SqrtRatio => (b_j as f64 / b as f64).sqrt(),
            LearningRate::CountBased => {
                self.counts[j] += b_j as f64;
                b_j as f64 / self.counts[j]
            }
        }
    }
}

/// Which termination test the batch improvement feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// Stop once f_B(C_i) - f_B(C_{i+1}) < epsilon: the batch stops paying
    /// for further iterations.
    #[default]
    Improvement,
    /// Stop once f_B(C_{i+1}) - f_B(C_i) < epsilon. With epsilon > 0 this
    /// fires on any improving step; kept selectable for comparison runs.
    PrintedLiteral,
}

/// Epsilon = 0 disables improvement stopping entirely (fixed-iteration
/// protocol).
pub(crate) fn should_stop(rule: StopRule, epsilon: f64, improvement: f64) -> bool {
    if epsilon <= 0.0 {
        return false;
    }
    match rule {
        StopRule::Improvement => improvement < epsilon,
        StopRule::PrintedLiteral => -improvement < epsilon,
    }
}

pub(crate) fn validate_epsilon(epsilon: f64) -> Result<()> {
    if epsilon < 0.0 || epsilon.is_nan() {
        return Err(Error::param(
            "epsilon",
            format!("need epsilon >= 0, got {epsilon}"),
        ));
    }
    Ok(())
}

/// b indices drawn i.i.d. uniform with repetition. Public so paired runs
/// can share batch sequences while stepping solvers by hand.
pub fn sample_batch(rng: &mut impl Rng, n: usize, b: usize) -> Vec<usize> {
    (0..b).map(|_| rng.random_range(0..n)).collect()
}

/// What one mini-batch step did, for stopping decisions, traces, and
/// paired-run diagnostics.
#[derive(Debug, Clone)]
pub struct StepStats {
    /// The sampled batch, in draw order.
    pub batch: Vec<usize>,
    /// Nearest-center label of each batch point under the pre-update
    /// centers, aligned with `batch`.
    pub batch_labels: Vec<u32>,
    /// Batch points per center.
    pub counts: Vec<usize>,
    /// Step size applied per center.
    pub alphas: Vec<f64>,
    /// f_B before the update.
    pub cost_before: f64,
    /// f_B after the update, same batch.
    pub cost_after: f64,
    /// cost_before - cost_after.
    pub improvement: f64,
}

/// Scan of per-center squared distances d_j = diag_x - 2 ip_j + cc_j; ties
/// go to the lowest center index.
#[inline]
pub(crate) fn argmin_delta(diag_x: f64, ip_row: &[f64], cc: &[f64]) -> (u32, f64) {
    debug_assert_eq!(ip_row.len(), cc.len());
    let mut best = 0u32;
    let mut best_d = diag_x - 2.0 * ip_row[0] + cc[0];
    for j in 1..cc.len() {
        let d = diag_x - 2.0 * ip_row[j] + cc[j];
        if d < best_d {
            best_d = d;
            best = j as u32;
        }
    }
    (best, best_d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_ratio_rate_matches_the_closed_form() {
        let mut lr = LrState::new(LearningRate::SqrtRatio, 3);
        assert_eq!(lr.alpha(0, 16, 64), 0.5);
        assert_eq!(lr.alpha(1, 64, 64), 1.0);
        assert_eq!(lr.alpha(2, 0, 64), 0.0);
        // Stateless: same answer again.
        assert_eq!(lr.alpha(0, 16, 64), 0.5);
    }

    #[test]
    fn count_based_rate_decays_with_cumulative_counts() {
        let mut lr = LrState::new(LearningRate::CountBased, 2);
        // N_0: 1 -> 5, alpha = 4/5.
        assert_eq!(lr.alpha(0, 4, 8), 0.8);
        // N_0: 5 -> 9, alpha = 4/9.
        assert!((lr.alpha(0, 4, 8) - 4.0 / 9.0).abs() < 1e-15);
        // Untouched center keeps its count.
        assert_eq!(lr.alpha(1, 0, 8), 0.0);
        assert_eq!(lr.alpha(1, 2, 8), 2.0 / 3.0);
    }

    #[test]
    fn stopping_rules_read_the_improvement_as_specified() {
        assert!(!should_stop(StopRule::Improvement, 0.0, -5.0));
        assert!(should_stop(StopRule::Improvement, 0.5, 0.3));
        assert!(!should_stop(StopRule::Improvement, 0.5, 0.7));
        assert!(should_stop(StopRule::Improvement, f64::INFINITY, 123.0));
        // The printed-literal rule fires whenever the step improved.
        assert!(should_stop(StopRule::PrintedLiteral, 0.5, 0.7));
        assert!(!should_stop(StopRule::PrintedLiteral, 0.5, -0.7));
    }

    #[test]
    fn argmin_prefers_the_lowest_index_on_ties() {
        let ip = [1.0, 1.0, 2.0];
        let cc = [2.0, 2.0, 4.0];
        // d = (1 - 2 ip_j + cc_j): 1, 1, 1 - all tied.
        let (j, d) = argmin_delta(1.0, &ip, &cc);
        assert_eq!(j, 0);
        assert_eq!(d, 1.0);
    }
}
