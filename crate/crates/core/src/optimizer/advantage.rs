//! Advantage normalization.
//!
//! Three schemes are provided. Per-group normalization centers and scales
//! each rollout group on its own. Hybrid normalization centers each branch
//! on its own mean but divides both by one standard deviation taken over
//! all `2G` centered rewards of a prompt. Batch-std normalization centers
//! per group and scales by a standard deviation over the whole batch.
//!
//! Per-group normalization is invariant to positive affine maps of a
//! group's rewards. A bonus added to every correct rollout of a binary
//! reward group is such a map, so it has no effect on the advantages. The
//! hybrid scheme breaks this, because the other branch's spread enters the
//! denominator.

use serde::{Deserialize, Serialize};

/// Numerical floor for standard deviations.
pub const EPS_NUM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScheme {
    PerGroupMeanStd,
    #[default]
    HybridJointStd,
    GroupMeanBatchStd,
}

impl NormScheme {
    pub const ALL: [NormScheme; 3] = [
        NormScheme::PerGroupMeanStd,
        NormScheme::HybridJointStd,
        NormScheme::GroupMeanBatchStd,
    ];
}

/// Standard deviation estimator. Training always uses the population
/// estimator; the sample estimator exists so self-checks can be shown to
/// catch the swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StdEstimator {
    #[default]
    Population,
    Sample,
}

impl StdEstimator {
    /// Spread of values that are already centered.
    fn of_centered(self, centered: &[f64]) -> f64 {
        self.std_of_sum_sq(sum_sq(centered), centered.len())
    }

    fn std_of_sum_sq(self, ss: f64, n: usize) -> f64 {
        let n = n as f64;
        let denom = match self {
            StdEstimator::Population => n,
            StdEstimator::Sample => n - 1.0,
        };
        if denom <= 0.0 {
            0.0
        } else {
            (ss / denom).sqrt()
        }
    }
}

fn sum_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

/// Subtracts the mean. Constant inputs map to exact zeros.
fn center(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() || is_constant(xs) {
        return vec![0.0; xs.len()];
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| x - mean).collect()
}

fn scale(centered: &[f64], std: f64) -> Vec<f64> {
    let denom = std.max(EPS_NUM);
    centered.iter().map(|c| c / denom).collect()
}

pub fn normalize_per_group(rewards: &[f64]) -> Vec<f64> {
    normalize_per_group_with(rewards, StdEstimator::Population)
}

pub fn normalize_per_group_with(rewards: &[f64], est: StdEstimator) -> Vec<f64> {
    let c = center(rewards);
    let std = est.of_centered(&c);
    scale(&c, std)
}

/// Branch-wise centering with one joint standard deviation.
pub fn normalize_hybrid(orig: &[f64], cf: &[f64]) -> (Vec<f64>, Vec<f64>) {
    normalize_hybrid_with(orig, cf, StdEstimator::Population)
}

pub fn normalize_hybrid_with(orig: &[f64], cf: &[f64], est: StdEstimator) -> (Vec<f64>, Vec<f64>) {
    let co = center(orig);
    let cc = center(cf);
    // Summing each branch separately keeps the result symmetric in the
    // two branches down to the last bit.
    let std = est.std_of_sum_sq(sum_sq(&co) + sum_sq(&cc), co.len() + cc.len());
    (scale(&co, std), scale(&cc, std))
}

/// Group-wise centering with one standard deviation over every centered
/// reward in the batch.
pub fn normalize_batch_std(groups: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let centered: Vec<Vec<f64>> = groups.iter().map(|g| center(g)).collect();
    let all: Vec<f64> = centered.iter().flatten().copied().collect();
    let std = StdEstimator::Population.of_centered(&all);
    centered.iter().map(|c| scale(c, std)).collect()
}

/// Outcome of a cancellation check.
#[derive(Debug, Clone, PartialEq)]
pub struct CancellationReport {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub max_abs_delta: f64,
}

fn max_abs_delta(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn add_bonus(rewards: &[f64], correct_mask: &[bool], c: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(correct_mask)
        .map(|(&r, &ok)| if ok { r + c } else { r })
        .collect()
}

/// Per-group advantages before and after adding `c` to every correct
/// rollout.
pub fn verify_cancellation(rewards: &[f64], correct_mask: &[bool], c: f64) -> CancellationReport {
    verify_cancellation_with(rewards, correct_mask, c, StdEstimator::Population)
}

pub fn verify_cancellation_with(
    rewards: &[f64],
    correct_mask: &[bool],
    c: f64,
    est: StdEstimator,
) -> CancellationReport {
    let before = normalize_per_group_with(rewards, est);
    let after = normalize_per_group_with(&add_bonus(rewards, correct_mask, c), est);
    let max_abs_delta = max_abs_delta(&before, &after);
    CancellationReport {
        before,
        after,
        max_abs_delta,
    }
}

/// The same perturbation under hybrid normalization: largest change of any
/// of the `2G` advantages.
pub fn hybrid_cancellation_delta(orig: &[f64], correct_mask: &[bool], cf: &[f64], c: f64) -> f64 {
    let (o1, c1) = normalize_hybrid(orig, cf);
    let (o2, c2) = normalize_hybrid(&add_bonus(orig, correct_mask, c), cf);
    max_abs_delta(&o1, &o2).max(max_abs_delta(&c1, &c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn per_group_examples() {
        assert_close(
            &normalize_per_group(&[1.0, 1.0, 0.0, 0.0]),
            &[1.0, 1.0, -1.0, -1.0],
            1e-7,
        );
        assert_eq!(normalize_per_group(&[1.0; 4]), vec![0.0; 4]);
        assert_close(
            &normalize_per_group(&[1.3, 1.3, 0.0, 0.0]),
            &[1.0, 1.0, -1.0, -1.0],
            1e-7,
        );
    }

    #[test]
    fn hybrid_worked_example() {
        let (o, c) = normalize_hybrid(&[1.0, 1.0, 0.0, 0.0], &[0.5, 0.0, 0.0, 0.0]);
        let std = (1.1875f64 / 8.0).sqrt();
        assert!((std - 0.385276).abs() < 1e-6);
        assert_close(&o, &[1.2977, 1.2977, -1.2977, -1.2977], 1e-4);
        assert_close(&c, &[0.9733, -0.3244, -0.3244, -0.3244], 1e-4);
        assert_close(&o, &[0.5 / std, 0.5 / std, -0.5 / std, -0.5 / std], 1e-12);
    }

    #[test]
    fn hybrid_degenerate_and_coupled() {
        let (o, c) = normalize_hybrid(&[0.7; 4], &[0.2; 4]);
        assert_eq!(o, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);

        let orig = [1.0, 1.0, 0.0, 0.0];
        let (o, _) = normalize_hybrid(&orig, &[0.5, 0.0, 0.0, 0.0]);
        assert!(max_abs_delta(&o, &normalize_per_group(&orig)) > 0.1);
        let (o2, _) = normalize_hybrid(&orig, &[1.0, 0.0, 0.0, 0.0]);
        assert!(max_abs_delta(&o, &o2) > 0.1);
    }

    #[test]
    fn cancellation_examples() {
        let r = verify_cancellation(&[1.0, 1.0, 0.0, 0.0], &[true, true, false, false], 0.3);
        assert!(r.max_abs_delta <= 1e-9, "{}", r.max_abs_delta);
        let r = verify_cancellation(&[1.0; 3], &[true; 3], 0.7);
        assert_eq!(r.max_abs_delta, 0.0);
        assert_eq!(r.after, vec![0.0; 3]);
        let d = hybrid_cancellation_delta(
            &[1.0, 1.0, 0.0, 0.0],
            &[true, true, false, false],
            &[0.5, 0.0, 0.0, 0.0],
            0.3,
        );
        assert!(d > 0.01, "{d}");
    }

    #[test]
    fn sample_std_keeps_cancellation_but_moves_hybrid_values() {
        let r = verify_cancellation_with(
            &[1.0, 0.0, 0.0],
            &[true, false, false],
            1.0,
            StdEstimator::Sample,
        );
        assert!(r.max_abs_delta <= 1e-9);
        let (o, _) = normalize_hybrid_with(
            &[1.0, 1.0, 0.0, 0.0],
            &[0.5, 0.0, 0.0, 0.0],
            StdEstimator::Sample,
        );
        assert!((o[0] - 1.2977).abs() > 1e-2);
    }

    #[test]
    fn batch_std_uses_one_scale() {
        let out = normalize_batch_std(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![5.0, 5.0]]);
        // centered: [.5,-.5], [1,-1], [0,0]; pop std over 6 values = sqrt(2.5/6)
        let s = (2.5f64 / 6.0).sqrt();
        assert_close(&out[0], &[0.5 / s, -0.5 / s], 1e-12);
        assert_close(&out[1], &[1.0 / s, -1.0 / s], 1e-12);
        assert_eq!(out[2], vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn per_group_is_affine_invariant(
            r in prop::collection::vec(-5.0f64..5.0, 2..17),
            a in 0.1f64..10.0,
            b in -10.0f64..10.0,
        ) {
            prop_assume!(!is_constant(&r));
            let c = center(&r);
            prop_assume!(StdEstimator::Population.of_centered(&c) > 1e-3);
            let mapped: Vec<f64> = r.iter().map(|x| a * x + b).collect();
            let d = max_abs_delta(&normalize_per_group(&r), &normalize_per_group(&mapped));
            prop_assert!(d <= 1e-9, "{}", d);
        }

        #[test]
        fn binary_cancellation(mask in prop::collection::vec(any::<bool>(), 2..17), c in 0.0001f64..=2.0) {
            prop_assume!(mask.iter().any(|&m| m) && mask.iter().any(|&m| !m));
            let r: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
            prop_assert!(verify_cancellation(&r, &mask, c).max_abs_delta <= 1e-9);
        }

        #[test]
        fn hybrid_branch_symmetry(x in prop::collection::vec(0.0f64..2.0, 2..9), y in prop::collection::vec(0.0f64..2.0, 2..9)) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            let (a1, b1) = normalize_hybrid(x, y);
            let (b2, a2) = normalize_hybrid(y, x);
            prop_assert_eq!(a1, a2);
            prop_assert_eq!(b1, b2);
        }

        #[test]
        fn advantages_center_to_zero(r in prop::collection::vec(-3.0f64..3.0, 2..17)) {
            let a = normalize_per_group(&r);
            prop_assert!(a.iter().sum::<f64>().abs() < 1e-6);
        }
    }
}
