//! Policy optimization: advantage normalization, the clipped surrogate
//! objective with its analytic gradient, the linear softmax policy, and the
//! training loop.

pub mod advantage;
pub mod objective;
pub mod policy;
pub mod trainer;

pub use advantage::{
    hybrid_cancellation_delta, normalize_batch_std, normalize_hybrid, normalize_hybrid_with,
    normalize_per_group, normalize_per_group_with, verify_cancellation, verify_cancellation_with,
    CancellationReport, NormScheme, StdEstimator, EPS_NUM,
};
pub use objective::{
    clipped_term, crpo_objective, finite_difference_error, policy_gradient, BranchBatch,
    ObjectiveConfig, PromptBatch, ScoredRollout,
};
pub use policy::{greedy, softmax, softmax_prob, Gradient, PolicyParams};
pub use trainer::{
    train, train_step, Algorithm, PromptSource, StepDiagnostics, StepRngs, TrainConfig,
};
