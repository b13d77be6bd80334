//! Counterfactual relational policy optimization on a synthetic world.
//!
//! The crate trains a small softmax policy to answer multiple-choice
//! questions about simulated clips. Alongside every clip the trainer can
//! build a counterfactual copy (mirrored, played backwards, or with two
//! segments swapped) and reward the policy for changing its answer when
//! the transformation should change it and for keeping it otherwise.
//!
//! Modules, bottom up:
//!
//! - [`types`]: questions, answers, world states, rollouts, reward configs.
//! - [`router`]: maps the two "would the answer change?" tests to a task
//!   type and picks the training transformation.
//! - [`world`]: the simulator, observation channels and paired benchmark
//!   generation.
//! - [`rewards`]: CRPO rewards and the GRPO, T-GRPO and ArrowRL baselines.
//! - [`optimizer`]: advantage normalization, the clipped objective, the
//!   policy and the training loop.
//! - [`evalbench`]: pair accuracy, chance rates, manifests.
//! - [`selfcheck`]: numerical checks behind `crpo verify`.
//!
//! ```
//! use crpo::optimizer::{train, PolicyParams, TrainConfig};
//! use crpo::types::RewardConfig;
//! use crpo::world::WorldConfig;
//!
//! let cfg = TrainConfig { steps: 3, batch_prompts: 4, ..TrainConfig::default() };
//! let (policy, diagnostics) =
//!     train(&PolicyParams::default(), &WorldConfig::default(), &cfg, &RewardConfig::default())?;
//! assert_eq!(diagnostics.len(), 3);
//! # let _ = policy;
//! # Ok::<(), crpo::Error>(())
//! ```

pub mod error;
pub mod evalbench;
pub mod optimizer;
pub mod rewards;
pub mod router;
pub mod seeds;
pub mod selfcheck;
pub mod types;
pub mod world;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/world.md")]
    mod world {}
    #[doc = include_str!("../../../book/src/router.md")]
    mod router {}
    #[doc = include_str!("../../../book/src/rewards.md")]
    mod rewards {}
    #[doc = include_str!("../../../book/src/advantages.md")]
    mod advantages {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
