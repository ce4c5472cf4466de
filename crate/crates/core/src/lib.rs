//! Forward-only (zeroth-order) optimization with batched Rademacher
//! perturbations and a loss-spread adaptive step.
//!
//! The crate is organized bottom-up:
//!
//! - [`perturbation`]: seeded directions and in-place perturb/restore/update.
//! - [`objectives`]: losses, datasets and mini-batch sampling.
//! - [`forward_engine`]: sequential and batched perturbed forward passes.
//! - [`estimators`]: loss queries, σ, one-sided and two-sided estimates.
//! - [`optimizers`]: FZOO, FZOO-R, ZO-SGD and first-order reference steps.
//! - [`theory_checks`]: Monte Carlo checks of the estimator moment identities.
//! - [`harness`]: JSON-configured races, grid search, checkpoints, CSV output.

pub mod error;
pub mod estimators;
pub mod forward_engine;
pub mod harness;
pub mod matrix;
pub mod objectives;
pub mod optimizers;
pub mod perturbation;
pub mod theory_checks;

pub use error::{FzooError, Result};
pub use estimators::{Engine, FzooEstimate, LossQueryResult};
pub use matrix::Matrix;
pub use objectives::{BatchSpec, Dataset, Objective};
pub use optimizers::{Budget, OptimizerConfig, OptimizerKind, OptimizerState, RunOutcome, StepReport};
pub use perturbation::{DirectionKind, DirectionSeed, LayerShape, ParamVector};
