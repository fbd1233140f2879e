//! Residual CNN classifiers and their checkpoint format.

mod checkpoint;
mod model;

pub use checkpoint::{Checkpoint, DefenseMeta, CHECKPOINT_MAGIC};
pub use model::{ArchitectureConfig, Forward, Model, RunningStats, Variant, BN_EPS, BN_MOMENTUM};
