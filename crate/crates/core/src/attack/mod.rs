//! Untargeted l-infinity attacks: FGSM, PGD with optional random start, and
//! the guessed-key adaptive attack against the shuffling defense.

mod bpda;
mod config;
mod pgd;
mod target;

pub use bpda::bpda_attack;
pub(crate) use bpda::bpda_core;
pub use config::{parse_epsilon, AttackConfig, BpdaBackward, DEFAULT_STEP_SIZE, STANDARD_EPSILONS};
pub use pgd::{fgsm, linf_per_sample, pgd, project, AdversarialResult};
pub(crate) use pgd::{pgd_core, predict_through};
pub use target::{AttackTarget, LinearLoss};
