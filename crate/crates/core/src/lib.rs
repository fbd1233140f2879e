//! Key-based block-wise pixel shuffling as an adversarial defense.
//!
//! The crate bundles everything needed to train a classifier on
//! key-shuffled CIFAR-10 images and evaluate it against white-box attacks:
//!
//! * [`keyed_permutation`]: secret keys, permutation derivation, and the
//!   shuffle / de-shuffle transform.
//! * [`tensor`]: a small reverse-mode autodiff engine with SGD.
//! * [`nn`]: residual CNN architectures and checkpoints.
//! * [`data`]: CIFAR-10 binary loader, augmentation, and batching.
//! * [`attack`]: FGSM, PGD, and the guessed-key adaptive attack.
//! * [`harness`]: manifests, training runs, evaluation, sweeps, reports.

pub mod attack;
pub mod data;
pub mod error;
pub mod harness;
pub mod keyed_permutation;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
