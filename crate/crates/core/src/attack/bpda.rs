use super::config::{AttackConfig, BpdaBackward};
use super::pgd::{apply_batch, finish, pgd_core, project, AdversarialResult};
use super::target::AttackTarget;
use crate::error::{Error, Result};
use crate::keyed_permutation::BlockShuffle;
use crate::tensor::Tensor;

/// Adaptive attack with a guessed key.
///
/// The attacker shuffles `x` with the guessed key, runs PGD on the shuffled
/// image against the classifier (the defense's own shuffle is unknown and
/// is treated as the identity on the backward pass), then deshuffles the
/// result with the guessed key. With [`BpdaBackward::ExactGuessed`] the
/// same attack is run in image space through the guessed permutation.
///
/// `deployed` is the defense's real transform. It is used only to score
/// `success_mask`, never for gradients.
pub fn bpda_attack(
    target: &dyn AttackTarget,
    x: &Tensor<f32>,
    labels: &[usize],
    cfg: &AttackConfig,
    deployed: Option<&BlockShuffle>,
) -> Result<AdversarialResult> {
    let adv = bpda_core(target, x, labels, cfg)?;
    finish(target, x, adv, labels, deployed)
}

pub(crate) fn bpda_core(
    target: &dyn AttackTarget,
    x: &Tensor<f32>,
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<Tensor<f32>> {
    let key = cfg
        .guessed_key
        .as_ref()
        .ok_or_else(|| Error::invalid("adaptive attack needs a guessed key"))?;
    let guess = BlockShuffle::from_key(key, cfg.grid)?;
    let adv = match cfg.bpda_backward {
        BpdaBackward::Identity => {
            let z = apply_batch(&guess, x)?;
            let z_adv = pgd_core(target, &z, labels, cfg, None)?;
            let undo = BlockShuffle::inverse_from_key(key, cfg.grid)?;
            apply_batch(&undo, &z_adv)?
        }
        BpdaBackward::ExactGuessed => pgd_core(target, x, labels, cfg, Some(&guess))?,
    };
    // Permutations preserve the ball already; this re-asserts it for grids
    // where padding makes the deshuffle inexact.
    project(&adv, x, cfg.epsilon)
}
