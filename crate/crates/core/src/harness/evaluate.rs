use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{AttackKind, AttackSpec, ExperimentManifest};
use super::train::Defense;
use crate::attack::{
    bpda_core, linf_per_sample, parse_epsilon, pgd_core, predict_through, AttackConfig, AttackTarget, DEFAULT_STEP_SIZE,
};
use crate::data::{prepare_batch, DatasetSplit, TransformStage};
use crate::error::{Error, Result};
use crate::keyed_permutation::{BlockGrid, SecretKey};

/// How the attacker's key relates to the deployed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyMatch {
    /// No attack, or no defense to match against.
    NotApplicable,
    /// The attacker used the deployed key.
    True,
    /// The attacker used some other key.
    Wrong,
    /// The attacker ignored the defense.
    None,
}

impl std::fmt::Display for KeyMatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KeyMatch::NotApplicable => "not-applicable",
            KeyMatch::True => "true",
            KeyMatch::Wrong => "wrong",
            KeyMatch::None => "none",
        })
    }
}

/// One evaluated condition. Both accuracies are over the same `samples`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub epsilon: String,
    pub epsilon_value: f64,
    pub iterations: usize,
    pub random_init: bool,
    pub key_match: KeyMatch,
    pub samples: usize,
    pub clean_acc: f64,
    pub attacked_acc: f64,
    /// Largest per-sample l-infinity perturbation actually applied.
    pub max_linf: f64,
}

/// An attack condition bound to concrete keys and parameters.
#[derive(Debug, Clone)]
pub struct ResolvedAttack {
    pub spec: AttackSpec,
    pub config: AttackConfig,
    pub key_match: KeyMatch,
}

/// The wrong key a `guessed_key = "random"` attacker draws, fixed by the
/// run seed so reports are reproducible.
pub fn random_guess(seed: u64) -> SecretKey {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x67_7565_7373);
    SecretKey::from_rng(&mut rng).with_label("random-guess")
}

pub fn resolve_attack(spec: &AttackSpec, m: &ExperimentManifest, defense: Option<&Defense>) -> Result<ResolvedAttack> {
    spec.validate(defense.is_some())?;
    let epsilon = spec.epsilon_value()?;
    let step_size = match (&spec.step_size, spec.kind) {
        (_, AttackKind::Fgsm) => epsilon,
        (Some(s), _) => parse_epsilon(s)?,
        (None, _) => DEFAULT_STEP_SIZE,
    };
    let (iterations, random_init) = match spec.kind {
        AttackKind::Fgsm => (1, false),
        _ => (spec.steps, spec.random_init),
    };
    let mut config = AttackConfig {
        epsilon,
        step_size,
        iterations,
        random_init,
        guessed_key: None,
        grid: defense.map_or_else(|| BlockGrid::cifar(m.block_size), |d| Ok(d.grid))?,
        bpda_backward: spec.bpda_backward,
        seed: m.seed,
    };
    let key_match = match (spec.kind, defense) {
        (_, None) => KeyMatch::NotApplicable,
        (AttackKind::Bpda, Some(d)) => {
            let guess = match spec.guessed_key.as_deref() {
                Some("true") => d.key.clone(),
                Some("random") => random_guess(m.seed),
                Some(path) => SecretKey::load(m.resolve(path))?,
                None => unreachable!("validated above"),
            };
            let matched = guess.seed() == d.key.seed();
            config.guessed_key = Some(guess);
            if matched {
                KeyMatch::True
            } else {
                KeyMatch::Wrong
            }
        }
        (_, Some(_)) if spec.through_transform => KeyMatch::True,
        (_, Some(_)) => KeyMatch::None,
    };
    Ok(ResolvedAttack {
        spec: spec.clone(),
        config,
        key_match,
    })
}

const ATTACK_BATCH: usize = 100;

fn batch_seed(seed: u64, start: usize) -> u64 {
    seed ^ (start as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Accuracy of `target` on `split`, every image passed through the deployed
/// defense before classification. With an attack, each clean image is first
/// replaced by its adversarial counterpart.
pub fn evaluate(
    target: &dyn AttackTarget,
    split: &DatasetSplit,
    defense: Option<&Defense>,
    attack: Option<&ResolvedAttack>,
) -> Result<ReportRow> {
    if split.is_empty() {
        return Err(Error::Config("evaluation split is empty".into()));
    }
    let deployed = defense.map(|d| &d.shuffle);
    let idx: Vec<usize> = (0..split.len()).collect();
    let (mut clean, mut attacked, mut max_linf) = (0usize, 0usize, 0.0f64);
    for chunk in idx.chunks(ATTACK_BATCH) {
        let batch = prepare_batch(split, chunk, None, TransformStage::Post, None)?;
        let (x, y) = (&batch.images, &batch.labels);
        let correct = |preds: Vec<usize>| preds.iter().zip(y).filter(|(p, l)| p == l).count();
        let clean_preds = predict_through(target, x, deployed)?;
        let Some(a) = attack else {
            let c = correct(clean_preds);
            clean += c;
            attacked += c;
            continue;
        };
        clean += correct(clean_preds);
        let cfg = AttackConfig {
            seed: batch_seed(a.config.seed, chunk[0]),
            ..a.config.clone()
        };
        let adv = match a.spec.kind {
            AttackKind::Bpda => bpda_core(target, x, y, &cfg)?,
            AttackKind::Pgd | AttackKind::Fgsm => {
                let through = if a.spec.through_transform { deployed } else { None };
                pgd_core(target, x, y, &cfg, through)?
            }
        };
        max_linf = linf_per_sample(&adv, x).into_iter().fold(max_linf, f64::max);
        attacked += correct(predict_through(target, &adv, deployed)?);
    }
    let n = split.len();
    let (condition, epsilon, eps_v, iterations, random_init, key_match) = match attack {
        None => (
            "clean".to_string(),
            "0".to_string(),
            0.0,
            0,
            false,
            KeyMatch::NotApplicable,
        ),
        Some(a) => (
            a.spec.name.clone(),
            a.spec.epsilon.clone(),
            a.config.epsilon,
            a.config.iterations,
            a.config.random_init,
            a.key_match,
        ),
    };
    Ok(ReportRow {
        condition,
        epsilon,
        epsilon_value: eps_v,
        iterations,
        random_init,
        key_match,
        samples: n,
        clean_acc: clean as f64 / n as f64,
        attacked_acc: attacked as f64 / n as f64,
        max_linf,
    })
}

/// One row per budget in `epsilons`, using `template` for everything else.
/// Rows are sorted by budget and named `<template>@<epsilon>`.
pub fn sweep(
    target: &dyn AttackTarget,
    split: &DatasetSplit,
    defense: Option<&Defense>,
    m: &ExperimentManifest,
    template: &AttackSpec,
    epsilons: &[String],
) -> Result<Vec<ReportRow>> {
    let mut budgets = epsilons
        .iter()
        .map(|e| Ok((parse_epsilon(e)?, e.clone())))
        .collect::<Result<Vec<_>>>()?;
    budgets.sort_by(|a, b| a.0.total_cmp(&b.0));
    budgets
        .into_iter()
        .map(|(_, e)| {
            let mut spec = template.with_epsilon(&e);
            spec.name = format!("{}@{}", template.name, e);
            let resolved = resolve_attack(&spec, m, defense)?;
            evaluate(target, split, defense, Some(&resolved))
        })
        .collect()
}
