use std::path::Path;
use std::time::Instant;

use super::evaluate::{evaluate, resolve_attack, sweep, ReportRow};
use super::manifest::{AttackSpec, ExperimentManifest};
use super::report::{git_revision, training_log_csv, AccuracyReport};
use super::train::{train, Datasets, Defense, TrainingRun};
use crate::attack::AttackTarget;
use crate::error::{Error, Result};
use crate::keyed_permutation::SecretKey;

#[derive(Debug)]
pub struct ExperimentOutput {
    pub run: TrainingRun,
    pub report: AccuracyReport,
}

/// Clean accuracy on the test subset, then every manifest attack and the
/// sweep on the attack subset.
pub fn evaluate_conditions(
    target: &dyn AttackTarget,
    m: &ExperimentManifest,
    defense: Option<&Defense>,
    data: &Datasets,
) -> Result<Vec<ReportRow>> {
    let mut rows = vec![evaluate(target, &data.test, defense, None)?];
    let attack_split = m.attack_subset.map_or(data.test.clone(), |n| data.test.head(n));
    for spec in &m.attacks {
        let resolved = resolve_attack(spec, m, defense)?;
        log::info!("attack {}", spec.name);
        rows.push(evaluate(target, &attack_split, defense, Some(&resolved))?);
    }
    if let Some(name) = &m.sweep_attack {
        let template = m
            .attack(name)
            .ok_or_else(|| Error::Config(format!("sweep_attack {name:?} names no attack")))?;
        log::info!("sweep {} over {:?}", name, m.sweep_epsilons);
        rows.extend(sweep(target, &attack_split, defense, m, template, &m.sweep_epsilons)?);
    }
    Ok(rows)
}

/// The whole protocol for one manifest: train, evaluate, report. With
/// `out_dir`, writes `model.ckpt`, `train_log.csv` and the report files.
pub fn run_experiment(m: &ExperimentManifest, data: &Datasets, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    let start = Instant::now();
    m.validate()?;
    let defense = Defense::from_manifest(m)?;
    let run = train(m, defense.as_ref(), data)?;
    let rows = evaluate_conditions(&run.model, m, defense.as_ref(), data)?;
    let report = AccuracyReport {
        name: m.name.clone(),
        manifest_sha256: m.sha256(),
        git_revision: git_revision(),
        seed: m.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        training: run.log.clone(),
        rows,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        run.checkpoint.save(dir.join("model.ckpt"))?;
        std::fs::write(dir.join("train_log.csv"), training_log_csv(&run.log)?)?;
        report.write_to(dir)?;
    }
    Ok(ExperimentOutput { run, report })
}

/// Attack used when an ablation manifest lists none: 20 steps at 32/255
/// without random start, ignoring the defense.
pub fn default_ablation_attack() -> AttackSpec {
    AttackSpec::pgd("pgd20", "32/255", 20, false)
}

/// Trains one model per block size with `key` and evaluates each clean and
/// under the template's attacks. Rows are named `M=<m> <condition>`.
pub fn ablate_block_size(
    template: &ExperimentManifest,
    blocks: &[usize],
    key: &SecretKey,
    data: &Datasets,
    out_dir: Option<&Path>,
) -> Result<AccuracyReport> {
    let start = Instant::now();
    if blocks.is_empty() {
        return Err(Error::Config("no block sizes to ablate".into()));
    }
    let mut rows = Vec::new();
    for &block in blocks {
        let mut m = ExperimentManifest {
            block_size: block,
            sweep_epsilons: Vec::new(),
            sweep_attack: None,
            ..template.clone()
        };
        if m.attacks.is_empty() {
            m.attacks.push(default_ablation_attack());
        }
        m.validate()?;
        log::info!("ablation: training with M={block}");
        let defense = Defense::new(key.clone(), block)?;
        let run = train(&m, Some(&defense), data)?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            run.checkpoint.save(dir.join(format!("model_m{block}.ckpt")))?;
        }
        for mut row in evaluate_conditions(&run.model, &m, Some(&defense), data)? {
            row.condition = format!("M={block} {}", row.condition);
            rows.push(row);
        }
    }
    let report = AccuracyReport {
        name: format!("{} block-size ablation", template.name),
        manifest_sha256: template.sha256(),
        git_revision: git_revision(),
        seed: template.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        training: Vec::new(),
        rows,
    };
    if let Some(dir) = out_dir {
        report.write_to(dir)?;
    }
    Ok(report)
}
