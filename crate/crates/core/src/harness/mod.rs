//! Experiment orchestration: manifests, training, evaluation under
//! attack, epsilon sweeps, block-size ablation, and reports.

mod evaluate;
mod manifest;
mod pipeline;
mod report;
mod train;

pub use evaluate::{evaluate, random_guess, resolve_attack, sweep, KeyMatch, ReportRow, ResolvedAttack};
pub use manifest::{AttackKind, AttackSpec, ExperimentManifest};
pub use pipeline::{ablate_block_size, default_ablation_attack, evaluate_conditions, run_experiment, ExperimentOutput};
pub use report::{git_revision, plot_sweeps, rows_to_csv, training_log_csv, AccuracyReport};
pub use train::{accuracy, train, Datasets, Defense, EpochRecord, TrainingRun};
