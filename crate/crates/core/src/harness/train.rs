use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::ExperimentManifest;
use crate::data::{load_cifar10, prepare_batch, AugmentSeed, DatasetSplit, TransformStage};
use crate::error::{Error, Result};
use crate::keyed_permutation::{BlockGrid, BlockShuffle, SecretKey};
use crate::nn::{ArchitectureConfig, Checkpoint, DefenseMeta, Model};
use crate::tensor::{Graph, OptimizerState, Reduction};

/// The deployed transform: key, grid, and the compiled shuffle.
#[derive(Debug, Clone)]
pub struct Defense {
    pub key: SecretKey,
    pub grid: BlockGrid,
    pub shuffle: BlockShuffle,
}

impl Defense {
    pub fn new(key: SecretKey, block_size: usize) -> Result<Self> {
        let grid = BlockGrid::cifar(block_size)?;
        let shuffle = BlockShuffle::from_key(&key, grid)?;
        Ok(Self { key, grid, shuffle })
    }

    pub fn from_manifest(m: &ExperimentManifest) -> Result<Option<Self>> {
        m.key_path()
            .map(|p| Defense::new(SecretKey::load(p)?, m.block_size))
            .transpose()
    }

    pub fn meta(&self) -> DefenseMeta {
        DefenseMeta {
            block_size: Some(self.grid.block()),
            key_fingerprint: Some(self.key.fingerprint()),
        }
    }

    /// Errors unless this defense is the one recorded in `meta`.
    pub fn check_against(defense: Option<&Defense>, meta: &DefenseMeta) -> Result<()> {
        let mine = defense.map(Defense::meta).unwrap_or_else(DefenseMeta::none);
        if &mine != meta {
            return Err(Error::Config(format!(
                "key/grid mismatch: checkpoint was trained with block {:?} key {:?}, got block {:?} key {:?}",
                meta.block_size, meta.key_fingerprint, mine.block_size, mine.key_fingerprint
            )));
        }
        Ok(())
    }
}

/// Training and evaluation splits, cut to the manifest's subset sizes.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: DatasetSplit,
    pub test: DatasetSplit,
}

impl Datasets {
    pub fn load(dir: impl AsRef<Path>, m: &ExperimentManifest) -> Result<Self> {
        let (train, test) = load_cifar10(dir)?;
        Ok(Self::new(train, test, m))
    }

    pub fn new(train: DatasetSplit, test: DatasetSplit, m: &ExperimentManifest) -> Self {
        Self {
            train: m.train_subset.map_or(train.clone(), |n| train.head(n)),
            test: m.test_subset.map_or(test.clone(), |n| test.head(n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug)]
pub struct TrainingRun {
    pub model: Model<f32>,
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
}

const EVAL_BATCH: usize = 250;

/// Clean accuracy of `model` on `split`, each image passed through the
/// defense first.
pub fn accuracy(model: &Model<f32>, split: &DatasetSplit, defense: Option<&Defense>) -> Result<f64> {
    let idx: Vec<usize> = (0..split.len()).collect();
    let mut correct = 0;
    for chunk in idx.chunks(EVAL_BATCH) {
        let batch = prepare_batch(split, chunk, defense.map(|d| &d.shuffle), TransformStage::Post, None)?;
        let preds = model.predict(&batch.images)?;
        correct += preds.iter().zip(&batch.labels).filter(|(p, y)| p == y).count();
    }
    Ok(correct as f64 / split.len().max(1) as f64)
}

/// Trains a model from scratch per the manifest. SGD with momentum, weight
/// decay and a step schedule; one pass over a freshly shuffled order per
/// epoch. Bit-reproducible for a given manifest.
pub fn train(m: &ExperimentManifest, defense: Option<&Defense>, data: &Datasets) -> Result<TrainingRun> {
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let mut model = Model::<f32>::build(ArchitectureConfig::for_variant(m.variant), m.seed)?;
    let mut opt = OptimizerState::new(m.lr, m.momentum, m.weight_decay, m.lr_step_epochs, m.lr_gamma);
    let shuffle = defense.map(|d| &d.shuffle);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut log = Vec::with_capacity(m.epochs);
    for epoch in 0..m.epochs {
        let lr = opt.lr;
        let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);
        let aug = m.augment.then_some(AugmentSeed { seed: m.seed, epoch });
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for chunk in order.chunks(m.batch_size) {
            let batch = prepare_batch(&data.train, chunk, shuffle, m.transform_stage, aug)?;
            let mut g = Graph::new();
            let x = g.leaf(batch.images, false);
            let fwd = model.forward_train(&mut g, x)?;
            let preds = g.value(fwd.logits).argmax_rows()?;
            correct += preds.iter().zip(&batch.labels).filter(|(p, y)| p == y).count();
            let loss = g.softmax_cross_entropy(fwd.logits, &batch.labels, Reduction::Mean)?;
            loss_sum += g.value(loss).item()? as f64 * chunk.len() as f64;
            let grads = g.backward(loss)?;
            let grads: Vec<_> = fwd.params.iter().map(|&p| grads.get(p)).collect();
            opt.step(model.params_mut(), &grads)?;
        }
        opt.end_epoch();
        let n = data.train.len() as f64;
        let rec = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            test_acc: if data.test.is_empty() {
                0.0
            } else {
                accuracy(&model, &data.test, defense)?
            },
        };
        log::info!(
            "epoch {:>3} lr {:.4} loss {:.4} train {:.4} test {:.4}",
            rec.epoch,
            rec.lr,
            rec.train_loss,
            rec.train_acc,
            rec.test_acc
        );
        log.push(rec);
    }
    let meta = defense.map(Defense::meta).unwrap_or_else(DefenseMeta::none);
    let checkpoint = Checkpoint::from_model(&model, meta, m.epochs, m.seed, Some(&opt));
    Ok(TrainingRun { model, checkpoint, log })
}
