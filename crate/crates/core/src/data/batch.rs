use serde::{Deserialize, Serialize};

use super::augment::{sample_rng, Augmentation};
use super::cifar::{DatasetSplit, IMAGE_BYTES, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::keyed_permutation::BlockShuffle;
use crate::tensor::Tensor;

/// Where the keyed shuffle sits relative to augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformStage {
    /// Shuffle the stored image, then augment.
    Pre,
    /// Augment, then shuffle (default).
    #[default]
    Post,
}

impl std::str::FromStr for TransformStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre" => Ok(Self::Pre),
            "post" => Ok(Self::Post),
            other => Err(Error::Config(format!(
                "transform stage must be pre or post, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for TransformStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransformStage::Pre => "pre",
            TransformStage::Post => "post",
        })
    }
}

/// Seed material for one epoch of augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentSeed {
    pub seed: u64,
    pub epoch: usize,
}

/// Model-ready batch: NCHW floats in `[0, 1]` plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
}

/// HWC to CHW for a single image.
pub fn hwc_to_chw<E: Copy + Default>(src: &[E], h: usize, w: usize, c: usize) -> Vec<E> {
    let mut out = vec![E::default(); src.len()];
    for p in 0..h * w {
        for k in 0..c {
            out[k * h * w + p] = src[p * c + k];
        }
    }
    out
}

/// Builds a batch from `indices` of `split`.
///
/// Per sample: augmentation (when `augment` is set) and byte-to-unit
/// scaling, then the keyed shuffle (when `shuffle` is set), in the order
/// chosen by `stage`. Every sample uses the same permutation.
pub fn prepare_batch(
    split: &DatasetSplit,
    indices: &[usize],
    shuffle: Option<&BlockShuffle>,
    stage: TransformStage,
    augment: Option<AugmentSeed>,
) -> Result<Batch> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= split.len()) {
        return Err(Error::invalid(format!(
            "sample index {bad} out of range for split of {}",
            split.len()
        )));
    }
    if let Some(s) = shuffle {
        s.grid().check_shape(IMAGE_SIDE, IMAGE_SIDE, 3)?;
    }
    let mut data = Vec::with_capacity(indices.len() * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let mut img: Vec<u8> = split.image(i).to_vec();
        let aug = augment.map(|a| Augmentation::sample(&mut sample_rng(a.seed, a.epoch, i)));
        let mut unit: Vec<f32> = match stage {
            TransformStage::Pre => {
                if let Some(s) = shuffle {
                    img = s.apply_hwc(&img);
                }
                if let Some(a) = aug {
                    img = a.apply(&img, IMAGE_SIDE, IMAGE_SIDE, 3);
                }
                to_unit(&img)
            }
            TransformStage::Post => {
                if let Some(a) = aug {
                    img = a.apply(&img, IMAGE_SIDE, IMAGE_SIDE, 3);
                }
                let unit = to_unit(&img);
                match shuffle {
                    Some(s) => s.apply_hwc(&unit),
                    None => unit,
                }
            }
        };
        unit = hwc_to_chw(&unit, IMAGE_SIDE, IMAGE_SIDE, 3);
        data.extend_from_slice(&unit);
        labels.push(split.label(i));
    }
    Ok(Batch {
        images: Tensor::new([indices.len(), 3, IMAGE_SIDE, IMAGE_SIDE], data)?,
        labels,
    })
}

fn to_unit(bytes: &[u8]) -> Vec<f32> {
    bytes.iter().map(|&b| b as f32 / 255.0).collect()
}
