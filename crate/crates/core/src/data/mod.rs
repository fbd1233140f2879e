//! CIFAR-10 ingestion, training-time augmentation, and batch assembly with
//! the keyed transform applied.

mod augment;
mod batch;
mod cifar;

pub use augment::{augment, sample_rng, Augmentation, CROP_PAD};
pub use batch::{hwc_to_chw, prepare_batch, AugmentSeed, Batch, TransformStage};
pub use cifar::{
    load_cifar10, load_cifar10_test, parse_records, read_records, write_records, DatasetSplit, SplitKind, IMAGE_BYTES,
    RECORDS_PER_FILE, RECORD_BYTES, TEST_FILE, TRAIN_FILES,
};
