use std::path::Path;

use crate::error::{Error, Result};
use crate::keyed_permutation::ImageTensor;

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_BYTES: usize = IMAGE_SIDE * IMAGE_SIDE * 3;
/// One label byte followed by channel-planar R, G, B pixel bytes.
pub const RECORD_BYTES: usize = 1 + IMAGE_BYTES;
pub const RECORDS_PER_FILE: usize = 10_000;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
}

/// Labelled 32x32x3 byte images stored HWC, one after another.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    images: Vec<u8>,
    labels: Vec<u8>,
    kind: SplitKind,
}

impl DatasetSplit {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, kind: SplitKind) -> Result<Self> {
        if images.len() != labels.len() * IMAGE_BYTES {
            return Err(Error::invalid(format!(
                "{} image bytes for {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(Error::invalid(format!(
                "label {} at index {i} is out of range",
                labels[i]
            )));
        }
        Ok(Self { images, labels, kind })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn kind(&self) -> SplitKind {
        self.kind
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// HWC bytes of image `i`.
    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]
    }

    pub fn image_tensor(&self, i: usize) -> ImageTensor {
        ImageTensor::from_bytes(IMAGE_SIDE, IMAGE_SIDE, 3, self.image(i).to_vec()).expect("split images are 32x32x3")
    }

    /// The first `n` samples (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n * IMAGE_BYTES].to_vec(),
            labels: self.labels[..n].to_vec(),
            kind: self.kind,
        }
    }

    pub fn concat(parts: Vec<DatasetSplit>, kind: SplitKind) -> Self {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            images.extend(p.images);
            labels.extend(p.labels);
        }
        Self { images, labels, kind }
    }

    /// Replaces image `i` (HWC bytes).
    pub fn set_image(&mut self, i: usize, hwc: &[u8]) {
        self.images[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES].copy_from_slice(hwc);
    }
}

/// Decodes raw CIFAR-10 records. `path` is only used in error messages.
pub fn parse_records(bytes: &[u8], path: &Path, kind: SplitKind) -> Result<DatasetSplit> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::CorruptDataset {
            path: path.to_path_buf(),
            reason: format!(
                "{} bytes is not a whole number of {RECORD_BYTES}-byte records",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut images = vec![0u8; n * IMAGE_BYTES];
    let mut labels = Vec::with_capacity(n);
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    for (index, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let label = rec[0];
        if label as usize >= NUM_CLASSES {
            return Err(Error::CorruptRecord {
                path: path.to_path_buf(),
                index,
                reason: format!("label byte {label} > 9"),
            });
        }
        labels.push(label);
        let dst = &mut images[index * IMAGE_BYTES..(index + 1) * IMAGE_BYTES];
        for p in 0..plane {
            for c in 0..3 {
                dst[p * 3 + c] = rec[1 + c * plane + p];
            }
        }
    }
    DatasetSplit::new(images, labels, kind)
}

pub fn read_records(path: impl AsRef<Path>, kind: SplitKind) -> Result<DatasetSplit> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::CorruptDataset {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_records(&bytes, path, kind)
}

/// Encodes a split as raw CIFAR-10 records.
pub fn write_records(path: impl AsRef<Path>, split: &DatasetSplit) -> Result<()> {
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut out = Vec::with_capacity(split.len() * RECORD_BYTES);
    for i in 0..split.len() {
        out.push(split.labels[i]);
        let img = split.image(i);
        for c in 0..3 {
            out.extend((0..plane).map(|p| img[p * 3 + c]));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_full_file(dir: &Path, name: &str, kind: SplitKind) -> Result<DatasetSplit> {
    let path = dir.join(name);
    let meta = std::fs::metadata(&path).map_err(|e| Error::CorruptDataset {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let expected = (RECORDS_PER_FILE * RECORD_BYTES) as u64;
    if meta.len() != expected {
        return Err(Error::CorruptDataset {
            path,
            reason: format!("size {} bytes, expected {expected}", meta.len()),
        });
    }
    read_records(&path, kind)
}

/// Loads only the 10,000-record test file from `dir`.
pub fn load_cifar10_test(dir: impl AsRef<Path>) -> Result<DatasetSplit> {
    read_full_file(dir.as_ref(), TEST_FILE, SplitKind::Test)
}

/// Loads the binary distribution from `dir`: five 10,000-record training
/// files and one test file.
pub fn load_cifar10(dir: impl AsRef<Path>) -> Result<(DatasetSplit, DatasetSplit)> {
    let dir = dir.as_ref();
    let train = TRAIN_FILES
        .iter()
        .map(|f| read_full_file(dir, f, SplitKind::Train))
        .collect::<Result<Vec<_>>>()?;
    let test = read_full_file(dir, TEST_FILE, SplitKind::Test)?;
    Ok((DatasetSplit::concat(train, SplitKind::Train), test))
}
