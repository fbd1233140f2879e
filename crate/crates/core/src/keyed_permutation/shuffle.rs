use super::grid::{reflect, BlockGrid};
use super::image::{ImageTensor, PixelData};
use super::key::SecretKey;
use super::permutation::{derive_permutation, PermutationVector};
use crate::error::{Error, Result};

/// A block permutation compiled into whole-image gather maps.
///
/// Within a block, value `i` is flattened as `i = (r * M + c) * C + ch`.
/// Output position `i` of every block takes the block's input value at
/// `mapping[i]`. Grids that do not divide into blocks are reflect-padded on
/// the right and bottom, shuffled, and cropped back.
#[derive(Debug, Clone)]
pub struct BlockShuffle {
    grid: BlockGrid,
    hwc: Vec<u32>,
    chw: Vec<u32>,
}

impl BlockShuffle {
    pub fn new(grid: BlockGrid, perm: &PermutationVector) -> Result<Self> {
        if perm.len() != grid.block_len() {
            return Err(Error::invalid(format!(
                "permutation length {} does not match block length {} (M={}, C={})",
                perm.len(),
                grid.block_len(),
                grid.block(),
                grid.channels()
            )));
        }
        let (m, w, h, ch) = (grid.block(), grid.width(), grid.height(), grid.channels());
        let mapping = perm.mapping();
        let mut hwc = vec![0u32; grid.image_len()];
        let mut chw = vec![0u32; grid.image_len()];
        for r in 0..h {
            for c in 0..w {
                let (block_r, block_c) = (r / m * m, c / m * m);
                let local_pixel = (r % m) * m + c % m;
                for k in 0..ch {
                    let src = mapping[local_pixel * ch + k];
                    let (src_pixel, src_k) = (src / ch, src % ch);
                    let sr = reflect(block_r + src_pixel / m, h);
                    let sc = reflect(block_c + src_pixel % m, w);
                    hwc[(r * w + c) * ch + k] = ((sr * w + sc) * ch + src_k) as u32;
                    chw[(k * h + r) * w + c] = ((src_k * h + sr) * w + sc) as u32;
                }
            }
        }
        Ok(Self { grid, hwc, chw })
    }

    /// The transform for `key` on `grid`.
    pub fn from_key(key: &SecretKey, grid: BlockGrid) -> Result<Self> {
        Self::new(grid, &derive_permutation(key, grid.block_len())?)
    }

    /// The inverse transform for `key` on `grid`.
    pub fn inverse_from_key(key: &SecretKey, grid: BlockGrid) -> Result<Self> {
        Self::new(grid, &derive_permutation(key, grid.block_len())?.inverse())
    }

    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    /// Gather map over an HWC image: `out[i] = in[map[i]]`.
    pub fn hwc_map(&self) -> &[u32] {
        &self.hwc
    }

    /// Gather map over a CHW image: `out[i] = in[map[i]]`.
    pub fn chw_map(&self) -> &[u32] {
        &self.chw
    }

    /// False when padding makes the transform lossy at the edges.
    pub fn is_bijective(&self) -> bool {
        !self.grid.needs_padding()
    }

    pub fn apply_hwc<E: Copy>(&self, src: &[E]) -> Vec<E> {
        gather(&self.hwc, src)
    }

    pub fn apply_chw<E: Copy>(&self, src: &[E]) -> Vec<E> {
        gather(&self.chw, src)
    }

    /// Applies the CHW map to every image of a contiguous NCHW batch.
    pub fn apply_chw_batch_into<E: Copy>(&self, src: &[E], dst: &mut [E]) {
        let len = self.chw.len();
        assert_eq!(src.len(), dst.len());
        assert_eq!(src.len() % len, 0, "batch length is not a multiple of the image size");
        for (s, d) in src.chunks_exact(len).zip(dst.chunks_exact_mut(len)) {
            for (o, &m) in d.iter_mut().zip(&self.chw) {
                *o = s[m as usize];
            }
        }
    }

    pub fn apply_image(&self, img: &ImageTensor) -> Result<ImageTensor> {
        self.grid.check_shape(img.height(), img.width(), img.channels())?;
        let data = match img.data() {
            PixelData::Byte(v) => PixelData::Byte(self.apply_hwc(v)),
            PixelData::Unit(v) => PixelData::Unit(self.apply_hwc(v)),
        };
        Ok(img.with_data(data))
    }
}

fn gather<E: Copy>(map: &[u32], src: &[E]) -> Vec<E> {
    assert_eq!(map.len(), src.len(), "image length does not match the grid");
    map.iter().map(|&m| src[m as usize]).collect()
}

/// Block-wise pixel shuffling of `img` under `key`.
pub fn shuffle_image(img: &ImageTensor, key: &SecretKey, grid: &BlockGrid) -> Result<ImageTensor> {
    BlockShuffle::from_key(key, *grid)?.apply_image(img)
}

/// Inverse of [`shuffle_image`] under the same key.
pub fn deshuffle_image(img: &ImageTensor, key: &SecretKey, grid: &BlockGrid) -> Result<ImageTensor> {
    BlockShuffle::inverse_from_key(key, *grid)?.apply_image(img)
}

/// Shuffles with an explicit permutation (bypassing key derivation).
pub fn shuffle_image_with(img: &ImageTensor, perm: &PermutationVector, grid: &BlockGrid) -> Result<ImageTensor> {
    BlockShuffle::new(*grid, perm)?.apply_image(img)
}
