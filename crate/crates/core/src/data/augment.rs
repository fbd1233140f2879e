use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Zero padding added on each side before the random crop.
pub const CROP_PAD: usize = 4;

/// One draw of the training augmentation: a crop offset into the padded
/// image (`0..=2 * CROP_PAD` on each axis) and a horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub offset_y: usize,
    pub offset_x: usize,
    pub flip: bool,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        offset_y: CROP_PAD,
        offset_x: CROP_PAD,
        flip: false,
    };

    pub fn sample(rng: &mut impl Rng) -> Self {
        Self {
            offset_y: rng.random_range(0..=2 * CROP_PAD),
            offset_x: rng.random_range(0..=2 * CROP_PAD),
            flip: rng.random_bool(0.5),
        }
    }

    /// Applies the crop and flip to an `h x w x c` image; shape is kept.
    pub fn apply<E: Copy + Default>(&self, img: &[E], h: usize, w: usize, c: usize) -> Vec<E> {
        assert_eq!(img.len(), h * w * c);
        let mut out = vec![E::default(); img.len()];
        for r in 0..h {
            let sr = (r + self.offset_y).checked_sub(CROP_PAD).filter(|&v| v < h);
            let Some(sr) = sr else { continue };
            for col in 0..w {
                let dst_col = if self.flip { w - 1 - col } else { col };
                let sc = (col + self.offset_x).checked_sub(CROP_PAD).filter(|&v| v < w);
                if let Some(sc) = sc {
                    let s = (sr * w + sc) * c;
                    let d = (r * w + dst_col) * c;
                    out[d..d + c].copy_from_slice(&img[s..s + c]);
                }
            }
        }
        out
    }
}

/// Random crop (zero padding) and horizontal flip of an HWC image.
pub fn augment<E: Copy + Default>(img: &[E], h: usize, w: usize, c: usize, rng: &mut impl Rng) -> Vec<E> {
    Augmentation::sample(rng).apply(img, h, w, c)
}

/// Generator for one sample's augmentation in one epoch. Keyed by sample
/// index rather than batch position so that any batching order, serial or
/// parallel, sees the same draws.
pub fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> Vec<u8> {
        (0..32 * 32 * 3).map(|i| (i * 7 % 251) as u8).collect()
    }

    #[test]
    fn double_flip_is_identity() {
        let flip = Augmentation {
            flip: true,
            ..Augmentation::IDENTITY
        };
        let x = img();
        assert_ne!(flip.apply(&x, 32, 32, 3), x);
        assert_eq!(flip.apply(&flip.apply(&x, 32, 32, 3), 32, 32, 3), x);
    }

    #[test]
    fn centered_crop_is_identity() {
        let x = img();
        assert_eq!(Augmentation::IDENTITY.apply(&x, 32, 32, 3), x);
    }

    #[test]
    fn zero_image_stays_zero() {
        let x = vec![0u8; 32 * 32 * 3];
        let mut rng = sample_rng(1, 0, 0);
        for _ in 0..20 {
            assert_eq!(augment(&x, 32, 32, 3, &mut rng), x);
        }
    }

    #[test]
    fn corner_crop_shifts_and_zero_fills() {
        let x = img();
        let a = Augmentation {
            offset_y: 0,
            offset_x: 0,
            flip: false,
        };
        let out = a.apply(&x, 32, 32, 3);
        // Output (4, 4) is source (0, 0); the top rows are padding.
        assert_eq!(&out[(4 * 32 + 4) * 3..(4 * 32 + 4) * 3 + 3], &x[..3]);
        assert!(out[..4 * 32 * 3].iter().all(|&v| v == 0));
    }

    #[test]
    fn per_sample_streams_are_stable() {
        let a: u64 = sample_rng(9, 3, 17).random();
        let b: u64 = sample_rng(9, 3, 17).random();
        let c: u64 = sample_rng(9, 3, 18).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
