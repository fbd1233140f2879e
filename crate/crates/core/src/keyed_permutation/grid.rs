use crate::error::{Error, Result};

/// Block layout of an image: side length `block` (M), image `width` (X),
/// `height` (Y), and `channels` (C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockGrid {
    block: usize,
    width: usize,
    height: usize,
    channels: usize,
}

impl BlockGrid {
    pub fn new(block: usize, width: usize, height: usize, channels: usize) -> Result<Self> {
        if block == 0 || width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "block grid dimensions must be positive (M={block}, X={width}, Y={height}, C={channels})"
            )));
        }
        Ok(Self {
            block,
            width,
            height,
            channels,
        })
    }

    /// 32x32 RGB grid with block side `block`.
    pub fn cifar(block: usize) -> Result<Self> {
        Self::new(block, 32, 32, 3)
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Values per block, `n = M * M * C`.
    pub fn block_len(&self) -> usize {
        self.block * self.block * self.channels
    }

    pub fn padded_width(&self) -> usize {
        self.width.div_ceil(self.block) * self.block
    }

    pub fn padded_height(&self) -> usize {
        self.height.div_ceil(self.block) * self.block
    }

    pub fn needs_padding(&self) -> bool {
        !self.width.is_multiple_of(self.block) || !self.height.is_multiple_of(self.block)
    }

    pub fn blocks(&self) -> usize {
        (self.padded_width() / self.block) * (self.padded_height() / self.block)
    }

    /// Values per image, `X * Y * C`.
    pub fn image_len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn check_shape(&self, height: usize, width: usize, channels: usize) -> Result<()> {
        if (height, width, channels) != (self.height, self.width, self.channels) {
            return Err(Error::ShapeMismatch {
                op: "block grid",
                lhs: vec![height, width, channels],
                rhs: vec![self.height, self.width, self.channels],
            });
        }
        Ok(())
    }
}

/// Mirror index `p` into `0..len` without repeating the edge sample
/// (`len = 4`: 4 -> 2, 5 -> 1).
pub(crate) fn reflect(p: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let q = p % period;
    if q < len {
        q
    } else {
        period - q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_dims() {
        let g = BlockGrid::new(4, 30, 33, 3).unwrap();
        assert_eq!((g.padded_width(), g.padded_height()), (32, 36));
        assert!(g.needs_padding());
        assert_eq!(g.blocks(), 8 * 9);
        assert!(!BlockGrid::cifar(16).unwrap().needs_padding());
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(BlockGrid::new(0, 32, 32, 3).is_err());
        assert!(BlockGrid::new(4, 0, 32, 3).is_err());
    }

    #[test]
    fn reflect_matches_numpy_reflect_mode() {
        // numpy.pad([0,1,2,3], (0,5), mode="reflect") -> 0 1 2 3 2 1 0 1 2
        let got: Vec<_> = (0..9).map(|p| reflect(p, 4)).collect();
        assert_eq!(got, [0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect(5, 1), 0);
    }
}
