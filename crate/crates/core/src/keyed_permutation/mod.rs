//! Key-derived block permutations and the block-wise pixel shuffling
//! transform built on them.

mod grid;
mod image;
mod key;
mod permutation;
mod shuffle;

pub use grid::BlockGrid;
pub use image::{ImageTensor, PixelData};
pub use key::{SecretKey, KEY_FILE_HEADER, SEED_LEN};
pub use permutation::{derive_permutation, key_space, seed_space, PermutationVector, PERMUTATION_GENERATOR};
pub use shuffle::{deshuffle_image, shuffle_image, shuffle_image_with, BlockShuffle};
