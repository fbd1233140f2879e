use proptest::prelude::*;
use shuffleguard::keyed_permutation::{
    derive_permutation, deshuffle_image, key_space, seed_space, shuffle_image, shuffle_image_with, BlockGrid,
    BlockShuffle, ImageTensor, PermutationVector, SecretKey,
};

fn key_from(seed: u64) -> SecretKey {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[31] = 0x5a;
    SecretKey::from_seed(bytes)
}

fn image(h: usize, w: usize, c: usize, values: &[u8]) -> ImageTensor {
    let data = (0..h * w * c)
        .map(|i| values[i % values.len()].wrapping_add((i / values.len()) as u8))
        .collect();
    ImageTensor::from_bytes(h, w, c, data).unwrap()
}

/// Shuffle by literally cutting out each block, permuting its flattened
/// values and pasting it back. Divisible grids only.
fn brute_force_shuffle(img: &[u8], h: usize, w: usize, c: usize, m: usize, perm: &[usize]) -> Vec<u8> {
    let mut out = img.to_vec();
    for br in (0..h).step_by(m) {
        for bc in (0..w).step_by(m) {
            let mut block = Vec::with_capacity(m * m * c);
            for r in 0..m {
                for col in 0..m {
                    for ch in 0..c {
                        block.push(img[((br + r) * w + bc + col) * c + ch]);
                    }
                }
            }
            let shuffled: Vec<u8> = perm.iter().map(|&p| block[p]).collect();
            let mut k = 0;
            for r in 0..m {
                for col in 0..m {
                    for ch in 0..c {
                        out[((br + r) * w + bc + col) * c + ch] = shuffled[k];
                        k += 1;
                    }
                }
            }
        }
    }
    out
}

fn bytes(img: &ImageTensor) -> &[u8] {
    img.as_bytes().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derived_permutation_is_a_bijection(seed in any::<u64>(), n in 1usize..2000) {
        let perm = derive_permutation(&key_from(seed), n).unwrap();
        let mut seen = vec![false; n];
        for &p in perm.mapping() {
            prop_assert!(p < n);
            prop_assert!(!seen[p]);
            seen[p] = true;
        }
    }

    #[test]
    fn derivation_is_deterministic(seed in any::<u64>(), n in 1usize..500) {
        let key = key_from(seed);
        prop_assert_eq!(derive_permutation(&key, n).unwrap(), derive_permutation(&key, n).unwrap());
    }

    #[test]
    fn inverse_composes_to_identity(seed in any::<u64>(), n in 1usize..500) {
        let perm = derive_permutation(&key_from(seed), n).unwrap();
        prop_assert!(perm.compose_after(&perm.inverse()).unwrap().is_identity());
        prop_assert!(perm.inverse().compose_after(&perm).unwrap().is_identity());
    }

    #[test]
    fn round_trip_is_exact(
        seed in any::<u64>(),
        m in prop::sample::select(vec![2usize, 4, 8, 16]),
        blocks_y in 1usize..4,
        blocks_x in 1usize..4,
        c in 1usize..4,
        values in prop::collection::vec(any::<u8>(), 1..64),
    ) {
        let (h, w) = (m * blocks_y, m * blocks_x);
        let grid = BlockGrid::new(m, w, h, c).unwrap();
        let key = key_from(seed);
        let img = image(h, w, c, &values);
        let back = deshuffle_image(&shuffle_image(&img, &key, &grid).unwrap(), &key, &grid).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn matches_brute_force_block_shuffle(
        seed in any::<u64>(),
        m in prop::sample::select(vec![1usize, 2, 4, 8]),
        blocks in 1usize..4,
        c in 1usize..4,
        values in prop::collection::vec(any::<u8>(), 1..64),
    ) {
        let (h, w) = (m * blocks, m * (blocks + 1));
        let grid = BlockGrid::new(m, w, h, c).unwrap();
        let key = key_from(seed);
        let img = image(h, w, c, &values);
        let perm = derive_permutation(&key, m * m * c).unwrap();
        let expected = brute_force_shuffle(bytes(&img), h, w, c, m, perm.mapping());
        let out = shuffle_image(&img, &key, &grid).unwrap();
        prop_assert_eq!(bytes(&out), &expected[..]);
    }

    #[test]
    fn gather_maps_agree_across_layouts(seed in any::<u64>(), m in prop::sample::select(vec![2usize, 3, 4, 5])) {
        let grid = BlockGrid::new(m, 10, 9, 3).unwrap();
        let shuffle = BlockShuffle::from_key(&key_from(seed), grid).unwrap();
        let hwc: Vec<u32> = (0..270).collect();
        let to_chw = |v: &[u32]| {
            let mut out = vec![0u32; 270];
            for r in 0..9 { for c in 0..10 { for k in 0..3 {
                out[(k * 9 + r) * 10 + c] = v[(r * 10 + c) * 3 + k];
            }}}
            out
        };
        prop_assert_eq!(shuffle.apply_chw(&to_chw(&hwc)), to_chw(&shuffle.apply_hwc(&hwc)));
    }

    #[test]
    fn linf_distance_is_preserved(
        seed in any::<u64>(),
        m in prop::sample::select(vec![2usize, 4, 8]),
        a in prop::collection::vec(0.0f32..=1.0, 16 * 16 * 3),
        b in prop::collection::vec(0.0f32..=1.0, 16 * 16 * 3),
    ) {
        let grid = BlockGrid::new(m, 16, 16, 3).unwrap();
        let key = key_from(seed);
        let x = ImageTensor::from_unit(16, 16, 3, a).unwrap();
        let y = ImageTensor::from_unit(16, 16, 3, b).unwrap();
        let before = x.linf_distance(&y).unwrap();
        let after = shuffle_image(&x, &key, &grid).unwrap()
            .linf_distance(&shuffle_image(&y, &key, &grid).unwrap()).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn values_never_leave_their_block(
        seed in any::<u64>(),
        m in prop::sample::select(vec![2usize, 4, 8]),
        c in 1usize..4,
    ) {
        let (h, w) = (16, 16);
        let grid = BlockGrid::new(m, w, h, c).unwrap();
        let shuffle = BlockShuffle::from_key(&key_from(seed), grid).unwrap();
        for (dst, &src) in shuffle.hwc_map().iter().enumerate() {
            let (dp, sp) = (dst / c, src as usize / c);
            prop_assert_eq!((dp / w / m, dp % w / m), (sp / w / m, sp % w / m));
        }
    }

    #[test]
    fn padded_grids_keep_shape_and_determinism(
        seed in any::<u64>(),
        m in 2usize..7,
        h in 1usize..20,
        w in 1usize..20,
        values in prop::collection::vec(any::<u8>(), 1..32),
    ) {
        let grid = BlockGrid::new(m, w, h, 3).unwrap();
        let key = key_from(seed);
        let img = image(h, w, 3, &values);
        let a = shuffle_image(&img, &key, &grid).unwrap();
        prop_assert_eq!((a.height(), a.width(), a.channels()), (h, w, 3));
        prop_assert_eq!(a, shuffle_image(&img, &key, &grid).unwrap());
    }

    #[test]
    fn wrong_key_does_not_invert(seed in any::<u64>(), other in any::<u64>()) {
        prop_assume!(seed != other);
        let grid = BlockGrid::cifar(4).unwrap();
        let img = ImageTensor::from_bytes(32, 32, 3, (0..3072).map(|i| (i * 7 % 251) as u8).collect()).unwrap();
        let shuffled = shuffle_image(&img, &key_from(seed), &grid).unwrap();
        prop_assert_ne!(deshuffle_image(&shuffled, &key_from(other), &grid).unwrap(), img);
    }

    #[test]
    fn key_file_round_trips(seed in any::<[u8; 32]>()) {
        let key = SecretKey::from_seed(seed).with_label("prop");
        let parsed = SecretKey::parse(&key.to_file_string()).unwrap();
        prop_assert_eq!(parsed.seed(), key.seed());
        prop_assert_eq!(parsed.fingerprint(), key.fingerprint());
    }
}

#[test]
fn identity_permutation_is_identity_shuffle() {
    let grid = BlockGrid::cifar(4).unwrap();
    let img = ImageTensor::from_bytes(32, 32, 3, (0..3072).map(|i| (i % 256) as u8).collect()).unwrap();
    let out = shuffle_image_with(&img, &PermutationVector::identity(48), &grid).unwrap();
    assert_eq!(out, img);
}

/// n! by schoolbook multiplication on little-endian decimal digits.
fn decimal_factorial(n: u32) -> String {
    let mut digits = vec![1u32];
    for k in 2..=n {
        let mut carry = 0;
        for d in digits.iter_mut() {
            let v = *d * k + carry;
            *d = v % 10;
            carry = v / 10;
        }
        while carry > 0 {
            digits.push(carry % 10);
            carry /= 10;
        }
    }
    digits.iter().rev().map(|d| char::from_digit(*d, 10).unwrap()).collect()
}

#[test]
fn key_space_matches_decimal_oracle() {
    for n in [1, 2, 12, 20, 48, 57, 58, 192] {
        assert_eq!(
            key_space(n as usize).unwrap().to_string(),
            decimal_factorial(n),
            "n = {n}"
        );
    }
    let k48 = key_space(48).unwrap().to_string();
    assert_eq!(k48.len(), 62);
    assert!(k48.starts_with("12413915592536072670862289047373375038521486354677760"));
}

#[test]
fn seed_space_is_two_to_the_256() {
    let two_256 = "115792089237316195423570985008687907853269984665640564039457584007913129639936";
    assert_eq!(seed_space().to_string(), two_256);
    assert!(key_space(57).unwrap() < seed_space());
    assert!(key_space(58).unwrap() > seed_space());
}
