//! The adaptive attack against a shuffled model: BPDA with a random wrong
//! key versus the true key, both with random starts, at 8/255.
//!
//!     cargo run --release --example bpda_attack -- desk_small.ckpt desk_small.key

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use shuffleguard::attack::{bpda_attack, AttackConfig, BpdaBackward};
use shuffleguard::data::{load_cifar10_test, prepare_batch, TransformStage};
use shuffleguard::harness::{random_guess, Defense};
use shuffleguard::keyed_permutation::SecretKey;
use shuffleguard::nn::Checkpoint;

fn main() -> shuffleguard::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = Checkpoint::load(args.next().unwrap_or_else(|| "desk_small.ckpt".into()))?;
    let key = SecretKey::load(args.next().unwrap_or_else(|| "desk_small.key".into()))?;
    let block = ckpt.defense.block_size.expect("a defended checkpoint");
    let defense = Defense::new(key, block)?;
    Defense::check_against(Some(&defense), &ckpt.defense)?;
    let model = ckpt.to_model()?;

    let data_dir = std::env::var("SHUFFLEGUARD_DATA_DIR").expect("set SHUFFLEGUARD_DATA_DIR");
    let test = load_cifar10_test(data_dir)?;
    let idx: Vec<usize> = (0..200).collect();
    let batch = prepare_batch(&test, &idx, None, TransformStage::Post, None)?;

    let base = AttackConfig::pgd(8.0 / 255.0, 40, true).with_seed(3);
    for (label, guess) in [("wrong key", random_guess(3)), ("true key", defense.key.clone())] {
        for mode in [BpdaBackward::Identity, BpdaBackward::ExactGuessed] {
            let mut cfg = base.clone().with_guess(guess.clone(), defense.grid);
            cfg.bpda_backward = mode;
            let res = bpda_attack(&model, &batch.images, &batch.labels, &cfg, Some(&defense.shuffle))?;
            let linf = res.linf_achieved.iter().cloned().fold(0.0, f64::max);
            println!(
                "BPDA40r {label:<9} backward {mode:<13} accuracy {:.3}  max linf {:.4}",
                1.0 - res.success_rate(),
                linf
            );
        }
    }
    Ok(())
}
