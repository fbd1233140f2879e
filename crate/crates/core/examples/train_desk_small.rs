//! Trains the small residual network on a CIFAR-10 subset, with or without
//! the shuffling defense, and saves `desk_small.ckpt` (plus `desk_small.key`
//! when defended) in the working directory.
//!
//!     SHUFFLEGUARD_DATA_DIR=/path/to/cifar-10-batches-bin \
//!         cargo run --release --example train_desk_small -- [epochs] [block|none]

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use shuffleguard::harness::{train, Datasets, Defense, ExperimentManifest};
use shuffleguard::keyed_permutation::SecretKey;

fn main() -> shuffleguard::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let epochs = args
        .next()
        .map_or(Ok(30), |s| s.parse())
        .expect("epochs must be an integer");
    let block = args.next().unwrap_or_else(|| "4".into());
    let data_dir = std::env::var("SHUFFLEGUARD_DATA_DIR").expect("set SHUFFLEGUARD_DATA_DIR");

    let manifest = ExperimentManifest {
        epochs,
        ..ExperimentManifest::desk_scale()
    };
    let defense = match block.as_str() {
        "none" => None,
        m => {
            let key = SecretKey::from_seed([7; 32]).with_label("desk-small-example");
            key.save("desk_small.key")?;
            Some(Defense::new(key, m.parse().expect("block size"))?)
        }
    };
    let data = Datasets::load(&data_dir, &manifest)?;
    let start = std::time::Instant::now();
    let run = train(&manifest, defense.as_ref(), &data)?;
    let last = run.log.last().expect("at least one epoch");
    println!(
        "{} epochs in {:.1}s: train acc {:.4}, test acc {:.4}",
        epochs,
        start.elapsed().as_secs_f64(),
        last.train_acc,
        last.test_acc
    );
    run.checkpoint.save("desk_small.ckpt")?;
    println!("saved desk_small.ckpt");
    Ok(())
}
