//! Trains one desk-scale model per block size and compares clean accuracy
//! with accuracy under a 20-step PGD that ignores the defense.
//!
//!     cargo run --release --example block_size_ablation -- [epochs] [blocks]
//!
//! `blocks` is comma-separated, default `2,4,8,16`.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use shuffleguard::harness::{ablate_block_size, Datasets, ExperimentManifest};
use shuffleguard::keyed_permutation::SecretKey;

fn main() -> shuffleguard::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let epochs = args
        .next()
        .map_or(Ok(10), |s| s.parse())
        .expect("epochs must be an integer");
    let blocks: Vec<usize> = args
        .next()
        .unwrap_or_else(|| "2,4,8,16".into())
        .split(',')
        .map(|b| b.trim().parse().expect("block size"))
        .collect();

    let m = ExperimentManifest {
        name: "ablation example".into(),
        epochs,
        lr_step_epochs: (epochs * 2 / 5).max(1),
        ..ExperimentManifest::desk_scale()
    };
    let data_dir = std::env::var("SHUFFLEGUARD_DATA_DIR").expect("set SHUFFLEGUARD_DATA_DIR");
    let data = Datasets::load(data_dir, &m)?;
    let report = ablate_block_size(
        &m,
        &blocks,
        &SecretKey::from_seed([5; 32]),
        &data,
        Some("ablation".as_ref()),
    )?;
    for r in &report.rows {
        println!(
            "{:<16} n {:<5} clean {:.3} attacked {:.3}",
            r.condition, r.samples, r.clean_acc, r.attacked_acc
        );
    }
    Ok(())
}
