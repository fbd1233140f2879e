//! Attacks an undefended or defended checkpoint with PGD and FGSM and
//! prints clean and attacked accuracy. Without a key the model is attacked
//! directly; with one, the attacker either ignores the transform or (the
//! white-box case) differentiates through it.
//!
//!     cargo run --release --example pgd_attack -- desk_small.ckpt [desk_small.key]

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use shuffleguard::attack::{fgsm, pgd, AttackConfig};
use shuffleguard::data::{load_cifar10_test, prepare_batch, TransformStage};
use shuffleguard::harness::Defense;
use shuffleguard::keyed_permutation::SecretKey;
use shuffleguard::nn::Checkpoint;

fn main() -> shuffleguard::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = Checkpoint::load(args.next().unwrap_or_else(|| "desk_small.ckpt".into()))?;
    let defense = match (args.next(), ckpt.defense.block_size) {
        (Some(k), Some(m)) => Some(Defense::new(SecretKey::load(k)?, m)?),
        _ => None,
    };
    Defense::check_against(defense.as_ref(), &ckpt.defense)?;
    let model = ckpt.to_model()?;
    let deployed = defense.as_ref().map(|d| &d.shuffle);

    let data_dir = std::env::var("SHUFFLEGUARD_DATA_DIR").expect("set SHUFFLEGUARD_DATA_DIR");
    let test = load_cifar10_test(data_dir)?;
    let idx: Vec<usize> = (0..200).collect();
    let batch = prepare_batch(&test, &idx, None, TransformStage::Post, None)?;
    let (x, y) = (&batch.images, &batch.labels);

    let clean = fgsm(&model, x, y, 0.0, deployed)?;
    println!("clean accuracy {:.3}", 1.0 - clean.success_rate());
    for k in [2.0, 4.0, 8.0, 16.0] {
        let eps = k / 255.0;
        let cfg = AttackConfig::pgd(eps, 20, true).with_seed(1);
        let blind = pgd(&model, x, y, &cfg, None)?;
        let blind_acc = accuracy_through(&model, &blind.adv_images, y, deployed)?;
        let one_step = fgsm(&model, x, y, eps, deployed)?;
        let white = pgd(&model, x, y, &cfg, deployed)?;
        println!(
            "eps {k:>2}/255  FGSM {:.3}  PGD20r {:.3}  PGD20r ignoring defense {:.3}",
            1.0 - one_step.success_rate(),
            1.0 - white.success_rate(),
            blind_acc
        );
    }
    Ok(())
}

/// Accuracy of `adv` scored through the deployed transform.
fn accuracy_through(
    model: &shuffleguard::nn::Model<f32>,
    adv: &shuffleguard::tensor::Tensor<f32>,
    labels: &[usize],
    deployed: Option<&shuffleguard::keyed_permutation::BlockShuffle>,
) -> shuffleguard::Result<f64> {
    let input = match deployed {
        Some(s) => {
            let mut out = adv.clone();
            s.apply_chw_batch_into(adv.data(), out.data_mut());
            out
        }
        None => adv.clone(),
    };
    let preds = model.predict(&input)?;
    Ok(preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
}
