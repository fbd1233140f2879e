//! Sweeps the perturbation budget for one attack on a checkpoint and writes
//! report.csv, report.json and an accuracy-vs-budget report.svg.
//!
//!     cargo run --release --example accuracy_sweep -- desk_small.ckpt desk_small.key [out_dir]

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use shuffleguard::data::load_cifar10_test;
use shuffleguard::harness::{git_revision, sweep, AccuracyReport, AttackSpec, Defense, ExperimentManifest};
use shuffleguard::keyed_permutation::SecretKey;
use shuffleguard::nn::Checkpoint;

fn main() -> shuffleguard::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ckpt = Checkpoint::load(args.first().map_or("desk_small.ckpt", String::as_str))?;
    let key = SecretKey::load(args.get(1).map_or("desk_small.key", String::as_str))?;
    let out = args.get(2).map_or("sweep_report", String::as_str);
    let block = ckpt.defense.block_size.expect("a defended checkpoint");
    let defense = Defense::new(key, block)?;
    Defense::check_against(Some(&defense), &ckpt.defense)?;
    let model = ckpt.to_model()?;

    let data_dir = std::env::var("SHUFFLEGUARD_DATA_DIR").expect("set SHUFFLEGUARD_DATA_DIR");
    let test = load_cifar10_test(data_dir)?.head(200);
    let m = ExperimentManifest {
        name: "sweep example".into(),
        block_size: block,
        ..ExperimentManifest::desk_scale()
    };
    let epsilons: Vec<String> = ["2/255", "4/255", "8/255", "16/255", "32/255"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for template in [
        AttackSpec::bpda("bpda40r-wrong", "8/255", 40, true, "random"),
        AttackSpec::bpda("bpda40r-true", "8/255", 40, true, "true"),
    ] {
        rows.extend(sweep(&model, &test, Some(&defense), &m, &template, &epsilons)?);
    }
    for r in &rows {
        println!(
            "{:<24} clean {:.3} attacked {:.3}",
            r.condition, r.clean_acc, r.attacked_acc
        );
    }
    let report = AccuracyReport {
        name: m.name.clone(),
        manifest_sha256: m.sha256(),
        git_revision: git_revision(),
        seed: m.seed,
        wall_time_secs: 0.0,
        training: Vec::new(),
        rows,
    };
    report.write_to(out)?;
    println!("wrote {out}/report.{{csv,json,svg}}");
    Ok(())
}
