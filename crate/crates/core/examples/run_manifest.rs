//! Runs a whole experiment from a TOML manifest: train, attack, sweep and
//! write every report into an output directory.
//!
//!     cargo run --release --example run_manifest -- crates/core/examples/desk_m4.toml [out_dir]

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use shuffleguard::harness::{run_experiment, Datasets, ExperimentManifest};

fn main() -> shuffleguard::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().map_or("crates/core/examples/desk_m4.toml", String::as_str);
    let out = args.get(1).map_or("run_output", String::as_str);

    let m = ExperimentManifest::load(path)?;
    println!("manifest {} sha256 {}", m.name, m.sha256());
    let data_dir = std::env::var("SHUFFLEGUARD_DATA_DIR").expect("set SHUFFLEGUARD_DATA_DIR");
    let data = Datasets::load(data_dir, &m)?;
    let output = run_experiment(&m, &data, Some(out.as_ref()))?;
    print!("{}", output.report.to_csv()?);
    println!("wrote {out}/");
    Ok(())
}
