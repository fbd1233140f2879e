use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shuffleguard::attack::BpdaBackward;
use shuffleguard::data::{load_cifar10_test, read_records, write_records, SplitKind, TransformStage};
use shuffleguard::harness::{
    ablate_block_size, evaluate, resolve_attack, run_experiment, sweep, train, training_log_csv, AccuracyReport,
    AttackKind, AttackSpec, Datasets, Defense, ExperimentManifest, ReportRow,
};
use shuffleguard::keyed_permutation::{BlockGrid, BlockShuffle, ImageTensor, SecretKey};
use shuffleguard::nn::Checkpoint;
use shuffleguard::{Error, Result};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Block-wise pixel shuffling defense: keys, transforms, training and attacks.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding the CIFAR-10 binary batch files.
    #[arg(long, env = "SHUFFLEGUARD_DATA_DIR")]
    data_dir: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: PathBuf,
    /// Secret key of the defended model; omit for an undefended one.
    #[arg(long)]
    key: Option<PathBuf>,
    /// Leading test images to use.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct AttackArgs {
    /// `k/255` or a decimal.
    #[arg(long, default_value = "8/255")]
    eps: String,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(long)]
    rand_init: bool,
    /// Step size; defaults to 2/255.
    #[arg(long)]
    step_size: Option<String>,
    /// Key file, `random`, or `true`; selects the adaptive attack.
    #[arg(long)]
    guessed_key: Option<String>,
    /// Use FGSM instead of PGD (ignored with --guessed-key).
    #[arg(long)]
    fgsm: bool,
    /// Differentiate through the deployed transform (attacker holds the key).
    #[arg(long)]
    through_transform: bool,
    #[arg(long, default_value = "identity")]
    bpda_backward: BpdaBackward,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl AttackArgs {
    fn spec(&self) -> AttackSpec {
        let kind = match (&self.guessed_key, self.fgsm) {
            (Some(_), _) => AttackKind::Bpda,
            (None, true) => AttackKind::Fgsm,
            (None, false) => AttackKind::Pgd,
        };
        let prefix = match kind {
            AttackKind::Bpda => "bpda",
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
        };
        let name = match kind {
            AttackKind::Fgsm => prefix.to_string(),
            _ => format!("{prefix}{}{}", self.steps, if self.rand_init { "r" } else { "" }),
        };
        AttackSpec {
            name,
            kind,
            epsilon: self.eps.clone(),
            steps: self.steps,
            random_init: self.rand_init,
            step_size: self.step_size.clone(),
            through_transform: self.through_transform,
            guessed_key: self.guessed_key.clone(),
            bpda_backward: self.bpda_backward,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create a secret key file.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// 64 hex characters; random when omitted.
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Shuffle (or with --inverse, deshuffle) a PNG or raw CIFAR-10 records.
    Transform {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value_t = 4)]
        block: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        inverse: bool,
    },
    /// Train a model from a manifest; writes model.ckpt and train_log.csv.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        transform_stage: Option<TransformStage>,
        /// ResNet18, full dataset, 160 epochs. Takes hours.
        #[arg(long)]
        full_paper_scale: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Attack a checkpoint and report clean and attacked accuracy as JSON.
    Attack {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        attack: AttackArgs,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Clean accuracy of a checkpoint through its defense.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Accuracy against a list of budgets; writes CSV, JSON and SVG.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        attack: AttackArgs,
        /// Comma-separated budgets.
        #[arg(long, value_delimiter = ',', default_value = "2/255,4/255,8/255,16/255,32/255")]
        eps_list: Vec<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Train and evaluate one model per block size.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        blocks: Vec<usize>,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
        #[arg(long)]
        full_paper_scale: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train, attack and sweep as the manifest describes; writes all reports.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long)]
        full_paper_scale: bool,
        #[command(flatten)]
        data: DataArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Keygen { out, seed, label } => {
            let mut key = match seed {
                Some(hex) => SecretKey::from_hex(&hex)?,
                None => SecretKey::generate(),
            };
            if let Some(l) = label {
                key = key.with_label(l);
            }
            key.save(&out)?;
            println!("wrote {} (fingerprint {})", out.display(), key.fingerprint());
        }
        Command::Transform {
            key,
            block,
            input,
            out,
            inverse,
        } => transform(&SecretKey::load(key)?, block, &input, &out, inverse)?,
        Command::Train {
            manifest,
            out,
            transform_stage,
            full_paper_scale,
            data,
        } => {
            let mut m = load_manifest(&manifest, full_paper_scale)?;
            if let Some(stage) = transform_stage {
                m.transform_stage = stage;
            }
            m.validate()?;
            let defense = Defense::from_manifest(&m)?;
            let datasets = Datasets::load(&data.data_dir, &m)?;
            let run = train(&m, defense.as_ref(), &datasets)?;
            std::fs::create_dir_all(&out)?;
            run.checkpoint.save(out.join("model.ckpt"))?;
            std::fs::write(out.join("train_log.csv"), training_log_csv(&run.log)?)?;
            if let Some(last) = run.log.last() {
                println!("test accuracy {:.4} after {} epochs", last.test_acc, last.epoch);
            }
        }
        Command::Attack { model, attack, out } => {
            let ctx = EvalContext::load(&model, attack.seed)?;
            let spec = attack.spec();
            let resolved = resolve_attack(&spec, &ctx.manifest, ctx.defense.as_ref())?;
            let row = evaluate(&ctx.model, &ctx.test, ctx.defense.as_ref(), Some(&resolved))?;
            print_row(&row);
            let report = ctx.report(vec![row]);
            std::fs::write(&out, report.to_json()?)?;
        }
        Command::Eval { model } => {
            let ctx = EvalContext::load(&model, 0)?;
            let row = evaluate(&ctx.model, &ctx.test, ctx.defense.as_ref(), None)?;
            print_row(&row);
        }
        Command::Sweep {
            model,
            attack,
            eps_list,
            out,
        } => {
            let ctx = EvalContext::load(&model, attack.seed)?;
            let rows = sweep(
                &ctx.model,
                &ctx.test,
                ctx.defense.as_ref(),
                &ctx.manifest,
                &attack.spec(),
                &eps_list,
            )?;
            rows.iter().for_each(print_row);
            ctx.report(rows).write_to(&out)?;
        }
        Command::Ablate {
            manifest,
            key,
            blocks,
            out,
            full_paper_scale,
            data,
        } => {
            let m = load_manifest(&manifest, full_paper_scale)?;
            let datasets = Datasets::load(&data.data_dir, &m)?;
            let report = ablate_block_size(&m, &blocks, &SecretKey::load(key)?, &datasets, Some(&out))?;
            report.rows.iter().for_each(print_row);
        }
        Command::Run {
            manifest,
            out,
            full_paper_scale,
            data,
        } => {
            let m = load_manifest(&manifest, full_paper_scale)?;
            let datasets = Datasets::load(&data.data_dir, &m)?;
            let output = run_experiment(&m, &datasets, Some(&out))?;
            output.report.rows.iter().for_each(print_row);
        }
    }
    Ok(())
}

fn load_manifest(path: &Path, full_paper_scale: bool) -> Result<ExperimentManifest> {
    let m = ExperimentManifest::load(path)?;
    Ok(if full_paper_scale { m.into_full_paper_scale() } else { m })
}

fn print_row(r: &ReportRow) {
    println!(
        "{:<20} eps {:<8} n {:<5} clean {:.4} attacked {:.4}",
        r.condition, r.epsilon, r.samples, r.clean_acc, r.attacked_acc
    );
}

/// A checkpoint with its defense verified, plus the test images.
struct EvalContext {
    model: shuffleguard::nn::Model<f32>,
    defense: Option<Defense>,
    test: shuffleguard::data::DatasetSplit,
    manifest: ExperimentManifest,
}

impl EvalContext {
    fn load(args: &ModelArgs, seed: u64) -> Result<Self> {
        let ckpt = Checkpoint::load(&args.model)?;
        let defense = match (&args.key, ckpt.defense.block_size) {
            (Some(k), Some(block)) => Some(Defense::new(SecretKey::load(k)?, block)?),
            (Some(_), None) => {
                return Err(Error::Config("checkpoint is undefended but --key was given".into()));
            }
            (None, _) => None,
        };
        Defense::check_against(defense.as_ref(), &ckpt.defense)?;
        let manifest = ExperimentManifest {
            name: args.model.display().to_string(),
            seed,
            block_size: ckpt.defense.block_size.unwrap_or(4),
            base_dir: std::env::current_dir()?,
            ..ExperimentManifest::desk_scale()
        };
        Ok(Self {
            model: ckpt.to_model()?,
            defense,
            test: load_cifar10_test(&args.data.data_dir)?.head(args.samples),
            manifest,
        })
    }

    fn report(&self, rows: Vec<ReportRow>) -> AccuracyReport {
        AccuracyReport {
            name: self.manifest.name.clone(),
            manifest_sha256: self.manifest.sha256(),
            git_revision: shuffleguard::harness::git_revision(),
            seed: self.manifest.seed,
            wall_time_secs: 0.0,
            training: Vec::new(),
            rows,
        }
    }
}

fn transform(key: &SecretKey, block: usize, input: &Path, out: &Path, inverse: bool) -> Result<()> {
    let is_png = |p: &Path| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png(input) {
        let img = image::open(input)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let tensor = ImageTensor::from_bytes(h, w, 3, img.into_raw())?;
        let grid = BlockGrid::new(block, w, h, 3)?;
        let shuffle = if inverse {
            BlockShuffle::inverse_from_key(key, grid)?
        } else {
            BlockShuffle::from_key(key, grid)?
        };
        let result = shuffle.apply_image(&tensor)?;
        let bytes = result.as_bytes().expect("byte image stays bytes").to_vec();
        image::RgbImage::from_raw(w as u32, h as u32, bytes)
            .expect("buffer matches dimensions")
            .save(out)?;
    } else {
        let mut split = read_records(input, SplitKind::Test)?;
        let grid = BlockGrid::cifar(block)?;
        let shuffle = if inverse {
            BlockShuffle::inverse_from_key(key, grid)?
        } else {
            BlockShuffle::from_key(key, grid)?
        };
        for i in 0..split.len() {
            let shuffled = shuffle.apply_hwc(split.image(i));
            split.set_image(i, &shuffled);
        }
        write_records(out, &split)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
