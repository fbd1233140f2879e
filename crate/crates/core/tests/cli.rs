use std::path::Path;
use std::process::{Command, Output};

use shuffleguard::data::{read_records, write_records, DatasetSplit, SplitKind, TEST_FILE};
use shuffleguard::keyed_permutation::{shuffle_image, BlockGrid, SecretKey};
use shuffleguard::nn::{ArchitectureConfig, Checkpoint, DefenseMeta, Model};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shuffleguard"))
        .args(args)
        .env_remove("SHUFFLEGUARD_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ramp_split(n: usize, kind: SplitKind) -> DatasetSplit {
    let images = (0..n * 3072).map(|i| (i * 31 % 256) as u8).collect();
    let labels = (0..n).map(|i| (i % 10) as u8).collect();
    DatasetSplit::new(images, labels, kind).unwrap()
}

const SEED_A: &str = "0101010101010101010101010101010101010101010101010101010101010101";
const SEED_B: &str = "0202020202020202020202020202020202020202020202020202020202020202";

#[test]
fn keygen_writes_a_loadable_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.key");
    let out = run(&["keygen", "--out", s(&path), "--seed", SEED_A, "--label", "lab"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let key = SecretKey::load(&path).unwrap();
    assert_eq!(key.to_hex(), SEED_A);
    assert_eq!(key.label(), Some("lab"));

    let random = dir.path().join("r.key");
    assert_eq!(code(&run(&["keygen", "--out", s(&random)])), 0);
    assert_ne!(SecretKey::load(&random).unwrap().seed(), key.seed());
}

#[test]
fn keygen_rejects_bad_hex() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["keygen", "--out", s(&dir.path().join("k")), "--seed", "xyz"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn transform_png_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("k.key");
    assert_eq!(code(&run(&["keygen", "--out", s(&key), "--seed", SEED_A])), 0);
    let src = dir.path().join("in.png");
    let img = image::RgbImage::from_fn(32, 32, |x, y| {
        image::Rgb([(x * 8) as u8, (y * 8) as u8, ((x + y) * 4) as u8])
    });
    img.save(&src).unwrap();
    let shuffled = dir.path().join("s.png");
    let back = dir.path().join("b.png");
    assert_eq!(
        code(&run(&[
            "transform",
            "--key",
            s(&key),
            "--block",
            "4",
            "--in",
            s(&src),
            "--out",
            s(&shuffled)
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "transform",
            "--key",
            s(&key),
            "--block",
            "4",
            "--in",
            s(&shuffled),
            "--out",
            s(&back),
            "--inverse"
        ])),
        0
    );
    let shuffled_img = image::open(&shuffled).unwrap().to_rgb8();
    assert_ne!(shuffled_img, img);
    let expected = shuffle_image(
        &shuffleguard::keyed_permutation::ImageTensor::from_bytes(32, 32, 3, img.clone().into_raw()).unwrap(),
        &SecretKey::from_hex(SEED_A).unwrap(),
        &BlockGrid::cifar(4).unwrap(),
    )
    .unwrap();
    assert_eq!(shuffled_img.as_raw().as_slice(), expected.as_bytes().unwrap());
    assert_eq!(image::open(&back).unwrap().to_rgb8(), img);
}

#[test]
fn transform_records_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("k.key");
    assert_eq!(code(&run(&["keygen", "--out", s(&key), "--seed", SEED_B])), 0);
    let src = dir.path().join("in.bin");
    let split = ramp_split(3, SplitKind::Test);
    write_records(&src, &split).unwrap();
    let (mid, back) = (dir.path().join("mid.bin"), dir.path().join("back.bin"));
    assert_eq!(
        code(&run(&[
            "transform",
            "--key",
            s(&key),
            "--in",
            s(&src),
            "--out",
            s(&mid)
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "transform",
            "--key",
            s(&key),
            "--in",
            s(&mid),
            "--out",
            s(&back),
            "--inverse"
        ])),
        0
    );
    let mid = read_records(&mid, SplitKind::Test).unwrap();
    assert_eq!(mid.labels(), split.labels());
    assert_ne!(mid.image(0), split.image(0));
    assert_eq!(read_records(&back, SplitKind::Test).unwrap(), split);
}

/// A data dir with a synthetic full-size test batch and a defended checkpoint.
fn eval_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_records(data.join(TEST_FILE), &ramp_split(10_000, SplitKind::Test)).unwrap();
    let key = dir.join("a.key");
    SecretKey::from_hex(SEED_A).unwrap().save(&key).unwrap();
    let model = Model::<f32>::build(ArchitectureConfig::desk_small(), 1).unwrap();
    let meta = DefenseMeta {
        block_size: Some(4),
        key_fingerprint: Some(SecretKey::from_hex(SEED_A).unwrap().fingerprint()),
    };
    let ckpt = dir.join("model.ckpt");
    Checkpoint::from_model(&model, meta, 1, 1, None).save(&ckpt).unwrap();
    (data, key, ckpt)
}

#[test]
fn eval_and_attack_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, key, ckpt) = eval_fixture(dir.path());
    let base = ["--model", s(&ckpt), "--samples", "8", "--data-dir", s(&data)];

    let ok = run(&[&["eval", "--key", s(&key)], &base[..]].concat());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("clean"));

    let report = dir.path().join("r.json");
    let attack = run(&[
        &[
            "attack",
            "--key",
            s(&key),
            "--steps",
            "2",
            "--eps",
            "4/255",
            "--out",
            s(&report),
        ],
        &base[..],
    ]
    .concat());
    assert_eq!(code(&attack), 0, "{}", String::from_utf8_lossy(&attack.stderr));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["rows"][0]["samples"], 8);

    let wrong = dir.path().join("b.key");
    SecretKey::from_hex(SEED_B).unwrap().save(&wrong).unwrap();
    assert_eq!(code(&run(&[&["eval", "--key", s(&wrong)], &base[..]].concat())), 2);

    let bad_eps = run(&[&["attack", "--key", s(&key), "--eps", "2.5"], &base[..]].concat());
    assert_eq!(code(&bad_eps), 2);

    let corrupt = dir.path().join("bad.ckpt");
    std::fs::write(&corrupt, b"not a checkpoint").unwrap();
    let out = run(&["eval", "--model", s(&corrupt), "--data-dir", s(&data)]);
    assert_eq!(code(&out), 4);

    let truncated = dir.path().join("trunc");
    std::fs::create_dir_all(&truncated).unwrap();
    std::fs::write(truncated.join(TEST_FILE), vec![0u8; 3073 * 5 + 7]).unwrap();
    let out = run(&[
        &["eval", "--key", s(&key)],
        &["--model", s(&ckpt), "--data-dir", s(&truncated)][..],
    ]
    .concat());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains(TEST_FILE));
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--manifest",
        s(&dir.path().join("nope.toml")),
        "--data-dir",
        s(dir.path()),
    ]);
    assert_ne!(code(&out), 0);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nnot_a_field = 3\n").unwrap();
    let out = run(&["run", "--manifest", s(&bad), "--data-dir", s(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn example_manifest_loads_and_validates() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/desk_m4.toml");
    let m = shuffleguard::harness::ExperimentManifest::load(&path).unwrap();
    m.validate().unwrap();
    assert_eq!(m.attacks.len(), 4);
    let defense = shuffleguard::harness::Defense::from_manifest(&m).unwrap().unwrap();
    assert_eq!(defense.grid.block(), 4);
    let again = shuffleguard::harness::ExperimentManifest::parse(&m.to_toml().unwrap(), m.base_dir.clone()).unwrap();
    assert_eq!(again.sha256(), m.sha256());
}
