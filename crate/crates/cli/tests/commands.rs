//! End-to-end behaviour of the `hhstdp` binary on a small synthetic dataset.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hhstdp_cli::experiment::{cmd_train, Datasets};
use hhstdp_cli::ExperimentConfig;
use hhstdp_core::data::{write_idx_images, write_idx_labels, EncodedImage, RawImage};
use hhstdp_core::{snapshot, NetworkParams, NetworkState, Topology};
use tempfile::TempDir;

/// Ten digit "prototypes": each lights 25 distinct 2x2 blocks.
fn prototype(label: u8) -> RawImage {
    let mut img = RawImage::blank();
    for k in 0..25usize {
        let block = (label as usize * 19 + k * 7) % 196;
        let (r, c) = (block / 14, block % 14);
        for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            img.set(2 * r + dr, 2 * c + dc, 255);
        }
    }
    img
}

fn write_split(dir: &Path, stem: &str, labels: &[u8]) {
    let images: Vec<RawImage> = labels.iter().map(|&l| prototype(l)).collect();
    let mut buf = Vec::new();
    write_idx_images(&mut buf, &images).unwrap();
    fs::write(dir.join(format!("{stem}-images-idx3-ubyte")), buf).unwrap();
    let mut buf = Vec::new();
    write_idx_labels(&mut buf, labels).unwrap();
    fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), buf).unwrap();
}

/// Temporary data directory: 30 training images cycling through the digits
/// and one test image per digit.
fn dataset() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let train: Vec<u8> = (0..30).map(|k| (k % 10) as u8).collect();
    write_split(dir.path(), "train", &train);
    write_split(dir.path(), "t10k", &(0..10).collect::<Vec<u8>>());
    dir
}

fn hhstdp(data: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hhstdp"))
        .env("HHSTDP_DATA_DIR", data)
        .env("RUST_LOG", "warn")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 4] = ["--set", "train_count=20", "--set", "test_count=10"];

#[test]
fn training_twice_with_one_seed_gives_identical_snapshots() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let (a, b) = (out.path().join("a"), out.path().join("b"));
    for dir in [&a, &b] {
        let o = hhstdp(data.path(), dir, &[&SMALL[..], &["--seed", "7", "train"]].concat());
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("test accuracy"));
    }
    let (sa, sb) = (fs::read(a.join("snapshot.bin")).unwrap(), fs::read(b.join("snapshot.bin")).unwrap());
    assert_eq!(sa, sb);
    assert_eq!(sa.len(), 86 + 8 * 196 * 300);
    let telemetry = fs::read_to_string(a.join("telemetry.csv")).unwrap();
    assert_eq!(telemetry.lines().count(), 21);
    assert!(telemetry.starts_with("index,label,prediction,in_list,de_list,hold_list,mean_weight"));
    let config = fs::read_to_string(a.join("config.txt")).unwrap();
    assert!(config.contains("seed = 7") && config.contains("train_count = 20"));

    let o = hhstdp(data.path(), &out.path().join("c"), &[&SMALL[..], &["--seed", "8", "train"]].concat());
    assert!(o.status.success());
    assert_ne!(fs::read(out.path().join("c/snapshot.bin")).unwrap(), sa);
}

#[test]
fn empty_training_set_is_a_configuration_error() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let o = hhstdp(data.path(), out.path(), &["--set", "train_count=0", "train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty training set"), "{}", stderr(&o));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let out = tempfile::tempdir().unwrap();
    let o = hhstdp(&out.path().join("nowhere"), out.path(), &["train"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("not found"));
}

#[test]
fn config_files_are_strict_and_layered() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let conf = out.path().join("run.conf");
    fs::write(&conf, "# base\ntrain_step = 3\n\nin_targt = 5\n").unwrap();
    let o = hhstdp(data.path(), out.path(), &["--config", conf.to_str().unwrap(), "show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.conf:4") && stderr(&o).contains("in_targt"), "{}", stderr(&o));

    fs::write(&conf, "train_step = 3\nin_target = 5\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hhstdp"))
        .env("HHSTDP_IN_TARGET", "6")
        .args(["--config", conf.to_str().unwrap(), "--set", "de_target=4", "--dt", "0.0125", "show-config"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text(&text, "stdout").unwrap();
    assert_eq!((cfg.train.train_step, cfg.train.in_target, cfg.train.de_target), (3, 6, 4));
    assert_eq!(cfg.train.dt, 0.0125);

    let o = hhstdp(data.path(), out.path(), &["--set", "t3=9", "show-config"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overfit_snapshot_scores_perfectly_on_its_image() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    // one image shown repeatedly
    let img = hhstdp_core::data::encode(&prototype(7), 7, 128.0);
    let mut cfg = ExperimentConfig { out: out.path().join("train"), ..ExperimentConfig::default() };
    cfg.train.train_step = 4;
    let sets = Datasets { train: vec![img.clone(); 40], test: vec![img] };
    let summary = cmd_train(&cfg, &sets).unwrap();
    assert_eq!(summary.test_acc(), Some(1.0));

    // the CLI reproduces it from the stored snapshot on the test split's 7
    let snap = out.path().join("train/snapshot.bin");
    fs::write(data.path().join("one-images"), idx_images(&[prototype(7)])).unwrap();
    fs::write(data.path().join("one-labels"), idx_labels(&[7])).unwrap();
    let o = hhstdp(
        data.path(),
        &out.path().join("eval"),
        &["--set", "test_images=one-images", "--set", "test_labels=one-labels", "--set", "test_count=1", "eval", "--snapshot", snap.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("test accuracy 1.0000"), "{}", stdout(&o));
}

fn idx_images(images: &[RawImage]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_idx_images(&mut buf, images).unwrap();
    buf
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_idx_labels(&mut buf, labels).unwrap();
    buf
}

fn zero_weight_snapshot(dir: &Path) -> PathBuf {
    let mut net = NetworkState::build(Topology::default(), NetworkParams::default(), 3).unwrap();
    net.set_all_weights(0.0);
    let path = dir.join("zero.bin");
    fs::write(&path, snapshot::to_bytes(&net)).unwrap();
    path
}

#[test]
fn zero_weight_snapshot_predicts_zero_for_every_digit() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let snap = zero_weight_snapshot(out.path());
    let o = hhstdp(data.path(), out.path(), &["--set", "test_count=10", "eval", "--snapshot", snap.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("test accuracy 0.1000"), "{}", stdout(&o));
    let predictions = fs::read_to_string(out.path().join("predictions.csv")).unwrap();
    assert!(predictions.lines().skip(1).all(|l| l.ends_with(",0")));
    let confusion = fs::read_to_string(out.path().join("confusion.csv")).unwrap();
    assert!(confusion.starts_with("label,pred_0,pred_1"));

    let o = hhstdp(data.path(), out.path(), &["inspect", snap.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("mean 0.000000"));
}

#[test]
fn damaged_snapshots_fail_cleanly() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let snap = zero_weight_snapshot(out.path());
    let mut bytes = fs::read(&snap).unwrap();
    bytes[0] = b'Z';
    fs::write(&snap, &bytes).unwrap();
    for args in [vec!["--set", "test_count=10", "eval", "--snapshot"], vec!["inspect"]] {
        let mut args = args;
        args.push(snap.to_str().unwrap());
        let o = hhstdp(data.path(), out.path(), &args);
        assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
        assert!(stderr(&o).contains("bad magic"), "{}", stderr(&o));
    }
    bytes[0] = b'N';
    bytes[5] = b'9';
    fs::write(&snap, &bytes).unwrap();
    let o = hhstdp(data.path(), out.path(), &["inspect", snap.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("version"));
}

#[test]
fn sweeps_emit_a_stable_table_and_a_plot() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let o = hhstdp(data.path(), out.path(), &[&SMALL[..], &["--threads", "2", "sweep", "--parameter", "deTarget", "--values", "10,0"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.path().join("sweep_deTarget.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("parameter,value,seed,train_acc,test_acc,wall_time_s"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0], rows[0][1], rows[1][1]), ("deTarget", "10", "0"));
    for row in &rows {
        assert_eq!(row.len(), 6);
        for field in &row[2..] {
            field.parse::<f64>().unwrap();
        }
    }
    let svg = fs::read_to_string(out.path().join("sweep_deTarget.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("deTarget"));
    assert!(out.path().join("sweep/deTarget-0/snapshot.bin").exists());
}

#[test]
fn failed_sweep_points_keep_completed_rows() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    // a plain file where the second run's directory should go
    fs::create_dir_all(out.path().join("sweep")).unwrap();
    fs::write(out.path().join("sweep/trainStep-2"), b"").unwrap();
    let o = hhstdp(data.path(), out.path(), &[&SMALL[..], &["--threads", "1", "sweep", "--parameter", "trainStep", "--values", "1,2"]].concat());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("trainStep=2"));
    let table = fs::read_to_string(out.path().join("sweep_trainStep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2, "{table}");
    assert!(lines[1].starts_with("trainStep,1,"));
    assert!(!out.path().join("sweep_trainStep.svg").exists());
}

#[test]
fn sweep_rejects_unknown_parameters_and_bad_values() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let o = hhstdp(data.path(), out.path(), &["sweep", "--parameter", "tau", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hhstdp(data.path(), out.path(), &[&SMALL[..], &["sweep", "--parameter", "inTarget", "--values", "20,31"]].concat());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.path().join("sweep").exists());
}

#[test]
fn calibration_recovers_the_default_scale() {
    let out = tempfile::tempdir().unwrap();
    let o = hhstdp(out.path(), out.path(), &["calibrate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written = fs::read_to_string(out.path().join("calibration.txt")).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.network.synapse.scale = 0.0;
    cfg.apply_text(&written, "calibration.txt").unwrap();
    assert!((cfg.network.synapse.scale - hhstdp_core::network::DEFAULT_SYN_SCALE).abs() < 1e-12);
}

#[test]
fn encoded_prototypes_have_the_intended_size() {
    for label in 0..10 {
        let EncodedImage { active, .. } = hhstdp_core::data::encode(&prototype(label), label, 128.0);
        assert_eq!(active.len(), 25);
    }
}
