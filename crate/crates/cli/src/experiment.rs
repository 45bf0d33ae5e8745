//! The commands behind the `hhstdp` binary, usable as a library.
//!
//! Every command writes its artifacts below the configured output directory:
//!
//! | command     | files                                                          |
//! |-------------|----------------------------------------------------------------|
//! | `train`     | `config.txt`, `telemetry.csv`, `snapshot.bin`, `metrics.csv`, and with a test set `predictions.csv`, `confusion.csv` |
//! | `eval`      | `predictions.csv`, `confusion.csv`                             |
//! | `sweep`     | `sweep_<parameter>.csv`, `sweep_<parameter>.svg`, one `train` directory per value under `sweep/` |
//! | `calibrate` | `calibration.txt`                                              |

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use hhstdp_core::data::{load_idx, select_encoded, EncodedImage};
use hhstdp_core::network::{calibrate, Calibration, CalibrationTarget};
use hhstdp_core::snapshot::{self, Snapshot};
use hhstdp_core::trainer::{evaluate, train_all, Evaluation, TelemetryRow, TrainOutcome};
use hhstdp_core::{NetworkState, Topology};
use log::info;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::svg;

/// Encoded training and test images.
#[derive(Clone, Debug, Default)]
pub struct Datasets {
    pub train: Vec<EncodedImage>,
    pub test: Vec<EncodedImage>,
}

fn load_split(cfg: &ExperimentConfig, images: &Path, labels: &Path, count: usize) -> Result<Vec<EncodedImage>, CliError> {
    let (images, labels) = (cfg.resolve(images), cfg.resolve(labels));
    for path in [&images, &labels] {
        if !path.exists() {
            return Err(CliError::Data(format!(
                "{} not found (set data_dir or HHSTDP_DATA_DIR; scripts/npm_mnist_to_idx.py builds the files)",
                path.display()
            )));
        }
    }
    let pairs = load_idx(&images, &labels).map_err(|e| CliError::data(&images, e))?;
    if pairs.len() < count {
        return Err(CliError::Data(format!(
            "{} holds {} images, {count} requested",
            images.display(),
            pairs.len()
        )));
    }
    select_encoded(&pairs, count, cfg.subset(), cfg.threshold).map_err(|e| CliError::data(&images, e))
}

/// Loads the configured subsets. A zero `test_count` yields no test set.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Datasets, CliError> {
    if cfg.train_count == 0 {
        return Err(CliError::Config("empty training set (train_count = 0)".into()));
    }
    let train = load_split(cfg, &cfg.train_images, &cfg.train_labels, cfg.train_count)?;
    let test = load_test(cfg)?;
    Ok(Datasets { train, test })
}

pub fn load_test(cfg: &ExperimentConfig) -> Result<Vec<EncodedImage>, CliError> {
    if cfg.test_count == 0 {
        return Ok(Vec::new());
    }
    load_split(cfg, &cfg.test_images, &cfg.test_labels, cfg.test_count)
}

/// Result of one train (+ test) run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    /// Fraction of training images predicted correctly just before their
    /// own update (online training accuracy).
    pub train_acc: f64,
    pub test: Option<Evaluation>,
    pub network: NetworkState,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn snapshot(&self) -> Vec<u8> {
        snapshot::to_bytes(&self.network)
    }

    pub fn test_acc(&self) -> Option<f64> {
        self.test.as_ref().map(|e| e.accuracy)
    }
}

/// Trains a fresh network on `data.train` and evaluates it on `data.test`,
/// handing every training step to `observe`. Writes nothing.
pub fn run<F>(cfg: &ExperimentConfig, data: &Datasets, mut observe: F) -> Result<RunSummary, CliError>
where
    F: FnMut(&TelemetryRow, &TrainOutcome) -> Result<(), CliError>,
{
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(CliError::Config("empty training set".into()));
    }
    let start = Instant::now();
    let mut net = NetworkState::build(Topology::default(), cfg.network.clone(), cfg.seed).map_err(CliError::run)?;
    let mut correct = 0usize;
    let mut observer_error = None;
    let total = data.train.len();
    train_all(&mut net, &data.train, &cfg.train, |row, outcome| {
        if row.prediction == row.label as usize {
            correct += 1;
        }
        if (row.index + 1) % 100 == 0 || row.index + 1 == total {
            info!(
                "trained {}/{} images, running accuracy {:.3}, mean weight {:.5}",
                row.index + 1,
                total,
                correct as f64 / (row.index + 1) as f64,
                row.mean_weight
            );
        }
        observe(row, outcome).map_err(|e| {
            observer_error = Some(e);
            hhstdp_core::Error::InvalidParameter("observer aborted training".into())
        })
    })
    .map_err(|e| observer_error.take().unwrap_or_else(|| CliError::run(e)))?;
    let train_acc = correct as f64 / total as f64;
    let test = if data.test.is_empty() {
        None
    } else {
        let eval = evaluate(&mut net, &data.test, &cfg.train).map_err(CliError::run)?;
        info!("test accuracy {:.4} on {} images", eval.accuracy, data.test.len());
        Some(eval)
    };
    Ok(RunSummary {
        train_acc,
        test,
        network: net,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Writes per-image predictions and the confusion matrix.
pub fn write_evaluation(dir: &Path, eval: &Evaluation, images: &[EncodedImage]) -> Result<(), CliError> {
    let path = dir.join("predictions.csv");
    let mut w = csv_writer(&path)?;
    let err = csv_error(&path);
    w.write_record(["index", "label", "prediction"]).map_err(&err)?;
    for (k, (img, pred)) in images.iter().zip(&eval.predictions).enumerate() {
        w.write_record([k.to_string(), img.label.to_string(), pred.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("confusion.csv");
    let mut w = csv_writer(&path)?;
    let err = csv_error(&path);
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..eval.confusion.len()).map(|p| format!("pred_{p}")))
        .collect();
    w.write_record(&header).map_err(&err)?;
    for (label, row) in eval.confusion.iter().enumerate() {
        let rec: Vec<String> = std::iter::once(label.to_string()).chain(row.iter().map(|c| c.to_string())).collect();
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

/// `train`: trains, writes all artifacts to `cfg.out`, returns the summary.
pub fn cmd_train(cfg: &ExperimentConfig, data: &Datasets) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("config.txt"), cfg.to_text().as_bytes())?;

    let path = cfg.out.join("telemetry.csv");
    let mut telemetry = csv_writer(&path)?;
    let err = csv_error(&path);
    telemetry
        .write_record(["index", "label", "prediction", "in_list", "de_list", "hold_list", "mean_weight"])
        .map_err(&err)?;
    let summary = run(cfg, data, |row, _| {
        telemetry
            .write_record([
                row.index.to_string(),
                row.label.to_string(),
                row.prediction.to_string(),
                row.in_list.to_string(),
                row.de_list.to_string(),
                row.hold_list.to_string(),
                format!("{:.9e}", row.mean_weight),
            ])
            .map_err(&err)
    })?;
    telemetry.flush().map_err(|e| CliError::io(&path, e))?;

    write_file(&cfg.out.join("snapshot.bin"), &summary.snapshot())?;
    if let Some(eval) = &summary.test {
        write_evaluation(&cfg.out, eval, &data.test)?;
    }
    let path = cfg.out.join("metrics.csv");
    let mut w = csv_writer(&path)?;
    let err = csv_error(&path);
    w.write_record(["seed", "train_count", "test_count", "train_acc", "test_acc", "wall_time_s"]).map_err(&err)?;
    w.write_record([
        cfg.seed.to_string(),
        data.train.len().to_string(),
        data.test.len().to_string(),
        format!("{:.6}", summary.train_acc),
        summary.test_acc().map_or(String::new(), |a| format!("{a:.6}")),
        format!("{:.3}", summary.wall_time_s),
    ])
    .map_err(&err)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(summary)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::snapshot(path, e))?;
    snapshot::parse(&bytes).map_err(|e| CliError::snapshot(path, e))
}

/// `eval`: scores a stored network on the configured test set.
pub fn cmd_eval(cfg: &ExperimentConfig, snapshot_path: &Path, test: &[EncodedImage]) -> Result<Evaluation, CliError> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(CliError::Config("empty test set (test_count = 0)".into()));
    }
    let mut net = read_snapshot(snapshot_path)?
        .into_network(cfg.network.clone())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let eval = evaluate(&mut net, test, &cfg.train).map_err(CliError::run)?;
    create_dir(&cfg.out)?;
    write_evaluation(&cfg.out, &eval, test)?;
    Ok(eval)
}

/// Parameters a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    TrainStep,
    InTarget,
    DeTarget,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::TrainStep => "trainStep",
            Self::InTarget => "inTarget",
            Self::DeTarget => "deTarget",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, value: usize) {
        match self {
            Self::TrainStep => cfg.train.train_step = value,
            Self::InTarget => cfg.train.in_target = value,
            Self::DeTarget => cfg.train.de_target = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trainStep" | "train_step" => Ok(Self::TrainStep),
            "inTarget" | "in_target" => Ok(Self::InTarget),
            "deTarget" | "de_target" => Ok(Self::DeTarget),
            _ => Err(CliError::Config(format!(
                "unknown sweep parameter {s:?} (expected trainStep, inTarget or deTarget)"
            ))),
        }
    }
}

/// One row of a sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub parameter: &'static str,
    pub value: usize,
    pub seed: u64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub wall_time_s: f64,
}

impl SweepRow {
    pub const HEADER: [&'static str; 6] = ["parameter", "value", "seed", "train_acc", "test_acc", "wall_time_s"];

    fn record(&self) -> [String; 6] {
        [
            self.parameter.to_string(),
            self.value.to_string(),
            self.seed.to_string(),
            format!("{:.6}", self.train_acc),
            self.test_acc.map_or(String::new(), |a| format!("{a:.6}")),
            format!("{:.3}", self.wall_time_s),
        ]
    }
}

fn write_sweep_table(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_error(path);
    w.write_record(SweepRow::HEADER).map_err(&err)?;
    for row in rows {
        w.write_record(row.record()).map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn sweep_dir(cfg: &ExperimentConfig, param: SweepParam, value: usize) -> PathBuf {
    cfg.out.join("sweep").join(format!("{}-{value}", param.name()))
}

/// `sweep`: one fresh train + test run per value on a bounded thread pool.
///
/// Rows are appended to `sweep_<parameter>.csv` as runs finish, so a failed
/// sweep leaves the completed rows behind; on success the table is rewritten
/// in value order and plotted.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[usize],
    data: &Datasets,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let configs: Vec<(usize, ExperimentConfig)> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            param.apply(&mut c, v);
            c.out = sweep_dir(cfg, param, v);
            c.validate().map(|_| (v, c))
        })
        .collect::<Result<_, _>>()?;
    create_dir(&cfg.out)?;
    let table = cfg.out.join(format!("sweep_{}.csv", param.name()));
    let partial = Mutex::new((csv_writer(&table)?, Vec::new()));
    partial
        .lock()
        .unwrap()
        .0
        .write_record(SweepRow::HEADER)
        .map_err(csv_error(&table))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Run(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| {
        configs.par_iter().try_for_each(|(value, run_cfg)| {
            info!("sweep {}={value} starting", param.name());
            let summary = cmd_train(run_cfg, data)
                .map_err(|e| CliError::Run(format!("{}={value}: {e}", param.name())))?;
            let row = SweepRow {
                parameter: param.name(),
                value: *value,
                seed: run_cfg.seed,
                train_acc: summary.train_acc,
                test_acc: summary.test_acc(),
                wall_time_s: summary.wall_time_s,
            };
            let mut guard = partial.lock().unwrap();
            let (writer, rows) = &mut *guard;
            writer.write_record(row.record()).map_err(csv_error(&table))?;
            writer.flush().map_err(|e| CliError::io(&table, e))?;
            rows.push(row);
            Ok(())
        })
    });
    let (writer, mut rows) = partial.into_inner().unwrap();
    drop(writer);
    outcome?;

    rows.sort_by_key(|r| values.iter().position(|v| *v == r.value));
    write_sweep_table(&table, &rows)?;
    let plot = svg::accuracy_plot(param.name(), &rows);
    write_file(&cfg.out.join(format!("sweep_{}.svg", param.name())), plot.as_bytes())?;
    Ok(rows)
}

/// `calibrate`: searches the synapse scale and writes it as a config line.
pub fn cmd_calibrate(cfg: &ExperimentConfig) -> Result<Calibration, CliError> {
    cfg.validate()?;
    let target = CalibrationTarget {
        active_inputs: cfg.calibration_inputs,
        latency: cfg.calibration_latency,
        dt: cfg.train.dt,
        ..CalibrationTarget::default()
    };
    let cal = calibrate(&cfg.network, &target).map_err(CliError::run)?;
    create_dir(&cfg.out)?;
    let path = cfg.out.join("calibration.txt");
    let mut f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    writeln!(
        f,
        "# {} inputs at weight {} fire after a median {:.4} ms\nsyn_scale = {:?}",
        target.active_inputs, target.weight, cal.median_latency, cal.scale
    )
    .map_err(|e| CliError::io(&path, e))?;
    Ok(cal)
}

/// Weight statistics of a stored network.
#[derive(Clone, Debug, PartialEq)]
pub struct Inspection {
    pub topology: Topology,
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Weight counts in ten equal bins over `[0, max(w_max, max)]`.
    pub histogram: Vec<usize>,
    pub bin_width: f64,
    /// Mean weight onto each output group.
    pub group_means: Vec<f64>,
}

pub fn inspect(snap: &Snapshot, w_max: f64) -> Inspection {
    let w = &snap.weights;
    let n = w.len().max(1) as f64;
    let mean = w.iter().sum::<f64>() / n;
    let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = w_max.max(max);
    let bin_width = if top > 0.0 { top / 10.0 } else { 1.0 };
    let mut histogram = vec![0; 10];
    for &x in w {
        histogram[((x / bin_width) as usize).min(9)] += 1;
    }
    let t = snap.topology;
    let group_means = (0..t.n_groups)
        .map(|g| {
            let cols = t.group_members(g);
            let sum: f64 = (0..t.n_in).flat_map(|i| cols.clone().map(move |j| (i, j))).map(|(i, j)| w[i * t.n_out + j]).sum();
            sum / (t.n_in * t.group_size) as f64
        })
        .collect();
    Inspection { topology: t, seed: snap.seed, mean, std, min, max, histogram, bin_width, group_means }
}

impl std::fmt::Display for Inspection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t = &self.topology;
        writeln!(f, "topology   {} inputs -> {} outputs ({} groups of {})", t.n_in, t.n_out, t.n_groups, t.group_size)?;
        writeln!(f, "seed       {}", self.seed)?;
        writeln!(f, "weights    mean {:.6}  std {:.6}  min {:.6}  max {:.6}", self.mean, self.std, self.min, self.max)?;
        writeln!(f, "histogram")?;
        let peak = self.histogram.iter().copied().max().unwrap_or(0).max(1);
        for (k, &c) in self.histogram.iter().enumerate() {
            let bar = "#".repeat((40 * c).div_ceil(peak));
            writeln!(f, "  [{:.4}, {:.4})  {c:>6}  {bar}", k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width)?;
        }
        writeln!(f, "group mean weights")?;
        for (g, m) in self.group_means.iter().enumerate() {
            writeln!(f, "  group {g}: {m:.6}")?;
        }
        Ok(())
    }
}
