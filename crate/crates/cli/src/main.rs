use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hhstdp_cli::config::{env_var_name, KEYS};
use hhstdp_cli::experiment::{self, load_datasets, load_test, read_snapshot};
use hhstdp_cli::{CliError, ExperimentConfig, SweepParam};

/// Hodgkin-Huxley spiking network trained with supervised STDP on MNIST.
///
/// Configuration is layered: built-in defaults, then `--config` file, then
/// HHSTDP_<KEY> environment variables, then `--set` and the dedicated flags.
/// Exit status: 0 success, 1 run failure, 2 configuration or usage error,
/// 3 I/O or dataset error, 4 snapshot error.
#[derive(Parser)]
#[command(name = "hhstdp", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Integration step (ms).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override any configuration key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fresh network, write snapshot and telemetry, report accuracy.
    Train,
    /// Score a snapshot on the configured test set.
    Eval {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Train and test once per value of trainStep, inTarget or deTarget.
    Sweep {
        #[arg(long)]
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Search the synapse scale that gives the target natural latency.
    Calibrate,
    /// Print weight statistics of a snapshot.
    Inspect { snapshot: PathBuf },
    /// Print the effective configuration, or with --keys every key.
    ShowConfig {
        #[arg(long)]
        keys: bool,
    },
}

fn configure(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    for item in &cli.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(dt) = cli.dt {
        cfg.set("dt", &dt.to_string())?;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_confusion(confusion: &[Vec<usize>]) {
    print!("label\\pred");
    for p in 0..confusion.len() {
        print!("{p:>6}");
    }
    println!();
    for (label, row) in confusion.iter().enumerate() {
        print!("{label:>10}");
        for c in row {
            print!("{c:>6}");
        }
        println!();
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Command::ShowConfig { keys: true } = cli.command {
        for (key, doc) in KEYS {
            println!("{key:<26} {:<34} {doc}", env_var_name(key));
        }
        return Ok(());
    }
    let cfg = configure(cli)?;
    match &cli.command {
        Command::Train => {
            let data = load_datasets(&cfg)?;
            let summary = experiment::cmd_train(&cfg, &data)?;
            println!("train accuracy (online) {:.4} on {} images", summary.train_acc, data.train.len());
            if let Some(eval) = &summary.test {
                println!("test accuracy {:.4} on {} images", eval.accuracy, data.test.len());
            }
            println!("wall time {:.1} s, artifacts in {}", summary.wall_time_s, cfg.out.display());
        }
        Command::Eval { snapshot } => {
            let test = load_test(&cfg)?;
            let eval = experiment::cmd_eval(&cfg, snapshot, &test)?;
            println!("test accuracy {:.4} on {} images", eval.accuracy, test.len());
            print_confusion(&eval.confusion);
        }
        Command::Sweep { parameter, values } => {
            let param: SweepParam = parameter.parse()?;
            let data = load_datasets(&cfg)?;
            let rows = experiment::cmd_sweep(&cfg, param, values, &data)?;
            println!("{:>10} {:>10} {:>10}", param.name(), "train_acc", "test_acc");
            for r in rows {
                let test = r.test_acc.map_or("-".to_string(), |a| format!("{a:.4}"));
                println!("{:>10} {:>10.4} {:>10}", r.value, r.train_acc, test);
            }
        }
        Command::Calibrate => {
            let cal = experiment::cmd_calibrate(&cfg)?;
            println!(
                "syn_scale = {:?}  (median latency {:.4} ms after {} bisection steps)",
                cal.scale, cal.median_latency, cal.iterations
            );
        }
        Command::Inspect { snapshot } => {
            let snap = read_snapshot(snapshot)?;
            print!("{}", experiment::inspect(&snap, cfg.network.stdp.w_max));
        }
        Command::ShowConfig { .. } => print!("{}", cfg.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
