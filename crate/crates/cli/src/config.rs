//! Experiment configuration: a flat `key = value` text format.
//!
//! ```text
//! # comments start with '#', blank lines are ignored
//! train_count = 1000
//! train_step  = 2
//! data_dir    = data
//! ```
//!
//! Every key has a default (see [`ExperimentConfig::to_text`] for the full
//! list). Unknown and repeated keys are errors. Values are layered as
//! defaults < config file < `HHSTDP_<KEY>` environment variables < command
//! line flags, and the result is validated before any run starts.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hhstdp_core::data::{Subset, DEFAULT_THRESHOLD};
use hhstdp_core::trainer::TrainConfig;
use hhstdp_core::NetworkParams;

use crate::error::CliError;

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "HHSTDP_";

/// How the train/test subsets are drawn from the IDX files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubsetMode {
    First,
    Shuffled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub train_count: usize,
    pub test_count: usize,
    pub subset: SubsetMode,
    /// 2x2 block mean at or above which an input is active.
    pub threshold: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads for sweeps; 0 picks the number of cores.
    pub threads: usize,
    pub network: NetworkParams,
    pub train: TrainConfig,
    /// Active inputs in the reference pattern of the latency calibration.
    pub calibration_inputs: usize,
    /// Target natural latency of the calibration (ms).
    pub calibration_latency: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            train_images: PathBuf::from("train-images-idx3-ubyte"),
            train_labels: PathBuf::from("train-labels-idx1-ubyte"),
            test_images: PathBuf::from("t10k-images-idx3-ubyte"),
            test_labels: PathBuf::from("t10k-labels-idx1-ubyte"),
            train_count: 1000,
            test_count: 1000,
            subset: SubsetMode::First,
            threshold: DEFAULT_THRESHOLD,
            seed: 1,
            out: PathBuf::from("out"),
            threads: 0,
            network: NetworkParams::default(),
            train: TrainConfig::default(),
            calibration_inputs: 25,
            calibration_latency: 10.0,
        }
    }
}

/// Conversion between config text and field values.
trait Value: Sized {
    fn parse(raw: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

impl Value for f64 {
    fn parse(raw: &str) -> Result<Self, String> {
        let v: f64 = raw.parse().map_err(|_| format!("expected a number, got {raw:?}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("expected a finite number, got {raw:?}"))
        }
    }
    fn render(&self) -> String {
        // shortest representation that parses back to the same value
        format!("{self:?}")
    }
}

macro_rules! integer_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(raw: &str) -> Result<Self, String> {
                raw.parse().map_err(|_| format!("expected a non-negative integer, got {raw:?}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
integer_value!(u64, usize);

impl Value for bool {
    fn parse(raw: &str) -> Result<Self, String> {
        match raw {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(format!("expected true or false, got {raw:?}")),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for PathBuf {
    fn parse(raw: &str) -> Result<Self, String> {
        if raw.is_empty() {
            Err("expected a path".into())
        } else {
            Ok(PathBuf::from(raw))
        }
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl Value for SubsetMode {
    fn parse(raw: &str) -> Result<Self, String> {
        match raw {
            "first" => Ok(Self::First),
            "shuffled" => Ok(Self::Shuffled),
            _ => Err(format!("expected first or shuffled, got {raw:?}")),
        }
    }
    fn render(&self) -> String {
        match self {
            Self::First => "first".into(),
            Self::Shuffled => "shuffled".into(),
        }
    }
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+, $doc:literal;)*) => {
        /// Every accepted key with a one-line description.
        pub const KEYS: &[(&str, &str)] = &[$(($key, $doc)),*];

        impl ExperimentConfig {
            fn set_key(&mut self, key: &str, raw: &str) -> Option<Result<(), String>> {
                match key {
                    $($key => Some(Value::parse(raw).map(|v| self.$($field).+ = v)),)*
                    _ => None,
                }
            }

            fn get_key(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(Value::render(&self.$($field).+)),)*
                    _ => None,
                }
            }
        }
    };
}

keys! {
    "data_dir" => data_dir, "directory holding the IDX files";
    "train_images" => train_images, "training image file, relative to data_dir";
    "train_labels" => train_labels, "training label file, relative to data_dir";
    "test_images" => test_images, "test image file, relative to data_dir";
    "test_labels" => test_labels, "test label file, relative to data_dir";
    "train_count" => train_count, "training images used";
    "test_count" => test_count, "test images used (0 skips testing)";
    "subset" => subset, "first | shuffled (seeded) subset selection";
    "threshold" => threshold, "binarisation threshold on the 2x2 block mean";
    "seed" => seed, "master seed";
    "out" => out, "output directory";
    "threads" => threads, "sweep worker threads (0 = all cores)";
    "dt" => train.dt, "integration step (ms)";
    "train_step" => train.train_step, "stimulus schedule repetitions per image";
    "in_target" => train.in_target, "desired firing neurons in the correct group";
    "de_target" => train.de_target, "allowed firing neurons in each wrong group";
    "t0" => train.t0, "holdList stimulus time within a phase (ms)";
    "t1" => train.t1, "deList stimulus time within a phase (ms)";
    "t2" => train.t2, "input spike time within a phase (ms)";
    "t3" => train.t3, "inList stimulus time within a phase (ms)";
    "tn" => train.tn, "offset of the second phase (ms)";
    "step_duration" => train.step_duration, "length of one training step (ms)";
    "observe_window" => train.observe_window, "prediction window (ms)";
    "settle_gap" => train.settle_gap, "quiescent gap before every image (ms)";
    "c_m" => network.hh.c_m, "membrane capacitance (uF/cm^2)";
    "g_na" => network.hh.g_na, "sodium conductance (mS/cm^2)";
    "g_k" => network.hh.g_k, "potassium conductance (mS/cm^2)";
    "g_l" => network.hh.g_l, "leak conductance (mS/cm^2)";
    "e_na" => network.hh.e_na, "sodium reversal (mV)";
    "e_k" => network.hh.e_k, "potassium reversal (mV)";
    "e_l" => network.hh.e_l, "leak reversal (mV)";
    "v_thresh" => network.hh.v_thresh, "spike detection threshold (mV)";
    "t_refrac" => network.hh.t_refrac, "refractory period (ms)";
    "tau_ltp" => network.stdp.tau_ltp, "presynaptic trace time constant (ms)";
    "tau_ltd" => network.stdp.tau_ltd, "postsynaptic trace time constant (ms)";
    "amp_ltp" => network.stdp.amp_ltp, "presynaptic trace increment";
    "amp_ltd" => network.stdp.amp_ltd, "postsynaptic trace increment";
    "rate_ltp" => network.stdp.rate_ltp, "potentiation learning rate (uS)";
    "rate_ltd" => network.stdp.rate_ltd, "depression learning rate (uS)";
    "w_min" => network.stdp.w_min, "lower weight bound (uS)";
    "w_max" => network.stdp.w_max, "upper weight bound (uS)";
    "tau_syn" => network.synapse.tau_syn, "synaptic conductance decay (ms)";
    "e_syn" => network.synapse.e_syn, "synaptic reversal (mV)";
    "syn_scale" => network.synapse.scale, "weight-to-conductance scale";
    "pulse_duration" => network.pulse_duration, "stimulus pulse length (ms)";
    "pulse_amplitude" => network.pulse_amplitude, "stimulus pulse current (uA/cm^2)";
    "evoked_bypass_refractory" => network.evoked_bypass_refractory, "register stimulated spikes inside the refractory period";
    "calibration_inputs" => calibration_inputs, "active inputs in the calibration pattern";
    "calibration_latency" => calibration_latency, "target calibration latency (ms)";
}

/// Environment variable that overrides `key`.
pub fn env_var_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())
}

impl ExperimentConfig {
    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), CliError> {
        let mut seen = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = line.split_once('#').map_or(line, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Config(format!("{source}:{lineno}: {msg}"));
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            self.set(key, value).map_err(|e| match e {
                CliError::Config(msg) => err(msg),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.set_key(key, value) {
            Some(Ok(())) => Ok(()),
            Some(Err(msg)) => Err(CliError::Config(format!("`{key}`: {msg}"))),
            None => Err(CliError::Config(format!("unknown key `{key}`"))),
        }
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.get_key(key)
    }

    /// Applies `HHSTDP_<KEY>` overrides from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let key = k.as_ref().strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
                KEYS.iter().any(|(name, _)| *name == key).then(|| (key, v.as_ref().to_string()))
            })
            .collect();
        overrides.sort();
        for (key, value) in overrides {
            self.set(&key, value.trim())
                .map_err(|e| CliError::Config(format!("{}: {e}", env_var_name(&key))))?;
        }
        Ok(())
    }

    /// Complete effective configuration in the file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, doc) in KEYS {
            let value = self.get_key(key).expect("every listed key is readable");
            let _ = writeln!(out, "# {doc}\n{key} = {value}");
        }
        out
    }

    pub fn resolve(&self, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.data_dir.join(file)
        }
    }

    pub fn subset(&self) -> Subset {
        match self.subset {
            SubsetMode::First => Subset::First,
            SubsetMode::Shuffled => Subset::Shuffled(self.seed),
        }
    }

    /// Checks every field before a run.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: hhstdp_core::Error| CliError::Config(e.to_string());
        self.network.validate().map_err(invalid)?;
        self.train.validate(&hhstdp_core::Topology::default()).map_err(invalid)?;
        if !(0.0..=255.0).contains(&self.threshold) {
            return Err(CliError::Config(format!("threshold must lie in [0, 255], got {}", self.threshold)));
        }
        if self.calibration_inputs == 0 || self.calibration_inputs > 196 {
            return Err(CliError::Config("calibration_inputs must lie in 1..=196".into()));
        }
        if !(self.calibration_latency > 0.0) {
            return Err(CliError::Config("calibration_latency must be positive".into()));
        }
        Ok(())
    }
}
