//! Run configuration: a plain `key = value` file with `#` comments.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! The canonical form lists every resolved key in sorted order; the config
//! hash is the SHA-256 of that text minus the keys that cannot change
//! results (`workers`, `output_dir`, `cache_dir`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{harth, pamap2};
use crate::error::{Error, Result};
use crate::eval::{Mode, Scope};
use crate::network::TopologyKind;
use crate::nn::{AdamConfig, ModelArchitecture};
use crate::seed::sha256_hex;

/// Environment variable naming the dataset root when `data_dir` is unset.
pub const DATA_ROOT_ENV: &str = "COLLAB_HAR_DATA_ROOT";

const HASH_EXCLUDED: [&str; 3] = ["workers", "output_dir", "cache_dir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Pamap2,
    Harth,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::Pamap2 => "pamap2",
            DatasetKind::Harth => "harth",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "synthetic" => Ok(DatasetKind::Synthetic),
            "pamap2" => Ok(DatasetKind::Pamap2),
            "harth" => Ok(DatasetKind::Harth),
            other => Err(format!(
                "unknown dataset `{other}` (synthetic, pamap2, harth)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSettings {
    pub agents: usize,
    pub classes: usize,
    pub classes_per_agent: usize,
    pub windows_per_class: usize,
    pub channels: usize,
    pub noise: f64,
    /// Windows per class in the held-out set of global-scope runs.
    pub test_windows_per_class: usize,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        Self {
            agents: 6,
            classes: 4,
            classes_per_agent: 2,
            windows_per_class: 40,
            channels: 3,
            noise: 0.3,
            test_windows_per_class: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment_id: String,
    pub dataset: DatasetKind,
    /// Dataset root; falls back to [`DATA_ROOT_ENV`].
    pub data_dir: Option<PathBuf>,
    /// Value of [`DATA_ROOT_ENV`] seen at parse time.
    pub data_root_env: Option<String>,
    pub mode: Mode,
    pub scope: Scope,
    /// Empty means the dataset's default assignment.
    pub train_subjects: Vec<u32>,
    pub test_subjects: Vec<u32>,
    /// Empty means the dataset's default whitelist.
    pub activities: Vec<i64>,
    /// PAMAP2 column indices; empty means the default 36.
    pub pamap2_columns: Vec<usize>,
    pub window_length: usize,
    /// `None` means non-overlapping windows.
    pub stride: Option<usize>,
    pub split_ratio: f64,
    pub conv_out_channels: usize,
    pub conv_kernel: usize,
    pub pool_kernel: usize,
    pub batch_size: usize,
    pub epochs: u64,
    pub adam: AdamConfig,
    pub topology: TopologyKind,
    pub include_self: bool,
    pub reset_adam_on_aggregate: bool,
    pub standardize: bool,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    /// `None` means `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub synthetic: SyntheticSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment_id: "default".into(),
            dataset: DatasetKind::Synthetic,
            data_dir: None,
            data_root_env: None,
            mode: Mode::Collab,
            scope: Scope::Global,
            train_subjects: Vec::new(),
            test_subjects: Vec::new(),
            activities: Vec::new(),
            pamap2_columns: Vec::new(),
            window_length: ModelArchitecture::DEFAULT_WINDOW_LENGTH,
            stride: None,
            split_ratio: 0.8,
            conv_out_channels: ModelArchitecture::DEFAULT_CONV_OUT_CHANNELS,
            conv_kernel: ModelArchitecture::DEFAULT_CONV_KERNEL,
            pool_kernel: ModelArchitecture::DEFAULT_POOL_KERNEL,
            batch_size: 64,
            epochs: 20,
            adam: AdamConfig::default(),
            topology: TopologyKind::Full,
            include_self: true,
            reset_adam_on_aggregate: false,
            standardize: false,
            seed: 1,
            workers: 1,
            output_dir: PathBuf::from("runs"),
            cache_dir: None,
            synthetic: SyntheticSettings::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, line: usize, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::config(
            key,
            line,
            format!("cannot parse `{value}` as {}", std::any::type_name::<T>()),
        )
    })
}

fn parse_bool(key: &str, line: usize, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(
            key,
            line,
            format!("expected a boolean, got `{value}`"),
        )),
    }
}

/// Comma-separated list; `a-b` expands to an inclusive integer range.
fn parse_list<T>(key: &str, line: usize, value: &str) -> Result<Vec<T>>
where
    T: FromStr + Copy + TryFrom<i64>,
{
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let range = item
            .split_once('-')
            .filter(|(a, _)| !a.is_empty())
            .map(|(a, b)| (a.trim().parse::<i64>(), b.trim().parse::<i64>()));
        match range {
            Some((Ok(a), Ok(b))) if a <= b => {
                for v in a..=b {
                    out.push(
                        T::try_from(v).map_err(|_| {
                            Error::config(key, line, format!("`{v}` is out of range"))
                        })?,
                    );
                }
            }
            _ => out.push(parse_value(key, line, item)?),
        }
    }
    Ok(out)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Parses configuration text. `line` numbers in errors are 1-based.
    pub fn parse(text: &str, data_root_env: Option<String>) -> Result<Self> {
        let mut cfg = RunConfig {
            data_root_env: data_root_env.filter(|s| !s.is_empty()),
            ..RunConfig::default()
        };
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::config(content, line, "expected `key = value`"))?;
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(Error::config(
                    key,
                    line,
                    format!("already set on line {prev}"),
                ));
            }
            cfg.set(key, value.trim(), line)?;
        }
        Ok(cfg)
    }

    /// Reads and parses `path`, taking the dataset root fallback from the
    /// environment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("<file>", 0, format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text, std::env::var(DATA_ROOT_ENV).ok())
    }

    /// Applies one `key = value` assignment. Command-line overrides use
    /// line 0.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let s = &mut self.synthetic;
        match key {
            "experiment_id" => {
                if value.is_empty() || value.contains(',') {
                    return Err(Error::config(key, line, "must be non-empty and comma-free"));
                }
                self.experiment_id = value.to_string();
            }
            "dataset" => self.dataset = value.parse().map_err(|m| Error::config(key, line, m))?,
            "data_dir" => self.data_dir = optional_path(value),
            "mode" => self.mode = value.parse().map_err(|_| bad_enum(key, line, value))?,
            "scope" => self.scope = value.parse().map_err(|_| bad_enum(key, line, value))?,
            "train_subjects" => self.train_subjects = parse_list(key, line, value)?,
            "test_subjects" => self.test_subjects = parse_list(key, line, value)?,
            "activities" => self.activities = parse_list(key, line, value)?,
            "pamap2_columns" => self.pamap2_columns = parse_list(key, line, value)?,
            "window_length" => self.window_length = parse_value(key, line, value)?,
            "stride" => {
                self.stride = match value {
                    "" | "window" => None,
                    v => Some(parse_value(key, line, v)?),
                }
            }
            "split_ratio" => self.split_ratio = parse_value(key, line, value)?,
            "conv_out_channels" => self.conv_out_channels = parse_value(key, line, value)?,
            "conv_kernel" => self.conv_kernel = parse_value(key, line, value)?,
            "pool_kernel" => self.pool_kernel = parse_value(key, line, value)?,
            "batch_size" => self.batch_size = parse_value(key, line, value)?,
            "epochs" => self.epochs = parse_value(key, line, value)?,
            "learning_rate" => self.adam.alpha = parse_value(key, line, value)?,
            "beta1" => self.adam.beta1 = parse_value(key, line, value)?,
            "beta2" => self.adam.beta2 = parse_value(key, line, value)?,
            "epsilon" => self.adam.epsilon = parse_value(key, line, value)?,
            "topology" => {
                self.topology = value.parse().map_err(|e: Error| match e {
                    Error::Config { message, .. } => Error::config(key, line, message),
                    other => other,
                })?
            }
            "include_self" => self.include_self = parse_bool(key, line, value)?,
            "reset_adam_on_aggregate" => {
                self.reset_adam_on_aggregate = parse_bool(key, line, value)?
            }
            "standardize" => self.standardize = parse_bool(key, line, value)?,
            "seed" => self.seed = parse_value(key, line, value)?,
            "workers" => self.workers = parse_value(key, line, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "cache_dir" => self.cache_dir = optional_path(value),
            "synthetic_agents" => s.agents = parse_value(key, line, value)?,
            "synthetic_classes" => s.classes = parse_value(key, line, value)?,
            "synthetic_classes_per_agent" => s.classes_per_agent = parse_value(key, line, value)?,
            "synthetic_windows_per_class" => s.windows_per_class = parse_value(key, line, value)?,
            "synthetic_channels" => s.channels = parse_value(key, line, value)?,
            "synthetic_noise" => s.noise = parse_value(key, line, value)?,
            "synthetic_test_windows_per_class" => {
                s.test_windows_per_class = parse_value(key, line, value)?
            }
            _ => return Err(Error::config(key, line, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<'a>(
        &mut self,
        overrides: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o, 0, "override must be `key=value`"))?;
            self.set(k.trim(), v.trim(), 0)?;
        }
        Ok(())
    }

    /// Checks value ranges that single assignments cannot.
    pub fn validate(&self) -> Result<()> {
        let err = |k: &str, m: &str| Err(Error::config(k, 0, m));
        if self.epochs == 0 {
            return err("epochs", "must be at least 1");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be at least 1");
        }
        if self.window_length == 0 {
            return err("window_length", "must be at least 1");
        }
        if self.stride == Some(0) {
            return err("stride", "must be at least 1");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return err("split_ratio", "must lie in (0, 1)");
        }
        if self.workers == 0 {
            return err("workers", "must be at least 1");
        }
        if self.adam.alpha.is_nan()
            || self.adam.alpha <= 0.0
            || self.adam.epsilon.is_nan()
            || self.adam.epsilon <= 0.0
        {
            return err(
                "learning_rate",
                "learning rate and epsilon must be positive",
            );
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return err("beta1", "beta1 and beta2 must lie in [0, 1)");
        }
        if self.dataset == DatasetKind::Synthetic {
            let s = &self.synthetic;
            if s.agents == 0 || s.classes < 2 || s.channels == 0 || s.windows_per_class == 0 {
                return err(
                    "synthetic_agents",
                    "synthetic agents, channels and windows must be positive, classes at least 2",
                );
            }
            if s.classes_per_agent == 0 || s.classes_per_agent > s.classes {
                return err(
                    "synthetic_classes_per_agent",
                    "must lie in 1..=synthetic_classes",
                );
            }
            if !(s.noise >= 0.0 && s.noise.is_finite()) {
                return err("synthetic_noise", "must be a non-negative number");
            }
            if self.scope == Scope::Global && s.test_windows_per_class == 0 {
                return err(
                    "synthetic_test_windows_per_class",
                    "global scope needs held-out windows",
                );
            }
        } else {
            let train = self.resolved_train_subjects();
            let test = self.resolved_test_subjects();
            if train.is_empty() {
                return err("train_subjects", "no training subjects");
            }
            if let Some(s) = train.iter().find(|s| test.contains(s)) {
                return err(
                    "test_subjects",
                    &format!("subject {s} is both training and held-out"),
                );
            }
            if self.resolved_activities().len() < 2 {
                return err("activities", "need at least two activities");
            }
        }
        self.arch()?
            .validate()
            .map_err(|e| Error::config("window_length", 0, e.to_string()))
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.window_length)
    }

    /// `data_dir`, else the environment fallback.
    pub fn data_root(&self) -> Option<PathBuf> {
        self.data_dir
            .clone()
            .or_else(|| self.data_root_env.as_ref().map(PathBuf::from))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn resolved_train_subjects(&self) -> Vec<u32> {
        if !self.train_subjects.is_empty() {
            return self.train_subjects.clone();
        }
        match self.dataset {
            DatasetKind::Synthetic => (0..self.synthetic.agents as u32).collect(),
            DatasetKind::Pamap2 => (2..=9).collect(),
            DatasetKind::Harth => vec![1, 2, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 17, 20],
        }
    }

    pub fn resolved_test_subjects(&self) -> Vec<u32> {
        if !self.test_subjects.is_empty() {
            return self.test_subjects.clone();
        }
        match self.dataset {
            DatasetKind::Synthetic => vec![self.synthetic.agents as u32],
            DatasetKind::Pamap2 => vec![1],
            DatasetKind::Harth => vec![16, 18],
        }
    }

    pub fn resolved_activities(&self) -> Vec<i64> {
        if !self.activities.is_empty() {
            return self.activities.clone();
        }
        match self.dataset {
            DatasetKind::Synthetic => (0..self.synthetic.classes as i64).collect(),
            DatasetKind::Pamap2 => pamap2::default_activities(),
            DatasetKind::Harth => harth::default_activities(),
        }
    }

    pub fn resolved_pamap2_columns(&self) -> Vec<usize> {
        if self.pamap2_columns.is_empty() {
            pamap2::default_columns()
        } else {
            self.pamap2_columns.clone()
        }
    }

    pub fn input_channels(&self) -> usize {
        match self.dataset {
            DatasetKind::Synthetic => self.synthetic.channels,
            DatasetKind::Pamap2 => self.resolved_pamap2_columns().len(),
            DatasetKind::Harth => harth::EXPECTED_COLUMNS.len() - 2,
        }
    }

    pub fn arch(&self) -> Result<ModelArchitecture> {
        let mut activities = self.resolved_activities();
        activities.sort_unstable();
        activities.dedup();
        Ok(ModelArchitecture {
            input_channels: self.input_channels(),
            window_length: self.window_length,
            conv_out_channels: self.conv_out_channels,
            conv_kernel: self.conv_kernel,
            pool_kernel: self.pool_kernel,
            num_classes: activities.len(),
        })
    }

    /// Every resolved key, sorted, one `key = value` per line.
    pub fn canonical(&self) -> String {
        self.canonical_entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    fn canonical_entries(&self) -> BTreeMap<&'static str, String> {
        let s = &self.synthetic;
        let path = |p: Option<PathBuf>| p.map(|p| p.display().to_string()).unwrap_or_default();
        BTreeMap::from([
            ("experiment_id", self.experiment_id.clone()),
            ("dataset", self.dataset.to_string()),
            ("data_dir", path(self.data_dir.clone())),
            (
                "data_root_env",
                self.data_root_env.clone().unwrap_or_default(),
            ),
            ("mode", self.mode.to_string()),
            ("scope", self.scope.to_string()),
            ("train_subjects", join(&self.resolved_train_subjects())),
            ("test_subjects", join(&self.resolved_test_subjects())),
            ("activities", join(&self.resolved_activities())),
            ("pamap2_columns", join(&self.resolved_pamap2_columns())),
            ("window_length", self.window_length.to_string()),
            ("stride", self.stride().to_string()),
            ("split_ratio", self.split_ratio.to_string()),
            ("conv_out_channels", self.conv_out_channels.to_string()),
            ("conv_kernel", self.conv_kernel.to_string()),
            ("pool_kernel", self.pool_kernel.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.adam.alpha.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("epsilon", self.adam.epsilon.to_string()),
            ("topology", self.topology.to_string()),
            ("include_self", self.include_self.to_string()),
            (
                "reset_adam_on_aggregate",
                self.reset_adam_on_aggregate.to_string(),
            ),
            ("standardize", self.standardize.to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("cache_dir", self.cache_dir().display().to_string()),
            ("synthetic_agents", s.agents.to_string()),
            ("synthetic_classes", s.classes.to_string()),
            (
                "synthetic_classes_per_agent",
                s.classes_per_agent.to_string(),
            ),
            (
                "synthetic_windows_per_class",
                s.windows_per_class.to_string(),
            ),
            ("synthetic_channels", s.channels.to_string()),
            ("synthetic_noise", s.noise.to_string()),
            (
                "synthetic_test_windows_per_class",
                s.test_windows_per_class.to_string(),
            ),
        ])
    }

    /// First 16 hex digits of the SHA-256 of the result-affecting keys.
    pub fn hash(&self) -> String {
        let text: String = self
            .canonical_entries()
            .into_iter()
            .filter(|(k, _)| !HASH_EXCLUDED.contains(k))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        sha256_hex(text.as_bytes())[..16].to_string()
    }

    /// Hash of the keys that shape the window cache.
    pub fn cache_key(&self) -> String {
        const DATA_KEYS: [&str; 12] = [
            "dataset",
            "data_dir",
            "data_root_env",
            "scope",
            "train_subjects",
            "test_subjects",
            "activities",
            "pamap2_columns",
            "window_length",
            "stride",
            "split_ratio",
            "seed",
        ];
        let text: String = self
            .canonical_entries()
            .into_iter()
            .filter(|(k, _)| DATA_KEYS.contains(k) || k.starts_with("synthetic_"))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        sha256_hex(text.as_bytes())[..16].to_string()
    }
}

fn bad_enum(key: &str, line: usize, value: &str) -> Error {
    Error::config(key, line, format!("unknown value `{value}`"))
}
