//! Flat `key = value` run configuration.
//!
//! Every setting a command reads lives here, so a run can be replayed from a
//! dumped config alone. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use epsilon_complexity::classify::{ForestConfig, KnnConfig};
use epsilon_complexity::eval::{BootstrapConfig, CvConfig};
use epsilon_complexity::features::FeatureConfig;
use epsilon_complexity::ingest::{LabelNames, Layout, RawLayout};
use epsilon_complexity::recon::{ErrorNorm, MethodFamily, RetentionGrid};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config key {key}: {message}")]
    Value { key: String, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Forest,
    Knn,
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rf" => Ok(ClassifierKind::Forest),
            "knn" => Ok(ClassifierKind::Knn),
            other => Err(format!("unknown classifier {other:?} (rf | knn)")),
        }
    }
}

impl ClassifierKind {
    fn name(self) -> &'static str {
        match self {
            ClassifierKind::Forest => "rf",
            ClassifierKind::Knn => "knn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 lets the thread pool pick.
    pub threads: usize,
    pub grid: Vec<f64>,
    pub max_degree: usize,
    pub window: usize,
    pub norm: ErrorNorm,
    pub orders: Vec<usize>,
    pub classifier: ClassifierKind,
    pub n_trees: usize,
    /// 0 means `floor(sqrt(feature count))`.
    pub features_per_split: usize,
    pub min_leaf: usize,
    pub knn_k: usize,
    pub folds: usize,
    pub stratified: bool,
    pub replications: usize,
    pub level: f64,
    pub hold_partition: bool,
    pub sweep_cap: usize,
    pub label_a: String,
    pub label_b: String,
    pub layout: Layout,
    pub delimiter: char,
    pub has_header: bool,
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub spectra: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            grid: RetentionGrid::DEFAULT.to_vec(),
            max_degree: 4,
            window: 5,
            norm: ErrorNorm::Sup,
            orders: vec![0, 4],
            classifier: ClassifierKind::Forest,
            n_trees: 500,
            features_per_split: 0,
            min_leaf: 1,
            knn_k: 5,
            folds: 10,
            stratified: true,
            replications: 10_000,
            level: 0.95,
            hold_partition: false,
            sweep_cap: 4,
            label_a: "healthy".into(),
            label_b: "patient".into(),
            layout: Layout::ColumnsPerChannel,
            delimiter: ',',
            has_header: false,
            channels: 16,
            sample_rate_hz: 128.0,
            spectra: None,
        }
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("bad list element {s:?}")))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("not a boolean: {other:?}")),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let err = |message: String| ConfigError::Value {
            key: key.to_string(),
            message,
        };
        fn num<T: FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        match key {
            "seed" => self.seed = num(value).map_err(err)?,
            "threads" => self.threads = num(value).map_err(err)?,
            "grid" => self.grid = parse_list(value).map_err(err)?,
            "max_degree" => self.max_degree = num(value).map_err(err)?,
            "window" => self.window = num(value).map_err(err)?,
            "norm" => self.norm = value.parse().map_err(|e: epsilon_complexity::Error| err(e.to_string()))?,
            "orders" => self.orders = parse_list(value).map_err(err)?,
            "classifier" => self.classifier = value.parse().map_err(err)?,
            "n_trees" => self.n_trees = num(value).map_err(err)?,
            "features_per_split" => self.features_per_split = num(value).map_err(err)?,
            "min_leaf" => self.min_leaf = num(value).map_err(err)?,
            "knn_k" => self.knn_k = num(value).map_err(err)?,
            "folds" => self.folds = num(value).map_err(err)?,
            "stratified" => self.stratified = parse_bool(value).map_err(err)?,
            "replications" => self.replications = num(value).map_err(err)?,
            "level" => self.level = num(value).map_err(err)?,
            "hold_partition" => self.hold_partition = parse_bool(value).map_err(err)?,
            "sweep_cap" => self.sweep_cap = num(value).map_err(err)?,
            "label_a" => self.label_a = value.to_string(),
            "label_b" => self.label_b = value.to_string(),
            "layout" => self.layout = value.parse().map_err(|e: epsilon_complexity::Error| err(e.to_string()))?,
            "delimiter" => {
                self.delimiter = match value {
                    "tab" | "\\t" => '\t',
                    "comma" => ',',
                    "space" => ' ',
                    v if v.chars().count() == 1 && v.is_ascii() => v.chars().next().unwrap_or(','),
                    v => return Err(err(format!("delimiter must be one ASCII character, got {v:?}"))),
                }
            }
            "has_header" => self.has_header = parse_bool(value).map_err(err)?,
            "channels" => self.channels = num(value).map_err(err)?,
            "sample_rate_hz" => self.sample_rate_hz = num(value).map_err(err)?,
            "spectra" => {
                self.spectra = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every setting in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every key in a fixed order; [`RunConfig::parse`] inverts this.
    pub fn dump(&self) -> String {
        let delimiter = match self.delimiter {
            '\t' => "tab".to_string(),
            ' ' => "space".to_string(),
            c => c.to_string(),
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("threads", self.threads.to_string());
        kv("grid", join(&self.grid));
        kv("max_degree", self.max_degree.to_string());
        kv("window", self.window.to_string());
        kv("norm", self.norm.name().to_string());
        kv("orders", join(&self.orders));
        kv("classifier", self.classifier.name().to_string());
        kv("n_trees", self.n_trees.to_string());
        kv("features_per_split", self.features_per_split.to_string());
        kv("min_leaf", self.min_leaf.to_string());
        kv("knn_k", self.knn_k.to_string());
        kv("folds", self.folds.to_string());
        kv("stratified", self.stratified.to_string());
        kv("replications", self.replications.to_string());
        kv("level", self.level.to_string());
        kv("hold_partition", self.hold_partition.to_string());
        kv("sweep_cap", self.sweep_cap.to_string());
        kv("label_a", self.label_a.clone());
        kv("label_b", self.label_b.clone());
        kv("layout", self.layout.name().to_string());
        kv("delimiter", delimiter);
        kv("has_header", self.has_header.to_string());
        kv("channels", self.channels.to_string());
        kv("sample_rate_hz", self.sample_rate_hz.to_string());
        kv(
            "spectra",
            self.spectra
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        s
    }

    pub fn feature_config(&self) -> epsilon_complexity::Result<FeatureConfig> {
        FeatureConfig::new(&self.orders, self.retention_grid()?, self.method_family()?)
    }

    pub fn retention_grid(&self) -> epsilon_complexity::Result<RetentionGrid> {
        RetentionGrid::new(self.grid.clone())
    }

    pub fn method_family(&self) -> epsilon_complexity::Result<MethodFamily> {
        MethodFamily::with_window(self.max_degree, self.window, self.norm)
    }

    pub fn forest(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            features_per_split: (self.features_per_split > 0).then_some(self.features_per_split),
            min_leaf: self.min_leaf,
            seed: self.seed,
        }
    }

    pub fn knn(&self) -> KnnConfig {
        KnnConfig { k: self.knn_k }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            k: self.folds,
            stratified: self.stratified,
        }
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            replications: self.replications,
            level: self.level,
            stratified: self.stratified,
            hold_seed: self.hold_partition,
        }
    }

    pub fn labels(&self) -> epsilon_complexity::Result<LabelNames> {
        LabelNames::new(self.label_a.clone(), self.label_b.clone())
    }

    pub fn raw_layout(&self) -> RawLayout {
        RawLayout {
            layout: self.layout,
            delimiter: self.delimiter as u8,
            has_header: self.has_header,
        }
    }
}
