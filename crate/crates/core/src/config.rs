//! Flat `key = value` run configuration with dotted namespaces.

use std::path::{Path, PathBuf};

use crate::channel::IdsRates;
use crate::contam::{ContaminantKind, ContaminationLevel};
use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::neural::{ModelConfig, Variant};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed for references, reads, contaminants, splits and model init"),
    ("threads", "worker threads for evaluation and ingest"),
    ("data.num_references", "number of synthetic references"),
    ("data.length", "reference length L (also the model length)"),
    ("data.size_min", "smallest clean cluster size"),
    ("data.size_max", "largest clean cluster size"),
    ("ids.p_ins", "per-base insertion probability"),
    ("ids.p_del", "per-base deletion probability"),
    ("ids.p_sub", "per-base substitution probability"),
    ("contam.level", "contamination level in percent, below 50"),
    ("contam.kinds", "comma list of misclustered, reverse-complement, random, spliced (empty: all)"),
    ("model.d_model", "encoder width"),
    ("model.heads", "self-attention heads"),
    ("model.conv_kernel", "depthwise kernel width (odd)"),
    ("model.n_blocks", "encoder blocks"),
    ("model.h_att", "read scorer hidden width, below data.length"),
    ("model.h_lstm", "decoder hidden width"),
    ("model.variant", "full, no-attention, uniform-attention or transformer"),
    ("train.lr", "Adam learning rate"),
    ("train.beta1", "Adam first-moment decay"),
    ("train.beta2", "Adam second-moment decay"),
    ("train.l2", "L2 coefficient added to every gradient"),
    ("train.batch_size", "clusters per batch"),
    ("train.epochs", "training epochs"),
    ("train.resample", "redraw training reads every epoch (true/false)"),
    ("train.precision", "f64 or f32 arithmetic for training and inference"),
    ("bench.algo", "comma list of bma-lookahead, divider-bma, neural"),
    ("bench.levels", "comma list of contamination levels in percent"),
    ("bench.k_values", "comma list of minimum cluster sizes to report"),
    ("bench.window", "BMA lookahead window"),
    ("out.dir", "output directory"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub resample: bool,
    pub precision: Precision,
    pub algos: Vec<String>,
    /// Fractions in `[0, 0.5)`.
    pub levels: Vec<f64>,
    pub k_values: Vec<usize>,
    pub window: usize,
    pub out_dir: PathBuf,
}

pub const ALGOS: [&str; 3] = ["bma-lookahead", "divider-bma", "neural"];

impl Default for RunConfig {
    fn default() -> Self {
        let dataset = DatasetConfig::default();
        let model = ModelConfig { len: dataset.length, h_att: 32, ..ModelConfig::default() };
        Self {
            seed: 0,
            threads: 1,
            dataset,
            model,
            resample: false,
            precision: Precision::F64,
            algos: ALGOS.iter().map(|s| s.to_string()).collect(),
            levels: vec![0.0, 0.1, 0.2],
            k_values: vec![5],
            window: 2,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::InvalidConfig(format!("bad value {value:?} for {key}"))
}

fn num<N: std::str::FromStr>(key: &str, v: &str) -> Result<N> {
    v.parse().map_err(|_| bad(key, v))
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn percent(key: &str, v: &str) -> Result<ContaminationLevel> {
    ContaminationLevel::new(num::<f64>(key, v)? / 100.0).map_err(|_| bad(key, v))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn pct(f: f64) -> String {
    let p = f * 100.0;
    let r = (p * 1e9).round() / 1e9;
    r.to_string()
}

impl RunConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let d = &mut self.dataset;
        let m = &mut self.model;
        match key {
            "seed" => {
                self.seed = num(key, v)?;
                d.seed = self.seed;
                m.seed = self.seed;
            }
            "threads" => self.threads = num(key, v)?,
            "data.num_references" => d.num_references = num(key, v)?,
            "data.length" => {
                d.length = num(key, v)?;
                m.len = d.length;
            }
            "data.size_min" => d.size_min = num(key, v)?,
            "data.size_max" => d.size_max = num(key, v)?,
            "ids.p_ins" => d.rates.p_ins = num(key, v)?,
            "ids.p_del" => d.rates.p_del = num(key, v)?,
            "ids.p_sub" => d.rates.p_sub = num(key, v)?,
            "contam.level" => d.level = percent(key, v)?,
            "contam.kinds" => d.kinds = list(v).map(str::parse).collect::<Result<Vec<ContaminantKind>>>()?,
            "model.d_model" => m.d_model = num(key, v)?,
            "model.heads" => m.heads = num(key, v)?,
            "model.conv_kernel" => m.conv_kernel = num(key, v)?,
            "model.n_blocks" => m.n_blocks = num(key, v)?,
            "model.h_att" => m.h_att = num(key, v)?,
            "model.h_lstm" => m.h_lstm = num(key, v)?,
            "model.variant" => m.variant = v.parse::<Variant>()?,
            "train.lr" => m.lr = num(key, v)?,
            "train.beta1" => m.beta1 = num(key, v)?,
            "train.beta2" => m.beta2 = num(key, v)?,
            "train.l2" => m.l2 = num(key, v)?,
            "train.batch_size" => m.batch_size = num(key, v)?,
            "train.epochs" => m.epochs = num(key, v)?,
            "train.resample" => self.resample = num(key, v)?,
            "train.precision" => {
                self.precision = match v {
                    "f64" => Precision::F64,
                    "f32" => Precision::F32,
                    _ => return Err(bad(key, v)),
                }
            }
            "bench.algo" => {
                let algos: Vec<String> = list(v).map(str::to_string).collect();
                if let Some(a) = algos.iter().find(|a| !ALGOS.contains(&a.as_str())) {
                    return Err(Error::InvalidConfig(format!("unknown algorithm {a:?} (expected one of {})", ALGOS.join(", "))));
                }
                self.algos = algos;
            }
            "bench.levels" => self.levels = list(v).map(|x| percent(key, x).map(|l| l.fraction())).collect::<Result<_>>()?,
            "bench.k_values" => self.k_values = list(v).map(|x| num(key, x)).collect::<Result<_>>()?,
            "bench.window" => self.window = num(key, v)?,
            "out.dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(Error::InvalidConfig(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("expected KEY=VALUE, got {assignment:?}")))?;
        self.set(k.trim(), v)
    }

    /// Apply every setting of a config file; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { path: path.into(), line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            self.set(k.trim(), v).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model.validate()?;
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("bench.window must be at least 1".into()));
        }
        Ok(())
    }

    /// Resolved value of every key, in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let d = &self.dataset;
        let m = &self.model;
        let IdsRates { p_ins, p_del, p_sub } = d.rates;
        let kinds: Vec<&str> = d.kinds.iter().map(|k| k.name()).collect();
        let values = [
            self.seed.to_string(),
            self.threads.to_string(),
            d.num_references.to_string(),
            d.length.to_string(),
            d.size_min.to_string(),
            d.size_max.to_string(),
            p_ins.to_string(),
            p_del.to_string(),
            p_sub.to_string(),
            pct(d.level.fraction()),
            kinds.join(","),
            m.d_model.to_string(),
            m.heads.to_string(),
            m.conv_kernel.to_string(),
            m.n_blocks.to_string(),
            m.h_att.to_string(),
            m.h_lstm.to_string(),
            m.variant.to_string(),
            m.lr.to_string(),
            m.beta1.to_string(),
            m.beta2.to_string(),
            m.l2.to_string(),
            m.batch_size.to_string(),
            m.epochs.to_string(),
            self.resample.to_string(),
            self.precision.name().to_string(),
            self.algos.join(","),
            self.levels.iter().map(|&l| pct(l)).collect::<Vec<_>>().join(","),
            join(&self.k_values),
            self.window.to_string(),
            self.out_dir.display().to_string(),
        ];
        KEYS.iter().zip(values).map(|((k, _), v)| (k.to_string(), v)).collect()
    }

    /// `key = value` text that [`RunConfig::apply_text`] reads back to the same config.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
