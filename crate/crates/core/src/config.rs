//! Experiment configuration: a flat JSON object with dotted keys.
//!
//! Unknown keys, duplicate keys and out-of-range values are rejected with
//! the offending key and its line. Every default is made explicit in the
//! parsed [`ExperimentConfig`].

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::csmaafl::SchedulerMode;
use crate::error::{Error, Result};
use crate::metrics::Algorithm;
use crate::model::{LearnerKind, SgdConfig};

pub const KNOWN_KEYS: &[&str] = &[
    "algorithm",
    "dataset",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "synth.classes",
    "synth.dim",
    "synth.per_class",
    "synth.test_per_class",
    "synth.spread",
    "distribution",
    "partition.classes_per_client",
    "clients",
    "model.kind",
    "model.hidden",
    "sgd.learning_rate",
    "sgd.batch_size",
    "sgd.local_epochs",
    "timing.tau_base",
    "timing.upload",
    "timing.download",
    "timing.a_min",
    "timing.a_max",
    "timing.factors",
    "csmaafl.gamma",
    "csmaafl.rho",
    "csmaafl.mu_init",
    "csmaafl.scheduler",
    "csmaafl.max_local_epochs",
    "afl_baseline.schedule",
    "seed",
    "sim.relative_slots",
    "eval.every_rounds",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    IdxFiles {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    SynthBlobs {
        classes: usize,
        dim: usize,
        per_class: usize,
        test_per_class: usize,
        spread: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Iid,
    LabelShards { classes_per_client: usize },
}

/// Compute-time slowdown factors `a_m`; client `m` needs
/// `round(a_m * tau_base)` ticks per epoch.
#[derive(Debug, Clone, PartialEq)]
pub enum Heterogeneity {
    /// Drawn uniformly from `[min, max]` with the master seed.
    Uniform { min: f64, max: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    pub tau_base: u64,
    pub upload: u64,
    pub download: u64,
    pub heterogeneity: Heterogeneity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: LearnerKind,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsmaaflConfig {
    pub gamma: f64,
    pub rho: f64,
    pub mu_init: f64,
    pub scheduler: SchedulerMode,
    pub max_local_epochs: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub dataset: DatasetSource,
    pub distribution: Distribution,
    pub clients: usize,
    pub model: ModelConfig,
    pub sgd: SgdConfig,
    pub timing: TimingConfig,
    pub csmaafl: CsmaaflConfig,
    /// Upload order of the baseline; fastest first when absent.
    pub baseline_schedule: Option<Vec<usize>>,
    pub seed: u64,
    pub relative_slots: u64,
    pub eval_every: u64,
}

impl ExperimentConfig {
    /// Default configuration for the given algorithm on synthetic blobs.
    pub fn synthetic(algorithm: Algorithm) -> Self {
        let clients = 100;
        ExperimentConfig {
            algorithm,
            dataset: DatasetSource::SynthBlobs {
                classes: 10,
                dim: 20,
                per_class: 600,
                test_per_class: 100,
                spread: 0.3,
            },
            distribution: Distribution::Iid,
            clients,
            model: ModelConfig {
                kind: LearnerKind::SoftmaxRegression,
                hidden: Vec::new(),
            },
            sgd: SgdConfig::default(),
            timing: TimingConfig {
                tau_base: 10,
                upload: 4,
                download: 4,
                heterogeneity: Heterogeneity::Uniform { min: 1.0, max: 1.0 },
            },
            csmaafl: CsmaaflConfig {
                gamma: 0.2,
                rho: 0.9,
                mu_init: clients as f64,
                scheduler: SchedulerMode::Slot,
                max_local_epochs: 8,
            },
            baseline_schedule: None,
            seed: 0,
            relative_slots: 60,
            eval_every: 1,
        }
    }

    /// The configuration as a flat dotted-key JSON object, defaults included.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("algorithm", self.algorithm.as_str().into());
        match &self.dataset {
            DatasetSource::IdxFiles { train_images, train_labels, test_images, test_labels } => {
                put("dataset", "idx-files".into());
                put("data.train_images", train_images.display().to_string().into());
                put("data.train_labels", train_labels.display().to_string().into());
                put("data.test_images", test_images.display().to_string().into());
                put("data.test_labels", test_labels.display().to_string().into());
            }
            DatasetSource::SynthBlobs { classes, dim, per_class, test_per_class, spread } => {
                put("dataset", "synth-blobs".into());
                put("synth.classes", (*classes).into());
                put("synth.dim", (*dim).into());
                put("synth.per_class", (*per_class).into());
                put("synth.test_per_class", (*test_per_class).into());
                put("synth.spread", (*spread).into());
            }
        }
        match self.distribution {
            Distribution::Iid => put("distribution", "iid".into()),
            Distribution::LabelShards { classes_per_client } => {
                put("distribution", "label-shards".into());
                put("partition.classes_per_client", classes_per_client.into());
            }
        }
        put("clients", self.clients.into());
        put(
            "model.kind",
            match self.model.kind {
                LearnerKind::SoftmaxRegression => "softmax-regression",
                LearnerKind::Mlp => "mlp",
            }
            .into(),
        );
        put("model.hidden", self.model.hidden.clone().into());
        put("sgd.learning_rate", self.sgd.learning_rate.into());
        put("sgd.batch_size", self.sgd.batch_size.into());
        put("sgd.local_epochs", self.sgd.local_epochs.into());
        put("timing.tau_base", self.timing.tau_base.into());
        put("timing.upload", self.timing.upload.into());
        put("timing.download", self.timing.download.into());
        match &self.timing.heterogeneity {
            Heterogeneity::Uniform { min, max } => {
                put("timing.a_min", (*min).into());
                put("timing.a_max", (*max).into());
            }
            Heterogeneity::Explicit(f) => put("timing.factors", f.clone().into()),
        }
        put("csmaafl.gamma", self.csmaafl.gamma.into());
        put("csmaafl.rho", self.csmaafl.rho.into());
        put("csmaafl.mu_init", self.csmaafl.mu_init.into());
        put(
            "csmaafl.scheduler",
            match self.csmaafl.scheduler {
                SchedulerMode::Slot => "slot",
                SchedulerMode::RandomizedTrunk => "randomized-trunk",
            }
            .into(),
        );
        put("csmaafl.max_local_epochs", self.csmaafl.max_local_epochs.into());
        if let Some(s) = &self.baseline_schedule {
            put("afl_baseline.schedule", s.clone().into());
        }
        put("seed", self.seed.into());
        put("sim.relative_slots", self.relative_slots.into());
        put("eval.every_rounds", self.eval_every.into());
        Value::Object(m)
    }
}

/// Top-level keys of a JSON object text with their 1-based line numbers, in
/// document order. Assumes the text is syntactically valid JSON.
fn scan_top_level_keys(text: &str) -> Vec<(String, usize)> {
    let bytes = text.as_bytes();
    let mut keys = Vec::new();
    let mut line = 1;
    let mut depth = 0usize;
    let mut expect_key = false;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\n' => line += 1,
            b'"' => {
                let start = i;
                let start_line = line;
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    } else if bytes[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
                if depth == 1 && expect_key {
                    let raw = &text[start..=i.min(bytes.len() - 1)];
                    let key = serde_json::from_str::<String>(raw).unwrap_or_else(|_| raw.trim_matches('"').to_string());
                    keys.push((key, start_line));
                    expect_key = false;
                }
            }
            b'{' | b'[' => {
                depth += 1;
                expect_key = depth == 1 && bytes[i] == b'{';
            }
            b'}' | b']' => depth = depth.saturating_sub(1),
            b',' if depth == 1 => expect_key = true,
            _ => {}
        }
        i += 1;
    }
    keys
}

struct Entries {
    values: Map<String, Value>,
    lines: HashMap<String, usize>,
}

impl Entries {
    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::ConfigKey {
            key: key.to_string(),
            line: self.lines.get(key).copied().unwrap_or(0),
            message: message.into(),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn str(&self, key: &str) -> Result<Option<&str>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(key, "expected a string")),
        }
    }

    fn required_str(&self, key: &str) -> Result<&str> {
        self.str(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| self.err(key, "expected a number")),
        }
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| self.err(key, "expected a nonnegative integer")),
        }
    }

    fn positive(&self, key: &str, default: u64) -> Result<u64> {
        let v = self.u64(key, default)?;
        if v == 0 {
            return Err(self.err(key, "must be positive"));
        }
        Ok(v)
    }

    fn list<T>(&self, key: &str, item: impl Fn(&Value) -> Option<T>, what: &str) -> Result<Option<Vec<T>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| item(v).ok_or_else(|| self.err(key, format!("expected a list of {what}"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
            Some(_) => Err(self.err(key, format!("expected a list of {what}"))),
        }
    }

    fn path(&self, key: &str, base: &Path) -> Result<PathBuf> {
        let raw = self
            .str(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}` for idx-files")))?;
        let p = Path::new(raw);
        let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        if !p.is_file() {
            return Err(self.err(key, format!("file {} does not exist", p.display())));
        }
        Ok(p)
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; relative data paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    let Value::Object(values) = value else {
        return Err(Error::Config("configuration must be a JSON object".into()));
    };

    let mut lines: HashMap<String, usize> = HashMap::new();
    for (key, line) in scan_top_level_keys(text) {
        if let Some(first) = lines.get(&key) {
            return Err(Error::ConfigKey {
                message: format!("duplicate key, first defined on line {first}"),
                key,
                line,
            });
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::ConfigKey {
                message: "unknown key".into(),
                key,
                line,
            });
        }
        lines.insert(key, line);
    }
    let e = Entries { values, lines };

    let algorithm: Algorithm = e
        .required_str("algorithm")?
        .parse()
        .map_err(|m: String| e.err("algorithm", m))?;
    let mut cfg = ExperimentConfig::synthetic(algorithm);

    cfg.dataset = match e.required_str("dataset")? {
        "idx-files" => {
            for k in ["synth.classes", "synth.dim", "synth.per_class", "synth.test_per_class", "synth.spread"] {
                if e.has(k) {
                    return Err(e.err(k, "only valid with dataset synth-blobs"));
                }
            }
            DatasetSource::IdxFiles {
                train_images: e.path("data.train_images", base)?,
                train_labels: e.path("data.train_labels", base)?,
                test_images: e.path("data.test_images", base)?,
                test_labels: e.path("data.test_labels", base)?,
            }
        }
        "synth-blobs" => {
            for k in ["data.train_images", "data.train_labels", "data.test_images", "data.test_labels"] {
                if e.has(k) {
                    return Err(e.err(k, "only valid with dataset idx-files"));
                }
            }
            let classes = e.u64("synth.classes", 10)? as usize;
            if classes < 2 {
                return Err(e.err("synth.classes", "need at least 2 classes"));
            }
            let spread = e.f64("synth.spread", 0.3)?;
            if spread.is_nan() || spread < 0.0 {
                return Err(e.err("synth.spread", "must be nonnegative"));
            }
            DatasetSource::SynthBlobs {
                classes,
                dim: e.positive("synth.dim", 20)? as usize,
                per_class: e.positive("synth.per_class", 600)? as usize,
                test_per_class: e.positive("synth.test_per_class", 100)? as usize,
                spread,
            }
        }
        other => return Err(e.err("dataset", format!("unknown dataset `{other}` (expected idx-files or synth-blobs)"))),
    };

    cfg.distribution = match e.str("distribution")?.unwrap_or("iid") {
        "iid" => {
            if e.has("partition.classes_per_client") {
                return Err(e.err("partition.classes_per_client", "only valid with distribution label-shards"));
            }
            Distribution::Iid
        }
        "label-shards" => Distribution::LabelShards {
            classes_per_client: e.positive("partition.classes_per_client", 2)? as usize,
        },
        other => return Err(e.err("distribution", format!("unknown distribution `{other}` (expected iid or label-shards)"))),
    };

    cfg.clients = e.positive("clients", 100)? as usize;

    cfg.model.kind = match e.str("model.kind")?.unwrap_or("softmax-regression") {
        "softmax-regression" => LearnerKind::SoftmaxRegression,
        "mlp" => LearnerKind::Mlp,
        other => return Err(e.err("model.kind", format!("unknown learner `{other}` (expected softmax-regression or mlp)"))),
    };
    let hidden = e.list("model.hidden", |v| v.as_u64().filter(|&h| h > 0).map(|h| h as usize), "positive integers")?;
    cfg.model.hidden = match (cfg.model.kind, hidden) {
        (LearnerKind::SoftmaxRegression, Some(h)) if !h.is_empty() => {
            return Err(e.err("model.hidden", "softmax regression has no hidden layers"));
        }
        (LearnerKind::SoftmaxRegression, _) => Vec::new(),
        (LearnerKind::Mlp, None) => vec![64],
        (LearnerKind::Mlp, Some(h)) if h.is_empty() => {
            return Err(e.err("model.hidden", "mlp needs at least one hidden layer"));
        }
        (LearnerKind::Mlp, Some(h)) => h,
    };

    let lr = e.f64("sgd.learning_rate", 0.01)?;
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(e.err("sgd.learning_rate", "must be positive"));
    }
    let local_epochs = e.positive("sgd.local_epochs", 1)?;
    cfg.sgd = SgdConfig {
        learning_rate: lr,
        batch_size: e.positive("sgd.batch_size", 5)? as usize,
        local_epochs: u32::try_from(local_epochs).map_err(|_| e.err("sgd.local_epochs", "too large"))?,
    };

    let factors = e.list("timing.factors", Value::as_f64, "numbers")?;
    let heterogeneity = match factors {
        Some(f) => {
            for k in ["timing.a_min", "timing.a_max"] {
                if e.has(k) {
                    return Err(e.err(k, "cannot be combined with timing.factors"));
                }
            }
            if f.len() != cfg.clients {
                return Err(e.err("timing.factors", format!("{} factors for {} clients", f.len(), cfg.clients)));
            }
            if f.iter().any(|a| !(*a >= 1.0 && a.is_finite())) {
                return Err(e.err("timing.factors", "factors must be at least 1"));
            }
            Heterogeneity::Explicit(f)
        }
        None => {
            let min = e.f64("timing.a_min", 1.0)?;
            if !(min >= 1.0 && min.is_finite()) {
                return Err(e.err("timing.a_min", "must be at least 1"));
            }
            let max = e.f64("timing.a_max", min)?;
            if !(max >= min && max.is_finite()) {
                return Err(e.err("timing.a_max", "must be at least timing.a_min"));
            }
            Heterogeneity::Uniform { min, max }
        }
    };
    cfg.timing = TimingConfig {
        tau_base: e.positive("timing.tau_base", 10)?,
        upload: e.positive("timing.upload", 4)?,
        download: e.positive("timing.download", 4)?,
        heterogeneity,
    };

    let gamma = e.f64("csmaafl.gamma", 0.2)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(e.err("csmaafl.gamma", format!("gamma must be positive, got {gamma}")));
    }
    let rho = e.f64("csmaafl.rho", 0.9)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(e.err("csmaafl.rho", format!("must lie in (0, 1), got {rho}")));
    }
    let mu_init = e.f64("csmaafl.mu_init", cfg.clients as f64)?;
    if !(mu_init > 0.0 && mu_init.is_finite()) {
        return Err(e.err("csmaafl.mu_init", "must be positive"));
    }
    let scheduler = match e.str("csmaafl.scheduler")?.unwrap_or("slot") {
        "slot" => SchedulerMode::Slot,
        "randomized-trunk" => SchedulerMode::RandomizedTrunk,
        other => return Err(e.err("csmaafl.scheduler", format!("unknown scheduler `{other}` (expected slot or randomized-trunk)"))),
    };
    let max_local_epochs = e.positive("csmaafl.max_local_epochs", 8)?;
    cfg.csmaafl = CsmaaflConfig {
        gamma,
        rho,
        mu_init,
        scheduler,
        max_local_epochs: u32::try_from(max_local_epochs).map_err(|_| e.err("csmaafl.max_local_epochs", "too large"))?,
    };

    cfg.baseline_schedule = e.list("afl_baseline.schedule", |v| v.as_u64().map(|c| c as usize), "client ids")?;
    if let Some(s) = &cfg.baseline_schedule {
        let mut sorted = s.clone();
        sorted.sort_unstable();
        if sorted != (0..cfg.clients).collect::<Vec<_>>() {
            return Err(e.err("afl_baseline.schedule", format!("must be a permutation of client ids 0..{}", cfg.clients)));
        }
    }

    cfg.seed = e.u64("seed", 0)?;
    cfg.relative_slots = e.positive("sim.relative_slots", 60)?;
    cfg.eval_every = e.positive("eval.every_rounds", 1)?;
    Ok(cfg)
}
