//! Run configuration: defaults, upstream inheritance, TOML file, flags.
//!
//! A stage inherits every upstream section from the manifest of the stage
//! it reads, so flags given to `split` stick for `train`. A config file
//! or flag that contradicts an inherited section is caught by the
//! manifest hash check.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use repurpose_core::dataset::{BalanceConfig, DedupKey, SplitSpec};
use repurpose_core::labels::LabelVersion;
use repurpose_core::manifest::{config_hash, Manifest};
use repurpose_core::models::{CnnConfig, LstmConfig, ModelConfig, ModelKind};
use repurpose_core::report::DEFAULT_THRESHOLD;
use repurpose_core::train::TrainConfig;
use repurpose_core::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub sequences: Vec<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub drugvirus: Option<PathBuf>,
    /// Extra `raw,canonical` species aliases on top of the bundled table.
    pub aliases: Option<PathBuf>,
    /// Fail instead of dropping records whose species is not in the drug table.
    pub strict_species: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    pub version: LabelVersion,
    /// Demand exactly 126 drugs in the registry.
    pub require_full_registry: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub dedup: DedupKey,
    pub balance: BalanceConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKindField,
    pub cnn: CnnConfig,
    pub lstm: LstmConfig,
}

/// `ModelKind` with a default, so the section can be partially specified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelKindField(pub ModelKind);

impl Default for ModelKindField {
    fn default() -> Self {
        ModelKindField(ModelKind::Cnn)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// Defaults to 1e-2 for the CNN and 1e-3 for the LSTM.
    pub lr: Option<f64>,
    pub threshold: f64,
    pub shard_size: usize,
    pub workers: usize,
    pub class_weights: bool,
    pub runs: usize,
    /// Master seed of the training runs; the top-level seed when unset.
    pub seed: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: None,
            threshold: t.threshold,
            shard_size: t.shard_size,
            workers: t.workers,
            class_weights: t.class_weights,
            runs: 1,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Probability a drug needs to enter a candidate list.
    pub threshold: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection { threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarySection {
    /// Rows kept per species; all when unset.
    pub top_k: Option<usize>,
}

impl Default for SummarySection {
    fn default() -> Self {
        SummarySection { top_k: Some(20) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub inputs: InputPaths,
    pub labels: LabelSection,
    pub dataset: DatasetSection,
    pub split: SplitSpec,
    pub model: ModelSection,
    pub train: TrainSection,
    pub report: ReportSection,
    pub summary: SummarySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            inputs: InputPaths::default(),
            labels: LabelSection::default(),
            dataset: DatasetSection::default(),
            split: SplitSpec::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            report: ReportSection::default(),
            summary: SummarySection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    BuildDataset,
    Split,
    Train,
    Evaluate,
    Predict,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::BuildDataset => "build-dataset",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Predict => "predict",
            Stage::Report => "report",
        }
    }

    /// Top-level config keys that influence this stage's outputs.
    pub fn scope(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["inputs"],
            Stage::BuildDataset => &["inputs", "labels", "dataset", "seed"],
            Stage::Split => &["inputs", "labels", "dataset", "seed", "split"],
            Stage::Train | Stage::Evaluate => &["inputs", "labels", "dataset", "seed", "split", "model", "train"],
            Stage::Predict => &["inputs", "labels", "dataset", "seed", "split", "model", "train", "report"],
            Stage::Report => &["inputs", "labels", "dataset", "seed", "split", "model", "train", "report", "summary"],
        }
    }

    pub fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Ingest => None,
            Stage::BuildDataset => Some(Stage::Ingest),
            Stage::Split => Some(Stage::BuildDataset),
            Stage::Train => Some(Stage::Split),
            Stage::Evaluate | Stage::Predict => Some(Stage::Train),
            Stage::Report => Some(Stage::Predict),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn restrict(v: &Value, keys: &[&str]) -> Value {
    let mut out = serde_json::Map::new();
    if let Value::Object(m) = v {
        for k in keys {
            if let Some(x) = m.get(*k) {
                out.insert(k.to_string(), x.clone());
            }
        }
    }
    Value::Object(out)
}

pub fn read_toml(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::to_value(table)?)
}

impl RunConfig {
    /// Defaults, then the upstream manifest's sections, then the file.
    pub fn layered(upstream: Option<&Manifest>, upstream_stage: Option<Stage>, file: Option<&Value>) -> Result<Self> {
        let mut v = serde_json::to_value(RunConfig::default())?;
        if let (Some(m), Some(stage)) = (upstream, upstream_stage) {
            merge(&mut v, restrict(&m.config, stage.scope()));
        }
        if let Some(f) = file {
            merge(&mut v, f.clone());
        }
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_value(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }

    pub fn stage_hash(&self, stage: Stage) -> Result<String> {
        config_hash(&restrict(&self.to_value()?, stage.scope()))
    }

    pub fn balance(&self) -> BalanceConfig {
        BalanceConfig {
            seed: self.seed,
            ..self.dataset.balance.clone()
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            seed: self.seed,
            ..self.split.clone()
        }
    }

    pub fn train_seed(&self) -> u64 {
        self.train.seed.unwrap_or(self.seed)
    }

    /// The selected model's configuration with the given output width.
    pub fn model_config(&self, out_dim: usize) -> ModelConfig {
        let mut m = match self.model.kind.0 {
            ModelKind::Cnn => ModelConfig::Cnn(self.model.cnn.clone()),
            ModelKind::Lstm => ModelConfig::Lstm(self.model.lstm.clone()),
        };
        m.set_out_dim(out_dim);
        m
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr.unwrap_or(match self.model.kind.0 {
                ModelKind::Cnn => 1e-2,
                ModelKind::Lstm => 1e-3,
            }),
            seed,
            threshold: t.threshold,
            shard_size: t.shard_size,
            workers: t.workers,
            class_weights: t.class_weights,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_overrides_only_named_fields() {
        let file: Value = serde_json::to_value(toml::from_str::<toml::Value>("seed = 4\n[train]\nepochs = 3\n[model]\nkind = \"lstm\"\n").unwrap()).unwrap();
        let c = RunConfig::layered(None, None, Some(&file)).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.model.kind.0, ModelKind::Lstm);
        assert_eq!(c.train_config(1).lr, 1e-3);
        assert_eq!(c.split_spec().seed, 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file = serde_json::json!({"trian": {"epochs": 3}});
        assert!(RunConfig::layered(None, None, Some(&file)).is_err());
    }

    #[test]
    fn stage_hash_ignores_downstream_sections() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.train.epochs = 2;
        b.out_dir = "elsewhere".into();
        assert_eq!(a.stage_hash(Stage::Split).unwrap(), b.stage_hash(Stage::Split).unwrap());
        assert_ne!(a.stage_hash(Stage::Train).unwrap(), b.stage_hash(Stage::Train).unwrap());
    }
}
