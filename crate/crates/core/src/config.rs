//! Experiment configuration files (TOML) and command-line overrides.
//!
//! A resolved config is built in three layers: built-in defaults, then the
//! file, then `key=value` overrides with dotted keys such as
//! `train.epochs=5` or `eval.snrs_db=[0.0, 10.0]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::data::{load_cifar10_binary, synthetic_dataset, ImageSet};
use crate::entropy::EntropySweepConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::model::ImageShape;
use crate::train::TrainConfig;

pub const CONFIG_SCHEMA: u32 = 1;

/// Dataset root used when a CIFAR-10 config leaves `dataset.path` unset.
pub const DATA_ROOT_ENV: &str = "MIMO_DJSCC_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Synthetic,
    Cifar10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub path: Option<PathBuf>,
    /// Synthetic image size; CIFAR-10 is always 3×32×32.
    pub image: ImageShape,
    /// Caps on the number of images used; 0 keeps everything.
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Synthetic,
            path: None,
            image: ImageShape::new(3, 8, 8),
            train_count: 1000,
            test_count: 100,
            seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn shape(&self) -> ImageShape {
        match self.kind {
            DatasetKind::Synthetic => self.image,
            DatasetKind::Cifar10 => ImageShape::new(3, 32, 32),
        }
    }

    pub fn root(&self) -> Option<PathBuf> {
        self.path.clone().or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
    }

    /// Returns `(train, test)`.
    pub fn load(&self) -> Result<(ImageSet, ImageSet)> {
        let (train, test) = match self.kind {
            DatasetKind::Synthetic => {
                if self.train_count == 0 || self.test_count == 0 {
                    return Err(Error::Config("synthetic dataset needs nonzero train_count and test_count".into()));
                }
                (
                    synthetic_dataset(self.train_count, self.image, self.seed),
                    synthetic_dataset(self.test_count, self.image, self.seed.wrapping_add(0x5eed)),
                )
            }
            DatasetKind::Cifar10 => {
                let root = self.root().ok_or_else(|| {
                    Error::Config(format!("cifar10 dataset needs dataset.path or ${DATA_ROOT_ENV}"))
                })?;
                load_cifar10_binary(&root)?
            }
        };
        Ok((cap(train, self.train_count), cap(test, self.test_count)))
    }
}

fn cap(set: ImageSet, count: usize) -> ImageSet {
    if count == 0 || count >= set.len() {
        set
    } else {
        set.take(count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub entropy: EntropySweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA,
            output_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            entropy: EntropySweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults, overlaid with `file` (if any), overlaid with `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match Value::try_from(ExperimentConfig::default()) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let parsed: Table = text
                .parse()
                .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message())))?;
            merge(&mut table, parsed);
        }
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let cfg: ExperimentConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::resolve(Some(path), &[])
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "config schema {} is not supported (expected {CONFIG_SCHEMA})",
                self.schema
            )));
        }
        if let Some(p) = &self.dataset.path {
            if !p.exists() {
                return Err(Error::Config(format!("dataset path {} does not exist", p.display())));
            }
        }
        self.train.validate(self.dataset.shape())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Applies `a.b.c=value`. The value is read as a TOML literal when possible
/// and as a bare string otherwise, so `train.scheme=parallel` works unquoted.
pub fn apply_override(table: &mut Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let (last, parents) = path.split_last().expect("non-empty");
    let mut node = table;
    for p in parents {
        node = match node.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override key {key:?} descends into a non-table"))),
        };
    }
    node.insert(last.to_string(), value);
    Ok(())
}
