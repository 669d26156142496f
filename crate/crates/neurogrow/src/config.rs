//! Experiment configuration read from TOML.
//!
//! ```toml
//! dataset = "mnist"            # mnist | fmnist | blobs
//! task = "reconstruction"      # reconstruction | classification
//! hidden = [16]
//! n_stages = 7
//! growth_fraction = 0.3
//! extender = "swe"             # swe | kaiming (alias random) | frobenius | firefly_lite
//! distributor = "single_layer" # svod | ras | single_layer
//! seeds = [0, 1, 2]
//! ```
//!
//! Every other key has a default; see [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use neurogrow_core::growth::{DistributorKind, ExtenderKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    #[serde(alias = "fashion_mnist")]
    Fmnist,
    Blobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reconstruction,
    Classification,
}

/// A count, or the word `"auto"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountOrAuto {
    Count(usize),
    Word(String),
}

impl CountOrAuto {
    pub fn count(&self) -> Option<usize> {
        match self {
            CountOrAuto::Count(n) => Some(*n),
            CountOrAuto::Word(_) => None,
        }
    }

    fn check(&self, key: &str) -> Result<()> {
        match self {
            CountOrAuto::Count(0) => Err(Error::Config(format!("{key} must be at least 1"))),
            CountOrAuto::Word(w) if w != "auto" => {
                Err(Error::Config(format!("{key} must be a count or \"auto\", got {w:?}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobsConfig {
    pub n_classes: usize,
    /// Per class, for each of the train and test sets.
    pub n_per_class: usize,
    pub dim: usize,
    pub spread: f64,
    /// Seed of the generator; the data does not change with the run seed.
    pub seed: u64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self { n_classes: 3, n_per_class: 100, dim: 8, spread: 0.15, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InactivityConfig {
    pub extenders: Vec<ExtenderKind>,
    /// Epochs trained after doubling the hidden layer.
    pub extra_epochs: usize,
    /// `"train"` or `"test"`: the set on which activity is audited.
    pub split: String,
}

impl Default for InactivityConfig {
    fn default() -> Self {
        Self {
            extenders: vec![ExtenderKind::Swe, ExtenderKind::Kaiming, ExtenderKind::Frobenius],
            extra_epochs: 5,
            split: "train".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub task: Task,
    pub hidden: Vec<usize>,
    pub n_stages: usize,
    pub growth_fraction: f64,
    pub extender: ExtenderKind,
    pub distributor: DistributorKind,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs_per_stage: usize,
    pub early_stop_patience: usize,
    /// Probes per hidden layer for voting; `"auto"` uses the stage budget
    /// with a floor of 8.
    pub probes_per_layer: CountOrAuto,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub val_fraction: f64,
    /// Rows of the training set used by the shared-weights adjustment pass;
    /// `"auto"` uses all of them.
    pub swe_adjust_rows: CountOrAuto,
    pub pool_factor: usize,
    pub candidate_epochs: usize,
    /// Keep only the first rows of the training/test files.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub blobs: BlobsConfig,
    pub inactivity: InactivityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            task: Task::Classification,
            hidden: vec![16],
            n_stages: 7,
            growth_fraction: 0.3,
            extender: ExtenderKind::Swe,
            distributor: DistributorKind::SingleLayer,
            lr: 1e-3,
            batch_size: 128,
            max_epochs_per_stage: 100,
            early_stop_patience: 5,
            probes_per_layer: CountOrAuto::Word("auto".into()),
            seeds: vec![0],
            out_dir: PathBuf::from("runs/default"),
            val_fraction: 0.1,
            swe_adjust_rows: CountOrAuto::Word("auto".into()),
            pool_factor: 5,
            candidate_epochs: 1,
            train_limit: None,
            test_limit: None,
            blobs: BlobsConfig::default(),
            inactivity: InactivityConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.growth_fraction > 0.0 && self.growth_fraction.is_finite()) {
            return bad(format!("growth_fraction must be positive, got {}", self.growth_fraction));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden must list at least one positive width".into());
        }
        if self.distributor == DistributorKind::SingleLayer && self.hidden.len() != 1 {
            return bad(format!("single_layer distribution needs one hidden layer, got {}", self.hidden.len()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.max_epochs_per_stage == 0 || self.early_stop_patience == 0 {
            return bad("batch_size, max_epochs_per_stage and early_stop_patience must be positive".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction));
        }
        if self.pool_factor == 0 {
            return bad("pool_factor must be at least 1".into());
        }
        if self.train_limit == Some(0) || self.test_limit == Some(0) {
            return bad("train_limit and test_limit must be positive".into());
        }
        self.probes_per_layer.check("probes_per_layer")?;
        self.swe_adjust_rows.check("swe_adjust_rows")?;
        let b = &self.blobs;
        if b.n_classes < 2 || b.n_per_class == 0 || b.dim == 0 || !(b.spread >= 0.0 && b.spread.is_finite()) {
            return bad("blobs needs n_classes >= 2, positive n_per_class and dim, and a finite spread".into());
        }
        if self.dataset == DatasetKind::Blobs && self.task == Task::Reconstruction && b.dim < 2 {
            return bad("blobs reconstruction needs dim >= 2".into());
        }
        if !matches!(self.inactivity.split.as_str(), "train" | "test") {
            return bad(format!("inactivity.split must be \"train\" or \"test\", got {:?}", self.inactivity.split));
        }
        if self.inactivity.extenders.is_empty() {
            return bad("inactivity.extenders must not be empty".into());
        }
        Ok(())
    }

    /// Checks specific to the inactivity study.
    pub fn validate_inactivity(&self) -> Result<()> {
        if self.hidden.len() != 1 {
            return Err(Error::Config(format!(
                "the inactivity study needs one hidden layer, got {}",
                self.hidden.len()
            )));
        }
        Ok(())
    }

    /// SHA-256 over the settings that affect results (everything but the
    /// output directory).
    pub fn hash(&self) -> String {
        let mut copy = self.clone();
        copy.out_dir = PathBuf::new();
        let json = serde_json::to_string(&copy).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
