//! Locating and preparing the train/test sets named by a config.

use std::env;
use std::path::{Path, PathBuf};

use neurogrow_core::data::{make_reconstruction, split_indices, synthetic_blobs, Dataset, SplitSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetKind, ExperimentConfig, Task};
use crate::error::{Error, Result};
use crate::idx::load_idx;

pub const DATA_ENV: &str = "NEUROGROW_DATA";

/// `--data-dir`, then `$NEUROGROW_DATA`, then `./data`.
pub fn resolve_data_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match env::var_os(DATA_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("data"),
    }
}

#[derive(Debug, Clone)]
pub struct DataBundle {
    pub train: Dataset,
    pub test: Dataset,
}

fn subdirs(kind: DatasetKind) -> &'static [&'static str] {
    match kind {
        DatasetKind::Mnist => &["mnist", "MNIST", "MNIST/raw"],
        DatasetKind::Fmnist => &["fashion-mnist", "fashion_mnist", "fmnist", "FashionMNIST", "FashionMNIST/raw"],
        DatasetKind::Blobs => &[],
    }
}

fn find_file(dir: &Path, stem: &str) -> Option<PathBuf> {
    [stem.to_string(), format!("{stem}.gz")].into_iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

/// `(images, labels)` paths for the `train` or `t10k` part.
pub fn locate_idx(kind: DatasetKind, root: &Path, part: &str) -> Result<(PathBuf, PathBuf)> {
    for sub in subdirs(kind) {
        let dir = root.join(sub);
        if let (Some(i), Some(l)) = (
            find_file(&dir, &format!("{part}-images-idx3-ubyte")),
            find_file(&dir, &format!("{part}-labels-idx1-ubyte")),
        ) {
            return Ok((i, l));
        }
    }
    Err(Error::Data(format!(
        "no {part} IDX files for {kind:?} under {} (looked in {:?}); run scripts/fetch_data.sh or set {DATA_ENV}",
        root.display(),
        subdirs(kind)
    )))
}

fn head(ds: Dataset, limit: Option<usize>) -> Dataset {
    match limit {
        Some(n) if n < ds.len() => ds.subset(&(0..n).collect::<Vec<_>>()),
        _ => ds,
    }
}

/// Loads (or generates) the train and test sets, applying the task and the
/// row limits.
pub fn load_bundle(cfg: &ExperimentConfig, data_dir: &Path) -> Result<DataBundle> {
    let (train, test) = match cfg.dataset {
        DatasetKind::Blobs => {
            let b = &cfg.blobs;
            let mut rng = ChaCha8Rng::seed_from_u64(b.seed);
            let all = synthetic_blobs(b.n_classes, 2 * b.n_per_class, b.dim, b.spread, &mut rng)?;
            let (tr, te) = split_indices(all.len(), SplitSpec { val_fraction: 0.5, seed: b.seed })?;
            (all.subset(&tr), all.subset(&te))
        }
        kind => {
            let (i, l) = locate_idx(kind, data_dir, "train")?;
            let train = load_idx(&i, &l, None)?;
            let (i, l) = locate_idx(kind, data_dir, "t10k")?;
            (train, load_idx(&i, &l, None)?)
        }
    };
    let (train, test) = (head(train, cfg.train_limit), head(test, cfg.test_limit));
    Ok(match cfg.task {
        Task::Classification => DataBundle { train, test },
        Task::Reconstruction => DataBundle { train: make_reconstruction(&train), test: make_reconstruction(&test) },
    })
}
