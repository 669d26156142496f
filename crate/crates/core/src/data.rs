//! In-memory datasets, seeded splitting and batching.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{input_err, Error, Result};
use crate::matrix::Matrix;

/// Supervision attached to a batch of inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Regression targets, one row per sample (reconstruction uses `X`).
    Dense(Matrix),
    /// Class indices in `0..n_classes`.
    Labels { labels: Vec<usize>, n_classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Dense(m) => m.rows(),
            Targets::Labels { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Dense(m) => Targets::Dense(m.select_rows(idx)),
            Targets::Labels { labels, n_classes } => {
                Targets::Labels { labels: idx.iter().map(|&i| labels[i]).collect(), n_classes: *n_classes }
            }
        }
    }
}

/// Borrowed `(X, targets)` pair.
#[derive(Debug, Clone, Copy)]
pub struct BatchRef<'a> {
    pub x: &'a Matrix,
    pub targets: &'a Targets,
}

impl BatchRef<'_> {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Copies the rows in `start..end` into an owned batch.
    pub fn slice(&self, start: usize, end: usize) -> Batch {
        let idx: Vec<usize> = (start..end).collect();
        Batch { x: self.x.select_rows(&idx), targets: self.targets.select(&idx) }
    }
}

/// Owned `(X, targets)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub targets: Targets,
}

impl Batch {
    pub fn view(&self) -> BatchRef<'_> {
        BatchRef { x: &self.x, targets: &self.targets }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    x: Matrix,
    targets: Targets,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix, targets: Targets) -> Result<Self> {
        if x.rows() != targets.len() {
            return Err(input_err!("{} samples but {} targets", x.rows(), targets.len()));
        }
        if let Targets::Labels { labels, n_classes } = &targets {
            if let Some(bad) = labels.iter().find(|&&l| l >= *n_classes) {
                return Err(input_err!("label {bad} outside 0..{n_classes}"));
            }
        }
        if let Targets::Dense(t) = &targets {
            if !t.is_finite() {
                return Err(input_err!("non-finite regression targets"));
            }
        }
        if !x.is_finite() {
            return Err(input_err!("non-finite features"));
        }
        Ok(Self { name: name.into(), x, targets })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Labels { n_classes, .. } => Some(*n_classes),
            Targets::Dense(_) => None,
        }
    }

    pub fn view(&self) -> BatchRef<'_> {
        BatchRef { x: &self.x, targets: &self.targets }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { name: self.name.clone(), x: self.x.select_rows(idx), targets: self.targets.select(idx) }
    }
}

/// Replaces the targets with the inputs themselves.
pub fn make_reconstruction(ds: &Dataset) -> Dataset {
    Dataset { name: ds.name.clone(), x: ds.x.clone(), targets: Targets::Dense(ds.x.clone()) }
}

/// Gaussian clusters around random centers, min-max rescaled per feature
/// into `[0, 1]`. Rows are ordered by class.
pub fn synthetic_blobs<R: Rng + ?Sized>(
    n_classes: usize,
    n_per_class: usize,
    dim: usize,
    spread: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if n_classes == 0 || n_per_class == 0 || dim == 0 {
        return Err(input_err!("blob counts must be positive"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(input_err!("spread must be finite and non-negative"));
    }
    let centers = Matrix::from_fn(n_classes, dim, |_, _| rng.random::<f64>());
    let n = n_classes * n_per_class;
    let mut x = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..n_classes {
        for i in 0..n_per_class {
            let row = x.row_mut(class * n_per_class + i);
            for (c, v) in row.iter_mut().enumerate() {
                let noise: f64 = StandardNormal.sample(rng);
                *v = centers.get(class, c) + spread * noise;
            }
            labels.push(class);
        }
    }
    for c in 0..dim {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            let v = x.get(r, c);
            (lo.min(v), hi.max(v))
        });
        let range = hi - lo;
        for r in 0..n {
            let v = if range > 0.0 { (x.get(r, c) - lo) / range } else { 0.0 };
            x.set(r, c, v.clamp(0.0, 1.0));
        }
    }
    Dataset::new("blobs", x, Targets::Labels { labels, n_classes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub val_fraction: f64,
    pub seed: u64,
}

/// Seeded permutation, then the first `round(n * val_fraction)` rows become
/// the validation part.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(ds.len(), spec)?;
    Ok((ds.subset(&train), ds.subset(&val)))
}

pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.val_fraction > 0.0 && spec.val_fraction < 1.0) {
        return Err(input_err!("validation fraction {} not in (0, 1)", spec.val_fraction));
    }
    let n_val = libm::round(n as f64 * spec.val_fraction) as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::Input(alloc::format!("splitting {n} rows at {} leaves an empty part", spec.val_fraction)));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let val = perm[..n_val].to_vec();
    let train = perm[n_val..].to_vec();
    Ok((train, val))
}

/// One epoch of shuffled mini-batches. The last batch may be short.
pub fn batches<'a, R: Rng + ?Sized>(ds: BatchRef<'a>, batch_size: usize, rng: &mut R) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(input_err!("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(rng);
    Ok(Batches { data: ds, order, batch_size, pos: 0 })
}

pub struct Batches<'a> {
    data: BatchRef<'a>,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Batches<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        Some(Batch { x: self.data.x.select_rows(idx), targets: self.data.targets.select(idx) })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}
