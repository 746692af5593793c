//! Synthetic classification data: Gaussian blobs, stratified splits and
//! epoch-seeded mini-batches.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, seeded};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset parameter: {0}")]
    InvalidParameter(String),
    #[error("class {class} has {count} example(s); a split needs at least 2")]
    ClassTooSmall { class: usize, count: usize },
    #[error("malformed dataset file at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major feature matrix with one class label per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, feature_dim: usize, labels: Vec<usize>, class_count: usize) -> Result<Self, DatasetError> {
        if feature_dim == 0 || class_count == 0 {
            return Err(DatasetError::InvalidParameter("feature_dim and class_count must be positive".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(DatasetError::InvalidParameter(format!(
                "{} feature values for {} rows of width {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DatasetError::InvalidParameter(format!("label {l} outside 0..{class_count}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::InvalidParameter("non-finite feature value".into()));
        }
        Ok(Dataset { features, feature_dim, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            feature_dim: self.feature_dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Writes the dataset as comma-separated text. The first line is
    /// `feature_dim,class_count`; every following line is
    /// `label,x_0,...,x_{d-1}` with reals in shortest round-trip form.
    pub fn write_delimited<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record([self.feature_dim.to_string(), self.class_count.to_string()])?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(self.feature_dim + 1);
            rec.push(self.labels[i].to_string());
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_delimited<R: Read>(input: R) -> Result<Self, DatasetError> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
        let mut records = r.records();
        let header = records.next().ok_or(DatasetError::Format { line: 1, msg: "missing header".into() })??;
        let parse_usize = |s: &str, line: usize| {
            s.trim().parse::<usize>().map_err(|e| DatasetError::Format { line, msg: e.to_string() })
        };
        if header.len() != 2 {
            return Err(DatasetError::Format { line: 1, msg: "header must be feature_dim,class_count".into() });
        }
        let feature_dim = parse_usize(&header[0], 1)?;
        let class_count = parse_usize(&header[1], 1)?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (n, rec) in records.enumerate() {
            let rec = rec?;
            let line = n + 2;
            if rec.len() != feature_dim + 1 {
                return Err(DatasetError::Format { line, msg: format!("expected {} fields", feature_dim + 1) });
            }
            labels.push(parse_usize(&rec[0], line)?);
            for field in rec.iter().skip(1) {
                features.push(
                    field.trim().parse::<f64>().map_err(|e| DatasetError::Format { line, msg: e.to_string() })?,
                );
            }
        }
        Dataset::new(features, feature_dim, labels, class_count)
    }
}

/// `num_classes` Gaussian clusters of `per_class` points each. Cluster
/// centres are standard-normal vectors; points add isotropic noise with
/// standard deviation `spread`. Labels are balanced and grouped by class.
pub fn make_blobs(
    num_classes: usize,
    per_class: usize,
    feature_dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if num_classes < 2 || per_class < 1 || feature_dim < 2 || !(spread > 0.0 && spread.is_finite()) {
        return Err(DatasetError::InvalidParameter(format!(
            "make_blobs needs classes >= 2, per_class >= 1, feature_dim >= 2, spread > 0 \
             (got {num_classes}, {per_class}, {feature_dim}, {spread})"
        )));
    }
    let mut rng = seeded(seed);
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut features = Vec::with_capacity(num_classes * per_class * feature_dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            features.extend(center.iter().map(|&c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c + spread * z
            }));
            labels.push(class);
        }
    }
    Dataset::new(features, feature_dim, labels, num_classes)
}

/// Class-stratified split. Each class contributes `round(fraction * count)`
/// examples to the training side, clamped so both sides get at least one.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidParameter(format!("train_fraction {train_fraction} not in (0, 1)")));
    }
    let mut rng = seeded(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for class in 0..dataset.class_count() {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == class).collect();
        if members.len() < 2 {
            return Err(DatasetError::ClassTooSmall { class, count: members.len() });
        }
        members.shuffle(&mut rng);
        let n_train = ((train_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        train_idx.extend_from_slice(&members[..n_train]);
        val_idx.extend_from_slice(&members[n_train..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((dataset.subset(&train_idx), dataset.subset(&val_idx)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    /// Dataset row of each batch entry.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The whole dataset as a single batch in stored order.
pub fn full_batch(dataset: &Dataset) -> Batch {
    Batch {
        features: dataset.features.clone(),
        labels: dataset.labels.clone(),
        indices: (0..dataset.len()).collect(),
    }
}

/// Mini-batches of one epoch over a permutation seeded by
/// `(plan.seed, epoch)`. The final batch may be short.
pub fn batches(dataset: &Dataset, plan: BatchPlan, epoch: usize) -> Vec<Batch> {
    assert!(plan.batch_size >= 1, "batch_size must be positive");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut seeded(derive_seed(plan.seed, &[epoch as u64])));
    order
        .chunks(plan.batch_size)
        .map(|chunk| {
            let sub = dataset.subset(chunk);
            Batch { features: sub.features, labels: sub.labels, indices: chunk.to_vec() }
        })
        .collect()
}
