//! Dataset ingestion (MNIST IDX binaries), preprocessing, splitting,
//! batching and confusion-matrix evaluation.

use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("bad IDX magic {0:#06x}")]
    BadMagic(u32),
    #[error("IDX payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("label {label} outside [0, {classes})")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("fractions must be positive and sum to 1")]
    BadFractions,
    #[error("io: {0}")]
    Io(String),
}

pub type DataResult<T> = Result<T, DataError>;

/// Decoded payload of one IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// `[n × rows × cols]`, pixel bytes lifted to reals in `[0, 255]`.
    Images(Tensor),
    /// Class indices.
    Labels(Vec<u8>),
}

const IDX_LABEL_MAGIC: u32 = 2049;
const IDX_IMAGE_MAGIC: u32 = 2051;

/// Parses an IDX byte buffer: big-endian magic 2051 (3-D images) or 2049
/// (1-D labels), big-endian u32 extents, raw `u8` payload.
pub fn parse_idx(bytes: &[u8]) -> DataResult<IdxData> {
    let read_u32 = |at: usize| -> DataResult<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or(DataError::Truncated {
                expected: at + 4,
                found: bytes.len(),
            })
    };
    let magic = read_u32(0)?;
    match magic {
        IDX_LABEL_MAGIC => {
            let n = read_u32(4)? as usize;
            let payload = bytes.get(8..8 + n).ok_or(DataError::Truncated {
                expected: 8 + n,
                found: bytes.len(),
            })?;
            Ok(IdxData::Labels(payload.to_vec()))
        }
        IDX_IMAGE_MAGIC => {
            let n = read_u32(4)? as usize;
            let rows = read_u32(8)? as usize;
            let cols = read_u32(12)? as usize;
            let len = n * rows * cols;
            let payload = bytes.get(16..16 + len).ok_or(DataError::Truncated {
                expected: 16 + len,
                found: bytes.len(),
            })?;
            let data: Vec<f64> = payload.iter().map(|&b| f64::from(b)).collect();
            Ok(IdxData::Images(
                Tensor::new([n, rows, cols], data).expect("length checked"),
            ))
        }
        other => Err(DataError::BadMagic(other)),
    }
}

pub fn load_idx_images(path: &Path) -> DataResult<Tensor> {
    let bytes =
        std::fs::read(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    match parse_idx(&bytes)? {
        IdxData::Images(t) => Ok(t),
        IdxData::Labels(_) => Err(DataError::BadMagic(IDX_LABEL_MAGIC)),
    }
}

pub fn load_idx_labels(path: &Path) -> DataResult<Vec<u8>> {
    let bytes =
        std::fs::read(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    match parse_idx(&bytes)? {
        IdxData::Labels(l) => Ok(l),
        IdxData::Images(_) => Err(DataError::BadMagic(IDX_IMAGE_MAGIC)),
    }
}

/// Per-sample standardisation: each row is shifted to mean 0 and, where its
/// spread allows, scaled to standard deviation 1. Rows with zero spread are
/// only centred.
pub fn standardize(x: &Tensor) -> Tensor {
    assert_eq!(x.shape().len(), 2, "standardize expects [n × d]");
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let mut out = x.clone();
    for i in 0..n {
        let row = x.row(i);
        let mean: f64 = row.iter().sum::<f64>() / d as f64;
        let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let std = var.sqrt();
        for j in 0..d {
            let centred = row[j] - mean;
            out.set2(i, j, if std > 0.0 { centred / std } else { centred });
        }
    }
    out
}

/// One-hot matrix `[n × classes]` with a single 1 per row.
pub fn one_hot(labels: &[usize], classes: usize) -> DataResult<Tensor> {
    let mut t = Tensor::zeros([labels.len(), classes]);
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(DataError::LabelOutOfRange { label, classes });
        }
        t.set2(i, label, 1.0);
    }
    Ok(t)
}

/// Labelled feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[n × d]`.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> DataResult<Self> {
        assert_eq!(features.shape().len(), 2, "features must be [n × d]");
        if features.shape()[0] != labels.len() {
            return Err(DataError::Truncated {
                expected: features.shape()[0],
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(DataError::LabelOutOfRange {
                label: bad,
                classes,
            });
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }

    /// One-hot targets for the whole set.
    pub fn one_hot_targets(&self) -> Tensor {
        one_hot(&self.labels, self.classes).expect("labels validated")
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        let d = self.feature_dim();
        let mut features = Tensor::zeros([idx.len(), d]);
        let mut labels = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            for j in 0..d {
                features.set2(row, j, self.features.at2(i, j));
            }
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            classes: self.classes,
        }
    }
}

/// Disjoint, exhaustive partition of a dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Shuffled split; validation and test sizes round to nearest, the
/// remainder goes to train.
pub fn split_dataset(data: &Dataset, fractions: [f64; 3], rng: &mut Rng) -> DataResult<Split> {
    if data.is_empty() {
        return Err(DataError::Empty);
    }
    if fractions.iter().any(|&f| f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions);
    }
    let n = data.len();
    let n_val = (fractions[1] * n as f64).round() as usize;
    let n_test = (fractions[2] * n as f64).round() as usize;
    let n_train = n - n_val - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(Split {
        train: data.subset(&order[..n_train]),
        validation: data.subset(&order[n_train..n_train + n_val]),
        test: data.subset(&order[n_train + n_val..]),
    })
}

/// Mini-batch index iterator visiting each sample exactly once per epoch.
pub struct Batches {
    order: Vec<usize>,
    batch: usize,
    at: usize,
}

impl Batches {
    pub fn new(n: usize, batch: usize, rng: &mut Rng) -> Self {
        assert!(batch > 0);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Batches {
            order,
            batch,
            at: 0,
        }
    }
}

impl Iterator for Batches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.at >= self.order.len() {
            return None;
        }
        let end = (self.at + self.batch).min(self.order.len());
        let chunk = self.order[self.at..end].to_vec();
        self.at = end;
        Some(chunk)
    }
}

/// Row-normalised histogram of predictions: `counts[pred][true]`, each row
/// scaled to sum 1. Rows with no predictions stay all-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub rows: Vec<Vec<f64>>,
}

/// Confusion matrix plus accuracy, the mean of the normalised diagonal over
/// rows with support.
pub fn confusion_and_accuracy(
    preds: &[usize],
    labels: &[usize],
    classes: usize,
) -> DataResult<(ConfusionMatrix, f64)> {
    assert_eq!(preds.len(), labels.len(), "prediction/label lengths");
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= classes {
            return Err(DataError::LabelOutOfRange { label: p, classes });
        }
        if t >= classes {
            return Err(DataError::LabelOutOfRange { label: t, classes });
        }
        counts[p][t] += 1;
    }
    let mut rows = vec![vec![0.0; classes]; classes];
    let mut diag_sum = 0.0;
    let mut supported = 0usize;
    for (k, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total > 0 {
            for (j, &c) in row.iter().enumerate() {
                rows[k][j] = c as f64 / total as f64;
            }
            diag_sum += rows[k][k];
            supported += 1;
        }
    }
    let accuracy = if supported > 0 {
        diag_sum / supported as f64
    } else {
        0.0
    };
    Ok((ConfusionMatrix { rows }, accuracy))
}

/// Plain fraction of correct predictions, reported alongside the
/// row-mean accuracy.
pub fn fraction_correct(preds: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(preds.len(), labels.len());
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(labels).filter(|(p, t)| p == t).count();
    hits as f64 / preds.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn image_fixture(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&2051u32.to_be_bytes());
        b.extend_from_slice(&(n as u32).to_be_bytes());
        b.extend_from_slice(&(rows as u32).to_be_bytes());
        b.extend_from_slice(&(cols as u32).to_be_bytes());
        b.extend_from_slice(pixels);
        b
    }

    fn label_fixture(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&2049u32.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn parses_minimal_image_file() {
        let bytes = image_fixture(1, 1, 1, &[255]);
        match parse_idx(&bytes).unwrap() {
            IdxData::Images(t) => {
                assert_eq!(t.shape(), &[1, 1, 1]);
                assert_eq!(t.data(), &[255.0]);
            }
            other => panic!("expected images, got {other:?}"),
        }
    }

    #[test]
    fn parses_label_file() {
        let bytes = label_fixture(&[0, 1, 2]);
        assert_eq!(parse_idx(&bytes).unwrap(), IdxData::Labels(vec![0, 1, 2]));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = label_fixture(&[0, 1, 2]);
        bytes[0..4].copy_from_slice(&9999u32.to_be_bytes());
        assert!(matches!(parse_idx(&bytes), Err(DataError::BadMagic(9999))));

        let full = image_fixture(2, 2, 2, &[0; 8]);
        assert!(matches!(
            parse_idx(&full[..full.len() - 1]),
            Err(DataError::Truncated { .. })
        ));
    }

    #[test]
    fn standardize_handles_constant_rows() {
        let x = Tensor::new([2, 2], vec![5.0, 5.0, 0.0, 2.0]).unwrap();
        let s = standardize(&x);
        assert_eq!(s.row(0), &[0.0, 0.0]);
        assert_eq!(s.row(1), &[-1.0, 1.0]);
    }

    #[test]
    fn standardize_gives_zero_mean_unit_std() {
        let mut rng = crate::rng::seeded(120);
        let mut x = Tensor::zeros([20, 50]);
        for v in x.data_mut() {
            *v = rng.random_range(-4.0..9.0);
        }
        let s = standardize(&x);
        for i in 0..20 {
            let row = s.row(i);
            let mean: f64 = row.iter().sum::<f64>() / 50.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() <= 1e-10);
            assert!((var.sqrt() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn one_hot_matches_worked_matrix() {
        // classes A→0, B→1, C→2; labels [A, C, B, A]
        let t = one_hot(&[0, 2, 1, 0], 3).unwrap();
        let want = [
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
        ];
        for (i, row) in want.iter().enumerate() {
            assert_eq!(t.row(i), row);
        }
    }

    #[test]
    fn one_hot_single_class_and_round_trip() {
        let col = one_hot(&[0, 0, 0], 1).unwrap();
        assert!(col.data().iter().all(|&v| v == 1.0));

        let mut rng = crate::rng::seeded(121);
        let labels: Vec<usize> = (0..100).map(|_| rng.random_range(0..7)).collect();
        let t = one_hot(&labels, 7).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            let argmax = t
                .row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, l);
        }
        assert!(one_hot(&[7], 7).is_err());
    }

    fn toy_dataset(n: usize, classes: usize, rng: &mut Rng) -> Dataset {
        let mut features = Tensor::zeros([n, 3]);
        for v in features.data_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        Dataset::new(features, labels, classes).unwrap()
    }

    #[test]
    fn split_sizes_80_10_10() {
        let mut rng = crate::rng::seeded(122);
        let data = toy_dataset(10_000, 10, &mut rng);
        let split = split_dataset(&data, [0.8, 0.1, 0.1], &mut rng).unwrap();
        assert_eq!(split.train.len(), 8000);
        assert_eq!(split.validation.len(), 1000);
        assert_eq!(split.test.len(), 1000);
    }

    #[test]
    fn split_everything_to_train() {
        let mut rng = crate::rng::seeded(123);
        let data = toy_dataset(57, 3, &mut rng);
        let split = split_dataset(&data, [1.0, 0.0, 0.0], &mut rng).unwrap();
        assert_eq!(split.train.len(), 57);
        assert!(split.validation.is_empty() && split.test.is_empty());
    }

    #[test]
    fn split_is_a_partition_of_the_multiset() {
        let mut rng = crate::rng::seeded(124);
        let data = toy_dataset(101, 4, &mut rng);
        let split = split_dataset(&data, [0.6, 0.2, 0.2], &mut rng).unwrap();
        let mut rows: Vec<Vec<u64>> = Vec::new();
        for part in [&split.train, &split.validation, &split.test] {
            for i in 0..part.len() {
                let mut row: Vec<u64> =
                    part.features.row(i).iter().map(|v| v.to_bits()).collect();
                row.push(part.labels[i] as u64);
                rows.push(row);
            }
        }
        let mut original: Vec<Vec<u64>> = (0..data.len())
            .map(|i| {
                let mut row: Vec<u64> =
                    data.features.row(i).iter().map(|v| v.to_bits()).collect();
                row.push(data.labels[i] as u64);
                row
            })
            .collect();
        rows.sort();
        original.sort();
        assert_eq!(rows, original);
    }

    #[test]
    fn batches_visit_every_sample_once() {
        let mut rng = crate::rng::seeded(125);
        for batch in [1, 3, 7, 26, 100] {
            let mut seen = vec![0usize; 26];
            for chunk in Batches::new(26, batch, &mut rng) {
                for i in chunk {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1), "batch size {batch}");
        }
    }

    #[test]
    fn perfect_predictions_make_identity_confusion() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let (cm, acc) = confusion_and_accuracy(&labels, &labels, 3).unwrap();
        assert_eq!(acc, 1.0);
        for (k, row) in cm.rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if j == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn degenerate_predictor_scores_half_on_balanced_binary() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let preds = vec![0usize; 100];
        let (cm, acc) = confusion_and_accuracy(&preds, &labels, 2).unwrap();
        assert_eq!(acc, 0.5);
        // unsupported row stays all-zero
        assert!(cm.rows[1].iter().all(|&v| v == 0.0));
        assert_eq!(fraction_correct(&preds, &labels), 0.5);
    }

    #[test]
    fn random_predictions_score_near_chance() {
        let mut rng = crate::rng::seeded(126);
        let n = 100_000;
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let (_, acc) = confusion_and_accuracy(&preds, &labels, 10).unwrap();
        assert!((acc - 0.1).abs() <= 0.02, "accuracy {acc}");
    }

    #[test]
    fn confusion_rejects_out_of_range() {
        assert!(confusion_and_accuracy(&[3], &[0], 3).is_err());
        assert!(confusion_and_accuracy(&[0], &[3], 3).is_err());
    }
}
