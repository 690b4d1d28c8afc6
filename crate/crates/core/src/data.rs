//! Datasets, synthetic generation, CSV loading and client partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, shape, LoadError, Result};
use crate::model::Batch;
use crate::rng::{stream, TAG_BLOBS, TAG_PARTITION};

/// Image totals of the COVIDx release: all / train / test.
pub const COVIDX_TOTAL: usize = 15_282;
pub const COVIDX_TRAIN: usize = 13_703;
pub const COVIDX_TEST: usize = 1_579;

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(shape("dataset must contain at least one row"));
        }
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(shape(format!(
                "{} feature values do not form {} rows of width {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(config("num_classes must be at least 2"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(shape(format!("label {l} out of range for {num_classes} classes")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(shape("feature values must be finite"));
        }
        Ok(Self {
            features,
            labels,
            input_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Copies the given rows, in order, into a training batch.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(shape(format!("row index {i} out of range for {} rows", self.len())));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(features, labels, self.input_dim)
    }

    /// The whole dataset as one batch.
    pub fn as_batch(&self) -> Batch {
        Batch::new(self.features.clone(), self.labels.clone(), self.input_dim)
            .expect("dataset invariants imply a valid batch")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(self.labels.iter().copied(), self.num_classes)
    }
}

/// One client's private slice of a dataset, as ascending row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub owner_id: usize,
    pub indices: Vec<usize>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn class_counts(&self, dataset: &LabeledDataset) -> Vec<usize> {
        class_counts(
            self.indices.iter().map(|&i| dataset.labels[i]),
            dataset.num_classes,
        )
    }
}

/// Histogram of labels over `num_classes` bins. Labels must be in range.
pub fn class_counts(labels: impl IntoIterator<Item = usize>, num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for l in labels {
        counts[l] += 1;
    }
    counts
}

/// Checks that shards are owned by `0..K` in order and that their index
/// sets are pairwise disjoint with union `0..n`.
pub fn check_disjoint_cover(shards: &[Shard], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for (k, shard) in shards.iter().enumerate() {
        if shard.owner_id != k {
            return Err(config(format!("shard {k} has owner_id {}", shard.owner_id)));
        }
        for &i in &shard.indices {
            if i >= n {
                return Err(config(format!("shard {k} references row {i} beyond {n} rows")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(config(format!("row {i} appears in more than one shard")));
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(config(format!("row {i} is not assigned to any shard")));
    }
    Ok(())
}

/// Parameters of the Gaussian-blob generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobsSpec {
    pub n: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub class_weights: Vec<f64>,
    pub separation: f64,
    pub seed: u64,
}

/// Class means for the blob generator.
///
/// With `input_dim >= num_classes` class `c` sits at `separation / sqrt(2)`
/// along axis `c`, so every pair of means is exactly `separation` apart.
/// Otherwise the means are spaced `separation` apart along axis 0.
pub fn blob_means(num_classes: usize, input_dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|c| {
            let mut mean = vec![0.0; input_dim];
            if input_dim >= num_classes {
                mean[c] = separation / std::f64::consts::SQRT_2;
            } else {
                mean[0] = separation * c as f64;
            }
            mean
        })
        .collect()
}

/// Gaussian clusters with unit covariance around [`blob_means`]; labels are
/// drawn independently from `class_weights`.
pub fn make_blobs(spec: &BlobsSpec) -> Result<LabeledDataset> {
    let BlobsSpec {
        n,
        num_classes,
        input_dim,
        ref class_weights,
        separation,
        seed,
    } = *spec;
    if n == 0 {
        return Err(config("n must be positive"));
    }
    if input_dim == 0 {
        return Err(config("input_dim must be positive"));
    }
    if num_classes < 2 {
        return Err(config("num_classes must be at least 2"));
    }
    if class_weights.len() != num_classes {
        return Err(config(format!(
            "class_weights has {} entries for {num_classes} classes",
            class_weights.len()
        )));
    }
    if class_weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(config("class_weights must be non-negative"));
    }
    let total: f64 = class_weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(config(format!("class_weights sum to {total}, expected 1")));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(config("separation must be positive"));
    }

    let means = blob_means(num_classes, input_dim, separation);
    let picker = WeightedIndex::new(class_weights).map_err(|e| config(format!("class_weights: {e}")))?;
    let mut rng = stream(seed, &[TAG_BLOBS]);
    let mut features = Vec::with_capacity(n * input_dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = picker.sample(&mut rng);
        labels.push(c);
        for m in &means[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(m + z);
        }
    }
    LabeledDataset::new(features, labels, input_dim, num_classes)
}

/// Reads `f1,...,fd,label` rows: UTF-8, comma separated, no header.
/// Blank lines are skipped; reported row numbers are 1-based line numbers.
pub fn load_csv(path: impl AsRef<Path>, num_classes: usize) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, num_classes)
}

pub fn parse_csv(text: &str, num_classes: usize) -> Result<LabeledDataset> {
    let mut width = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let row = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() < 2 {
            return Err(LoadError::TooFewFields { row }.into());
        }
        if fields.len() != expected {
            return Err(LoadError::RaggedRow {
                row,
                expected,
                found: fields.len(),
            }
            .into());
        }
        let (label_field, feature_fields) = fields.split_last().expect("at least two fields");
        for (j, f) in feature_fields.iter().enumerate() {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => {
                    return Err(LoadError::BadValue {
                        row,
                        field: j + 1,
                        value: f.to_string(),
                    }
                    .into())
                }
            }
        }
        match label_field.parse::<usize>() {
            Ok(l) if l < num_classes => labels.push(l),
            _ => {
                return Err(LoadError::BadLabel {
                    row,
                    label: label_field.to_string(),
                    num_classes,
                }
                .into())
            }
        }
    }
    let Some(width) = width else {
        return Err(LoadError::NoRows.into());
    };
    LabeledDataset::new(features, labels, width - 1, num_classes)
}

fn finish(mut shards: Vec<Vec<usize>>) -> Vec<Shard> {
    shards
        .iter_mut()
        .for_each(|indices| indices.sort_unstable());
    shards
        .into_iter()
        .enumerate()
        .map(|(owner_id, indices)| Shard { owner_id, indices })
        .collect()
}

/// Shuffles rows by `seed` and deals them round-robin to `k` clients.
pub fn partition_iid(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Shard>> {
    let n = dataset.len();
    if k == 0 {
        return Err(config("num_agents must be at least 1"));
    }
    if k > n {
        return Err(config(format!("cannot split {n} rows across {k} clients")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &[TAG_PARTITION, 0]));
    let mut shards = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, row) in order.into_iter().enumerate() {
        shards[pos % k].push(row);
    }
    Ok(finish(shards))
}

/// Non-IID split: each class's rows are divided among clients in
/// proportions drawn from a symmetric Dirichlet(`alpha`).
///
/// Any client left empty receives one row taken from the currently largest
/// shard (lowest owner id on ties).
pub fn partition_label_skew(
    dataset: &LabeledDataset,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Shard>> {
    let n = dataset.len();
    if k == 0 {
        return Err(config("num_agents must be at least 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(config(format!("alpha must be positive, got {alpha}")));
    }
    if k > n {
        return Err(config(format!("cannot split {n} rows across {k} clients")));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| config(format!("alpha: {e}")))?;
    let mut rng = stream(seed, &[TAG_PARTITION, 1]);
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); k];

    for class in 0..dataset.num_classes() {
        let mut rows: Vec<usize> = (0..n).filter(|&i| dataset.labels[i] == class).collect();
        rows.shuffle(&mut rng);
        let mut props: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = props.iter().sum();
        if total > 0.0 && total.is_finite() {
            props.iter_mut().for_each(|p| *p /= total);
        } else {
            // every draw underflowed; hand the whole class to the largest draw
            let winner = (0..k)
                .max_by(|&a, &b| props[a].total_cmp(&props[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            props = (0..k).map(|j| if j == winner { 1.0 } else { 0.0 }).collect();
        }
        let mut start = 0;
        let mut cumulative = 0.0;
        for (client, p) in props.iter().enumerate() {
            cumulative += p;
            let end = if client + 1 == k {
                rows.len()
            } else {
                ((cumulative * rows.len() as f64).round() as usize).clamp(start, rows.len())
            };
            shards[client].extend_from_slice(&rows[start..end]);
            start = end;
        }
    }

    while let Some(empty) = shards.iter().position(Vec::is_empty) {
        let largest = (0..k)
            .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
            .expect("k >= 1");
        let row = shards[largest].pop().expect("largest shard is non-empty when k <= n");
        shards[empty].push(row);
    }
    Ok(finish(shards))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, classes: usize, dim: usize, sep: f64, seed: u64) -> LabeledDataset {
        make_blobs(&BlobsSpec {
            n,
            num_classes: classes,
            input_dim: dim,
            class_weights: vec![1.0 / classes as f64; classes],
            separation: sep,
            seed,
        })
        .unwrap()
    }

    /// Assigns each row to the nearest class mean; independent of any trained model.
    fn nearest_mean_accuracy(ds: &LabeledDataset, means: &[Vec<f64>]) -> f64 {
        let hits = (0..ds.len())
            .filter(|&i| {
                let row = ds.row(i);
                let best = (0..means.len())
                    .min_by(|&a, &b| {
                        let da: f64 = row.iter().zip(&means[a]).map(|(x, m)| (x - m).powi(2)).sum();
                        let db: f64 = row.iter().zip(&means[b]).map(|(x, m)| (x - m).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                best == ds.labels()[i]
            })
            .count();
        hits as f64 / ds.len() as f64
    }

    #[test]
    fn blobs_class_counts_concentrate() {
        let ds = uniform(300, 3, 4, 3.0, 1);
        let bound = 3.0 * (300f64).sqrt();
        for c in ds.class_counts() {
            assert!((c as f64 - 100.0).abs() <= bound, "{c}");
        }
    }

    #[test]
    fn separated_blobs_are_nearly_perfect_for_nearest_mean() {
        let ds = uniform(1000, 3, 2, 10.0, 4);
        let acc = nearest_mean_accuracy(&ds, &blob_means(3, 2, 10.0));
        assert!(acc >= 0.99, "{acc}");
    }

    #[test]
    fn blob_means_are_separation_apart() {
        let means = blob_means(3, 5, 4.0);
        for a in 0..3 {
            for b in (a + 1)..3 {
                let d: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!((d - 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        assert_eq!(uniform(50, 3, 3, 2.0, 9), uniform(50, 3, 3, 2.0, 9));
        assert_ne!(uniform(50, 3, 3, 2.0, 9), uniform(50, 3, 3, 2.0, 10));
    }

    #[test]
    fn blobs_reject_bad_weights() {
        let mut spec = BlobsSpec {
            n: 10,
            num_classes: 2,
            input_dim: 2,
            class_weights: vec![0.5, 0.6],
            separation: 1.0,
            seed: 0,
        };
        assert!(matches!(make_blobs(&spec), Err(crate::Error::Config(_))));
        spec.class_weights = vec![1.0];
        assert!(make_blobs(&spec).is_err());
        spec.class_weights = vec![1.5, -0.5];
        assert!(make_blobs(&spec).is_err());
    }

    #[test]
    fn covidx_sized_profile_counts_sum() {
        let ds = make_blobs(&BlobsSpec {
            n: COVIDX_TOTAL,
            num_classes: 3,
            input_dim: 2,
            class_weights: vec![0.55, 0.4, 0.05],
            separation: 2.0,
            seed: 0,
        })
        .unwrap();
        assert_eq!(ds.class_counts().iter().sum::<usize>(), COVIDX_TOTAL);
        assert_eq!(COVIDX_TRAIN + COVIDX_TEST, COVIDX_TOTAL);
    }

    #[test]
    fn class_count_examples() {
        assert_eq!(class_counts([0, 0, 1, 2], 3), vec![2, 1, 1]);
        assert_eq!(class_counts([], 3), vec![0, 0, 0]);
        let ds = LabeledDataset::new(vec![0.0; 4], vec![0, 0, 1, 2], 1, 3).unwrap();
        let empty = Shard { owner_id: 0, indices: vec![] };
        assert_eq!(empty.class_counts(&ds), vec![0, 0, 0]);
    }

    #[test]
    fn csv_well_formed() {
        let ds = parse_csv("1.0,2.0,0\n-3,4e-1,1\n", 2).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.row(1), &[-3.0, 0.4]);
    }

    #[test]
    fn csv_errors_name_rows() {
        let err = parse_csv("1,0\n2,2\n", 2).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        assert!(matches!(err, crate::Error::Load(LoadError::BadLabel { row: 2, .. })));

        let err = parse_csv("1,2,0\n1,1\n", 2).unwrap_err();
        assert!(matches!(err, crate::Error::Load(LoadError::RaggedRow { row: 2, expected: 3, found: 2 })));

        let err = parse_csv("", 2).unwrap_err();
        assert_eq!(err.to_string(), "no rows");

        let err = parse_csv("1,x,0\n", 2).unwrap_err();
        assert!(matches!(err, crate::Error::Load(LoadError::BadValue { row: 1, field: 2, .. })));

        let err = load_csv("/definitely/not/here.csv", 2).unwrap_err();
        assert!(matches!(err, crate::Error::Load(LoadError::Io { .. })));
    }

    #[test]
    fn csv_roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "0.5,0\n1.5,1\n").unwrap();
        let ds = load_csv(&path, 2).unwrap();
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn iid_examples() {
        let ds = uniform(10, 2, 1, 1.0, 0);
        let shards = partition_iid(&ds, 5, 3).unwrap();
        assert!(shards.iter().all(|s| s.len() == 2));
        check_disjoint_cover(&shards, 10).unwrap();

        let one = partition_iid(&ds, 1, 3).unwrap();
        assert_eq!(one[0].indices, (0..10).collect::<Vec<_>>());

        assert!(matches!(partition_iid(&ds, 11, 0), Err(crate::Error::Config(_))));
    }

    #[test]
    fn iid_histograms_are_proportional() {
        let ds = uniform(10_000, 3, 2, 1.0, 2);
        let global = ds.class_counts();
        for shard in partition_iid(&ds, 5, 8).unwrap() {
            let size = shard.len() as f64;
            let bound = 4.0 * size.sqrt();
            for (c, &count) in shard.class_counts(&ds).iter().enumerate() {
                let expected = size * global[c] as f64 / ds.len() as f64;
                assert!((count as f64 - expected).abs() <= bound);
            }
        }
    }

    fn total_variation(a: &[usize], b: &[f64]) -> f64 {
        let n: usize = a.iter().sum();
        a.iter().zip(b).map(|(&x, &p)| (x as f64 / n as f64 - p).abs()).sum::<f64>() / 2.0
    }

    #[test]
    fn huge_alpha_approaches_iid() {
        let ds = uniform(10_000, 3, 2, 1.0, 2);
        let global: Vec<f64> = ds.class_counts().iter().map(|&c| c as f64 / 10_000.0).collect();
        let shards = partition_label_skew(&ds, 5, 1e6, 0).unwrap();
        check_disjoint_cover(&shards, ds.len()).unwrap();
        for shard in &shards {
            assert!(total_variation(&shard.class_counts(&ds), &global) < 0.05);
        }
    }

    #[test]
    fn small_alpha_skews_and_repairs() {
        let ds = uniform(300, 3, 2, 1.0, 0);
        let shards = partition_label_skew(&ds, 5, 0.1, 0).unwrap();
        check_disjoint_cover(&shards, ds.len()).unwrap();
        assert!(shards.iter().all(|s| !s.is_empty()));
        let dominated = shards.iter().any(|s| {
            let counts = s.class_counts(&ds);
            *counts.iter().max().unwrap() as f64 > 0.6 * s.len() as f64
        });
        assert!(dominated);
    }

    #[test]
    fn extreme_skew_still_fills_every_client() {
        let ds = uniform(12, 2, 1, 1.0, 0);
        for seed in 0..50 {
            let shards = partition_label_skew(&ds, 12, 0.01, seed).unwrap();
            check_disjoint_cover(&shards, 12).unwrap();
            assert!(shards.iter().all(|s| s.len() == 1));
        }
    }

    #[test]
    fn skew_rejects_bad_alpha() {
        let ds = uniform(12, 2, 1, 1.0, 0);
        assert!(matches!(partition_label_skew(&ds, 3, 0.0, 0), Err(crate::Error::Config(_))));
        assert!(partition_label_skew(&ds, 3, -1.0, 0).is_err());
        assert!(partition_label_skew(&ds, 13, 1.0, 0).is_err());
    }

    #[test]
    fn cover_check_catches_overlap_and_gaps() {
        let a = Shard { owner_id: 0, indices: vec![0, 1] };
        let b = Shard { owner_id: 1, indices: vec![1, 2] };
        assert!(check_disjoint_cover(&[a.clone(), b], 3).is_err());
        assert!(check_disjoint_cover(std::slice::from_ref(&a), 3).is_err());
        let c = Shard { owner_id: 1, indices: vec![2] };
        check_disjoint_cover(&[a, c], 3).unwrap();
    }
}
