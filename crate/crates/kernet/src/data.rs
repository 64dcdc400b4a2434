//! Dataset ingestion and synthesis: CSV loading, feature standardization,
//! the synthetic generators used in the experiments, and stratified k-fold
//! splitting. Standardization statistics always come from the training rows
//! and are reused on held-out rows.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::PairSets;

/// Per-column standardization: subtract the mean, divide by the population
/// standard deviation. Constant columns are flagged and mapped to zero.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(raw: ArrayView2<f64>) -> Standardizer {
        let (n, d) = raw.dim();
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        let mut constant = vec![false; d];
        for j in 0..d {
            let col = raw.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            means[j] = mean;
            if var > 0.0 {
                stds[j] = var.sqrt();
            } else {
                stds[j] = 1.0;
                constant[j] = true;
            }
        }
        Standardizer {
            means,
            stds,
            constant,
        }
    }

    pub fn transform(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        let (n, d) = raw.dim();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                out[[i, j]] = if self.constant[j] {
                    0.0
                } else {
                    (raw[[i, j]] - self.means[j]) / self.stds[j]
                };
            }
        }
        out
    }
}

/// A standardized classification dataset plus everything derived from its
/// labels. The raw (pre-standardization) features are kept so cross
/// validation can re-fit the scaling on each training split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub y: Array2<f64>,
    pub pair_sets: PairSets,
    pub names: Option<Vec<String>>,
    pub constant_columns: Vec<usize>,
    pub warnings: Vec<String>,
    pub n_classes: usize,
    raw: Array2<f64>,
}

impl Dataset {
    pub fn from_raw(
        raw: Array2<f64>,
        labels: Vec<usize>,
        names: Option<Vec<String>>,
        warnings: Vec<String>,
    ) -> Result<Dataset> {
        let n = raw.nrows();
        if n == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if labels.len() != n {
            return Err(Error::shape("label count does not match row count"));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite features"));
        }
        let n_classes = labels.iter().copied().max().unwrap() + 1;
        let mut counts = vec![0usize; n_classes];
        for &c in &labels {
            counts[c] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("class index {empty} has no samples")));
        }
        let std = Standardizer::fit(raw.view());
        let x = std.transform(raw.view());
        let constant_columns = std
            .constant
            .iter()
            .enumerate()
            .filter_map(|(j, &c)| c.then_some(j))
            .collect();
        let y = one_hot(&labels, n_classes);
        let pair_sets = PairSets::from_labels(&labels);
        Ok(Dataset {
            x,
            labels,
            y,
            pair_sets,
            names,
            constant_columns,
            warnings,
            n_classes,
            raw,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn raw_features(&self) -> ArrayView2<'_, f64> {
        self.raw.view()
    }

    /// Training dataset for one fold (re-standardized on its own rows) and
    /// the held-out rows transformed with the training statistics.
    pub fn fold_split(
        &self,
        split: &FoldSplit,
        fold: usize,
    ) -> Result<(Dataset, Array2<f64>, Vec<usize>)> {
        if split.assignments.len() != self.n() {
            return Err(Error::shape("fold assignment length mismatch"));
        }
        if fold >= split.k {
            return Err(Error::invalid(format!("fold {fold} out of range")));
        }
        let train_idx: Vec<usize> = (0..self.n())
            .filter(|&i| split.k == 1 || split.assignments[i] != fold)
            .collect();
        let test_idx: Vec<usize> = if split.k == 1 {
            Vec::new()
        } else {
            (0..self.n())
                .filter(|&i| split.assignments[i] == fold)
                .collect()
        };
        let train_raw = select_rows(self.raw.view(), &train_idx);
        let std = Standardizer::fit(train_raw.view());
        let train_labels: Vec<usize> = train_idx.iter().map(|&i| self.labels[i]).collect();
        let train = Dataset::from_raw(train_raw, train_labels, self.names.clone(), Vec::new())?;
        let test_raw = select_rows(self.raw.view(), &test_idx);
        let test_x = std.transform(test_raw.view());
        let test_labels: Vec<usize> = test_idx.iter().map(|&i| self.labels[i]).collect();
        Ok((train, test_x, test_labels))
    }
}

fn select_rows(m: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let d = m.ncols();
    let mut out = Array2::zeros((idx.len(), d));
    for (r, &i) in idx.iter().enumerate() {
        for c in 0..d {
            out[[r, c]] = m[[i, c]];
        }
    }
    out
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), n_classes));
    for (i, &c) in labels.iter().enumerate() {
        y[[i, c]] = 1.0;
    }
    y
}

/// Loads a CSV of numeric features plus one categorical label column (by
/// name when given, last column otherwise). The first row may be a header;
/// it is detected by failing to parse as numbers. Labels are factorized in
/// first-appearance order.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?);
    }
    if rows.is_empty() {
        return Err(Error::Csv("file has no rows".into()));
    }
    let width = rows[0].len();
    if width < 2 {
        return Err(Error::Csv("need at least one feature and one label column".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Csv("rows have inconsistent column counts".into()));
    }
    let first_is_header = rows[0].iter().any(|f| f.trim().parse::<f64>().is_err());
    let header: Option<Vec<String>> = if first_is_header {
        Some(rows[0].iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let label_idx = match label_column {
        Some(name) => {
            let header = header
                .as_ref()
                .ok_or_else(|| Error::Csv("label column named but file has no header".into()))?;
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Csv(format!("label column '{name}' not found")))?
        }
        None => width - 1,
    };
    let data_rows = if first_is_header { &rows[1..] } else { &rows[..] };
    if data_rows.is_empty() {
        return Err(Error::Csv("file has a header but no data rows".into()));
    }
    let mut raw = Vec::with_capacity(data_rows.len() * (width - 1));
    let mut label_keys: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(data_rows.len());
    for (r, rec) in data_rows.iter().enumerate() {
        for (c, field) in rec.iter().enumerate() {
            if c == label_idx {
                let key = field.trim().to_string();
                let id = match label_keys.iter().position(|k| k == &key) {
                    Some(i) => i,
                    None => {
                        label_keys.push(key);
                        label_keys.len() - 1
                    }
                };
                labels.push(id);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Csv(format!(
                        "row {}, column {}: cannot parse '{}' as a number",
                        r + 1 + usize::from(first_is_header),
                        c + 1,
                        field
                    ))
                })?;
                raw.push(v);
            }
        }
    }
    if label_keys.len() < 2 {
        return Err(Error::Csv("label column contains a single class".into()));
    }
    let raw = Array2::from_shape_vec((data_rows.len(), width - 1), raw)
        .expect("row-major construction");
    Dataset::from_raw(raw, labels, Some(label_keys), Vec::new())
}

/// Two interleaved uniform clouds: class 1 is class 0 plus small Gaussian
/// noise, making cross-class pairs far closer than same-class pairs.
pub fn gen_adversarial(n_per_class: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n_per_class < 2 {
        return Err(Error::invalid("adversarial generator needs n_per_class >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_class;
    let mut raw = Array2::zeros((2 * n, 2));
    for i in 0..n {
        for j in 0..2 {
            raw[[i, j]] = rng.gen::<f64>();
        }
    }
    for i in 0..n {
        for j in 0..2 {
            let eps: f64 = rng.sample(StandardNormal);
            raw[[n + i, j]] = raw[[i, j]] + noise * eps;
        }
    }
    let labels: Vec<usize> = (0..2 * n).map(|i| usize::from(i >= n)).collect();
    let mut warnings = Vec::new();
    if noise == 0.0 {
        warnings.push(
            "noise = 0 duplicates points with conflicting labels; monotone convergence is not guaranteed"
                .to_string(),
        );
    }
    Dataset::from_raw(raw, labels, None, warnings)
}

/// Gaussian features with random (balanced) binary labels.
pub fn gen_random(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n < 2 || d == 0 {
        return Err(Error::invalid("random generator needs n >= 2 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            raw[[i, j]] = rng.sample(StandardNormal);
        }
    }
    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    labels.shuffle(&mut rng);
    Dataset::from_raw(raw, labels, None, Vec::new())
}

/// Multi-arm Archimedean spiral with Gaussian angular noise. Arms start at a
/// positive radius so that noise-free arms are disjoint curves.
pub fn gen_spiral(
    n_per_class: usize,
    classes: usize,
    turns: f64,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class < 2 || classes < 2 {
        return Err(Error::invalid("spiral generator needs n_per_class >= 2, classes >= 2"));
    }
    if !(turns > 0.0) {
        return Err(Error::invalid("turns must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_class * classes;
    let mut raw = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let r0 = 0.2;
    for c in 0..classes {
        let offset = std::f64::consts::TAU * c as f64 / classes as f64;
        for i in 0..n_per_class {
            let u = i as f64 / (n_per_class - 1) as f64;
            let radius = r0 + (1.0 - r0) * u;
            let jitter: f64 = if noise > 0.0 {
                let eps: f64 = rng.sample(StandardNormal);
                noise * eps
            } else {
                0.0
            };
            let theta = std::f64::consts::TAU * turns * u + offset + jitter;
            let row = c * n_per_class + i;
            raw[[row, 0]] = radius * theta.cos();
            raw[[row, 1]] = radius * theta.sin();
            labels.push(c);
        }
    }
    Dataset::from_raw(raw, labels, None, Vec::new())
}

/// Stratified fold assignment, deterministic given the seed. Fold sizes
/// differ by at most one and each class is dealt round-robin across folds.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

pub fn kfold(ds: &Dataset, k: usize, seed: u64) -> Result<FoldSplit> {
    let n = ds.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("fold count {k} invalid for {n} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; n];
    let mut counter = 0usize;
    for class in 0..ds.n_classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| ds.labels[i] == class).collect();
        members.shuffle(&mut rng);
        for idx in members {
            assignments[idx] = counter % k;
            counter += 1;
        }
    }
    Ok(FoldSplit {
        k,
        assignments,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardization_two_point() {
        let raw = Array2::from_shape_vec((2, 1), vec![1.0, 3.0]).unwrap();
        let ds = Dataset::from_raw(raw, vec![0, 1], None, Vec::new()).unwrap();
        assert!((ds.x[[0, 0]] + 1.0).abs() < 1e-12);
        assert!((ds.x[[1, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardization_idempotent() {
        let ds = gen_spiral(20, 2, 1.5, 0.05, 3).unwrap();
        let std = Standardizer::fit(ds.x.view());
        let again = std.transform(ds.x.view());
        for (a, b) in again.iter().zip(ds.x.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_flagged() {
        let raw = Array2::from_shape_vec((3, 2), vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let ds = Dataset::from_raw(raw, vec![0, 1, 0], None, Vec::new()).unwrap();
        assert_eq!(ds.constant_columns, vec![1]);
        for i in 0..3 {
            assert_eq!(ds.x[[i, 1]], 0.0);
        }
    }

    #[test]
    fn adversarial_shape_and_determinism() {
        let a = gen_adversarial(40, 0.01, 7).unwrap();
        assert_eq!(a.n(), 80);
        assert_eq!(a.d(), 2);
        assert_eq!(a.n_classes, 2);
        let b = gen_adversarial(40, 0.01, 7).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.labels, b.labels);
        let c = gen_adversarial(40, 0.01, 8).unwrap();
        assert_ne!(a.x, c.x);

        let warned = gen_adversarial(5, 0.0, 1).unwrap();
        assert!(!warned.warnings.is_empty());
    }

    #[test]
    fn random_balanced() {
        let ds = gen_random(80, 2, 11).unwrap();
        assert_eq!(ds.n(), 80);
        assert_eq!(ds.d(), 2);
        let zeros = ds.labels.iter().filter(|&&c| c == 0).count();
        assert_eq!(zeros, 40);
    }

    #[test]
    fn spiral_disjoint_arms_without_noise() {
        let ds = gen_spiral(60, 2, 1.75, 0.0, 5).unwrap();
        assert_eq!(ds.n(), 120);
        let mut min_cross = f64::INFINITY;
        for &(i, j) in ds.pair_sets.diff_class.iter() {
            let dx = ds.x[[i, 0]] - ds.x[[j, 0]];
            let dy = ds.x[[i, 1]] - ds.x[[j, 1]];
            min_cross = min_cross.min((dx * dx + dy * dy).sqrt());
        }
        assert!(min_cross > 0.0);
    }

    #[test]
    fn spiral_shape() {
        let ds = gen_spiral(100, 3, 1.75, 0.1, 0).unwrap();
        assert_eq!(ds.n(), 300);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.n_classes, 3);
        let ds2 = gen_spiral(100, 3, 1.75, 0.1, 0).unwrap();
        assert_eq!(ds.x, ds2.x);
    }

    #[test]
    fn kfold_sizes_and_stratification() {
        let ds = gen_spiral(89, 2, 1.75, 0.1, 2).unwrap();
        let split = kfold(&ds, 10, 0).unwrap();
        let mut sizes = vec![0usize; 10];
        for &f in &split.assignments {
            sizes[f] += 1;
        }
        let min = *sizes.iter().min().unwrap();
        let max = *sizes.iter().max().unwrap();
        assert!(max - min <= 1);
        for seed in 0..10u64 {
            let split = kfold(&ds, 10, seed).unwrap();
            for fold in 0..10 {
                let (train, _, _) = ds.fold_split(&split, fold).unwrap();
                assert_eq!(train.n_classes, 2);
            }
        }
    }

    #[test]
    fn kfold_one_per_fold() {
        let ds = gen_random(10, 2, 4).unwrap();
        let split = kfold(&ds, 10, 1).unwrap();
        let mut sizes = vec![0usize; 10];
        for &f in &split.assignments {
            sizes[f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        std::fs::write(&path, "f1,f2,label\n1,2,a\n3,4,b\n5,6,a\n").unwrap();
        let ds = load_csv(&path, None).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.names.as_ref().unwrap(), &vec!["a".to_string(), "b".to_string()]);

        let named = load_csv(&path, Some("label")).unwrap();
        assert_eq!(named.labels, ds.labels);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "f1,label\noops,a\n2,b\n").unwrap();
        assert!(matches!(load_csv(&bad, None), Err(Error::Csv(_))));

        let single = dir.path().join("single.csv");
        std::fs::write(&single, "1,a\n2,a\n").unwrap();
        assert!(matches!(load_csv(&single, None), Err(Error::Csv(_))));

        assert!(load_csv(&dir.path().join("missing.csv"), None).is_err());
    }
}
