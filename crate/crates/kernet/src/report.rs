//! Cross-validation benchmark harness and its machine-readable report.
//! Folds train concurrently with per-fold seeds derived from the master
//! seed; the report file contains only deterministic fields so a rerun with
//! the same config and seed is byte-identical. Wall-clock timings travel
//! separately.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::network::{self, MetricsRecord, RunConfig};
use crate::seed::{self, domain};

pub const REPORT_FORMAT: &str = "kernet-benchmark-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub layers: usize,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub hsic: Option<f64>,
    pub mse: Option<f64>,
    pub ce: Option<f64>,
    pub csr: Option<f64>,
    pub scatter_ratio: Option<f64>,
    pub history: Vec<MetricsRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchmarkReport {
    pub format: String,
    pub version: u32,
    pub artifact_version: String,
    pub data_source: String,
    pub seed: u64,
    pub folds: usize,
    pub config: RunConfig,
    pub per_fold: Vec<FoldOutcome>,
    pub aggregates: BTreeMap<String, Aggregate>,
}

/// Population mean and standard deviation.
fn aggregate(values: &[f64]) -> Aggregate {
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    Aggregate {
        mean,
        std: var.sqrt(),
        count,
    }
}

fn compute_aggregates(per_fold: &[FoldOutcome]) -> BTreeMap<String, Aggregate> {
    let mut out = BTreeMap::new();
    let fields: [(&str, fn(&FoldOutcome) -> Option<f64>); 8] = [
        ("train_accuracy", |f| f.train_accuracy),
        ("test_accuracy", |f| f.test_accuracy),
        ("hsic", |f| f.hsic),
        ("mse", |f| f.mse),
        ("ce", |f| f.ce),
        ("csr", |f| f.csr),
        ("scatter_ratio", |f| f.scatter_ratio),
        ("layers", |f| Some(f.layers as f64)),
    ];
    for (name, get) in fields {
        let values: Vec<f64> = per_fold.iter().filter_map(get).collect();
        if !values.is_empty() {
            out.insert(name.to_string(), aggregate(&values));
        }
    }
    out
}

fn run_fold(ds: &Dataset, cfg: &RunConfig, split: &data::FoldSplit, fold: usize) -> Result<FoldOutcome> {
    let (train_ds, test_x, test_labels) = ds.fold_split(split, fold)?;
    let fold_seed = seed::derive_seed(cfg.seed, domain::FOLD, fold as u64);
    let mut fold_cfg = cfg.clone();
    fold_cfg.seed = fold_seed;
    let net = network::train(&train_ds, &fold_cfg)?;
    let last = net.history.last().cloned();
    let test_accuracy = if test_labels.is_empty() {
        None
    } else {
        Some(net.accuracy(test_x.view(), &test_labels)?)
    };
    Ok(FoldOutcome {
        fold,
        seed: fold_seed,
        layers: net.layers.len(),
        train_accuracy: last.as_ref().and_then(|r| r.train_accuracy),
        test_accuracy,
        hsic: last.as_ref().and_then(|r| r.hsic_norm),
        mse: last.as_ref().and_then(|r| r.mse),
        ce: last.as_ref().and_then(|r| r.ce),
        csr: last.as_ref().and_then(|r| r.csr),
        scatter_ratio: last.as_ref().and_then(|r| r.scatter_ratio),
        history: net.history,
    })
}

/// Runs k stratified folds (concurrently when the parallel feature is on)
/// and aggregates the key metrics. Returns the report plus per-fold
/// wall-clock seconds, which are reported separately to keep the report
/// file deterministic.
pub fn run_benchmark(
    ds: &Dataset,
    cfg: &RunConfig,
    k: usize,
    data_source: &str,
) -> Result<(BenchmarkReport, Vec<f64>)> {
    cfg.validate()?;
    let split = data::kfold(ds, k, cfg.seed)?;
    let outcomes: Vec<Result<(FoldOutcome, f64)>> = exec::map_indexed(k, |fold| {
        let start = Instant::now();
        let outcome = run_fold(ds, cfg, &split, fold)?;
        Ok((outcome, start.elapsed().as_secs_f64()))
    });
    let mut per_fold = Vec::with_capacity(k);
    let mut seconds = Vec::with_capacity(k);
    for res in outcomes {
        let (outcome, secs) = res?;
        per_fold.push(outcome);
        seconds.push(secs);
    }
    let aggregates = compute_aggregates(&per_fold);
    let report = BenchmarkReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        data_source: data_source.to_string(),
        seed: cfg.seed,
        folds: k,
        config: cfg.clone(),
        per_fold,
        aggregates,
    };
    Ok((report, seconds))
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BenchmarkReport> {
        let text = std::fs::read_to_string(path)?;
        let report: BenchmarkReport =
            serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }

    /// Checks the invariants that make a report trustworthy: format tag and
    /// aggregates that recompute exactly from the per-fold rows.
    pub fn validate(&self) -> Result<()> {
        if self.format != REPORT_FORMAT {
            return Err(Error::Serde(format!("unknown report format '{}'", self.format)));
        }
        let recomputed = compute_aggregates(&self.per_fold);
        if recomputed.len() != self.aggregates.len() {
            return Err(Error::Serde("aggregate set does not match per-fold data".into()));
        }
        for (name, agg) in &recomputed {
            let stored = self
                .aggregates
                .get(name)
                .ok_or_else(|| Error::Serde(format!("missing aggregate '{name}'")))?;
            if (stored.mean - agg.mean).abs() > 1e-12
                || (stored.std - agg.std).abs() > 1e-12
                || stored.count != agg.count
            {
                return Err(Error::Serde(format!(
                    "aggregate '{name}' does not recompute from per-fold values"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_spiral;
    use crate::network::Solver;

    #[test]
    fn single_fold_trains_on_everything() {
        let ds = gen_spiral(15, 2, 1.0, 0.05, 2).unwrap();
        let mut cfg = RunConfig::for_solver(Solver::Wstar);
        cfg.max_layers = 2;
        cfg.rff_width = 40;
        let (report, secs) = run_benchmark(&ds, &cfg, 1, "spiral-test").unwrap();
        assert_eq!(report.per_fold.len(), 1);
        assert_eq!(secs.len(), 1);
        assert!(report.per_fold[0].test_accuracy.is_none());
        assert!(report.per_fold[0].train_accuracy.is_some());
        assert!(!report.aggregates.contains_key("test_accuracy"));
        report.validate().unwrap();
    }

    #[test]
    fn report_roundtrip_lossless() {
        let ds = gen_spiral(12, 2, 1.0, 0.05, 7).unwrap();
        let mut cfg = RunConfig::for_solver(Solver::Ws);
        cfg.max_layers = 2;
        cfg.rff_width = 30;
        let (report, _) = run_benchmark(&ds, &cfg, 3, "spiral-test").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        let loaded = BenchmarkReport::load(&path).unwrap();
        assert_eq!(report, loaded);
        let again = path.with_extension("json2");
        loaded.save(&again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }
}
