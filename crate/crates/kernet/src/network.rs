//! The greedy layer-wise trainer: each layer gets closed-form weights, a
//! bandwidth from the configured strategy, and a frozen random-feature map;
//! training stops once the normalized HSIC risk crosses the threshold.
//! Trained networks are immutable and replay deterministically.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::eigen::RetainPolicy;
use crate::error::{Error, Result};
use crate::kernel::{self, CenteredLabelKernel, PairSets};
use crate::rff::RffMap;
use crate::seed::{self, domain};
use crate::serialize::MatrixData;
use crate::sigma::{self, SearchOptions, WeightRule};
use crate::weights::{self, IsmOptions, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Kernel mean embedding weights (per-class sums).
    Ws,
    /// Layer-optimal spectral weights.
    Wstar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaStrategy {
    MaxHsic,
    MaxSeparation,
    Decay { decay: f64, max_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub solver: Solver,
    pub rff_width: usize,
    pub hsic_threshold: f64,
    pub max_layers: usize,
    pub sigma_strategy: SigmaStrategy,
    pub rank_tol: f64,
    pub conv_tol: f64,
    pub ism_max_iter: usize,
    /// Iteration budget for the spectral solves inside bandwidth scans; the
    /// final solve at the chosen σ always uses `ism_max_iter`.
    pub scan_ism_max_iter: usize,
    pub sigma_grid_points: usize,
    pub kme_normalize: bool,
    pub clamp_eps: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn for_solver(solver: Solver) -> RunConfig {
        let sigma_strategy = match solver {
            Solver::Wstar => SigmaStrategy::MaxHsic,
            Solver::Ws => SigmaStrategy::Decay {
                decay: 0.9,
                max_steps: 50,
            },
        };
        RunConfig {
            solver,
            rff_width: 300,
            hsic_threshold: 0.99,
            max_layers: 30,
            sigma_strategy,
            rank_tol: 1e-6,
            conv_tol: 1e-5,
            ism_max_iter: 100,
            scan_ism_max_iter: 8,
            sigma_grid_points: 24,
            kme_normalize: true,
            clamp_eps: 1e-12,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hsic_threshold > 0.0 && self.hsic_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "hsic_threshold must lie in (0, 1], got {}",
                self.hsic_threshold
            )));
        }
        if self.max_layers == 0 {
            return Err(Error::Config("max_layers must be >= 1".into()));
        }
        if self.rff_width == 0 {
            return Err(Error::Config("rff_width must be >= 1".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.1) {
            return Err(Error::Config("clamp_eps must lie in (0, 0.1)".into()));
        }
        if let SigmaStrategy::Decay { decay, .. } = self.sigma_strategy {
            if !(decay > 0.0 && decay < 1.0) {
                return Err(Error::Config("decay must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn ism_options(&self) -> IsmOptions {
        IsmOptions {
            retain: RetainPolicy::with_rank_tol(self.rank_tol),
            conv_tol: self.conv_tol,
            max_iter: self.ism_max_iter,
        }
    }

    fn scan_ism_options(&self) -> IsmOptions {
        IsmOptions {
            max_iter: self.scan_ism_max_iter,
            ..self.ism_options()
        }
    }

    fn search_options(&self) -> SearchOptions {
        SearchOptions {
            grid_points: self.sigma_grid_points,
            ..SearchOptions::default()
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_solver(Solver::Wstar)
    }
}

/// One frozen layer: projection weights, bandwidth, and the feature map that
/// plays the role of the activation function.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weights: WeightMatrix,
    pub sigma: f64,
    pub rff: RffMap,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub layer: usize,
    pub hsic_norm: Option<f64>,
    pub scatter_ratio: Option<f64>,
    pub csr: Option<f64>,
    pub mse: Option<f64>,
    pub ce: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub sigma: f64,
    pub width: usize,
    /// Set for decay-schedule layers: whether the schedule found a strictly
    /// improving σ. `None` for the optimizing strategies.
    pub improved: Option<bool>,
}

/// A trained layer-wise network.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    /// Class means in final preactivation space (τ × β_L).
    pub centroids: Array2<f64>,
    /// One representative final activation row per class (τ × D).
    pub basis: Array2<f64>,
    pub history: Vec<MetricsRecord>,
    pub config: RunConfig,
    pub n_classes: usize,
    pub warnings: Vec<String>,
}

pub(crate) fn class_means(z: ArrayView2<f64>, labels: &[usize], n_classes: usize) -> Array2<f64> {
    let m = z.ncols();
    let mut means = Array2::zeros((n_classes, m));
    let mut counts = vec![0usize; n_classes];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for k in 0..m {
            means[[c, k]] += z[[i, k]];
        }
    }
    for c in 0..n_classes {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for k in 0..m {
                means[[c, k]] *= inv;
            }
        }
    }
    means
}

fn nearest_centroid(z_row: &[f64], centroids: &Array2<f64>) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.nrows() {
        let mut d = 0.0;
        for (k, v) in z_row.iter().enumerate() {
            let t = v - centroids[[c, k]];
            d += t * t;
        }
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn accuracy_from_centroids(
    z: ArrayView2<f64>,
    labels: &[usize],
    centroids: &Array2<f64>,
) -> f64 {
    if labels.is_empty() {
        return f64::NAN;
    }
    let mut correct = 0usize;
    for (i, &c) in labels.iter().enumerate() {
        let row: Vec<f64> = z.row(i).iter().copied().collect();
        if nearest_centroid(&row, centroids) == c {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

/// Mean squared deviation of each sample from its class centroid in
/// preactivation space: the MSE left after the optimal per-class label
/// translation.
pub fn realigned_mse(z: ArrayView2<f64>, labels: &[usize], n_classes: usize) -> Result<f64> {
    let n = z.nrows();
    if labels.len() != n || n == 0 {
        return Err(Error::shape("labels/preactivation mismatch"));
    }
    let mut seen = vec![false; n_classes];
    for &c in labels {
        if c >= n_classes {
            return Err(Error::invalid("label out of range"));
        }
        seen[c] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("every class must be present"));
    }
    let means = class_means(z, labels, n_classes);
    let mut acc = 0.0;
    for (i, &c) in labels.iter().enumerate() {
        for k in 0..z.ncols() {
            let t = z[[i, k]] - means[[c, k]];
            acc += t * t;
        }
    }
    Ok(acc / n as f64)
}

/// Cross entropy after the change of basis: probabilities are inner products
/// with the class representatives, clamped to [clamp_eps, 1] and
/// renormalized onto the simplex.
pub fn realigned_ce(
    phi: ArrayView2<f64>,
    basis: ArrayView2<f64>,
    y: ArrayView2<f64>,
    clamp_eps: f64,
) -> Result<f64> {
    if !(clamp_eps > 0.0 && clamp_eps < 0.1) {
        return Err(Error::invalid("clamp_eps must lie in (0, 0.1)"));
    }
    let n = phi.nrows();
    let t = basis.nrows();
    if y.dim() != (n, t) || basis.ncols() != phi.ncols() {
        return Err(Error::shape("activation/basis/label shape mismatch"));
    }
    if n == 0 {
        return Err(Error::invalid("empty activation matrix"));
    }
    let scores = phi.dot(&basis.t());
    let mut ce = 0.0;
    for i in 0..n {
        let mut p: Vec<f64> = (0..t)
            .map(|c| scores[[i, c]].clamp(clamp_eps, 1.0))
            .collect();
        let total: f64 = p.iter().sum();
        for v in p.iter_mut() {
            *v /= total;
        }
        for c in 0..t {
            if y[[i, c]] != 0.0 {
                ce -= y[[i, c]] * p[c].ln();
            }
        }
    }
    Ok(ce / n as f64)
}

/// Class representative rows of the activation matrix: the within-class
/// medoid by mean activation kernel, ties broken by lowest index.
pub fn medoid_basis(phi: ArrayView2<f64>, labels: &[usize], n_classes: usize) -> Array2<f64> {
    let d = phi.ncols();
    let mut basis = Array2::zeros((n_classes, d));
    for c in 0..n_classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let mut best = members[0];
        let mut best_score = f64::NEG_INFINITY;
        for &i in &members {
            let mut score = 0.0;
            for &j in &members {
                let dot: f64 = phi
                    .row(i)
                    .iter()
                    .zip(phi.row(j).iter())
                    .map(|(a, b)| a * b)
                    .sum();
                score += dot;
            }
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        for k in 0..d {
            basis[[c, k]] = phi[[best, k]];
        }
    }
    basis
}

#[allow(clippy::too_many_arguments)]
fn metrics_from_parts(
    layer_index: usize,
    z: ArrayView2<f64>,
    phi: ArrayView2<f64>,
    labels: &[usize],
    pairs: &PairSets,
    y: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    sigma_used: f64,
    clamp_eps: f64,
    improved: Option<bool>,
) -> MetricsRecord {
    let n_classes = y.ncols();
    let activation_kernel = phi.dot(&phi.t());
    let hsic_norm = kernel::hsic_normalized_vs_gamma(activation_kernel.view(), gamma).ok();
    let scatter_ratio = kernel::scatter_trace_ratio(z, labels).ok();
    let csr = kernel::cosine_similarity_ratio(phi, pairs).ok();
    let mse = realigned_mse(z, labels, n_classes).ok();
    let basis = medoid_basis(phi, labels, n_classes);
    let ce = realigned_ce(phi, basis.view(), y, clamp_eps).ok();
    let centroids = class_means(z, labels, n_classes);
    let acc = accuracy_from_centroids(z, labels, &centroids);
    MetricsRecord {
        layer: layer_index,
        hsic_norm,
        scatter_ratio,
        csr,
        mse,
        ce,
        train_accuracy: acc.is_finite().then_some(acc),
        sigma: sigma_used,
        width: z.ncols(),
        improved,
    }
}

/// Metrics of one frozen layer evaluated on `r_prev` (its input).
pub fn layer_metrics(
    r_prev: ArrayView2<f64>,
    layer: &Layer,
    gamma: &CenteredLabelKernel,
    pairs: &PairSets,
    labels: &[usize],
    y: ArrayView2<f64>,
    layer_index: usize,
) -> Result<MetricsRecord> {
    if r_prev.ncols() != layer.in_dim {
        return Err(Error::shape(format!(
            "layer expects {} input columns, got {}",
            layer.in_dim,
            r_prev.ncols()
        )));
    }
    let z = r_prev.dot(&layer.weights.w);
    let phi = layer.rff.apply(z.view())?;
    Ok(metrics_from_parts(
        layer_index,
        z.view(),
        phi.view(),
        labels,
        pairs,
        y,
        gamma,
        layer.sigma,
        1e-12,
        None,
    ))
}

struct LayerChoice {
    weights: WeightMatrix,
    sigma: f64,
    improved: Option<bool>,
}

fn choose_layer(
    r: ArrayView2<f64>,
    ds: &Dataset,
    gamma: &CenteredLabelKernel,
    cfg: &RunConfig,
    prev_sigma: f64,
    prev_hsic: f64,
    rff_seed: u64,
    warnings: &mut Vec<String>,
) -> Result<LayerChoice> {
    let labels = &ds.labels;
    let search = cfg.search_options();
    match cfg.sigma_strategy {
        SigmaStrategy::MaxHsic => {
            let rule = match cfg.solver {
                Solver::Ws => WeightRule::Kme {
                    normalize: cfg.kme_normalize,
                },
                Solver::Wstar => WeightRule::Ism(cfg.scan_ism_options()),
            };
            let res = sigma::optimize_sigma_hsic(r, labels, gamma, &rule, &search)?;
            let weights = final_weights_at(r, ds, gamma, cfg, res.sigma, warnings)?;
            Ok(LayerChoice {
                weights,
                sigma: res.sigma,
                improved: None,
            })
        }
        SigmaStrategy::MaxSeparation => {
            let res = sigma::optimize_sigma_separation(r, &ds.pair_sets, &search)?;
            let weights = final_weights_at(r, ds, gamma, cfg, res.sigma, warnings)?;
            Ok(LayerChoice {
                weights,
                sigma: res.sigma,
                improved: None,
            })
        }
        SigmaStrategy::Decay { decay, max_steps } => {
            let w = match cfg.solver {
                Solver::Ws => weights::kme_weights(r, labels, cfg.kme_normalize)?,
                Solver::Wstar => {
                    // the decay schedule fixes σ first, so solve at each candidate
                    let res = sigma::decay_search(prev_sigma, prev_hsic, decay, max_steps, |s| {
                        let (w, _) =
                            weights::ism_solve_budgeted(r, gamma, s, &cfg.scan_ism_options())?;
                        realized_hsic(r, &w, s, cfg, gamma, rff_seed)
                    })?;
                    let weights = final_weights_at(r, ds, gamma, cfg, res.sigma, warnings)?;
                    return Ok(LayerChoice {
                        weights,
                        sigma: res.sigma,
                        improved: Some(res.improved),
                    });
                }
            };
            let res = sigma::decay_search(prev_sigma, prev_hsic, decay, max_steps, |s| {
                realized_hsic(r, &w, s, cfg, gamma, rff_seed)
            })?;
            Ok(LayerChoice {
                weights: w,
                sigma: res.sigma,
                improved: Some(res.improved),
            })
        }
    }
}

/// Normalized HSIC of the layer as it would actually be frozen: project,
/// sample the feature map with the layer's seed, and score the activation
/// kernel. Used by the decay schedule so its improvement flags refer to the
/// realized layer, not an idealized one.
fn realized_hsic(
    r: ArrayView2<f64>,
    w: &WeightMatrix,
    sigma: f64,
    cfg: &RunConfig,
    gamma: &CenteredLabelKernel,
    rff_seed: u64,
) -> Result<f64> {
    let z = r.dot(&w.w);
    let rff = RffMap::sample(w.beta(), sigma, cfg.rff_width, rff_seed)?;
    let phi = rff.apply(z.view())?;
    let k = phi.dot(&phi.t());
    kernel::hsic_normalized_vs_gamma(k.view(), gamma)
}

fn final_weights_at(
    r: ArrayView2<f64>,
    ds: &Dataset,
    gamma: &CenteredLabelKernel,
    cfg: &RunConfig,
    sigma: f64,
    warnings: &mut Vec<String>,
) -> Result<WeightMatrix> {
    match cfg.solver {
        Solver::Ws => weights::kme_weights(r, &ds.labels, cfg.kme_normalize),
        Solver::Wstar => match weights::ism_solve(r, gamma, sigma, &cfg.ism_options()) {
            Ok((w, _)) => Ok(w),
            Err(Error::Convergence(fail)) => {
                warnings.push(format!(
                    "layer solve at sigma {sigma:.6e}: {} (continuing with best iterate)",
                    fail.message
                ));
                Ok(fail.weights)
            }
            Err(e) => Err(e),
        },
    }
}

/// Trains a network on a standardized dataset.
pub fn train(ds: &Dataset, cfg: &RunConfig) -> Result<Network> {
    cfg.validate()?;
    if ds.n_classes < 2 {
        return Err(Error::invalid("training needs at least two classes"));
    }
    let gamma = kernel::gamma_matrix(ds.y.view())?;
    let mut warnings = ds.warnings.clone();
    let mut r = ds.x.clone();
    let mut history: Vec<MetricsRecord> = Vec::new();
    let mut layers: Vec<Layer> = Vec::new();
    let mut last_z: Option<Array2<f64>> = None;
    let mut last_phi: Option<Array2<f64>> = None;

    // Initial bandwidth and risk, the reference point for decay schedules.
    let sep = sigma::optimize_sigma_separation(r.view(), &ds.pair_sets, &cfg.search_options())?;
    let mut prev_sigma = sep.sigma;
    let mut prev_hsic = kernel::gaussian_kernel(r.view(), prev_sigma)
        .and_then(|k| kernel::hsic_normalized_vs_gamma(k.view(), &gamma))
        .unwrap_or(-1.0);

    for layer_index in 1..=cfg.max_layers {
        let rff_seed = seed::derive_seed(cfg.seed, domain::LAYER_RFF, layer_index as u64);
        let choice = choose_layer(
            r.view(),
            ds,
            &gamma,
            cfg,
            prev_sigma,
            prev_hsic,
            rff_seed,
            &mut warnings,
        )?;
        let z = r.dot(&choice.weights.w);
        let rff = RffMap::sample(choice.weights.beta(), choice.sigma, cfg.rff_width, rff_seed)?;
        let phi = rff.apply(z.view())?;
        let record = metrics_from_parts(
            layer_index,
            z.view(),
            phi.view(),
            &ds.labels,
            &ds.pair_sets,
            ds.y.view(),
            &gamma,
            choice.sigma,
            cfg.clamp_eps,
            choice.improved,
        );
        layers.push(Layer {
            in_dim: r.ncols(),
            out_dim: cfg.rff_width,
            weights: choice.weights,
            sigma: choice.sigma,
            rff,
        });
        prev_sigma = choice.sigma;
        if let Some(h) = record.hsic_norm {
            prev_hsic = h;
        }
        let stop = record.hsic_norm.map(|h| h > cfg.hsic_threshold).unwrap_or(false);
        history.push(record);
        r = phi.clone();
        last_z = Some(z);
        last_phi = Some(phi);
        if stop {
            break;
        }
    }

    let z = last_z.expect("at least one layer");
    let phi = last_phi.expect("at least one layer");
    let centroids = class_means(z.view(), &ds.labels, ds.n_classes);
    let basis = medoid_basis(phi.view(), &ds.labels, ds.n_classes);
    Ok(Network {
        layers,
        centroids,
        basis,
        history,
        config: cfg.clone(),
        n_classes: ds.n_classes,
        warnings,
    })
}

impl Network {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim).unwrap_or(0)
    }

    pub fn final_hsic(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.hsic_norm)
    }

    /// Replays the frozen layers; returns (preactivation, activation) pairs.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Vec<(Array2<f64>, Array2<f64>)>> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut r = x.to_owned();
        for layer in &self.layers {
            let z = r.dot(&layer.weights.w);
            let phi = layer.rff.apply(z.view())?;
            r = phi.clone();
            out.push((z, phi));
        }
        Ok(out)
    }

    /// Nearest-centroid labels in final preactivation space.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        if self.centroids.nrows() == 0 {
            return Err(Error::invalid("network has no fitted centroids"));
        }
        let passes = self.forward(x)?;
        let (z, _) = passes.last().expect("non-empty network");
        Ok((0..z.nrows())
            .map(|i| {
                let row: Vec<f64> = z.row(i).iter().copied().collect();
                nearest_centroid(&row, &self.centroids)
            })
            .collect())
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x)?;
        if labels.is_empty() {
            return Err(Error::invalid("no labels to score"));
        }
        let correct = pred
            .iter()
            .zip(labels.iter())
            .filter(|(a, b)| a == b)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = NetworkFile::from(self);
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        let text = std::fs::read_to_string(path)?;
        let file: NetworkFile =
            serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        file.into_network()
    }
}

/// On-disk schema of a trained network (JSON).
#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    version: u32,
    config: RunConfig,
    n_classes: usize,
    layers: Vec<LayerFile>,
    centroids: MatrixData,
    basis: MatrixData,
    history: Vec<MetricsRecord>,
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    sigma: f64,
    in_dim: usize,
    out_dim: usize,
    weights: MatrixData,
    rff: RffMap,
}

const NETWORK_FORMAT: &str = "kernet-network";
const NETWORK_VERSION: u32 = 1;

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        NetworkFile {
            format: NETWORK_FORMAT.to_string(),
            version: NETWORK_VERSION,
            config: net.config.clone(),
            n_classes: net.n_classes,
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    sigma: l.sigma,
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    weights: MatrixData::from_array(l.weights.w.view()),
                    rff: l.rff.clone(),
                })
                .collect(),
            centroids: MatrixData::from_array(net.centroids.view()),
            basis: MatrixData::from_array(net.basis.view()),
            history: net.history.clone(),
            warnings: net.warnings.clone(),
        }
    }
}

impl NetworkFile {
    fn into_network(self) -> Result<Network> {
        if self.format != NETWORK_FORMAT {
            return Err(Error::Serde(format!("unknown format '{}'", self.format)));
        }
        if self.version != NETWORK_VERSION {
            return Err(Error::Serde(format!("unsupported version {}", self.version)));
        }
        Ok(Network {
            layers: self
                .layers
                .into_iter()
                .map(|l| Layer {
                    weights: WeightMatrix {
                        w: l.weights.to_array(),
                    },
                    sigma: l.sigma,
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    rff: l.rff,
                })
                .collect(),
            centroids: self.centroids.to_array(),
            basis: self.basis.to_array(),
            history: self.history,
            config: self.config,
            n_classes: self.n_classes,
            warnings: self.warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use ndarray::array;

    fn blobs() -> Dataset {
        let mut raw = Array2::zeros((12, 2));
        for i in 0..6 {
            raw[[i, 0]] = 0.1 * i as f64;
            raw[[i, 1]] = 0.05 * i as f64;
            raw[[6 + i, 0]] = 3.0 + 0.1 * i as f64;
            raw[[6 + i, 1]] = 3.0 - 0.05 * i as f64;
        }
        let labels = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        Dataset::from_raw(raw, labels, None, Vec::new()).unwrap()
    }

    #[test]
    fn single_layer_cap() {
        let ds = blobs();
        let mut cfg = RunConfig::for_solver(Solver::Wstar);
        cfg.max_layers = 1;
        cfg.rff_width = 50;
        let net = train(&ds, &cfg).unwrap();
        assert_eq!(net.history.len(), 1);
        assert_eq!(net.layers.len(), 1);
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let ds = blobs();
        let mut cfg = RunConfig::for_solver(Solver::Wstar);
        cfg.max_layers = 2;
        cfg.rff_width = 40;
        let net = train(&ds, &cfg).unwrap();
        let a = net.forward(ds.x.view()).unwrap();
        let b = net.forward(ds.x.view()).unwrap();
        for ((za, pa), (zb, pb)) in a.iter().zip(b.iter()) {
            assert_eq!(za, zb);
            assert_eq!(pa, pb);
        }
        let single = net.forward(ds.x.slice(ndarray::s![0..1, ..])).unwrap();
        for (l, (z, phi)) in single.iter().enumerate() {
            assert_eq!(z.nrows(), 1);
            assert_eq!(phi.dim(), (1, net.layers[l].rff.width()));
        }
        let empty = net.forward(ds.x.slice(ndarray::s![0..0, ..])).unwrap();
        for (z, phi) in empty {
            assert_eq!(z.nrows(), 0);
            assert_eq!(phi.nrows(), 0);
        }
    }

    #[test]
    fn predict_centroids_and_consistency() {
        let ds = blobs();
        let mut cfg = RunConfig::for_solver(Solver::Wstar);
        cfg.max_layers = 3;
        cfg.rff_width = 60;
        let net = train(&ds, &cfg).unwrap();
        let acc = net.accuracy(ds.x.view(), &ds.labels).unwrap();
        let recorded = net.history.last().unwrap().train_accuracy.unwrap();
        assert!((acc - recorded).abs() < 1e-12);
    }

    #[test]
    fn realigned_mse_hand_cases() {
        let z = array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        let mse = realigned_mse(z.view(), &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(mse, 0.0);

        // two-point clusters of radius r around each centroid
        let r = 0.3;
        let z2 = array![[-0.3, 0.0], [0.3, 0.0], [5.0 - 0.3, 0.0], [5.0 + 0.3, 0.0]];
        let mse2 = realigned_mse(z2.view(), &[0, 0, 1, 1], 2).unwrap();
        assert!((mse2 - r * r).abs() < 1e-12);

        assert!(realigned_mse(z.view(), &[0, 0, 0, 0], 2).is_err());
    }

    #[test]
    fn realigned_ce_limits() {
        // orthogonal class representatives reproduce near-zero CE
        let phi = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let basis = array![[1.0, 0.0], [0.0, 1.0]];
        let y = data::one_hot(&[0, 0, 1, 1], 2);
        let ce = realigned_ce(phi.view(), basis.view(), y.view(), 1e-12).unwrap();
        assert!(ce < 1e-10, "ce = {ce}");

        // constant activations give the uniform distribution: CE = ln τ
        let phi_u = Array2::from_elem((4, 2), 0.5);
        let ce_u = realigned_ce(phi_u.view(), basis.view(), y.view(), 1e-12).unwrap();
        assert!((ce_u - (2.0f64).ln()).abs() < 1e-9);

        assert!(realigned_ce(phi.view(), basis.view(), y.view(), 0.5).is_err());
    }

    #[test]
    fn save_load_bit_exact_forward() {
        let ds = blobs();
        let mut cfg = RunConfig::for_solver(Solver::Ws);
        cfg.max_layers = 2;
        cfg.rff_width = 30;
        let net = train(&ds, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        let loaded = Network::load(&path).unwrap();
        let a = net.forward(ds.x.view()).unwrap();
        let b = loaded.forward(ds.x.view()).unwrap();
        for ((za, pa), (zb, pb)) in a.iter().zip(b.iter()) {
            assert_eq!(za, zb);
            assert_eq!(pa, pb);
        }
        assert_eq!(net.history, loaded.history);
    }

    #[test]
    fn rejects_single_class() {
        let raw = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 2.0]).unwrap();
        let ds = Dataset::from_raw(raw, vec![0, 0, 0], None, Vec::new()).unwrap();
        let cfg = RunConfig::default();
        assert!(train(&ds, &cfg).is_err());
    }
}
