//! Bandwidth selection: maximum kernel separation, HSIC-maximizing σ for a
//! weight rule, and the decreasing-σ schedule used with the kernel mean
//! embedding weights. The 1-D searches use a coarse log-spaced grid followed
//! by golden-section refinement around the grid argmax.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::exec;
use crate::kernel::{self, CenteredLabelKernel, PairSets};
use crate::weights::{self, IsmOptions, WeightMatrix};

#[derive(Debug, Clone, Copy)]
pub struct SigmaSearchResult {
    pub sigma: f64,
    pub objective: f64,
    pub evaluations: usize,
    pub bracket: (f64, f64),
    pub at_boundary: bool,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub grid_points: usize,
    pub golden_evals: usize,
    /// Explicit bracket; when absent, [1e-2·m, 1e2·m] around the median
    /// pairwise distance m of the input rows.
    pub bracket: Option<(f64, f64)>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            grid_points: 64,
            golden_evals: 32,
            bracket: None,
        }
    }
}

/// Which weight rule the HSIC bandwidth search should solve at each σ.
#[derive(Debug, Clone)]
pub enum WeightRule {
    Kme { normalize: bool },
    Ism(IsmOptions),
}

/// Median of the nonzero pairwise distances between rows; `None` when every
/// pair coincides.
pub fn median_pairwise_distance(r: ArrayView2<f64>) -> Option<f64> {
    let n = r.nrows();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = r
                .row(i)
                .iter()
                .zip(r.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 > 0.0 {
                dists.push(d2.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return None;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(dists[dists.len() / 2])
}

/// Mean same-class kernel value minus mean different-class kernel value at
/// bandwidth σ; diagonal pairs excluded.
pub fn separation_objective(r: ArrayView2<f64>, pairs: &PairSets, sigma: f64) -> Result<f64> {
    if pairs.same_class.is_empty() || pairs.diff_class.is_empty() {
        return Err(Error::invalid("both pair sets must be non-empty"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let inv = -0.5 / (sigma * sigma);
    let kernel_of = |&(i, j): &(usize, usize)| -> f64 {
        let d2: f64 = r
            .row(i)
            .iter()
            .zip(r.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (d2 * inv).exp()
    };
    let same: f64 = pairs.same_class.iter().map(kernel_of).sum();
    let diff: f64 = pairs.diff_class.iter().map(kernel_of).sum();
    Ok(same / pairs.same_class.len() as f64 - diff / pairs.diff_class.len() as f64)
}

/// The compact matrix form of the separation objective: with g = 1/|S|,
/// ḡ = 1/|Sᶜ| over ordered pairs, Q = ḡ·1 − (g+ḡ)·K_Y, and the objective
/// equals −Tr(K_X·Q) − n·g (the constant removes the diagonal pairs).
pub fn separation_q(labels: &[usize]) -> Array2<f64> {
    let n = labels.len();
    let pairs = PairSets::from_labels(labels);
    let g = 1.0 / (2 * pairs.same_class.len()) as f64;
    let g_bar = 1.0 / (2 * pairs.diff_class.len()) as f64;
    let mut q = Array2::from_elem((n, n), g_bar);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q[[i, j]] -= g + g_bar;
            }
        }
    }
    q
}

struct ScanOutcome {
    result: SigmaSearchResult,
}

/// Coarse log-grid scan plus golden-section refinement of a maximization
/// objective. Objective failures at individual σ values (degenerate kernels
/// at extreme bandwidths) are skipped; the scan only fails when every grid
/// point fails.
fn scan_and_refine<F>(
    lo: f64,
    hi: f64,
    grid_points: usize,
    golden_evals: usize,
    objective: F,
) -> Result<ScanOutcome>
where
    F: Fn(f64) -> Option<f64> + Sync + Send,
{
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid(format!("bad bracket ({lo}, {hi})")));
    }
    let g = grid_points.max(3);
    let ln_lo = lo.ln();
    let ln_hi = hi.ln();
    let step = (ln_hi - ln_lo) / (g - 1) as f64;
    let sigmas: Vec<f64> = (0..g).map(|i| (ln_lo + step * i as f64).exp()).collect();
    let values = exec::map_indexed(g, |i| objective(sigmas[i]));
    let mut evaluations = g;
    let mut best_idx: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(val) = v {
            let better = match best_idx {
                None => true,
                Some(b) => *val > values[b].unwrap(),
            };
            if better {
                best_idx = Some(i);
            }
        }
    }
    let best_idx = best_idx.ok_or_else(|| {
        Error::degenerate("objective undefined over the whole bandwidth bracket")
    })?;
    let at_boundary = best_idx == 0 || best_idx == g - 1;
    let mut best_sigma = sigmas[best_idx];
    let mut best_val = values[best_idx].unwrap();

    // golden-section refinement in log space around the grid argmax
    let mut a = ln_lo + step * best_idx.saturating_sub(1) as f64;
    let mut b = (ln_lo + step * (best_idx + 1).min(g - 1) as f64).min(ln_hi);
    if b > a {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let record = |x: f64, v: Option<f64>, best_sigma: &mut f64, best_val: &mut f64| {
            if let Some(val) = v {
                if val > *best_val {
                    *best_val = val;
                    *best_sigma = x.exp();
                }
            }
        };
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = objective(x1.exp());
        let mut f2 = objective(x2.exp());
        evaluations += 2;
        record(x1, f1, &mut best_sigma, &mut best_val);
        record(x2, f2, &mut best_sigma, &mut best_val);
        let as_num = |v: &Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
        for _ in 0..golden_evals.saturating_sub(2) {
            if as_num(&f1) < as_num(&f2) {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = objective(x2.exp());
                evaluations += 1;
                record(x2, f2, &mut best_sigma, &mut best_val);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = objective(x1.exp());
                evaluations += 1;
                record(x1, f1, &mut best_sigma, &mut best_val);
            }
        }
    }
    Ok(ScanOutcome {
        result: SigmaSearchResult {
            sigma: best_sigma,
            objective: best_val,
            evaluations,
            bracket: (lo, hi),
            at_boundary,
            improved: true,
        },
    })
}

fn default_bracket(r: ArrayView2<f64>, opts: &SearchOptions) -> Result<(f64, f64)> {
    if let Some(b) = opts.bracket {
        return Ok(b);
    }
    let m = median_pairwise_distance(r)
        .ok_or_else(|| Error::degenerate("all samples coincide; no bandwidth scale"))?;
    Ok((1e-2 * m, 1e2 * m))
}

/// σ maximizing the kernel separation objective.
pub fn optimize_sigma_separation(
    r: ArrayView2<f64>,
    pairs: &PairSets,
    opts: &SearchOptions,
) -> Result<SigmaSearchResult> {
    if pairs.same_class.is_empty() || pairs.diff_class.is_empty() {
        return Err(Error::invalid("both pair sets must be non-empty"));
    }
    let max_same = pairs
        .same_class
        .iter()
        .map(|&(i, j)| {
            r.row(i)
                .iter()
                .zip(r.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .fold(0.0f64, f64::max);
    if max_same == 0.0 {
        return Err(Error::degenerate(
            "same-class samples coincide; separation objective has no interior maximum",
        ));
    }
    let (lo, hi) = default_bracket(r, opts)?;
    let out = scan_and_refine(lo, hi, opts.grid_points, opts.golden_evals, |sigma| {
        separation_objective(r, pairs, sigma).ok()
    })?;
    Ok(out.result)
}

/// Normalized HSIC of the exact Gaussian kernel of the projected rows R·W
/// against the label kernel.
pub fn layer_hsic_exact(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    w: &WeightMatrix,
    sigma: f64,
) -> Result<f64> {
    let z = r.dot(&w.w);
    let k = kernel::gaussian_kernel(z.view(), sigma)?;
    kernel::hsic_normalized_vs_gamma(k.view(), gamma)
}

/// σ maximizing normalized HSIC after computing weights by the given rule at
/// each candidate bandwidth and projecting.
pub fn optimize_sigma_hsic(
    r: ArrayView2<f64>,
    labels: &[usize],
    gamma: &CenteredLabelKernel,
    rule: &WeightRule,
    opts: &SearchOptions,
) -> Result<SigmaSearchResult> {
    let (lo, hi) = default_bracket(r, opts)?;
    match rule {
        WeightRule::Kme { normalize } => {
            let w = weights::kme_weights(r, labels, *normalize)?;
            let out = scan_and_refine(lo, hi, opts.grid_points, opts.golden_evals, |sigma| {
                layer_hsic_exact(r, gamma, &w, sigma).ok()
            })?;
            Ok(out.result)
        }
        WeightRule::Ism(ism_opts) => {
            let out = scan_and_refine(lo, hi, opts.grid_points, opts.golden_evals, |sigma| {
                let (w, _) = weights::ism_solve_budgeted(r, gamma, sigma, ism_opts).ok()?;
                layer_hsic_exact(r, gamma, &w, sigma).ok()
            })?;
            Ok(out.result)
        }
    }
}

/// σ maximizing normalized HSIC of the raw input kernel (no projection);
/// the curve plotted by the bandwidth sweep.
pub fn optimize_sigma_hsic_input(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    opts: &SearchOptions,
) -> Result<SigmaSearchResult> {
    let (lo, hi) = default_bracket(r, opts)?;
    let out = scan_and_refine(lo, hi, opts.grid_points, opts.golden_evals, |sigma| {
        let k = kernel::gaussian_kernel(r, sigma).ok()?;
        kernel::hsic_normalized_vs_gamma(k.view(), gamma).ok()
    })?;
    Ok(out.result)
}

/// Walks σ = prev·decayᵏ for k = 0..=max_steps and returns the first σ whose
/// objective strictly exceeds `prev_hsic`; otherwise the best σ found with
/// `improved = false`. Failures of the objective at individual σ are skipped.
pub fn decay_search<F>(
    prev_sigma: f64,
    prev_hsic: f64,
    decay: f64,
    max_steps: usize,
    eval: F,
) -> Result<SigmaSearchResult>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(prev_sigma > 0.0) {
        return Err(Error::invalid("previous sigma must be positive"));
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::invalid("decay must lie in (0, 1)"));
    }
    let mut best: Option<(f64, f64)> = None;
    let mut evaluations = 0usize;
    let mut sigma = prev_sigma;
    for _ in 0..=max_steps {
        evaluations += 1;
        match eval(sigma) {
            Ok(h) => {
                if h > prev_hsic {
                    return Ok(SigmaSearchResult {
                        sigma,
                        objective: h,
                        evaluations,
                        bracket: (prev_sigma * decay.powi(max_steps as i32), prev_sigma),
                        at_boundary: false,
                        improved: true,
                    });
                }
                if best.map(|(_, b)| h > b).unwrap_or(true) {
                    best = Some((sigma, h));
                }
            }
            Err(Error::DegenerateInput(_)) => {}
            Err(e) => return Err(e),
        }
        sigma *= decay;
    }
    let (sigma, objective) = best.ok_or_else(|| {
        Error::degenerate("objective undefined along the whole decay schedule")
    })?;
    Ok(SigmaSearchResult {
        sigma,
        objective,
        evaluations,
        bracket: (prev_sigma * decay.powi(max_steps as i32), prev_sigma),
        at_boundary: false,
        improved: false,
    })
}

/// Decay schedule for a fixed kernel-mean-embedding layer, scored with the
/// exact Gaussian kernel of the projection.
pub fn next_sigma_for_ws(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    w_s: &WeightMatrix,
    prev_sigma: f64,
    prev_hsic: f64,
    decay: f64,
    max_steps: usize,
) -> Result<SigmaSearchResult> {
    decay_search(prev_sigma, prev_hsic, decay, max_steps, |sigma| {
        layer_hsic_exact(r, gamma, w_s, sigma)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gamma_matrix;
    use ndarray::array;

    fn one_hot(labels: &[usize]) -> Array2<f64> {
        let t = labels.iter().copied().max().unwrap() + 1;
        let mut y = Array2::zeros((labels.len(), t));
        for (i, &c) in labels.iter().enumerate() {
            y[[i, c]] = 1.0;
        }
        y
    }

    #[test]
    fn separation_limits() {
        let r = array![[0.0], [0.1], [1.0], [1.1]];
        let pairs = PairSets::from_labels(&[0, 0, 1, 1]);
        let big = separation_objective(r.view(), &pairs, 1e9).unwrap();
        assert!(big.abs() < 1e-12);
        let small = separation_objective(r.view(), &pairs, 1e-9).unwrap();
        assert!(small.abs() < 1e-12);
    }

    #[test]
    fn separation_matches_brute_force() {
        let r = array![[0.0], [0.1], [1.0], [1.1]];
        let labels = [0usize, 0, 1, 1];
        let pairs = PairSets::from_labels(&labels);
        let sigma = 0.2;
        let v = separation_objective(r.view(), &pairs, sigma).unwrap();
        let kappa = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * sigma * sigma)).exp();
        let xs = [0.0, 0.1, 1.0, 1.1];
        let mut same = 0.0;
        let mut same_n = 0;
        let mut diff = 0.0;
        let mut diff_n = 0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                if labels[i] == labels[j] {
                    same += kappa(xs[i], xs[j]);
                    same_n += 1;
                } else {
                    diff += kappa(xs[i], xs[j]);
                    diff_n += 1;
                }
            }
        }
        let expect = same / same_n as f64 - diff / diff_n as f64;
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn optimizer_finds_interior_peak() {
        let r = array![[0.0], [0.05], [0.1], [1.0], [1.05], [1.1]];
        let pairs = PairSets::from_labels(&[0, 0, 0, 1, 1, 1]);
        let res = optimize_sigma_separation(r.view(), &pairs, &SearchOptions::default()).unwrap();
        assert!(res.objective > 0.5);
        assert!(!res.at_boundary);
        assert!(res.bracket.0 < res.sigma && res.sigma < res.bracket.1);
        // re-evaluation reproduces the reported objective
        let again = separation_objective(r.view(), &pairs, res.sigma).unwrap();
        assert!((again - res.objective).abs() < 1e-12);
    }

    #[test]
    fn optimizer_scales_with_data() {
        let r = array![[0.0], [0.05], [0.1], [1.0], [1.05], [1.1]];
        let pairs = PairSets::from_labels(&[0, 0, 0, 1, 1, 1]);
        let res1 = optimize_sigma_separation(r.view(), &pairs, &SearchOptions::default()).unwrap();
        let r2 = r.mapv(|v| v * 7.0);
        let res2 = optimize_sigma_separation(r2.view(), &pairs, &SearchOptions::default()).unwrap();
        let ratio = res2.sigma / res1.sigma;
        assert!((ratio / 7.0 - 1.0).abs() < 0.25, "ratio {ratio}");
    }

    #[test]
    fn degenerate_repeated_points() {
        let r = array![[0.5, 0.5], [0.5, 0.5], [2.0, 2.0], [2.0, 2.0]];
        let pairs = PairSets::from_labels(&[0, 0, 1, 1]);
        assert!(matches!(
            optimize_sigma_separation(r.view(), &pairs, &SearchOptions::default()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn decay_search_strict_improvement_and_bound() {
        let evals = std::cell::Cell::new(0usize);
        let res = decay_search(1.0, 0.5, 0.9, 50, |s| {
            evals.set(evals.get() + 1);
            Ok(1.0 - s) // improves once sigma < 0.5
        })
        .unwrap();
        assert!(res.improved);
        assert!(res.objective > 0.5);
        assert!(evals.get() <= 51);

        let res2 = decay_search(1.0, 10.0, 0.9, 5, |_s| Ok(0.0)).unwrap();
        assert!(!res2.improved);
        assert_eq!(res2.evaluations, 6);
    }

    #[test]
    fn hsic_search_deterministic() {
        let r = array![
            [0.0, 0.1],
            [0.1, 0.0],
            [0.05, 0.12],
            [2.0, 2.1],
            [2.1, 2.0],
            [1.9, 2.05]
        ];
        let labels = vec![0usize, 0, 0, 1, 1, 1];
        let gamma = gamma_matrix(one_hot(&labels).view()).unwrap();
        let rule = WeightRule::Kme { normalize: true };
        let opts = SearchOptions::default();
        let a = optimize_sigma_hsic(r.view(), &labels, &gamma, &rule, &opts).unwrap();
        let b = optimize_sigma_hsic(r.view(), &labels, &gamma, &rule, &opts).unwrap();
        assert_eq!(a.sigma.to_bits(), b.sigma.to_bits());
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        // argmax property against the bracket endpoints
        let w = weights::kme_weights(r.view(), &labels, true).unwrap();
        for endpoint in [a.bracket.0, a.bracket.1] {
            if let Ok(v) = layer_hsic_exact(r.view(), &gamma, &w, endpoint) {
                assert!(a.objective >= v - 1e-12);
            }
        }
    }
}
