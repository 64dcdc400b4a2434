//! The two closed-form weight rules: per-class kernel mean embedding sums
//! (W_s) and the layer-optimal spectral fixed point W* obtained by iterating
//! eigendecompositions of Q = Rᵀ(Γ̂ − Diag(Γ̂·1))R, plus the analytic HSIC
//! gradient and the penalty reformulation used to study regularization.

use ndarray::{Array2, ArrayView2};

use crate::eigen::{self, RetainPolicy};
use crate::error::{ConvergenceFailure, Error, Result};
use crate::kernel::{self, CenteredLabelKernel};

/// Layer weights. W* columns are orthonormal; W_s has one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub w: Array2<f64>,
}

impl WeightMatrix {
    pub fn beta(&self) -> usize {
        self.w.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }
}

/// State of the spectral fixed-point solve at the returned iterate.
#[derive(Debug, Clone)]
pub struct IsmState {
    /// Q evaluated at the returned weights.
    pub q: Array2<f64>,
    /// Γ̂ = Γ ⊙ K_{RW} at the returned weights.
    pub gamma_hat: Array2<f64>,
    /// Rayleigh eigenvalues of the retained subspace, sorted descending.
    pub eigenvalues: Vec<f64>,
    pub iterations: usize,
    /// ‖Q·W − W·Λ‖_F at the returned iterate.
    pub subspace_residual: f64,
}

/// Per-sample penalty weights and the two algebraic routes to the surrogate
/// objective value; the routes agree exactly.
#[derive(Debug, Clone)]
pub struct PenaltyProfile {
    pub d: Vec<f64>,
    pub surrogate_value: f64,
    pub expanded_value: f64,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct IsmOptions {
    pub retain: RetainPolicy,
    pub conv_tol: f64,
    pub max_iter: usize,
}

impl Default for IsmOptions {
    fn default() -> Self {
        IsmOptions {
            retain: RetainPolicy::default(),
            conv_tol: 1e-5,
            max_iter: 100,
        }
    }
}

fn n_classes(labels: &[usize]) -> Result<usize> {
    let max = labels
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::invalid("labels must be non-empty"))?;
    Ok(max + 1)
}

/// Kernel mean embedding weights: column j is the sum of the input rows in
/// class j, optionally scaled by 1/√ζ with ζ the squared Frobenius norm of
/// the unnormalized matrix.
pub fn kme_weights(r: ArrayView2<f64>, labels: &[usize], normalize: bool) -> Result<WeightMatrix> {
    let (n, q) = r.dim();
    if labels.len() != n {
        return Err(Error::shape(format!(
            "labels length {} does not match {} rows",
            labels.len(),
            n
        )));
    }
    let classes = n_classes(labels)?;
    let mut counts = vec![0usize; classes];
    for &c in labels {
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("class {empty} has no samples")));
    }
    let mut w = Array2::<f64>::zeros((q, classes));
    for (i, &c) in labels.iter().enumerate() {
        for k in 0..q {
            w[[k, c]] += r[[i, k]];
        }
    }
    if normalize {
        let zeta: f64 = w.iter().map(|v| v * v).sum();
        if zeta <= 0.0 {
            return Err(Error::degenerate("class sums are all zero; cannot normalize"));
        }
        let s = 1.0 / zeta.sqrt();
        w.mapv_inplace(|v| v * s);
    }
    Ok(WeightMatrix { w })
}

fn q_from_gamma_hat(r: ArrayView2<f64>, gamma_hat: &Array2<f64>) -> Array2<f64> {
    let n = r.nrows();
    let mut m = gamma_hat.clone();
    for i in 0..n {
        let row_sum: f64 = gamma_hat.row(i).sum();
        m[[i, i]] -= row_sum;
    }
    let mr = m.dot(&r);
    let mut q = r.t().dot(&mr);
    // symmetrize away roundoff
    let dim = q.nrows();
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (q[[i, j]] + q[[j, i]]);
            q[[i, j]] = v;
            q[[j, i]] = v;
        }
    }
    q
}

fn gamma_hat_at(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    w: &WeightMatrix,
    sigma: f64,
) -> Result<Array2<f64>> {
    let z = r.dot(&w.w);
    let k = kernel::gaussian_kernel(z.view(), sigma)?;
    Ok(&k * &gamma.matrix())
}

/// Builds Γ̂ = Γ ⊙ K_{RW} and Q = Rᵀ(Γ̂ − Diag(Γ̂·1))R at the given weights.
pub fn ism_q(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    w: &WeightMatrix,
    sigma: f64,
) -> Result<IsmState> {
    if gamma.n() != r.nrows() {
        return Err(Error::shape("gamma/input row mismatch"));
    }
    let gamma_hat = gamma_hat_at(r, gamma, w, sigma)?;
    let q = q_from_gamma_hat(r, &gamma_hat);
    Ok(IsmState {
        q,
        gamma_hat,
        eigenvalues: Vec::new(),
        iterations: 0,
        subspace_residual: f64::INFINITY,
    })
}

struct SolveOutcome {
    weights: WeightMatrix,
    state: IsmState,
    converged: bool,
}

fn ism_iterate(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    sigma: f64,
    opts: &IsmOptions,
) -> Result<SolveOutcome> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let n = r.nrows();
    if gamma.n() != n {
        return Err(Error::shape("gamma/input row mismatch"));
    }
    // Γ̂⁰ = Γ, i.e. an all-ones kernel.
    let gamma_hat0 = gamma.matrix().to_owned();
    let mut q_cur = q_from_gamma_hat(r, &gamma_hat0);
    let mut prev_w: Option<Array2<f64>> = None;
    let mut best: Option<(WeightMatrix, IsmState)> = None;
    let mut iterations = 0usize;
    while iterations < opts.max_iter {
        iterations += 1;
        let (vecs, _vals) = eigen::eigh_topk(q_cur.view(), &opts.retain)?;
        if vecs.ncols() == 0 {
            // No positive direction left at this bandwidth. If an earlier
            // iterate exists, stop with it; otherwise the layer is
            // degenerate at this σ.
            return match best {
                Some((weights, state)) => Ok(SolveOutcome {
                    weights,
                    state,
                    converged: false,
                }),
                None => Err(Error::degenerate(
                    "spectral solve retained no positive eigenvalue",
                )),
            };
        }
        let dist = prev_w
            .as_ref()
            .map(|p| eigen::projector_distance(p.view(), vecs.view()))
            .unwrap_or(f64::INFINITY);
        let w = WeightMatrix { w: vecs.clone() };
        let gamma_hat_next = gamma_hat_at(r, gamma, &w, sigma)?;
        let q_next = q_from_gamma_hat(r, &gamma_hat_next);
        let (w_rot, eigenvalues, residual) = rayleigh_align(&w.w, &q_next);
        let state = IsmState {
            q: q_next.clone(),
            gamma_hat: gamma_hat_next.clone(),
            eigenvalues,
            iterations,
            subspace_residual: residual,
        };
        let weights = WeightMatrix { w: w_rot };
        let better = best
            .as_ref()
            .map(|(_, s)| residual < s.subspace_residual)
            .unwrap_or(true);
        if better {
            best = Some((weights.clone(), state.clone()));
        }
        if dist <= opts.conv_tol && residual <= 10.0 * opts.conv_tol {
            return Ok(SolveOutcome {
                weights,
                state,
                converged: true,
            });
        }
        prev_w = Some(vecs);
        q_cur = q_next;
    }
    let (weights, state) = best.expect("at least one iteration ran");
    Ok(SolveOutcome {
        weights,
        state,
        converged: false,
    })
}

/// Rotates W within its span to the Rayleigh eigenbasis of Q so the returned
/// pair (W, Λ) is an approximate eigen-set; returns the rotated W, Λ sorted
/// descending, and ‖QW − WΛ‖_F.
fn rayleigh_align(w: &Array2<f64>, q: &Array2<f64>) -> (Array2<f64>, Vec<f64>, f64) {
    let qw = q.dot(w);
    let b = w.t().dot(&qw);
    let (vals, u) = match eigen::jacobi_eigh(b.view()) {
        Ok(pair) => pair,
        Err(_) => {
            // fall back to the unrotated basis
            let beta = w.ncols();
            let vals: Vec<f64> = (0..beta).map(|i| b[[i, i]]).collect();
            let mut res = 0.0;
            for c in 0..beta {
                for r in 0..w.nrows() {
                    let t = qw[[r, c]] - vals[c] * w[[r, c]];
                    res += t * t;
                }
            }
            return (w.clone(), vals, res.sqrt());
        }
    };
    let mut w_rot = w.dot(&u);
    eigen::fix_signs(&mut w_rot);
    let qw_rot = q.dot(&w_rot);
    let mut res = 0.0;
    for (c, &lam) in vals.iter().enumerate() {
        for r in 0..w_rot.nrows() {
            let t = qw_rot[[r, c]] - lam * w_rot[[r, c]];
            res += t * t;
        }
    }
    (w_rot, vals, res.sqrt())
}

/// Fixed-point solve for the layer-optimal weights: iterate
/// W ← top eigenvectors of Q(W) from Γ̂⁰ = Γ until the spanned projector
/// stops moving and the stationarity residual is met.
pub fn ism_solve(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    sigma: f64,
    opts: &IsmOptions,
) -> Result<(WeightMatrix, IsmState)> {
    let out = ism_iterate(r, gamma, sigma, opts)?;
    if out.converged {
        Ok((out.weights, out.state))
    } else {
        Err(Error::Convergence(Box::new(ConvergenceFailure {
            message: format!(
                "fixed point not reached after {} iterations (residual {:.3e})",
                out.state.iterations, out.state.subspace_residual
            ),
            weights: out.weights,
            state: out.state,
        })))
    }
}

/// Like [`ism_solve`] but returns the best iterate instead of failing when
/// the budget runs out; used inside bandwidth scans where a slightly
/// unconverged iterate still ranks candidate σ values correctly.
pub fn ism_solve_budgeted(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    sigma: f64,
    opts: &IsmOptions,
) -> Result<(WeightMatrix, IsmState)> {
    let out = ism_iterate(r, gamma, sigma, opts)?;
    Ok((out.weights, out.state))
}

/// Gradient of Σ_ij Γ_ij·exp(−tr(WᵀA_ijW)/2σ²) with respect to W, where
/// A_ij = (r_i − r_j)(r_i − r_j)ᵀ. Equals (2/σ²)·Q(W)·W.
pub fn hsic_gradient(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    w: &WeightMatrix,
    sigma: f64,
) -> Result<Array2<f64>> {
    let state = ism_q(r, gamma, w, sigma)?;
    let scale = 2.0 / (sigma * sigma);
    Ok(state.q.dot(&w.w) * scale)
}

/// Raw HSIC objective of the exact Gaussian kernel of the projected rows:
/// Σ_ij Γ_ij·κ_σ(Wᵀr_i, Wᵀr_j).
pub fn projected_hsic_raw(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    w: &WeightMatrix,
    sigma: f64,
) -> Result<f64> {
    let z = r.dot(&w.w);
    let k = kernel::gaussian_kernel(z.view(), sigma)?;
    kernel::hsic_raw(k.view(), gamma)
}

/// Per-sample penalty weights d_i (row sums of Γ̂/σ²) and the surrogate
/// objective computed along two independent algebraic routes.
pub fn penalty_profile(
    r: ArrayView2<f64>,
    gamma: &CenteredLabelKernel,
    w: &WeightMatrix,
    sigma: f64,
) -> Result<PenaltyProfile> {
    if gamma.n() != r.nrows() {
        return Err(Error::shape("gamma/input row mismatch"));
    }
    let mut gamma_hat = gamma_hat_at(r, gamma, w, sigma)?;
    let inv = 1.0 / (sigma * sigma);
    gamma_hat.mapv_inplace(|v| v * inv);
    let n = r.nrows();
    let d: Vec<f64> = (0..n).map(|i| gamma_hat.row(i).sum()).collect();

    // Route 1: matrix form Tr(Wᵀ Rᵀ (Γ̂ − D_Γ̂) R W).
    let mut m = gamma_hat.clone();
    for i in 0..n {
        m[[i, i]] -= d[i];
    }
    let z = r.dot(&w.w);
    let mz = m.dot(&z);
    let surrogate_value = z
        .iter()
        .zip(mz.iter())
        .map(|(a, b)| a * b)
        .sum::<f64>();

    // Route 2: expanded pairwise form Σ Γ̂_ij⟨Wᵀr_i,Wᵀr_j⟩ − Σ d_i‖Wᵀr_i‖².
    let gram = z.dot(&z.t());
    let mut expanded_value = 0.0;
    for i in 0..n {
        for j in 0..n {
            expanded_value += gamma_hat[[i, j]] * gram[[i, j]];
        }
        expanded_value -= d[i] * gram[[i, i]];
    }
    Ok(PenaltyProfile {
        d,
        surrogate_value,
        expanded_value,
    })
}
