//! Gaussian kernels, centering, HSIC statistics and the geometric
//! convergence metrics (scatter trace ratio, cosine similarity ratio).

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::exec;

/// Index pairs (i, j) with i < j, split by whether the two samples share a
/// class. The two sets are disjoint and their union covers all unordered
/// pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSets {
    pub same_class: Vec<(usize, usize)>,
    pub diff_class: Vec<(usize, usize)>,
}

impl PairSets {
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let mut same_class = Vec::new();
        let mut diff_class = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if labels[i] == labels[j] {
                    same_class.push((i, j));
                } else {
                    diff_class.push((i, j));
                }
            }
        }
        PairSets {
            same_class,
            diff_class,
        }
    }
}

/// Centered label kernel Γ = H · YYᵀ · H. Symmetric, every row sums to zero;
/// entries are positive for same-class pairs and negative across classes.
#[derive(Debug, Clone)]
pub struct CenteredLabelKernel {
    gamma: Array2<f64>,
}

impl CenteredLabelKernel {
    /// Wraps a precomputed matrix after validating the Γ invariants.
    pub fn from_matrix(gamma: Array2<f64>) -> Result<Self> {
        let n = gamma.nrows();
        if gamma.ncols() != n {
            return Err(Error::shape(format!(
                "gamma must be square, got {}x{}",
                n,
                gamma.ncols()
            )));
        }
        let scale = gamma.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (gamma[[i, j]] - gamma[[j, i]]).abs() > 1e-10 * scale {
                    return Err(Error::invalid("gamma is not symmetric"));
                }
            }
            let row_sum: f64 = gamma.row(i).sum();
            if row_sum.abs() > 1e-8 * scale.max(1.0) * n as f64 {
                return Err(Error::invalid(format!(
                    "gamma row {i} sums to {row_sum}, expected 0"
                )));
            }
        }
        Ok(CenteredLabelKernel { gamma })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.gamma.view()
    }

    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    /// ‖Γ‖²_F, the label-side normalizer of the centered alignment.
    pub fn squared_norm(&self) -> f64 {
        self.gamma.iter().map(|v| v * v).sum()
    }
}

/// H = I − (1/n)·11ᵀ. Symmetric, idempotent, annihilates constant vectors.
pub fn centering_matrix(n: usize) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::invalid("centering matrix needs n >= 1"));
    }
    let off = -1.0 / n as f64;
    let mut h = Array2::from_elem((n, n), off);
    for i in 0..n {
        h[[i, i]] += 1.0;
    }
    Ok(h)
}

/// Γ from one-hot labels: Γ = (HY)(HY)ᵀ.
pub fn gamma_matrix(y: ArrayView2<f64>) -> Result<CenteredLabelKernel> {
    let (n, t) = y.dim();
    if n == 0 || t == 0 {
        return Err(Error::invalid("label matrix must be non-empty"));
    }
    for i in 0..n {
        let mut ones = 0usize;
        for j in 0..t {
            let v = y[[i, j]];
            if v == 1.0 {
                ones += 1;
            } else if v != 0.0 {
                return Err(Error::invalid(format!(
                    "row {i} of Y is not one-hot (entry {v})"
                )));
            }
        }
        if ones != 1 {
            return Err(Error::invalid(format!("row {i} of Y is not one-hot")));
        }
    }
    for j in 0..t {
        if y.column(j).sum() == 0.0 {
            return Err(Error::invalid(format!("class {j} has no samples")));
        }
    }
    let means = y.mean_axis(Axis(0)).expect("n >= 1");
    let centered = &y - &means;
    let gamma = centered.dot(&centered.t());
    Ok(CenteredLabelKernel { gamma })
}

/// Squared Euclidean distances between all row pairs of `r`.
pub fn pairwise_sq_dists(r: ArrayView2<f64>) -> Array2<f64> {
    dists_impl(r, true)
}

/// Sequential reference implementation of [`pairwise_sq_dists`].
pub fn pairwise_sq_dists_seq(r: ArrayView2<f64>) -> Array2<f64> {
    dists_impl(r, false)
}

fn dists_impl(r: ArrayView2<f64>, parallel: bool) -> Array2<f64> {
    let n = r.nrows();
    let q = r.ncols();
    let owned;
    let flat: &[f64] = match r.to_slice() {
        Some(s) => s,
        None => {
            owned = r.to_owned();
            owned.as_slice().expect("owned copy is standard layout")
        }
    };
    let rows: Vec<&[f64]> = (0..n).map(|i| &flat[i * q..(i + 1) * q]).collect();
    let compute_row = |i: usize| -> Vec<f64> {
        let a = rows[i];
        let mut out = vec![0.0; n];
        for (j, b) in rows.iter().enumerate() {
            if j == i {
                continue;
            }
            let mut s = 0.0;
            for (x, y) in a.iter().zip(b.iter()) {
                let d = x - y;
                s += d * d;
            }
            out[j] = s;
        }
        out
    };
    let chunks = if parallel {
        exec::map_indexed(n, compute_row)
    } else {
        exec::map_indexed_seq(n, compute_row)
    };
    let mut flat = Vec::with_capacity(n * n);
    for row in chunks {
        flat.extend_from_slice(&row);
    }
    Array2::from_shape_vec((n, n), flat).expect("n*n elements")
}

fn validate_kernel_input(r: ArrayView2<f64>, sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("input matrix contains non-finite entries"));
    }
    Ok(())
}

/// Gaussian kernel matrix K_ij = exp(−‖r_i − r_j‖² / (2σ²)).
pub fn gaussian_kernel(r: ArrayView2<f64>, sigma: f64) -> Result<Array2<f64>> {
    validate_kernel_input(r, sigma)?;
    let mut k = pairwise_sq_dists(r);
    let inv = -0.5 / (sigma * sigma);
    k.mapv_inplace(|d| (d * inv).exp());
    Ok(k)
}

/// Sequential reference implementation of [`gaussian_kernel`].
pub fn gaussian_kernel_seq(r: ArrayView2<f64>, sigma: f64) -> Result<Array2<f64>> {
    validate_kernel_input(r, sigma)?;
    let mut k = pairwise_sq_dists_seq(r);
    let inv = -0.5 / (sigma * sigma);
    k.mapv_inplace(|d| (d * inv).exp());
    Ok(k)
}

/// Gaussian kernel from a precomputed squared-distance matrix.
pub fn gaussian_kernel_from_sq_dists(d2: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let inv = -0.5 / (sigma * sigma);
    Ok(d2.mapv(|d| (d * inv).exp()))
}

/// Raw HSIC objective Tr(Γ·K). Equals the signed pairwise sum over same- and
/// different-class pairs plus the Γ diagonal.
pub fn hsic_raw(k: ArrayView2<f64>, gamma: &CenteredLabelKernel) -> Result<f64> {
    let n = gamma.n();
    if k.dim() != (n, n) {
        return Err(Error::shape(format!(
            "kernel is {:?}, gamma is {}x{}",
            k.dim(),
            n,
            n
        )));
    }
    let mut acc = 0.0;
    for (a, b) in k.iter().zip(gamma.matrix().iter()) {
        acc += a * b;
    }
    Ok(acc)
}

/// Doubly centers a kernel matrix: K̄ = HKH.
pub fn center_kernel(k: ArrayView2<f64>) -> Array2<f64> {
    let n = k.nrows();
    let row_means = k.mean_axis(Axis(1)).expect("n >= 1");
    let grand = row_means.sum() / n as f64;
    let mut out = k.to_owned();
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = k[[i, j]] - row_means[i] - row_means[j] + grand;
        }
    }
    out
}

fn centered_alignment(num: f64, d1: f64, d2: f64, scale: f64) -> Result<f64> {
    let floor = 1e-24 * scale.max(1.0);
    if d1 <= floor || d2 <= floor {
        return Err(Error::degenerate(
            "kernel is constant after centering; normalized HSIC undefined",
        ));
    }
    Ok(num / (d1 * d2).sqrt())
}

/// Normalized HSIC (centered kernel alignment):
/// Tr(K_X H K_Y H) / √(Tr(K_X H K_X H) · Tr(K_Y H K_Y H)).
pub fn hsic_normalized(kx: ArrayView2<f64>, ky: ArrayView2<f64>) -> Result<f64> {
    let n = kx.nrows();
    if kx.dim() != (n, n) || ky.dim() != (n, n) {
        return Err(Error::shape("hsic_normalized needs two n x n matrices"));
    }
    let cx = center_kernel(kx);
    let cy = center_kernel(ky);
    let mut num = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for (ca, cb) in cx.iter().zip(cy.iter()) {
        num += ca * cb;
        d1 += ca * ca;
        d2 += cb * cb;
    }
    let scale = kx.iter().fold(0.0f64, |m, v| m.max(v * v));
    centered_alignment(num, d1, d2, scale)
}

/// Normalized HSIC against the label kernel, expressed through Γ:
/// Tr(Γ·K_X) / √(Tr(K_X H K_X H) · ‖Γ‖²_F).
pub fn hsic_normalized_vs_gamma(kx: ArrayView2<f64>, gamma: &CenteredLabelKernel) -> Result<f64> {
    let n = gamma.n();
    if kx.dim() != (n, n) {
        return Err(Error::shape("kernel/gamma size mismatch"));
    }
    let cx = center_kernel(kx);
    let mut num = 0.0;
    let mut d1 = 0.0;
    for ((a, g), ca) in kx.iter().zip(gamma.matrix().iter()).zip(cx.iter()) {
        num += g * a;
        d1 += ca * ca;
    }
    let d2 = gamma.squared_norm();
    let scale = kx.iter().fold(0.0f64, |m, v| m.max(v * v));
    centered_alignment(num, d1, d2, scale)
}

/// Scatter trace ratio Tr(S_w) / Tr(S_b) of a preactivation matrix: summed
/// squared distances over same-class pairs divided by the same sum over
/// different-class pairs. Diagonal pairs are excluded.
pub fn scatter_trace_ratio(z: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(Error::shape("labels length must match row count"));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(Error::invalid("scatter ratio needs at least two classes"));
    }
    let mut tr_w = 0.0;
    let mut tr_b = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = z
                .row(i)
                .iter()
                .zip(z.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if labels[i] == labels[j] {
                tr_w += d2;
            } else {
                tr_b += d2;
            }
        }
    }
    if tr_b <= 0.0 {
        return Err(Error::degenerate("between-class scatter is zero"));
    }
    Ok(tr_w / tr_b)
}

/// Cosine similarity ratio: summed cross-class activation inner products over
/// summed same-class inner products.
pub fn cosine_similarity_ratio(phi: ArrayView2<f64>, pairs: &PairSets) -> Result<f64> {
    let dot = |i: usize, j: usize| -> f64 {
        phi.row(i)
            .iter()
            .zip(phi.row(j).iter())
            .map(|(a, b)| a * b)
            .sum()
    };
    let num: f64 = pairs.diff_class.iter().map(|&(i, j)| dot(i, j)).sum();
    let den: f64 = pairs.same_class.iter().map(|&(i, j)| dot(i, j)).sum();
    if den.abs() < 1e-12 {
        return Err(Error::degenerate("same-class inner products sum to zero"));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn centering_small_cases() {
        let h1 = centering_matrix(1).unwrap();
        assert_eq!(h1[[0, 0]], 0.0);
        let h2 = centering_matrix(2).unwrap();
        assert_eq!(h2, array![[0.5, -0.5], [-0.5, 0.5]]);
        let h3 = centering_matrix(3).unwrap();
        let ones = array![1.0, 1.0, 1.0];
        let hv = h3.dot(&ones);
        for v in hv.iter() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn centering_rejects_zero() {
        assert!(matches!(centering_matrix(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gamma_identity_two_classes() {
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let g = gamma_matrix(y.view()).unwrap();
        let expect = array![[0.5, -0.5], [-0.5, 0.5]];
        for (a, b) in g.matrix().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_sign_pattern_balanced() {
        let y = array![
            [1.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 1.0]
        ];
        let g = gamma_matrix(y.view()).unwrap();
        let m = g.matrix();
        assert!(m[[0, 1]] > 0.0 && m[[2, 3]] > 0.0);
        assert!(m[[0, 2]] < 0.0 && m[[1, 3]] < 0.0);
        for i in 0..4 {
            assert!(m.row(i).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_rejects_non_one_hot() {
        let y = array![[1.0, 1.0], [0.0, 1.0]];
        assert!(gamma_matrix(y.view()).is_err());
        let y2 = array![[0.5, 0.5], [0.0, 1.0]];
        assert!(gamma_matrix(y2.view()).is_err());
    }

    #[test]
    fn gaussian_kernel_basics() {
        let r = array![[0.0], [2.0]];
        let k = gaussian_kernel(r.view(), 1.0).unwrap();
        assert!((k[[0, 1]] - (-2.0f64).exp()).abs() < 1e-12);
        assert_eq!(k[[0, 0]], 1.0);

        let same = array![[1.0, 2.0], [1.0, 2.0]];
        let k = gaussian_kernel(same.view(), 0.7).unwrap();
        for v in k.iter() {
            assert_eq!(*v, 1.0);
        }

        let r = array![[0.3, -0.2], [1.4, 2.0], [-3.0, 0.4]];
        let k = gaussian_kernel(r.view(), 1e9).unwrap();
        for v in k.iter() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_kernel_rejects_bad_inputs() {
        let r = array![[0.0], [1.0]];
        assert!(gaussian_kernel(r.view(), 0.0).is_err());
        assert!(gaussian_kernel(r.view(), -1.0).is_err());
        let bad = array![[f64::NAN], [1.0]];
        assert!(gaussian_kernel(bad.view(), 1.0).is_err());
    }

    #[test]
    fn hsic_raw_trace_identities() {
        let y = array![
            [1.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 1.0]
        ];
        let g = gamma_matrix(y.view()).unwrap();
        let ones = Array2::from_elem((4, 4), 1.0);
        assert!(hsic_raw(ones.view(), &g).unwrap().abs() < 1e-12);
        let eye = Array2::eye(4);
        let tr: f64 = (0..4).map(|i| g.matrix()[[i, i]]).sum();
        assert!((hsic_raw(eye.view(), &g).unwrap() - tr).abs() < 1e-12);
    }

    #[test]
    fn hsic_raw_shape_mismatch() {
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let g = gamma_matrix(y.view()).unwrap();
        let k = Array2::eye(3);
        assert!(matches!(hsic_raw(k.view(), &g), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn hsic_normalized_equality_and_degenerate() {
        let r = array![[0.1, 0.4], [0.9, -0.3], [0.2, 0.2], [-1.0, 0.5]];
        let k = gaussian_kernel(r.view(), 0.8).unwrap();
        let v = hsic_normalized(k.view(), k.view()).unwrap();
        assert!((v - 1.0).abs() < 1e-12);

        let ones = Array2::from_elem((4, 4), 1.0);
        assert!(matches!(
            hsic_normalized(ones.view(), k.view()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn scatter_ratio_collapsed_classes() {
        let z = array![[0.0, 0.0], [0.0, 0.0], [3.0, 3.0], [3.0, 3.0]];
        let labels = vec![0, 0, 1, 1];
        let t = scatter_trace_ratio(z.view(), &labels).unwrap();
        assert_eq!(t, 0.0);

        let z2 = array![[0.0, 0.0], [1.0, 1.0]];
        let t2 = scatter_trace_ratio(z2.view(), &[0, 1]).unwrap();
        assert_eq!(t2, 0.0);
    }

    #[test]
    fn scatter_ratio_degenerate() {
        let z = Array2::from_elem((4, 2), 1.0);
        assert!(matches!(
            scatter_trace_ratio(z.view(), &[0, 0, 1, 1]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn csr_orthogonal_and_identical_rows() {
        let phi = array![
            [1.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 1.0]
        ];
        let pairs = PairSets::from_labels(&[0, 0, 1, 1]);
        let c = cosine_similarity_ratio(phi.view(), &pairs).unwrap();
        assert_eq!(c, 0.0);

        let same = Array2::from_elem((4, 3), 0.5);
        let c2 = cosine_similarity_ratio(same.view(), &pairs).unwrap();
        let expect = pairs.diff_class.len() as f64 / pairs.same_class.len() as f64;
        assert!((c2 - expect).abs() < 1e-12);
    }

    #[test]
    fn pair_sets_partition() {
        let labels = vec![0, 1, 0, 2, 1];
        let p = PairSets::from_labels(&labels);
        let total = labels.len() * (labels.len() - 1) / 2;
        assert_eq!(p.same_class.len() + p.diff_class.len(), total);
        for &(i, j) in p.same_class.iter() {
            assert!(i < j && labels[i] == labels[j]);
        }
        for &(i, j) in p.diff_class.iter() {
            assert!(i < j && labels[i] != labels[j]);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let r = array![[0.3, -0.2], [1.4, 2.0], [-3.0, 0.4], [0.9, 0.9]];
        let a = gaussian_kernel(r.view(), 0.9).unwrap();
        let b = gaussian_kernel_seq(r.view(), 0.9).unwrap();
        assert_eq!(a, b);
    }
}
