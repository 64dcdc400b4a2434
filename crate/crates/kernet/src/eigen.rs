//! Dense symmetric eigendecomposition tuned for "top few eigenvectors of a
//! few-hundred-square matrix": Householder tridiagonalization, implicit-shift
//! QL for the eigenvalues, inverse iteration for the retained eigenvectors.
//! A cyclic Jacobi sweep is kept as a slow, very robust fallback; results are
//! verified against the residual ‖SV − VΛ‖ before being returned.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Which eigenpairs of a symmetric matrix to retain: eigenvalues must be
/// positive and exceed `rank_tol · max(λ₁, eps_abs)`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RetainPolicy {
    pub rank_tol: f64,
    pub eps_abs: f64,
}

impl Default for RetainPolicy {
    fn default() -> Self {
        RetainPolicy {
            rank_tol: 1e-6,
            eps_abs: 1e-12,
        }
    }
}

impl RetainPolicy {
    pub fn with_rank_tol(rank_tol: f64) -> Self {
        RetainPolicy {
            rank_tol,
            ..Default::default()
        }
    }

    fn count(&self, sorted_desc: &[f64]) -> usize {
        let top = match sorted_desc.first() {
            Some(&v) => v,
            None => return 0,
        };
        let threshold = self.rank_tol * top.max(self.eps_abs);
        sorted_desc
            .iter()
            .take_while(|&&v| v > 0.0 && v > threshold)
            .count()
    }
}

struct Tridiag {
    d: Vec<f64>,
    e: Vec<f64>,
    a: Array2<f64>,
    h: Vec<f64>,
}

/// Householder reduction to tridiagonal form. The scaled Householder vectors
/// stay in the rows of `a` together with their `h = uᵀu/2` factors so
/// eigenvectors of the tridiagonal matrix can be transformed back.
fn tridiagonalize(mut a: Array2<f64>) -> Tridiag {
    let n = a.nrows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut hs = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[[i, k]].abs();
            }
            if scale == 0.0 {
                e[i] = a[[i, l]];
            } else {
                for k in 0..=l {
                    a[[i, k]] /= scale;
                    h += a[[i, k]] * a[[i, k]];
                }
                let f = a[[i, l]];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[[i, l]] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    let mut g2 = 0.0;
                    for k in 0..=j {
                        g2 += a[[j, k]] * a[[i, k]];
                    }
                    for k in (j + 1)..=l {
                        g2 += a[[k, j]] * a[[i, k]];
                    }
                    e[j] = g2 / h;
                    f_acc += e[j] * a[[i, j]];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    e[j] -= hh * a[[i, j]];
                }
                for j in 0..=l {
                    let fj = a[[i, j]];
                    let qj = e[j];
                    for k in 0..=j {
                        a[[j, k]] -= fj * e[k] + qj * a[[i, k]];
                    }
                }
            }
        } else {
            e[i] = a[[i, l]];
        }
        hs[i] = h;
    }
    for k in 0..n {
        d[k] = a[[k, k]];
    }
    e[0] = 0.0;
    Tridiag { d, e, a, h: hs }
}

fn back_transform(tri: &Tridiag, x: &mut [f64]) {
    let n = tri.d.len();
    for i in 1..n {
        if tri.h[i] != 0.0 {
            let mut s = 0.0;
            for k in 0..i {
                s += tri.a[[i, k]] * x[k];
            }
            s /= tri.h[i];
            for k in 0..i {
                x[k] -= s * tri.a[[i, k]];
            }
        }
    }
}

/// Implicit-shift QL iteration; eigenvalues land in `d` (unordered).
fn tql_values(d: &mut [f64], e_in: &[f64]) -> std::result::Result<(), ()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    let mut e = vec![0.0; n];
    for i in 1..n {
        e[i - 1] = e_in[i];
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 80 {
                return Err(());
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(if g == 0.0 { 1.0 } else { g }));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Solves (T − λI)x = b for a symmetric tridiagonal T = (d, off) using
/// Gaussian elimination with partial pivoting. `off[i]` couples rows i, i+1.
fn solve_shifted_tridiag(d: &[f64], off: &[f64], lambda: f64, b: &mut [f64]) {
    let n = d.len();
    let tiny = f64::MIN_POSITIVE / f64::EPSILON;
    let mut u: Vec<f64> = d.iter().map(|&v| v - lambda).collect();
    let mut v: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { off[i] } else { 0.0 })
        .collect();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let mut lower = off[i];
        if lower.abs() > u[i].abs() {
            std::mem::swap(&mut u[i], &mut lower);
            let tv = v[i];
            v[i] = u[i + 1];
            u[i + 1] = tv;
            let tw = w[i];
            w[i] = v[i + 1];
            v[i + 1] = tw;
            b.swap(i, i + 1);
        }
        if u[i] == 0.0 {
            u[i] = tiny;
        }
        let m = lower / u[i];
        u[i + 1] -= m * v[i];
        v[i + 1] -= m * w[i];
        b[i + 1] -= m * b[i];
    }
    if u[n - 1] == 0.0 {
        u[n - 1] = tiny;
    }
    b[n - 1] /= u[n - 1];
    if n >= 2 {
        let i = n - 2;
        b[i] = (b[i] - v[i] * b[i + 1]) / u[i];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - v[i] * b[i + 1] - w[i] * b[i + 2]) / u[i];
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pseudo_random_unit(n: usize, stream: u64) -> Vec<f64> {
    let mut state = stream ^ 0xD1B5_4A32_D192_ED03;
    let mut b: Vec<f64> = (0..n)
        .map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        .collect();
    let nrm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm > 0.0 {
        for x in b.iter_mut() {
            *x /= nrm;
        }
    } else {
        b[0] = 1.0;
    }
    b
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Eigenvectors of the tridiagonal matrix for the selected eigenvalues, by
/// inverse iteration with reorthogonalization inside eigenvalue clusters.
/// `values` must be sorted descending.
fn tridiag_vectors(tri: &Tridiag, values: &[f64]) -> std::result::Result<Vec<Vec<f64>>, ()> {
    let n = tri.d.len();
    let off: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { tri.e[i + 1] } else { 0.0 })
        .collect();
    let scale = tri
        .d
        .iter()
        .chain(tri.e.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let cluster_tol = 1e-7 * scale;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    let mut cluster_start = 0usize;
    for (k, &lambda) in values.iter().enumerate() {
        if k > 0 && (values[k - 1] - lambda).abs() > cluster_tol {
            cluster_start = k;
        }
        let mut accepted = None;
        'attempt: for attempt in 0..4u64 {
            let mut x = pseudo_random_unit(n, (k as u64) << 8 | attempt);
            for _ in 0..3 {
                solve_shifted_tridiag(&tri.d, &off, lambda, &mut x);
                for prev in &vectors[cluster_start..k] {
                    let dot: f64 = prev.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    for (xi, pi) in x.iter_mut().zip(prev.iter()) {
                        *xi -= dot * pi;
                    }
                }
                let nrm = norm(&x);
                if !(nrm.is_finite() && nrm > 0.0) {
                    continue 'attempt;
                }
                for v in x.iter_mut() {
                    *v /= nrm;
                }
            }
            // residual against T
            let mut res = 0.0f64;
            for i in 0..n {
                let mut t = (tri.d[i] - lambda) * x[i];
                if i > 0 {
                    t += off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    t += off[i] * x[i + 1];
                }
                res += t * t;
            }
            if res.sqrt() <= 1e-10 * scale * (n as f64) + 1e-280 {
                accepted = Some(x);
                break;
            }
        }
        match accepted {
            Some(x) => vectors.push(x),
            None => return Err(()),
        }
    }
    Ok(vectors)
}

/// Full eigendecomposition by cyclic Jacobi rotations. Slow but extremely
/// robust; used as the fallback path and available to tests as an
/// independent route.
pub fn jacobi_eigh(s: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = s.nrows();
    if s.ncols() != n || n == 0 {
        return Err(Error::shape("jacobi needs a non-empty square matrix"));
    }
    let mut a = symmetrized(s);
    let mut v = Array2::<f64>::eye(n);
    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = (1e-15 * fro).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if (2.0 * off).sqrt() <= stop {
            let (vals, vecs) = sort_eigenpairs(&a, &v);
            return Ok((vals, vecs));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - sn * akq;
                    a[[k, q]] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - sn * aqk;
                    a[[q, k]] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::degenerate("jacobi eigendecomposition did not converge"))
}

fn sort_eigenpairs(a: &Array2<f64>, v: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap_or(std::cmp::Ordering::Equal));
    let vals: Vec<f64> = idx.iter().map(|&i| a[[i, i]]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (col, &i) in idx.iter().enumerate() {
        for r in 0..n {
            vecs[[r, col]] = v[[r, i]];
        }
    }
    (vals, vecs)
}

fn symmetrized(s: ArrayView2<f64>) -> Array2<f64> {
    let n = s.nrows();
    let mut a = s.to_owned();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
    a
}

fn check_symmetric(s: ArrayView2<f64>) -> Result<()> {
    let n = s.nrows();
    if s.ncols() != n || n == 0 {
        return Err(Error::shape(format!(
            "expected non-empty square matrix, got {:?}",
            s.dim()
        )));
    }
    let max_abs = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let tol = 1e-8 * max_abs.max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (s[[i, j]] - s[[j, i]]).abs() > tol {
                return Err(Error::invalid("matrix is not symmetric within tolerance"));
            }
        }
    }
    Ok(())
}

/// Fixes each eigenvector's sign so the component of largest magnitude is
/// positive; removes the residual sign ambiguity between runs.
pub(crate) fn fix_signs(vecs: &mut Array2<f64>) {
    for mut col in vecs.columns_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// All eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues(s: ArrayView2<f64>) -> Result<Vec<f64>> {
    check_symmetric(s)?;
    let a = symmetrized(s);
    let tri = tridiagonalize(a);
    let mut vals = tri.d.clone();
    if tql_values(&mut vals, &tri.e).is_err() {
        let (vals, _) = jacobi_eigh(s)?;
        return Ok(vals);
    }
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(vals)
}

/// Top eigenpairs of a symmetric matrix under a retention policy. Returns
/// (eigenvectors as columns, eigenvalues sorted descending). The result is
/// validated against the residual ‖SV − VΛ‖; on any numerical trouble the
/// routine falls back to the Jacobi path.
pub fn eigh_topk(s: ArrayView2<f64>, policy: &RetainPolicy) -> Result<(Array2<f64>, Vec<f64>)> {
    check_symmetric(s)?;
    let n = s.nrows();
    if n == 1 {
        let lam = s[[0, 0]];
        return if policy.count(&[lam]) == 1 {
            Ok((Array2::from_elem((1, 1), 1.0), vec![lam]))
        } else {
            Ok((Array2::zeros((1, 0)), Vec::new()))
        };
    }
    let a = symmetrized(s);
    let tri = tridiagonalize(a);
    let mut vals = tri.d.clone();
    let fast = if tql_values(&mut vals, &tri.e).is_ok() {
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let beta = policy.count(&vals);
        if beta == 0 {
            return Ok((Array2::zeros((n, 0)), Vec::new()));
        }
        let selected = &vals[..beta];
        match tridiag_vectors(&tri, selected) {
            Ok(tvecs) => {
                let mut vecs = Array2::zeros((n, beta));
                for (col, tv) in tvecs.into_iter().enumerate() {
                    let mut x = tv;
                    back_transform(&tri, &mut x);
                    let nrm = norm(&x);
                    for (r, v) in x.iter().enumerate() {
                        vecs[[r, col]] = v / nrm;
                    }
                }
                if residual_ok(s, &vecs, selected) {
                    Some((vecs, selected.to_vec()))
                } else {
                    None
                }
            }
            Err(()) => None,
        }
    } else {
        None
    };
    let (mut vecs, vals) = match fast {
        Some(pair) => pair,
        None => {
            let (all_vals, all_vecs) = jacobi_eigh(s)?;
            let beta = policy.count(&all_vals);
            let vecs = all_vecs.slice(ndarray::s![.., ..beta]).to_owned();
            (vecs, all_vals[..beta].to_vec())
        }
    };
    fix_signs(&mut vecs);
    Ok((vecs, vals))
}

fn residual_ok(s: ArrayView2<f64>, vecs: &Array2<f64>, vals: &[f64]) -> bool {
    let n = s.nrows();
    let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let sv = s.dot(vecs);
    for (col, &lam) in vals.iter().enumerate() {
        let mut res = 0.0;
        for r in 0..n {
            let t = sv[[r, col]] - lam * vecs[[r, col]];
            res += t * t;
        }
        if res.sqrt() > 1e-9 * scale * (n as f64) {
            return false;
        }
    }
    true
}

/// Frobenius distance between the orthogonal projectors spanned by two
/// orthonormal column blocks: ‖W_a W_aᵀ − W_b W_bᵀ‖_F.
pub fn projector_distance(wa: ArrayView2<f64>, wb: ArrayView2<f64>) -> f64 {
    let ba = wa.ncols() as f64;
    let bb = wb.ncols() as f64;
    let cross = wa.t().dot(&wb);
    let overlap: f64 = cross.iter().map(|v| v * v).sum();
    (ba + bb - 2.0 * overlap).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn residual_norm(s: ArrayView2<f64>, v: &Array2<f64>, vals: &[f64]) -> f64 {
        let sv = s.dot(v);
        let mut worst = 0.0f64;
        for (col, &lam) in vals.iter().enumerate() {
            let mut acc = 0.0;
            for r in 0..s.nrows() {
                let t = sv[[r, col]] - lam * v[[r, col]];
                acc += t * t;
            }
            worst = worst.max(acc.sqrt());
        }
        worst
    }

    #[test]
    fn diag_matrix_topk() {
        let s = Array2::from_diag(&array![3.0, 1.0, 0.0]);
        let (v, vals) = eigh_topk(s.view(), &RetainPolicy::default()).unwrap();
        assert_eq!(vals.len(), 2);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        assert!((v[[0, 0]].abs() - 1.0).abs() < 1e-10);
        assert!((v[[1, 1]].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identity_full_rank_degenerate_spectrum() {
        let s = Array2::<f64>::eye(6);
        let (v, vals) = eigh_topk(s.view(), &RetainPolicy::default()).unwrap();
        assert_eq!(vals.len(), 6);
        assert!(residual_norm(s.view(), &v, &vals) < 1e-8);
        // orthonormality
        let g = v.t().dot(&v);
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn random_symmetric_residual() {
        let mut state = 42u64;
        for trial in 0..20 {
            let n = 3 + (trial % 6);
            let mut m = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..=i {
                    let v = (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            let policy = RetainPolicy {
                rank_tol: 0.0,
                eps_abs: 1e-12,
            };
            let (v, vals) = eigh_topk(m.view(), &policy).unwrap();
            assert!(residual_norm(m.view(), &v, &vals) < 1e-8, "trial {trial}");
            // agrees with the jacobi route
            let (jvals, _) = jacobi_eigh(m.view()).unwrap();
            for (a, b) in vals.iter().zip(jvals.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_symmetric() {
        let s = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(eigh_topk(s.view(), &RetainPolicy::default()).is_err());
    }

    #[test]
    fn sign_convention_deterministic() {
        let s = array![[2.0, 1.0], [1.0, 2.0]];
        let (v1, _) = eigh_topk(s.view(), &RetainPolicy::default()).unwrap();
        let (v2, _) = eigh_topk(s.view(), &RetainPolicy::default()).unwrap();
        assert_eq!(v1, v2);
        // leading vector of [[2,1],[1,2]] is (1,1)/√2 with positive entries
        assert!(v1[[0, 0]] > 0.0 && v1[[1, 0]] > 0.0);
    }

    #[test]
    fn projector_distance_basics() {
        let w = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert!(projector_distance(w.view(), w.view()) < 1e-12);
        let w2 = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let d = projector_distance(w.view(), w2.view());
        assert!((d - 2.0f64.sqrt()).abs() < 1e-12);
    }
}
