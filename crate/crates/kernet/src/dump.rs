//! Kernel matrix dumps: class-contiguous reordering, full-precision CSV,
//! and an 8-bit grayscale PGM raster (dark = kernel value 1).

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel;
use crate::network::Network;
use crate::sigma;

/// Sample order that makes classes contiguous: stable sort by class, then
/// original index.
pub fn class_contiguous_order(labels: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| (labels[i], i));
    order
}

fn reorder(k: ArrayView2<f64>, order: &[usize]) -> Array2<f64> {
    let n = order.len();
    let mut out = Array2::zeros((n, n));
    for (a, &i) in order.iter().enumerate() {
        for (b, &j) in order.iter().enumerate() {
            out[[a, b]] = k[[i, j]];
        }
    }
    out
}

/// Kernel matrix of a network stage on the given data, rows in the original
/// sample order. Layer 0 is the Gaussian kernel of the raw input at the
/// median-distance bandwidth; layer l ≥ 1 is the activation inner-product
/// kernel after layer l.
pub fn kernel_at_layer(net: &Network, x: ArrayView2<f64>, layer: usize) -> Result<Array2<f64>> {
    if layer == 0 {
        let m = sigma::median_pairwise_distance(x)
            .ok_or_else(|| Error::degenerate("all samples coincide"))?;
        return kernel::gaussian_kernel(x, m);
    }
    let passes = net.forward(x)?;
    if layer > passes.len() {
        return Err(Error::invalid(format!(
            "layer {layer} out of range; network has {} layers",
            passes.len()
        )));
    }
    let (_, phi) = &passes[layer - 1];
    Ok(phi.dot(&phi.t()))
}

/// Kernel reordered class-contiguously, ready for dumping.
pub fn ordered_kernel(k: ArrayView2<f64>, labels: &[usize]) -> (Array2<f64>, Vec<usize>) {
    let order = class_contiguous_order(labels);
    (reorder(k, &order), order)
}

/// Full-precision CSV (shortest round-trip decimal per entry).
pub fn write_kernel_csv(path: &Path, k: ArrayView2<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", k[[i, j]]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Binary PGM (P5), entries mapped linearly [0, 1] → [255, 0] so high kernel
/// values render dark.
pub fn write_kernel_pgm(path: &Path, k: ArrayView2<f64>) -> Result<()> {
    let (n, m) = k.dim();
    let mut file = std::fs::File::create(path)?;
    write!(file, "P5\n{m} {n}\n255\n")?;
    let mut bytes = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let v = k[[i, j]].clamp(0.0, 1.0);
            bytes.push(((1.0 - v) * 255.0).round() as u8);
        }
    }
    file.write_all(&bytes)?;
    Ok(())
}

/// Mean within-class and cross-class kernel entries (off-diagonal pairs).
pub fn block_means(k: ArrayView2<f64>, labels: &[usize]) -> (f64, f64) {
    let n = labels.len();
    let mut within = 0.0;
    let mut within_n = 0usize;
    let mut cross = 0.0;
    let mut cross_n = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                within += k[[i, j]];
                within_n += 1;
            } else {
                cross += k[[i, j]];
                cross_n += 1;
            }
        }
    }
    (
        if within_n > 0 { within / within_n as f64 } else { f64::NAN },
        if cross_n > 0 { cross / cross_n as f64 } else { f64::NAN },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ordering_groups_classes() {
        let labels = vec![1, 0, 1, 0];
        let order = class_contiguous_order(&labels);
        assert_eq!(order, vec![1, 3, 0, 2]);
    }

    #[test]
    fn pgm_roundtrip_header() {
        let k = array![[1.0, 0.0], [0.0, 1.0]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.pgm");
        write_kernel_pgm(&path, k.view()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        let pixels = &bytes[bytes.len() - 4..];
        assert_eq!(pixels, &[0u8, 255, 255, 0]); // dark diagonal
    }

    #[test]
    fn csv_full_precision() {
        let k = array![[0.12345678901234567, 1.0], [1.0, 0.5]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        write_kernel_csv(&path, k.view()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first: f64 = text.split(',').next().unwrap().parse().unwrap();
        assert_eq!(first, 0.12345678901234567);
    }

    #[test]
    fn block_means_identity() {
        let k = array![
            [1.0, 0.9, 0.1, 0.1],
            [0.9, 1.0, 0.1, 0.1],
            [0.1, 0.1, 1.0, 0.8],
            [0.1, 0.1, 0.8, 1.0]
        ];
        let (w, c) = block_means(k.view(), &[0, 0, 1, 1]);
        assert!((w - 0.85).abs() < 1e-12);
        assert!((c - 0.1).abs() < 1e-12);
    }
}
