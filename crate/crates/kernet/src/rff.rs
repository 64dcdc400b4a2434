//! Random Fourier feature maps approximating the Gaussian kernel. These act
//! as the network's activation function: frozen per layer at train time and
//! replayed bit-identically at inference.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::serialize::MatrixData;

/// Frozen feature map φ(r) = √(2/D)·cos(Ωᵀr + b) with Ω drawn from the
/// Gaussian kernel's spectral measure (per-coordinate std 1/σ) and phases b
/// uniform on [0, 2π).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RffMap {
    frequencies: MatrixData, // q x D
    phases: Vec<f64>,
    width: usize,
    sigma: f64,
}

impl RffMap {
    /// Draws a map for `q`-dimensional inputs. Deterministic given `seed`:
    /// frequencies are filled row-major first, then the phases.
    pub fn sample(q: usize, sigma: f64, width: usize, seed: u64) -> Result<RffMap> {
        if q == 0 {
            return Err(Error::invalid("rff input dimension must be >= 1"));
        }
        if width == 0 {
            return Err(Error::invalid("rff width must be >= 1"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv_sigma = 1.0 / sigma;
        let mut freq = Vec::with_capacity(q * width);
        for _ in 0..q * width {
            let z: f64 = rng.sample(StandardNormal);
            freq.push(z * inv_sigma);
        }
        let phases: Vec<f64> = (0..width)
            .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
            .collect();
        Ok(RffMap {
            frequencies: MatrixData::new(q, width, freq),
            phases,
            width,
            sigma,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.rows
    }

    pub fn frequencies(&self) -> Array2<f64> {
        self.frequencies.to_array()
    }

    /// Applies the map row-wise: output row i = √(2/D)·cos(r_i·Ω + b).
    pub fn apply(&self, r: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.apply_impl(r, true)
    }

    /// Sequential reference path of [`RffMap::apply`].
    pub fn apply_seq(&self, r: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.apply_impl(r, false)
    }

    fn apply_impl(&self, r: ArrayView2<f64>, parallel: bool) -> Result<Array2<f64>> {
        let (n, q) = r.dim();
        if q != self.frequencies.rows {
            return Err(Error::shape(format!(
                "rff map expects {} input columns, got {q}",
                self.frequencies.rows
            )));
        }
        let omega = self.frequencies.to_array();
        let projected = r.dot(&omega); // n x D
        let scale = (2.0 / self.width as f64).sqrt();
        let d = self.width;
        let rows = if parallel {
            exec::map_indexed(n, |i| {
                let mut row = Vec::with_capacity(d);
                for j in 0..d {
                    row.push(scale * (projected[[i, j]] + self.phases[j]).cos());
                }
                row
            })
        } else {
            exec::map_indexed_seq(n, |i| {
                let mut row = Vec::with_capacity(d);
                for j in 0..d {
                    row.push(scale * (projected[[i, j]] + self.phases[j]).cos());
                }
                row
            })
        };
        let mut flat = Vec::with_capacity(n * d);
        for row in rows {
            flat.extend_from_slice(&row);
        }
        Ok(Array2::from_shape_vec((n, d), flat).expect("n*d elements"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn deterministic_given_seed() {
        let a = RffMap::sample(3, 0.7, 50, 9).unwrap();
        let b = RffMap::sample(3, 0.7, 50, 9).unwrap();
        assert_eq!(a.frequencies.data, b.frequencies.data);
        assert_eq!(a.phases, b.phases);
        let c = RffMap::sample(3, 0.7, 50, 10).unwrap();
        assert_ne!(a.frequencies.data, c.frequencies.data);
    }

    #[test]
    fn identical_inputs_map_identically() {
        let map = RffMap::sample(2, 1.0, 64, 3).unwrap();
        let r = array![[0.4, -1.0], [0.4, -1.0]];
        let phi = map.apply(r.view()).unwrap();
        let dot: f64 = phi.row(0).iter().zip(phi.row(1).iter()).map(|(a, b)| a * b).sum();
        let n0: f64 = phi.row(0).iter().map(|v| v * v).sum();
        assert!((dot - n0).abs() < 1e-12);
    }

    #[test]
    fn width_one_inner_products_bounded() {
        let map = RffMap::sample(2, 1.0, 1, 5).unwrap();
        let r = array![[0.1, 0.2], [3.0, -1.0], [0.0, 0.0]];
        let phi = map.apply(r.view()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = phi.row(i).iter().zip(phi.row(j).iter()).map(|(a, b)| a * b).sum();
                assert!(dot.abs() <= 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_rows_identical() {
        let map = RffMap::sample(4, 0.5, 32, 1).unwrap();
        let r = Array2::zeros((3, 4));
        let phi = map.apply(r.view()).unwrap();
        for i in 1..3 {
            for j in 0..32 {
                assert_eq!(phi[[0, j]], phi[[i, j]]);
            }
        }
    }

    #[test]
    fn squared_norms_in_range() {
        let map = RffMap::sample(2, 0.8, 300, 11).unwrap();
        let r = array![[0.3, 0.4], [-1.0, 2.0]];
        let phi = map.apply(r.view()).unwrap();
        for i in 0..2 {
            let n: f64 = phi.row(i).iter().map(|v| v * v).sum();
            assert!((0.0..=2.0).contains(&n));
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let map = RffMap::sample(3, 1.1, 40, 2).unwrap();
        let r = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 0.0, 0.0]];
        assert_eq!(map.apply(r.view()).unwrap(), map.apply_seq(r.view()).unwrap());
    }

    #[test]
    fn dim_mismatch_rejected() {
        let map = RffMap::sample(3, 1.0, 8, 0).unwrap();
        let r = Array2::zeros((2, 2));
        assert!(map.apply(r.view()).is_err());
    }
}
