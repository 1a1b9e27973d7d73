//! Dense 2-D tensors (f64, row-major) and reverse-mode gradient traces.
//!
//! Everything the models and attacks need runs through [`Trace`]: a fresh
//! computation trace is built per forward call, values are evaluated eagerly,
//! and [`Trace::backward`] accumulates gradients for every node flagged as
//! requiring them. Shape mismatches panic with the offending operation and
//! shapes; they are programming errors, not runtime conditions.

mod gradcheck;
mod trace;

pub use gradcheck::{finite_difference_check, sample_coords};
pub use trace::{Trace, Var};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Loss kinds used across the crate: per-character cross-entropy for the
/// autoencoder, two-class softmax cross-entropy for the bag classifier and
/// for all attack objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    PerCharCrossEntropy,
    BinaryCrossEntropy,
}

/// Dense row-major matrix of f64. Vectors are (1, n).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            rows * cols,
            data.len(),
            "tensor: shape ({rows}x{cols}) does not match data length {}",
            data.len()
        );
        Tensor { rows, cols, data }
    }

    pub fn row_vec(data: Vec<f64>) -> Self {
        Tensor { rows: 1, cols: data.len(), data }
    }

    /// Uniform init in [-limit, limit] with the Xavier limit sqrt(6/(fan_in+fan_out)).
    pub fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        Tensor { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frobenius / flat L2 norm over all entries.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Elementwise sign: -1, 0 or +1.
    pub fn sign(&self) -> Tensor {
        let data = self
            .data
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();
        Tensor { rows: self.rows, cols: self.cols, data }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "tensor add: shape ({}x{}) vs ({}x{})",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Tensor { rows: self.rows, cols: self.cols, data }
    }
}

// Matmul kernels shared by forward and backward passes. All accumulate into
// `out` so backward passes can add onto existing gradients.

/// out += a(m x k) * b(k x n)
pub(crate) fn matmul_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ik * bv;
            }
        }
    }
}

/// out += a(m x k) * b(n x k)^T  -> (m x n)
pub(crate) fn matmul_abt_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            *o += dot;
        }
    }
}

/// out += a(m x k)^T * b(m x n)  -> (k x n)
pub(crate) fn matmul_atb_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == 0.0 {
                continue;
            }
            let out_row = &mut out[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ik * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_kernels_agree_on_small_case() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = vec![0.0; 4];
        matmul_acc(&mut c, &a, &b, 2, 3, 2);
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);

        // a * b == a * (b^T)^T
        let mut bt = vec![0.0; 6];
        for i in 0..3 {
            for j in 0..2 {
                bt[j * 3 + i] = b[i * 2 + j];
            }
        }
        let mut c2 = vec![0.0; 4];
        matmul_abt_acc(&mut c2, &a, &bt, 2, 3, 2);
        assert_eq!(c, c2);

        // (a^T)^T * b via atb on a^T
        let mut at = vec![0.0; 6];
        for i in 0..2 {
            for j in 0..3 {
                at[j * 2 + i] = a[i * 3 + j];
            }
        }
        let mut c3 = vec![0.0; 4];
        matmul_atb_acc(&mut c3, &at, &b, 3, 2, 2);
        assert_eq!(c, c3);
    }

    #[test]
    fn sign_and_norm() {
        let t = Tensor::from_vec(1, 4, vec![3.0, -4.0, 0.0, 1e-300]);
        assert_eq!(t.sign().data(), &[1.0, -1.0, 0.0, 1.0]);
        let n = Tensor::from_vec(1, 2, vec![3.0, 4.0]);
        assert!((n.l2_norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "tensor add: shape")]
    fn add_shape_mismatch_panics() {
        let a = Tensor::zeros(2, 2);
        let b = Tensor::zeros(2, 3);
        let _ = a.add(&b);
    }
}
