//! Observable dictionaries: monomial families in the mixed-radix layout used
//! by the benchmark systems (axis-1 exponent fastest), total-degree monomial
//! families in graded lexicographic order, and random tanh feature families
//! appended with the raw coordinates.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("dictionary does not contain the coordinate x_{0}")]
    MissingCoordinate(usize),
    #[error("invalid argument: {0}")]
    InvalidInput(String),
}

/// An ordered family of observable functions with batch evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dictionary {
    Monomial {
        dim: usize,
        /// One multi-index per dictionary entry.
        exponents: Vec<Vec<u32>>,
    },
    TanhRandom {
        dim: usize,
        /// sigma x dim feature weights.
        weights: DenseMatrix,
        bias: Vec<f64>,
        seed: u64,
        scale_w: f64,
        scale_b: f64,
    },
}

impl Dictionary {
    /// Per-axis monomial grid `x^p y^q ...` with `p < caps[0]`, `q < caps[1]`,
    /// ... enumerated mixed-radix with the first axis fastest, so entry `i`
    /// has exponents `(i mod P, (i/P) mod Q, ...)`.
    pub fn monomial_per_axis(caps: &[usize]) -> Self {
        assert!(
            !caps.is_empty() && caps.iter().all(|&c| c >= 1),
            "caps must be >= 1"
        );
        let n: usize = caps.iter().product();
        let mut exponents = Vec::with_capacity(n);
        for i in 0..n {
            let mut rem = i;
            let mut e = Vec::with_capacity(caps.len());
            for &c in caps {
                e.push((rem % c) as u32);
                rem /= c;
            }
            exponents.push(e);
        }
        Dictionary::Monomial {
            dim: caps.len(),
            exponents,
        }
    }

    /// All monomials with total degree `<= cap`, in graded lexicographic
    /// order (degree first, then lexicographic with the leading axis
    /// dominant).
    pub fn monomial_total_degree(dim: usize, cap: usize) -> Self {
        assert!(dim >= 1);
        let mut exponents: Vec<Vec<u32>> = Vec::new();
        let mut stack = vec![0u32; dim];
        fn rec(axis: usize, remaining: u32, stack: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if axis + 1 == stack.len() {
                stack[axis] = remaining;
                out.push(stack.clone());
                return;
            }
            for e in (0..=remaining).rev() {
                stack[axis] = e;
                rec(axis + 1, remaining - e, stack, out);
            }
        }
        for degree in 0..=cap as u32 {
            rec(0, degree, &mut stack, &mut exponents);
        }
        Dictionary::Monomial { dim, exponents }
    }

    /// `sigma` random tanh features `tanh(w^T x + b)` appended with the `dim`
    /// raw coordinates. `W ~ N(0, scale_w^2)`, `b ~ U(-scale_b, scale_b)`,
    /// drawn from a seeded stream.
    pub fn tanh_random(dim: usize, sigma: usize, seed: u64, scale_w: f64, scale_b: f64) -> Self {
        assert!(sigma >= 1, "sigma must be >= 1");
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut weights = DenseMatrix::zeros(sigma, dim);
        for i in 0..sigma {
            for j in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                weights[(i, j)] = scale_w * z;
            }
        }
        let bias: Vec<f64> = (0..sigma)
            .map(|_| rng.random_range(-scale_b..scale_b))
            .collect();
        Dictionary::TanhRandom {
            dim,
            weights,
            bias,
            seed,
            scale_w,
            scale_b,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Dictionary::Monomial { dim, .. } => *dim,
            Dictionary::TanhRandom { dim, .. } => *dim,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Dictionary::Monomial { exponents, .. } => exponents.len(),
            Dictionary::TanhRandom { dim, bias, .. } => bias.len() + dim,
        }
    }

    /// Maximal total degree (monomial dictionaries only); used by the
    /// quadrature error-bound diagnostic.
    pub fn max_total_degree(&self) -> Option<u32> {
        match self {
            Dictionary::Monomial { exponents, .. } => {
                exponents.iter().map(|e| e.iter().sum()).max()
            }
            Dictionary::TanhRandom { .. } => None,
        }
    }

    pub fn exponents(&self) -> Option<&[Vec<u32>]> {
        match self {
            Dictionary::Monomial { exponents, .. } => Some(exponents),
            Dictionary::TanhRandom { .. } => None,
        }
    }

    /// Index of a monomial by multi-index.
    pub fn monomial_index(&self, exponent: &[u32]) -> Option<usize> {
        self.exponents()?.iter().position(|e| e == exponent)
    }

    pub fn evaluate_point(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.size());
        match self {
            Dictionary::Monomial { exponents, .. } => {
                for (slot, e) in out.iter_mut().zip(exponents) {
                    let mut v = 1.0;
                    for (&xj, &p) in x.iter().zip(e) {
                        v *= powi_u32(xj, p);
                    }
                    *slot = v;
                }
            }
            Dictionary::TanhRandom {
                dim, weights, bias, ..
            } => {
                let sigma = bias.len();
                for i in 0..sigma {
                    let mut a = bias[i];
                    for (j, &xj) in x.iter().enumerate() {
                        a += weights[(i, j)] * xj;
                    }
                    out[i] = a.tanh();
                }
                out[sigma..sigma + *dim].copy_from_slice(x);
            }
        }
    }

    /// Row `m` of the result is `Z_N(points.row(m))^T`.
    pub fn evaluate_batch(&self, points: &DenseMatrix) -> DenseMatrix {
        assert_eq!(points.cols(), self.dim(), "point dimension mismatch");
        let mut out = DenseMatrix::zeros(points.rows(), self.size());
        for m in 0..points.rows() {
            let (x, row) = (points.row(m).to_vec(), out.row_mut(m));
            self.evaluate_point(&x, row);
        }
        out
    }

    /// Gradient of every dictionary function at `x`, as an N x d matrix.
    pub fn gradient_point(&self, x: &[f64]) -> DenseMatrix {
        let n = self.size();
        let d = self.dim();
        let mut g = DenseMatrix::zeros(n, d);
        match self {
            Dictionary::Monomial { exponents, .. } => {
                for (i, e) in exponents.iter().enumerate() {
                    for j in 0..d {
                        if e[j] == 0 {
                            continue;
                        }
                        let mut v = e[j] as f64 * powi_u32(x[j], e[j] - 1);
                        for (jj, &xjj) in x.iter().enumerate() {
                            if jj != j {
                                v *= powi_u32(xjj, e[jj]);
                            }
                        }
                        g[(i, j)] = v;
                    }
                }
            }
            Dictionary::TanhRandom {
                dim, weights, bias, ..
            } => {
                let sigma = bias.len();
                for i in 0..sigma {
                    let mut a = bias[i];
                    for (j, &xj) in x.iter().enumerate() {
                        a += weights[(i, j)] * xj;
                    }
                    let sech2 = {
                        let c = a.cosh();
                        1.0 / (c * c)
                    };
                    for j in 0..d {
                        g[(i, j)] = sech2 * weights[(i, j)];
                    }
                }
                for j in 0..*dim {
                    g[(sigma + j, j)] = 1.0;
                }
            }
        }
        g
    }

    /// Index `i` with `z_i(x) = x_axis` (0-based axis).
    pub fn coordinate_index(&self, axis: usize) -> Result<usize, DictionaryError> {
        if axis >= self.dim() {
            return Err(DictionaryError::InvalidInput(format!(
                "axis {axis} out of range for dimension {}",
                self.dim()
            )));
        }
        match self {
            Dictionary::Monomial { dim, exponents } => {
                let mut unit = vec![0u32; *dim];
                unit[axis] = 1;
                exponents
                    .iter()
                    .position(|e| *e == unit)
                    .ok_or(DictionaryError::MissingCoordinate(axis + 1))
            }
            Dictionary::TanhRandom { bias, .. } => Ok(bias.len() + axis),
        }
    }

    /// Indices of all coordinates, axis order.
    pub fn coordinate_indices(&self) -> Result<Vec<usize>, DictionaryError> {
        (0..self.dim()).map(|j| self.coordinate_index(j)).collect()
    }
}

fn powi_u32(x: f64, p: u32) -> f64 {
    match p {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(p as i32),
    }
}
