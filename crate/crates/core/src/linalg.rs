//! Dense real/complex linear-algebra kernels shared by every learning module.
//!
//! Matrices are stored row-major as [`DenseMatrix`]; factorizations (SVD,
//! eigendecomposition, complex LU) are delegated to `faer`. The pseudoinverse
//! is always computed through the SVD rather than the normal equations: the
//! stacked feature matrices produced by monomial dictionaries are
//! ill-conditioned and squaring the condition number is not affordable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use faer::linalg::solvers::{DenseSolveCore, Eigen, FullPivLu, Svd};
use faer::{c64, Mat};

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("SVD failed to converge")]
    SvdFailed,
    #[error("eigendecomposition failed to converge")]
    EigFailed,
    #[error("defective or ill-conditioned eigenbasis (cond(V) = {cond:.3e})")]
    Defective { cond: f64 },
    #[error("matrix logarithm branch cut: eigenvalue {re:.3e}{im:+.3e}i")]
    BranchCut { re: f64, im: f64 },
    #[error("numerical overflow")]
    Overflow,
    #[error("invalid argument: {0}")]
    InvalidInput(String),
}

/// Row-major dense matrix of 64-bit floats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from a row-major buffer. Panics if the length is inconsistent.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "row-major buffer length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        // i-k-j loop order keeps both operands row-major friendly
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = out.row_mut(i);
                for j in 0..rhs.cols {
                    orow[j] += a * rrow[j];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let data = self.data.iter().map(|a| a * s).collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Induced 1-norm (max column sum), used by the exponential scaling step.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub fn from_faer(m: faer::MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Complex matrix split into real and imaginary parts (both row-major).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub re: DenseMatrix,
    pub im: DenseMatrix,
}

/// Eigendecomposition of a real square matrix.
///
/// `condition_estimate` is the 2-norm condition number of the eigenvector
/// matrix; values above ~1e12 signal a (numerically) defective matrix.
#[derive(Clone, Debug)]
pub struct ComplexEig {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: ComplexMatrix,
    pub condition_estimate: f64,
}

/// Rank/conditioning report from an SVD-backed solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LstsqDiagnostics {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub rank: usize,
    pub cond: f64,
}

type ThinSvd = (Mat<f64>, Vec<f64>, Mat<f64>);

fn thin_svd(a: &DenseMatrix) -> Result<ThinSvd, LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let svd = Svd::new_thin(a.to_faer().as_ref()).map_err(|_| LinalgError::SvdFailed)?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    Ok((svd.U().to_owned(), s, svd.V().to_owned()))
}

/// Moore-Penrose pseudoinverse via SVD.
///
/// Singular values below `rcond * sigma_max` are treated as zero. The default
/// `rcond` used across the crate is 1e-12.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN rcond must be rejected
pub fn pinv(a: &DenseMatrix, rcond: f64) -> Result<DenseMatrix, LinalgError> {
    if !(rcond > 0.0 && rcond < 1.0) {
        return Err(LinalgError::InvalidInput(format!(
            "rcond {rcond} not in (0,1)"
        )));
    }
    let (u, s, v) = thin_svd(a)?;
    let smax = s.iter().fold(0.0f64, |m, &x| m.max(x));
    let cut = rcond * smax;
    // pinv = V diag(1/s) U^T
    let k = s.len();
    let mut out = DenseMatrix::zeros(a.cols(), a.rows());
    for r in 0..k {
        let sr = s[r];
        if sr <= cut || sr == 0.0 {
            continue;
        }
        let inv = 1.0 / sr;
        for i in 0..a.cols() {
            let vi = v[(i, r)] * inv;
            if vi == 0.0 {
                continue;
            }
            for j in 0..a.rows() {
                out[(i, j)] += vi * u[(j, r)];
            }
        }
    }
    Ok(out)
}

pub const DEFAULT_RCOND: f64 = 1e-12;

/// Tikhonov-regularized pseudoinverse `(A^T A + delta I)^-1 A^T`.
///
/// Computed through the SVD as `V diag(s/(s^2+delta)) U^T`, which is the same
/// operator without forming the normal equations. `delta = 0` falls back to
/// the plain pseudoinverse.
pub fn tikhonov_pinv(a: &DenseMatrix, delta: f64) -> Result<DenseMatrix, LinalgError> {
    if delta < 0.0 {
        return Err(LinalgError::InvalidInput(format!(
            "delta {delta} must be >= 0"
        )));
    }
    if delta == 0.0 {
        return pinv(a, DEFAULT_RCOND);
    }
    let (u, s, v) = thin_svd(a)?;
    let k = s.len();
    let mut out = DenseMatrix::zeros(a.cols(), a.rows());
    for r in 0..k {
        let f = s[r] / (s[r] * s[r] + delta);
        if f == 0.0 {
            continue;
        }
        for i in 0..a.cols() {
            let vi = v[(i, r)] * f;
            for j in 0..a.rows() {
                out[(i, j)] += vi * u[(j, r)];
            }
        }
    }
    Ok(out)
}

/// Minimum-norm least-squares solve `argmin_X |A X - B|_F` via SVD, with
/// rank/conditioning diagnostics of `A`.
pub fn lstsq(
    a: &DenseMatrix,
    b: &DenseMatrix,
    rcond: f64,
) -> Result<(DenseMatrix, LstsqDiagnostics), LinalgError> {
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "lstsq: A has {} rows, B has {}",
            a.rows(),
            b.rows()
        )));
    }
    if !b.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let (u, s, v) = thin_svd(a)?;
    let smax = s.iter().fold(0.0f64, |m, &x| m.max(x));
    let cut = rcond * smax;
    let rank = s.iter().filter(|&&x| x > cut && x > 0.0).count();
    let smin_kept = s
        .iter()
        .copied()
        .filter(|&x| x > cut && x > 0.0)
        .fold(f64::INFINITY, f64::min);
    let diag = LstsqDiagnostics {
        sigma_max: smax,
        sigma_min: if rank == 0 { 0.0 } else { smin_kept },
        rank,
        cond: if rank == 0 {
            f64::INFINITY
        } else {
            smax / smin_kept
        },
    };
    // X = V diag(1/s) U^T B
    let k = s.len();
    let n = a.cols();
    let p = b.cols();
    // C = U^T B (k x p)
    let mut c = DenseMatrix::zeros(k, p);
    for r in 0..k {
        for i in 0..a.rows() {
            let ur = u[(i, r)];
            if ur == 0.0 {
                continue;
            }
            let brow = b.row(i);
            let crow = c.row_mut(r);
            for j in 0..p {
                crow[j] += ur * brow[j];
            }
        }
    }
    let mut x = DenseMatrix::zeros(n, p);
    for r in 0..k {
        if s[r] <= cut || s[r] == 0.0 {
            continue;
        }
        let inv = 1.0 / s[r];
        for i in 0..n {
            let vi = v[(i, r)] * inv;
            if vi == 0.0 {
                continue;
            }
            let crow = c.row(r);
            let xrow = x.row_mut(i);
            for j in 0..p {
                xrow[j] += vi * crow[j];
            }
        }
    }
    Ok((x, diag))
}

/// Eigendecomposition of a real square matrix with complex output.
pub fn complex_eig(a: &DenseMatrix) -> Result<ComplexEig, LinalgError> {
    if a.rows() != a.cols() {
        return Err(LinalgError::DimensionMismatch(format!(
            "complex_eig: {}x{} is not square",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.rows();
    let eig = Eigen::new_from_real(a.to_faer().as_ref()).map_err(|_| LinalgError::EigFailed)?;
    let values: Vec<Complex64> = eig
        .S()
        .column_vector()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    let u = eig.U();
    let mut re = DenseMatrix::zeros(n, n);
    let mut im = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            re[(i, j)] = u[(i, j)].re;
            im[(i, j)] = u[(i, j)].im;
        }
    }
    // cond(V) from the singular values of the complex eigenvector matrix
    let v: Mat<c64> = Mat::from_fn(n, n, |i, j| u[(i, j)]);
    let svd = Svd::new_thin(v.as_ref()).map_err(|_| LinalgError::SvdFailed)?;
    let sv: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let smax = sv.iter().fold(0.0f64, |m, &x| m.max(x));
    let smin = sv.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    Ok(ComplexEig {
        eigenvalues: values,
        eigenvectors: ComplexMatrix { re, im },
        condition_estimate: cond,
    })
}

/// Threshold on cond(V) beyond which the eigenbasis is treated as defective.
pub const DEFECTIVE_COND_THRESHOLD: f64 = 1e12;

/// Principal matrix logarithm via eigendecomposition `V log(D) V^-1`.
///
/// Returns the real and imaginary parts separately. Fails on a defective
/// eigenbasis and on eigenvalues at the origin or on the negative real axis
/// (multivalued branch).
pub fn matrix_log(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix), LinalgError> {
    let eig = complex_eig(a)?;
    if !eig.condition_estimate.is_finite() || eig.condition_estimate > DEFECTIVE_COND_THRESHOLD {
        return Err(LinalgError::Defective {
            cond: eig.condition_estimate,
        });
    }
    for z in &eig.eigenvalues {
        if z.norm() < 1e-14 || (z.re < 0.0 && z.im.abs() <= 1e-12 * z.norm()) {
            return Err(LinalgError::BranchCut { re: z.re, im: z.im });
        }
    }
    let n = a.rows();
    let v: Mat<c64> = Mat::from_fn(n, n, |i, j| {
        c64::new(eig.eigenvectors.re[(i, j)], eig.eigenvectors.im[(i, j)])
    });
    let lu = FullPivLu::new(v.as_ref());
    let vinv = lu.inverse();
    // V * diag(log lambda) * V^-1
    let mut logd_vinv: Mat<c64> = Mat::zeros(n, n);
    for i in 0..n {
        let l = eig.eigenvalues[i].ln();
        let l = c64::new(l.re, l.im);
        for j in 0..n {
            logd_vinv[(i, j)] = l * vinv[(i, j)];
        }
    }
    let out = &v * &logd_vinv;
    let mut re = DenseMatrix::zeros(n, n);
    let mut im = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            re[(i, j)] = out[(i, j)].re;
            im[(i, j)] = out[(i, j)].im;
        }
    }
    if !re.is_finite() || !im.is_finite() {
        return Err(LinalgError::Overflow);
    }
    Ok((re, im))
}

/// Matrix exponential by scaling-and-squaring with diagonal Pade approximants
/// (orders 3/5/7/9/13 selected from the 1-norm, Higham 2005).
pub fn matrix_exp(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if a.rows() != a.cols() {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix_exp: {}x{} is not square",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    const THETA_3: f64 = 1.495585217958292e-2;
    const THETA_5: f64 = 2.539_398_330_063_23e-1;
    const THETA_7: f64 = 9.504178996162932e-1;
    const THETA_9: f64 = 2.097847961257068e0;
    const THETA_13: f64 = 5.371920351148152e0;

    let norm = a.norm_1();
    let n = a.rows();
    let ident = DenseMatrix::identity(n);

    let pade = |b: &[f64], x: &DenseMatrix| -> Result<DenseMatrix, LinalgError> {
        // splits b into even/odd parts: U = X * sum b_{2k+1} X2^k, V = sum b_{2k} X2^k
        let x2 = x.matmul(x);
        let mut even = ident.scale(b[0]);
        let mut odd = ident.scale(b[1]);
        let mut pow = x2.clone();
        let mut k = 2;
        while k < b.len() {
            even = even.add(&pow.scale(b[k]));
            if k + 1 < b.len() {
                odd = odd.add(&pow.scale(b[k + 1]));
            }
            if k + 2 < b.len() {
                pow = pow.matmul(&x2);
            }
            k += 2;
        }
        let u = x.matmul(&odd);
        // solve (V - U) R = (V + U)
        let vm = even.sub(&u);
        let vp = even.add(&u);
        let (r, _) = lstsq(&vm, &vp, DEFAULT_RCOND)?;
        Ok(r)
    };

    let b3 = [120.0, 60.0, 12.0, 1.0];
    let b5 = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
    let b7 = [
        17_297_280.0,
        8_648_640.0,
        1_995_840.0,
        277_200.0,
        25_200.0,
        1512.0,
        56.0,
        1.0,
    ];
    let b9 = [
        17_643_225_600.0,
        8_821_612_800.0,
        2_075_673_600.0,
        302_702_400.0,
        30_270_240.0,
        2_162_160.0,
        110_880.0,
        3960.0,
        90.0,
        1.0,
    ];
    let b13 = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];

    let result = if norm <= THETA_3 {
        pade(&b3, a)?
    } else if norm <= THETA_5 {
        pade(&b5, a)?
    } else if norm <= THETA_7 {
        pade(&b7, a)?
    } else if norm <= THETA_9 {
        pade(&b9, a)?
    } else {
        let mut s = 0u32;
        let mut scaled_norm = norm;
        while scaled_norm > THETA_13 {
            scaled_norm /= 2.0;
            s += 1;
            if s > 1074 {
                return Err(LinalgError::Overflow);
            }
        }
        let scaled = a.scale(0.5f64.powi(s as i32));
        let mut r = pade(&b13, &scaled)?;
        for _ in 0..s {
            r = r.matmul(&r);
            if !r.is_finite() {
                return Err(LinalgError::Overflow);
            }
        }
        r
    };
    if !result.is_finite() {
        return Err(LinalgError::Overflow);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn pinv_identity() {
        let i3 = DenseMatrix::identity(3);
        let p = pinv(&i3, DEFAULT_RCOND).unwrap();
        assert!(p.sub(&i3).max_abs() < 1e-14);
    }

    #[test]
    fn pinv_rank_deficient_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]);
        let p = pinv(&a, DEFAULT_RCOND).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(p[(1, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pinv_full_rank_axiom() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 5, 3);
        let p = pinv(&a, DEFAULT_RCOND).unwrap();
        let apa = a.matmul(&p).matmul(&a);
        assert!(apa.sub(&a).max_abs() < 1e-10);
    }

    #[test]
    fn pinv_moore_penrose_axioms_random() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for &(r, c, deficient) in &[
            (10usize, 7usize, false),
            (7, 10, false),
            (50, 30, false),
            (20, 20, true),
        ] {
            let mut a = random_matrix(&mut rng, r, c);
            if deficient {
                // force rank deficiency by copying a column
                for i in 0..r {
                    let v = a[(i, 0)];
                    a[(i, c - 1)] = v;
                }
            }
            let p = pinv(&a, DEFAULT_RCOND).unwrap();
            let scale = a.max_abs().max(p.max_abs());
            let tol = 1e-9 * scale.max(1.0);
            assert!(a.matmul(&p).matmul(&a).sub(&a).max_abs() < tol, "axiom 1");
            assert!(p.matmul(&a).matmul(&p).sub(&p).max_abs() < tol, "axiom 2");
            let ap = a.matmul(&p);
            assert!(ap.sub(&ap.transpose()).max_abs() < tol, "axiom 3");
            let pa = p.matmul(&a);
            assert!(pa.sub(&pa.transpose()).max_abs() < tol, "axiom 4");
        }
    }

    #[test]
    fn tikhonov_scalar() {
        let a = DenseMatrix::from_rows(&[vec![1.0]]);
        let t0 = tikhonov_pinv(&a, 0.0).unwrap();
        assert_abs_diff_eq!(t0[(0, 0)], 1.0, epsilon = 1e-14);
        let t1 = tikhonov_pinv(&a, 1.0).unwrap();
        assert_abs_diff_eq!(t1[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn tikhonov_diagonal_closed_form() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]);
        let t = tikhonov_pinv(&a, 0.01).unwrap();
        assert_abs_diff_eq!(t[(0, 0)], 2.0 / 4.01, epsilon = 1e-13);
        assert_abs_diff_eq!(t[(1, 1)], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn tikhonov_approaches_pinv() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 6, 4);
        let p = pinv(&a, DEFAULT_RCOND).unwrap();
        let mut last = f64::INFINITY;
        for delta in [1e-2, 1e-4, 1e-6] {
            let t = tikhonov_pinv(&a, delta).unwrap();
            let dev = t.sub(&p).max_abs();
            assert!(dev < last, "monotone approach: {dev} !< {last}");
            last = dev;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn eig_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let e = complex_eig(&a).unwrap();
        let mut re: Vec<f64> = e.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(re[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(re[1], 2.0, epsilon = 1e-12);
        assert!(e.eigenvalues.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn eig_rotation_pure_imaginary() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let e = complex_eig(&a).unwrap();
        let mut im: Vec<f64> = e.eigenvalues.iter().map(|z| z.im).collect();
        im.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(im[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(im[1], 1.0, epsilon = 1e-12);
        assert!(e.eigenvalues.iter().all(|z| z.re.abs() < 1e-12));
    }

    #[test]
    fn eig_jordan_block_flagged_defective() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        let e = complex_eig(&a).unwrap();
        assert!(
            e.condition_estimate > 1e6,
            "cond = {}",
            e.condition_estimate
        );
    }

    #[test]
    fn eig_residual_on_well_conditioned() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 8, 8);
            let e = complex_eig(&a).unwrap();
            if e.condition_estimate > 1e8 {
                continue;
            }
            let norm = a.norm_fro();
            for k in 0..8 {
                // residual |A v - lambda v| per eigenpair
                let mut resid = 0.0f64;
                let mut vnorm = 0.0f64;
                for i in 0..8 {
                    let mut avr = 0.0;
                    let mut avi = 0.0;
                    for j in 0..8 {
                        avr += a[(i, j)] * e.eigenvectors.re[(j, k)];
                        avi += a[(i, j)] * e.eigenvectors.im[(j, k)];
                    }
                    let l = e.eigenvalues[k];
                    let lr = l.re * e.eigenvectors.re[(i, k)] - l.im * e.eigenvectors.im[(i, k)];
                    let li = l.re * e.eigenvectors.im[(i, k)] + l.im * e.eigenvectors.re[(i, k)];
                    resid += (avr - lr).powi(2) + (avi - li).powi(2);
                    vnorm += e.eigenvectors.re[(i, k)].powi(2) + e.eigenvectors.im[(i, k)].powi(2);
                }
                assert!(resid.sqrt() <= 1e-8 * norm * vnorm.sqrt().max(1e-300));
            }
        }
    }

    #[test]
    fn log_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![(-0.1f64).exp(), 0.0], vec![0.0, 0.2f64.exp()]]);
        let (re, im) = matrix_log(&a).unwrap();
        assert_abs_diff_eq!(re[(0, 0)], -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(re[(1, 1)], 0.2, epsilon = 1e-12);
        assert!(im.max_abs() < 1e-12);
    }

    #[test]
    fn log_scalar() {
        let a = DenseMatrix::from_rows(&[vec![(-0.01f64).exp()]]);
        let (re, im) = matrix_log(&a).unwrap();
        assert_abs_diff_eq!(re[(0, 0)], -0.01, epsilon = 1e-13);
        assert!(im.max_abs() < 1e-15);
    }

    #[test]
    fn log_rotation_real_result() {
        let c = (std::f64::consts::PI / 4.0).cos();
        let s = (std::f64::consts::PI / 4.0).sin();
        let a = DenseMatrix::from_rows(&[vec![c, -s], vec![s, c]]);
        let (re, im) = matrix_log(&a).unwrap();
        // principal log of a rotation is the real skew generator
        assert_abs_diff_eq!(re[(0, 1)], -std::f64::consts::PI / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(re[(1, 0)], std::f64::consts::PI / 4.0, epsilon = 1e-12);
        assert!(im.max_abs() < 1e-12);
    }

    #[test]
    fn log_branch_cut_negative_eigenvalue() {
        let a = DenseMatrix::from_rows(&[vec![-0.5, 0.0], vec![0.0, 0.5]]);
        match matrix_log(&a) {
            Err(LinalgError::BranchCut { .. }) => {}
            other => panic!("expected branch-cut error, got {other:?}"),
        }
    }

    #[test]
    fn exp_zero_and_scalar() {
        let z = DenseMatrix::zeros(3, 3);
        let e = matrix_exp(&z).unwrap();
        assert!(e.sub(&DenseMatrix::identity(3)).max_abs() < 1e-14);
        let one = DenseMatrix::from_rows(&[vec![1.0]]);
        let e1 = matrix_exp(&one).unwrap();
        assert_abs_diff_eq!(e1[(0, 0)], std::f64::consts::E, epsilon = 1e-13);
    }

    #[test]
    fn exp_rotation_known() {
        // exp([[0,-t],[t,0]]) = rotation by t
        let t = 0.7;
        let a = DenseMatrix::from_rows(&[vec![0.0, -t], vec![t, 0.0]]);
        let e = matrix_exp(&a).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], t.cos(), epsilon = 1e-13);
        assert_abs_diff_eq!(e[(1, 0)], t.sin(), epsilon = 1e-13);
    }

    #[test]
    fn log_exp_roundtrip_symmetric() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..4 {
            let mut a = random_matrix(&mut rng, 4, 4);
            // symmetrize
            for i in 0..4 {
                for j in 0..i {
                    let m = 0.5 * (a[(i, j)] + a[(j, i)]);
                    a[(i, j)] = m;
                    a[(j, i)] = m;
                }
            }
            let e = matrix_exp(&a).unwrap();
            let (re, im) = matrix_log(&e).unwrap();
            assert!(
                re.sub(&a).max_abs() < 1e-8,
                "roundtrip dev {}",
                re.sub(&a).max_abs()
            );
            assert!(im.max_abs() < 1e-8);
        }
    }

    #[test]
    fn exp_log_roundtrip_right_half_plane_spectrum() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..4 {
            let a = random_matrix(&mut rng, 5, 5).scale(0.3);
            // shift to push the spectrum into the right half-plane
            let shifted = a.add(&DenseMatrix::identity(5).scale(2.0));
            let (re, im) = matrix_log(&matrix_exp(&shifted).unwrap()).unwrap();
            assert!(re.sub(&shifted).max_abs() < 1e-8);
            assert!(im.max_abs() < 1e-8);
        }
    }

    #[test]
    fn exp_large_norm_scaling() {
        // |A| ~ 60: exercises the squaring path against the diagonal truth
        let a = DenseMatrix::from_rows(&[vec![-60.0, 0.0], vec![0.0, 3.0]]);
        let e = matrix_exp(&a).unwrap();
        assert!((e[(0, 0)] - (-60.0f64).exp()).abs() < 1e-10 * (-60.0f64).exp().max(1e-30));
        assert!((e[(1, 1)] - 3.0f64.exp()).abs() < 1e-10 * 3.0f64.exp());
    }

    #[test]
    fn lstsq_diagnostics_rank() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let b = DenseMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]);
        let (_, d) = lstsq(&a, &b, DEFAULT_RCOND).unwrap();
        assert_eq!(d.rank, 1);
    }
}
