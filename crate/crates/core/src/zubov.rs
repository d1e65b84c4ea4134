//! Region-of-attraction estimation by solving the Zubov equation
//! `L u(x) = -alpha |x - x_eq|^2 (1 - u(x))` with the learned generator.
//!
//! With `u(x; theta) = Z(x)^T theta` and the generator matrix acting on the
//! dictionary, the equation is linear in `theta` and the weighted collocation
//! system is solved by SVD least squares (extreme-learning-machine style).
//! The sublevel set `{u <= 1 - eps}` is a tight inner approximation of the
//! region of attraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::Dictionary;
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::rtm::LearnedGenerator;
use crate::systems::BoxDomain;

#[derive(Debug, Error)]
pub enum ZubovError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("rank collapse in the collocation system")]
    RankCollapse,
    #[error("equilibrium is not inside the sublevel set; no region of attraction found")]
    EmptyRoa,
}

/// Collocation problem for the Zubov solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZubovProblem {
    pub alpha: f64,
    pub equilibrium: Vec<f64>,
    pub collocation: Vec<Vec<f64>>,
    pub boundary: Vec<Vec<f64>>,
    /// (residual, equilibrium, boundary) loss weights.
    pub weights: (f64, f64, f64),
}

impl ZubovProblem {
    /// Uniform lattice of interior collocation points excluding a small ball
    /// around the equilibrium, plus a boundary lattice on each face.
    pub fn on_lattice(
        domain: &BoxDomain,
        per_axis: usize,
        equilibrium: Vec<f64>,
        exclusion_radius: f64,
        alpha: f64,
    ) -> Self {
        let lattice = Lattice::new(domain.clone(), vec![per_axis; domain.dim()]);
        let collocation: Vec<Vec<f64>> = lattice
            .points()
            .filter(|x| dist2(x, &equilibrium).sqrt() > exclusion_radius)
            .collect();
        let boundary = boundary_lattice(domain, per_axis);
        Self {
            alpha,
            equilibrium,
            collocation,
            boundary,
            weights: (1.0, 100.0, 10.0),
        }
    }
}

/// Points on the faces of the box, `per_axis` per edge direction.
pub fn boundary_lattice(domain: &BoxDomain, per_axis: usize) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let mut out = Vec::new();
    let steps = per_axis.max(2);
    for face_axis in 0..d {
        for &face_val in &[domain.lower[face_axis], domain.upper[face_axis]] {
            // lattice over the remaining axes
            let mut idx = vec![0usize; d];
            loop {
                let mut x = vec![0.0; d];
                x[face_axis] = face_val;
                for j in 0..d {
                    if j != face_axis {
                        let t = idx[j] as f64 / (steps - 1) as f64;
                        x[j] = domain.lower[j] + t * (domain.upper[j] - domain.lower[j]);
                    }
                }
                out.push(x);
                // odometer over the non-face axes
                let mut j = 0;
                loop {
                    if j == d {
                        return dedup_points(out);
                    }
                    if j == face_axis {
                        j += 1;
                        continue;
                    }
                    idx[j] += 1;
                    if idx[j] < steps {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if idx
                    .iter()
                    .enumerate()
                    .all(|(j, &v)| j == face_axis || v == 0)
                {
                    break;
                }
            }
        }
    }
    dedup_points(out)
}

fn dedup_points(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pts.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (*x - *y).abs() < 1e-12));
    pts
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Solution of the Zubov solve: `u(x; theta) = Z(x)^T theta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZubovSolution {
    pub theta: Vec<f64>,
    pub residual_rms: f64,
    /// Sublevel cut value `1 - eps` used for RoA extraction (NaN until set).
    pub level: f64,
    pub warnings: Vec<String>,
}

/// Residual RMS above which a sanity warning is recorded.
pub const RESIDUAL_WARN_CEILING: f64 = 0.1;

/// Assembles the weighted collocation system and solves for `theta`.
///
/// Rows: `[Z(x)^T L - alpha |x - x_eq|^2 Z(x)^T] theta = -alpha |x - x_eq|^2`
/// at interior points, `Z(x_eq)^T theta = 0`, and `Z(x_b)^T theta = 1` on the
/// boundary, each scaled by the square root of its loss weight.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN alpha must be rejected
pub fn zubov_solve(
    gen: &LearnedGenerator,
    prob: &ZubovProblem,
) -> Result<ZubovSolution, ZubovError> {
    if !(prob.alpha > 0.0) {
        return Err(ZubovError::InvalidProblem(format!(
            "alpha {} must be > 0",
            prob.alpha
        )));
    }
    let (wr, we, wb) = prob.weights;
    if wr < 0.0 || we < 0.0 || wb < 0.0 || (wr == 0.0 && we == 0.0 && wb == 0.0) {
        return Err(ZubovError::InvalidProblem(
            "loss weights must be nonnegative, not all zero".into(),
        ));
    }
    if prob.collocation.is_empty() {
        return Err(ZubovError::InvalidProblem("no collocation points".into()));
    }
    let dict = &gen.dictionary;
    let n = dict.size();
    if prob.equilibrium.len() != dict.dim() {
        return Err(ZubovError::InvalidProblem(
            "equilibrium dimension mismatch".into(),
        ));
    }

    let n_rows = prob.collocation.len() + 1 + prob.boundary.len();
    let mut rows = DenseMatrix::zeros(n_rows, n);
    let mut rhs = DenseMatrix::zeros(n_rows, 1);
    let mut z = vec![0.0; n];

    let sr = wr.sqrt();
    for (r, x) in prob.collocation.iter().enumerate() {
        dict.evaluate_point(x, &mut z);
        let r2 = prob.alpha * dist2(x, &prob.equilibrium);
        // Z^T L: row vector through the generator
        let row = rows.row_mut(r);
        for i in 0..n {
            let mut zl = 0.0;
            for (k, &zk) in z.iter().enumerate() {
                zl += zk * gen.matrix[(k, i)];
            }
            row[i] = sr * (zl - r2 * z[i]);
        }
        rhs[(r, 0)] = sr * (-r2);
    }
    let r_eq = prob.collocation.len();
    dict.evaluate_point(&prob.equilibrium, &mut z);
    let se = we.sqrt();
    for i in 0..n {
        rows[(r_eq, i)] = se * z[i];
    }
    rhs[(r_eq, 0)] = 0.0;
    let sb = wb.sqrt();
    for (k, x) in prob.boundary.iter().enumerate() {
        dict.evaluate_point(x, &mut z);
        let row = rows.row_mut(r_eq + 1 + k);
        for i in 0..n {
            row[i] = sb * z[i];
        }
        rhs[(r_eq + 1 + k, 0)] = sb * 1.0;
    }

    let (theta_mat, diag) = linalg::lstsq(&rows, &rhs, linalg::DEFAULT_RCOND)?;
    if diag.rank == 0 {
        return Err(ZubovError::RankCollapse);
    }
    let theta: Vec<f64> = (0..n).map(|i| theta_mat[(i, 0)]).collect();

    // unweighted PDE residual at the collocation points
    let mut acc = 0.0;
    for x in &prob.collocation {
        dict.evaluate_point(x, &mut z);
        let r2 = prob.alpha * dist2(x, &prob.equilibrium);
        let mut lu = 0.0;
        let mut u = 0.0;
        for i in 0..n {
            let mut zl = 0.0;
            for (k, &zk) in z.iter().enumerate() {
                zl += zk * gen.matrix[(k, i)];
            }
            lu += zl * theta[i];
            u += z[i] * theta[i];
        }
        let res = lu + r2 * (1.0 - u);
        acc += res * res;
    }
    let residual_rms = (acc / prob.collocation.len() as f64).sqrt();
    let mut warnings = Vec::new();
    if residual_rms > RESIDUAL_WARN_CEILING {
        warnings.push(format!(
            "residual RMS {residual_rms:.3e} above the sanity ceiling {RESIDUAL_WARN_CEILING}"
        ));
    }
    Ok(ZubovSolution {
        theta,
        residual_rms,
        level: f64::NAN,
        warnings,
    })
}

/// Evaluates `u(x; theta)`.
pub fn eval_u(dict: &Dictionary, theta: &[f64], x: &[f64]) -> f64 {
    let mut z = vec![0.0; dict.size()];
    dict.evaluate_point(x, &mut z);
    z.iter().zip(theta).map(|(a, b)| a * b).sum()
}

/// Max over the points of the Lie derivative `Z(x)^T L theta`; negative away
/// from the equilibrium for a valid Lyapunov-like solution.
pub fn lie_derivative_check(gen: &LearnedGenerator, theta: &[f64], points: &[Vec<f64>]) -> f64 {
    let n = gen.dictionary.size();
    let mut z = vec![0.0; n];
    let ltheta = gen.matrix.matvec(theta);
    points
        .iter()
        .map(|x| {
            gen.dictionary.evaluate_point(x, &mut z);
            z.iter().zip(&ltheta).map(|(a, b)| a * b).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Rectangular lattice over a box domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lattice {
    pub domain: BoxDomain,
    pub shape: Vec<usize>,
}

impl Lattice {
    pub fn new(domain: BoxDomain, shape: Vec<usize>) -> Self {
        assert_eq!(domain.dim(), shape.len());
        assert!(shape.iter().all(|&s| s >= 2));
        Self { domain, shape }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut x = vec![0.0; self.shape.len()];
        for (j, &s) in self.shape.iter().enumerate() {
            let i = rem % s;
            rem /= s;
            let t = i as f64 / (s - 1) as f64;
            x[j] = self.domain.lower[j] + t * (self.domain.upper[j] - self.domain.lower[j]);
        }
        x
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Flat index of the lattice point nearest to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut flat = 0usize;
        let mut stride = 1usize;
        for (j, &s) in self.shape.iter().enumerate() {
            let t = (x[j] - self.domain.lower[j]) / (self.domain.upper[j] - self.domain.lower[j]);
            let i = (t * (s - 1) as f64).round().clamp(0.0, (s - 1) as f64) as usize;
            flat += i * stride;
            stride *= s;
        }
        flat
    }

    fn neighbors(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut idx = Vec::with_capacity(self.shape.len());
        for &s in &self.shape {
            idx.push(rem % s);
            rem /= s;
        }
        let mut out = Vec::with_capacity(2 * self.shape.len());
        let mut stride = 1usize;
        for (j, &s) in self.shape.iter().enumerate() {
            if idx[j] > 0 {
                out.push(flat - stride);
            }
            if idx[j] + 1 < s {
                out.push(flat + stride);
            }
            stride *= s;
        }
        out
    }
}

/// Boolean mask of the connected sublevel component containing the
/// equilibrium.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoaMask {
    pub lattice: Lattice,
    pub mask: Vec<bool>,
    pub cells_inside: usize,
    pub level: f64,
}

/// Extracts the connected component of `{u <= 1 - eps}` containing the
/// equilibrium as a boolean lattice mask.
pub fn roa_extract(
    sol: &ZubovSolution,
    dict: &Dictionary,
    lattice: &Lattice,
    equilibrium: &[f64],
    epsilon: f64,
) -> Result<RoaMask, ZubovError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ZubovError::InvalidProblem(format!(
            "epsilon {epsilon} not in (0,1)"
        )));
    }
    let cut = 1.0 - epsilon;
    let len = lattice.len();
    let mut sub = vec![false; len];
    for (i, cell) in sub.iter_mut().enumerate() {
        *cell = eval_u(dict, &sol.theta, &lattice.point(i)) <= cut;
    }
    let seed = lattice.nearest(equilibrium);
    if !sub[seed] {
        return Err(ZubovError::EmptyRoa);
    }
    let mut mask = vec![false; len];
    let mut stack = vec![seed];
    mask[seed] = true;
    let mut count = 1usize;
    while let Some(i) = stack.pop() {
        for nb in lattice.neighbors(i) {
            if sub[nb] && !mask[nb] {
                mask[nb] = true;
                count += 1;
                stack.push(nb);
            }
        }
    }
    Ok(RoaMask {
        lattice: lattice.clone(),
        mask,
        cells_inside: count,
        level: cut,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtm::{GeneratorMethod, LearnedGenerator, Provenance, RtmConfig};

    /// Projection of the analytic generator of `f(x) = -x` onto a dictionary:
    /// column i of L solves `Z(P) L e_i ~ dz_i/dx * (-x)` on a dense grid.
    fn exact_generator_1d(dict: &Dictionary) -> LearnedGenerator {
        let n = dict.size();
        let pts = 401;
        let mut z = DenseMatrix::zeros(pts, n);
        let mut y = DenseMatrix::zeros(pts, n);
        for p in 0..pts {
            let x = -1.0 + 2.0 * p as f64 / (pts - 1) as f64;
            let mut row = vec![0.0; n];
            dict.evaluate_point(&[x], &mut row);
            z.row_mut(p).copy_from_slice(&row);
            let g = dict.gradient_point(&[x]);
            for i in 0..n {
                y[(p, i)] = g[(i, 0)] * (-x);
            }
        }
        let (l, _) = linalg::lstsq(&z, &y, linalg::DEFAULT_RCOND).unwrap();
        LearnedGenerator {
            matrix: l,
            method: GeneratorMethod::Rtm,
            imag_norm: 0.0,
            dictionary: dict.clone(),
            provenance: Provenance {
                system: "linear1d".into(),
                m: 0,
                config: RtmConfig::default(),
                seed: None,
                diagnostics: None,
            },
        }
    }

    fn oracle_problem(alpha: f64, boundary_weight: f64) -> ZubovProblem {
        let domain = BoxDomain::centered(1, 1.0);
        let mut prob = ZubovProblem::on_lattice(&domain, 401, vec![0.0], 0.05, alpha);
        prob.weights = (1.0, 100.0, boundary_weight);
        if boundary_weight == 0.0 {
            prob.boundary.clear();
        }
        prob
    }

    #[test]
    fn oracle_solution_matches_closed_form() {
        // u(x) = 1 - e^{-alpha x^2 / 2} solves the 1-D Zubov equation for
        // f(x) = -x
        let dict = Dictionary::tanh_random(1, 40, 11, 1.0, 1.0);
        let gen = exact_generator_1d(&dict);
        let prob = oracle_problem(0.1, 0.0);
        let sol = zubov_solve(&gen, &prob).unwrap();
        assert!(sol.residual_rms <= 1e-3, "residual {}", sol.residual_rms);
        let u_05 = eval_u(&dict, &sol.theta, &[0.5]);
        let want = 1.0 - (-0.1f64 * 0.25 / 2.0).exp();
        assert!((u_05 - want).abs() < 1e-3, "u(0.5) = {u_05}, want {want}");
        for k in 0..=180 {
            let x = -0.9 + k as f64 * 0.01;
            let u = eval_u(&dict, &sol.theta, &[x]);
            let truth = 1.0 - (-0.05 * x * x).exp();
            assert!(
                (u - truth).abs() < 1e-3,
                "sup-norm failure at {x}: {u} vs {truth}"
            );
        }
    }

    #[test]
    fn equilibrium_anchored_with_heavy_weight() {
        let dict = Dictionary::tanh_random(1, 30, 12, 1.0, 1.0);
        let gen = exact_generator_1d(&dict);
        let mut prob = oracle_problem(0.1, 0.0);
        prob.weights = (1.0, 1e6, 0.0);
        let sol = zubov_solve(&gen, &prob).unwrap();
        assert!(eval_u(&dict, &sol.theta, &[0.0]).abs() <= 1e-6);
    }

    #[test]
    fn alpha_zero_rejected() {
        let dict = Dictionary::tanh_random(1, 10, 13, 1.0, 1.0);
        let gen = exact_generator_1d(&dict);
        let prob = ZubovProblem {
            alpha: 0.0,
            equilibrium: vec![0.0],
            collocation: vec![vec![0.5]],
            boundary: vec![],
            weights: (1.0, 100.0, 10.0),
        };
        assert!(matches!(
            zubov_solve(&gen, &prob),
            Err(ZubovError::InvalidProblem(_))
        ));
    }

    #[test]
    fn roa_covers_lattice_for_global_oracle() {
        let dict = Dictionary::tanh_random(1, 40, 11, 1.0, 1.0);
        let gen = exact_generator_1d(&dict);
        let prob = oracle_problem(0.1, 0.0);
        let sol = zubov_solve(&gen, &prob).unwrap();
        let lattice = Lattice::new(BoxDomain::centered(1, 1.0), vec![201]);
        let mask = roa_extract(&sol, &dict, &lattice, &[0.0], 0.05).unwrap();
        // globally stable: u < 0.05 everywhere, full lattice inside
        assert_eq!(mask.cells_inside, lattice.len());
        // u on the mask stays within [-tol, 1 - eps]
        for i in 0..lattice.len() {
            if mask.mask[i] {
                let u = eval_u(&dict, &sol.theta, &lattice.point(i));
                assert!(u <= mask.level + 1e-12 && u >= -1e-3);
            }
        }
    }

    #[test]
    fn roa_shrinks_as_epsilon_grows() {
        // a synthetic u with a genuine sublevel structure: use the closed
        // form through a quadratic-capable dictionary and alpha = 8
        let dict = Dictionary::tanh_random(1, 40, 14, 1.5, 1.0);
        let gen = exact_generator_1d(&dict);
        let prob = oracle_problem(8.0, 0.0);
        let sol = zubov_solve(&gen, &prob).unwrap();
        let lattice = Lattice::new(BoxDomain::centered(1, 1.0), vec![201]);
        let mut last = usize::MAX;
        for eps in [0.2, 0.5, 0.8, 0.95] {
            let mask = roa_extract(&sol, &dict, &lattice, &[0.0], eps).unwrap();
            assert!(mask.cells_inside <= last, "mask must shrink as eps grows");
            last = mask.cells_inside;
        }
        assert!(last < lattice.len(), "tightest cut is a strict subset");
    }

    #[test]
    fn lie_derivative_negative_away_from_equilibrium() {
        let dict = Dictionary::tanh_random(1, 40, 11, 1.0, 1.0);
        let gen = exact_generator_1d(&dict);
        let prob = oracle_problem(0.1, 0.0);
        let sol = zubov_solve(&gen, &prob).unwrap();
        let points: Vec<Vec<f64>> = (0..50).map(|k| vec![0.2 + 0.6 * k as f64 / 49.0]).collect();
        let max = lie_derivative_check(&gen, &sol.theta, &points);
        assert!(max < 0.0, "Lie derivative max {max} should be negative");
        // ~0 at the equilibrium, exactly 0 for theta = 0
        let at_eq = lie_derivative_check(&gen, &sol.theta, &[vec![0.0]]);
        assert!(at_eq.abs() < 1e-3);
        let zero = vec![0.0; dict.size()];
        assert_eq!(lie_derivative_check(&gen, &zero, &[vec![0.3]]), 0.0);
    }

    #[test]
    fn denser_collocation_does_not_hurt() {
        let dict = Dictionary::tanh_random(1, 30, 15, 1.0, 1.0);
        let gen = exact_generator_1d(&dict);
        let res = |per_axis: usize| {
            let domain = BoxDomain::centered(1, 1.0);
            let mut prob = ZubovProblem::on_lattice(&domain, per_axis, vec![0.0], 0.05, 0.1);
            prob.weights = (1.0, 100.0, 0.0);
            prob.boundary.clear();
            zubov_solve(&gen, &prob).unwrap().residual_rms
        };
        let coarse = res(201);
        let fine = res(401);
        assert!(fine <= coarse + 1e-10, "{fine} vs {coarse}");
    }

    #[test]
    fn empty_roa_when_equilibrium_excluded() {
        let dict = Dictionary::monomial_total_degree(1, 2);
        // fabricate a solution with u(x) = 1 everywhere
        let sol = ZubovSolution {
            theta: vec![1.0, 0.0, 0.0],
            residual_rms: 0.0,
            level: f64::NAN,
            warnings: vec![],
        };
        let lattice = Lattice::new(BoxDomain::centered(1, 1.0), vec![21]);
        assert!(matches!(
            roa_extract(&sol, &dict, &lattice, &[0.0], 0.5),
            Err(ZubovError::EmptyRoa)
        ));
    }
}
