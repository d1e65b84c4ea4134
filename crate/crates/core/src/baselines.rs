//! Comparison methods on the same data budget as the resolvent learner: the
//! EDMD Koopman matrix, the finite-difference generator `(K - I)/tau`, the
//! Koopman-logarithm generator `log(K)/tau`, and STLSQ SINDy.

use thiserror::Error;

use crate::dataset::SnapshotDataset;
use crate::dictionary::Dictionary;
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::rtm::{GeneratorMethod, LearnedGenerator, Provenance, RtmConfig};
use crate::sysid::IdentifiedSystem;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("rank collapse: {0}")]
    RankCollapse(String),
    #[error("matrix logarithm failed: {0}")]
    LogFailed(#[from] LinalgError),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid argument: {0}")]
    InvalidInput(String),
}

/// Least-squares estimate of the Koopman matrix over one sampling period.
#[derive(Clone, Debug)]
pub struct KoopmanMatrix {
    pub matrix: DenseMatrix,
    pub tau: f64,
    pub dictionary: Dictionary,
    pub cond: f64,
}

/// `K = argmin |Phi_tau - X K|_F` via SVD least squares.
pub fn edmd_learn(
    features: &DenseMatrix,
    tau_features: &DenseMatrix,
    tau: f64,
    dictionary: &Dictionary,
) -> Result<KoopmanMatrix, BaselineError> {
    if tau <= 0.0 {
        return Err(BaselineError::InvalidInput(format!(
            "tau {tau} must be positive"
        )));
    }
    let (k, diag) = linalg::lstsq(features, tau_features, linalg::DEFAULT_RCOND)
        .map_err(BaselineError::LogFailed)?;
    if diag.rank == 0 {
        return Err(BaselineError::RankCollapse(
            "feature matrix has rank 0".into(),
        ));
    }
    Ok(KoopmanMatrix {
        matrix: k,
        tau,
        dictionary: dictionary.clone(),
        cond: diag.cond,
    })
}

/// EDMD on a snapshot dataset, pairing initial states with the states one
/// sampling period `tau = T / Γ` later.
pub fn edmd_from_dataset(
    dataset: &SnapshotDataset,
    dict: &Dictionary,
) -> Result<KoopmanMatrix, BaselineError> {
    let x = dict.evaluate_batch(&dataset.initial_states());
    let phi_tau = dict.evaluate_batch(&dataset.tau_states());
    edmd_learn(&x, &phi_tau, dataset.tau(), dict)
}

fn baseline_provenance(k: &KoopmanMatrix) -> Provenance {
    Provenance {
        system: String::new(),
        m: 0,
        config: RtmConfig {
            horizon: k.tau,
            gamma_count: 1,
            ..Default::default()
        },
        seed: None,
        diagnostics: None,
    }
}

/// Finite-difference generator `(K - I) / tau`.
pub fn fdm_learn(k: &KoopmanMatrix) -> LearnedGenerator {
    let n = k.matrix.rows();
    let l = k.matrix.sub(&DenseMatrix::identity(n)).scale(1.0 / k.tau);
    LearnedGenerator {
        matrix: l,
        method: GeneratorMethod::Fdm,
        imag_norm: 0.0,
        dictionary: k.dictionary.clone(),
        provenance: baseline_provenance(k),
    }
}

/// Koopman-logarithm generator `log(K) / tau` (real part), with the max-abs
/// imaginary residual reported. Branch-cut and defective-eigenbasis failures
/// propagate as errors so callers can record a method failure.
pub fn klm_learn(k: &KoopmanMatrix) -> Result<LearnedGenerator, BaselineError> {
    let (re, im) = linalg::matrix_log(&k.matrix)?;
    Ok(LearnedGenerator {
        matrix: re.scale(1.0 / k.tau),
        method: GeneratorMethod::Klm,
        imag_norm: im.max_abs() / k.tau,
        dictionary: k.dictionary.clone(),
        provenance: baseline_provenance(k),
    })
}

/// Second-order finite-difference derivative estimates on one trajectory's
/// uniform-grid states ((Γ+1) x d), central in the interior, one-sided at the
/// ends.
pub fn central_differences(uniform_states: &DenseMatrix, tau: f64) -> DenseMatrix {
    let rows = uniform_states.rows();
    let d = uniform_states.cols();
    assert!(
        rows >= 3,
        "need at least 3 samples for second-order differences"
    );
    let mut out = DenseMatrix::zeros(rows, d);
    for j in 0..d {
        out[(0, j)] = (-3.0 * uniform_states[(0, j)] + 4.0 * uniform_states[(1, j)]
            - uniform_states[(2, j)])
            / (2.0 * tau);
        for k in 1..rows - 1 {
            out[(k, j)] = (uniform_states[(k + 1, j)] - uniform_states[(k - 1, j)]) / (2.0 * tau);
        }
        out[(rows - 1, j)] = (3.0 * uniform_states[(rows - 1, j)]
            - 4.0 * uniform_states[(rows - 2, j)]
            + uniform_states[(rows - 3, j)])
            / (2.0 * tau);
    }
    out
}

/// Stacked states and derivative estimates for SINDy from a snapshot dataset.
pub fn sindy_data_from_dataset(dataset: &SnapshotDataset) -> (DenseMatrix, DenseMatrix) {
    let states = dataset.stacked_uniform_states();
    let per = dataset.gamma_count + 1;
    let tau = dataset.tau();
    let mut derivs = DenseMatrix::zeros(states.rows(), dataset.dim);
    for (m, traj) in dataset.trajectories.iter().enumerate() {
        let d = central_differences(&traj.uniform_states, tau);
        for k in 0..per {
            derivs.row_mut(m * per + k).copy_from_slice(d.row(k));
        }
    }
    (states, derivs)
}

/// Sequential thresholded least squares: per axis, fit coefficients over the
/// dictionary, zero entries below the threshold, refit on the surviving
/// support until a fixed point (or `max_iters`).
pub fn sindy_stlsq(
    states: &DenseMatrix,
    derivatives: &DenseMatrix,
    dict: &Dictionary,
    threshold: f64,
    max_iters: usize,
) -> Result<IdentifiedSystem, BaselineError> {
    if states.rows() != derivatives.rows() {
        return Err(BaselineError::InvalidInput(format!(
            "states have {} rows, derivatives {}",
            states.rows(),
            derivatives.rows()
        )));
    }
    if threshold < 0.0 {
        return Err(BaselineError::InvalidInput("threshold must be >= 0".into()));
    }
    let z = dict.evaluate_batch(states);
    let n = dict.size();
    let d = derivatives.cols();
    let mut theta = DenseMatrix::zeros(d, n);
    for axis in 0..d {
        let target = DenseMatrix::from_fn(derivatives.rows(), 1, |i, _| derivatives[(i, axis)]);
        let mut support: Vec<usize> = (0..n).collect();
        let mut coefs = full_fit(&z, &target, &support)?;
        for _ in 0..max_iters.max(1) {
            let new_support: Vec<usize> = support
                .iter()
                .copied()
                .zip(&coefs)
                .filter(|(_, c)| c.abs() >= threshold)
                .map(|(s, _)| s)
                .collect();
            if new_support.len() == support.len() {
                break;
            }
            if new_support.is_empty() {
                support = new_support;
                break;
            }
            support = new_support;
            coefs = full_fit(&z, &target, &support)?;
        }
        for (slot, c) in support.iter().zip(&coefs) {
            theta[(axis, *slot)] = *c;
        }
    }
    if (0..d).all(|axis| theta.row(axis).iter().all(|&c| c == 0.0)) {
        return Err(BaselineError::DegenerateFit(
            "thresholding removed every coefficient on every axis".into(),
        ));
    }
    Ok(IdentifiedSystem {
        coefficients: theta,
        dictionary: dict.clone(),
        method: "SINDY".to_string(),
    })
}

fn full_fit(
    z: &DenseMatrix,
    target: &DenseMatrix,
    support: &[usize],
) -> Result<Vec<f64>, BaselineError> {
    let sub = DenseMatrix::from_fn(z.rows(), support.len(), |i, j| z[(i, support[j])]);
    let (x, _) =
        linalg::lstsq(&sub, target, linalg::DEFAULT_RCOND).map_err(BaselineError::LogFailed)?;
    Ok((0..support.len()).map(|i| x[(i, 0)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{sample_initial_conditions, BoxDomain};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn linear_exact_edmd(tau: f64, degree: usize) -> KoopmanMatrix {
        // f(x) = -x with dictionary {1, x, ..., x^degree}: exact flow pairs
        let dict = Dictionary::monomial_total_degree(1, degree);
        let dom = BoxDomain::centered(1, 1.0);
        let initials = sample_initial_conditions(&dom, 40, 21);
        let x0 = DenseMatrix::from_rows(&initials);
        let xt = DenseMatrix::from_fn(initials.len(), 1, |i, _| initials[i][0] * (-tau).exp());
        let x = dict.evaluate_batch(&x0);
        let phi = dict.evaluate_batch(&xt);
        edmd_learn(&x, &phi, tau, &dict).unwrap()
    }

    #[test]
    fn edmd_scalar_flow() {
        let dict = Dictionary::Monomial {
            dim: 1,
            exponents: vec![vec![1]],
        };
        let pts: Vec<Vec<f64>> = vec![vec![0.5], vec![-0.3], vec![0.9]];
        let x = dict.evaluate_batch(&DenseMatrix::from_rows(&pts));
        let phi = DenseMatrix::from_fn(3, 1, |i, _| pts[i][0] * (-0.1f64).exp());
        let k = edmd_learn(&x, &phi, 0.1, &dict).unwrap();
        assert_abs_diff_eq!(k.matrix[(0, 0)], (-0.1f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn edmd_constant_row_is_unit() {
        let k = linear_exact_edmd(0.1, 2);
        // constant observable maps to itself: row 0 of K is e_0
        assert_abs_diff_eq!(k.matrix[(0, 0)], 1.0, epsilon = 1e-10);
        assert!(k.matrix[(0, 1)].abs() < 1e-10 && k.matrix[(0, 2)].abs() < 1e-10);
    }

    #[test]
    fn edmd_zero_tau_data_gives_identity() {
        let dict = Dictionary::monomial_total_degree(1, 2);
        let dom = BoxDomain::centered(1, 1.0);
        let pts = sample_initial_conditions(&dom, 30, 22);
        let x = dict.evaluate_batch(&DenseMatrix::from_rows(&pts));
        let k = edmd_learn(&x, &x, 0.1, &dict).unwrap();
        assert!(k.matrix.sub(&DenseMatrix::identity(3)).max_abs() < 1e-10);
    }

    #[test]
    fn fdm_scalar_values() {
        let dict = Dictionary::Monomial {
            dim: 1,
            exponents: vec![vec![1]],
        };
        let k = KoopmanMatrix {
            matrix: DenseMatrix::from_rows(&[vec![(-0.01f64).exp()]]),
            tau: 0.01,
            dictionary: dict.clone(),
            cond: 1.0,
        };
        let l = fdm_learn(&k);
        assert_abs_diff_eq!(
            l.matrix[(0, 0)],
            ((-0.01f64).exp() - 1.0) / 0.01,
            epsilon = 1e-14
        );
        assert!((l.matrix[(0, 0)] + 0.995017).abs() < 1e-6);

        let ki = KoopmanMatrix {
            matrix: DenseMatrix::identity(1),
            tau: 0.01,
            dictionary: dict,
            cond: 1.0,
        };
        assert_eq!(fdm_learn(&ki).matrix[(0, 0)], 0.0);
    }

    #[test]
    fn fdm_error_halves_with_tau() {
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&tau| {
                let k = linear_exact_edmd(tau, 1);
                // true generator entry for x is -1
                (fdm_learn(&k).matrix[(1, 1)] + 1.0).abs()
            })
            .collect();
        for pair in errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn klm_scalar_exact() {
        let dict = Dictionary::Monomial {
            dim: 1,
            exponents: vec![vec![1]],
        };
        let k = KoopmanMatrix {
            matrix: DenseMatrix::from_rows(&[vec![(-0.01f64).exp()]]),
            tau: 0.01,
            dictionary: dict,
            cond: 1.0,
        };
        let l = klm_learn(&k).unwrap();
        assert_abs_diff_eq!(l.matrix[(0, 0)], -1.0, epsilon = 1e-12);
        assert!(l.imag_norm < 1e-13);
    }

    #[test]
    fn klm_recovers_generator_from_exponential() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..3 {
            let g = DenseMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let tau = 0.1;
            let k = KoopmanMatrix {
                matrix: crate::linalg::matrix_exp(&g.scale(tau)).unwrap(),
                tau,
                dictionary: Dictionary::monomial_total_degree(1, 3),
                cond: 1.0,
            };
            let l = klm_learn(&k).unwrap();
            assert!(
                l.matrix.sub(&g).max_abs() < 1e-8,
                "dev {}",
                l.matrix.sub(&g).max_abs()
            );
            assert!(l.imag_norm < 1e-8);
        }
    }

    #[test]
    fn klm_tau_independent_on_linear_flow() {
        for tau in [0.01, 0.1, 0.5] {
            let k = linear_exact_edmd(tau, 2);
            let l = klm_learn(&k).unwrap();
            // exact generator diag(0, -1, -2) independent of tau
            assert!((l.matrix[(1, 1)] + 1.0).abs() < 1e-8, "tau={tau}");
            assert!((l.matrix[(2, 2)] + 2.0).abs() < 1e-8, "tau={tau}");
        }
    }

    #[test]
    fn klm_negative_eigenvalue_branch_cut() {
        let dict = Dictionary::monomial_total_degree(1, 1);
        let k = KoopmanMatrix {
            matrix: DenseMatrix::from_rows(&[vec![-0.5, 0.0], vec![0.0, 0.5]]),
            tau: 0.1,
            dictionary: dict,
            cond: 1.0,
        };
        assert!(matches!(
            klm_learn(&k),
            Err(BaselineError::LogFailed(LinalgError::BranchCut { .. }))
        ));
    }

    #[test]
    fn fdm_klm_agree_to_first_order() {
        let mut last = f64::INFINITY;
        for tau in [0.1, 0.05, 0.025] {
            let k = linear_exact_edmd(tau, 2);
            let diff = fdm_learn(&k)
                .matrix
                .sub(&klm_learn(&k).unwrap().matrix)
                .max_abs();
            assert!(diff < last, "difference shrinks with tau");
            last = diff;
        }
    }

    #[test]
    fn stlsq_exact_linear() {
        let dict = Dictionary::monomial_total_degree(1, 2);
        let dom = BoxDomain::centered(1, 1.0);
        let pts = DenseMatrix::from_rows(&sample_initial_conditions(&dom, 50, 24));
        let derivs = DenseMatrix::from_fn(50, 1, |i, _| -pts[(i, 0)]);
        let sys = sindy_stlsq(&pts, &derivs, &dict, 0.05, 10).unwrap();
        assert!(sys.coefficients[(0, 0)].abs() < 1e-12);
        assert_abs_diff_eq!(sys.coefficients[(0, 1)], -1.0, epsilon = 1e-10);
        assert!(sys.coefficients[(0, 2)].abs() < 1e-12);
    }

    #[test]
    fn stlsq_zero_threshold_plain_lstsq() {
        let dict = Dictionary::monomial_total_degree(1, 2);
        let dom = BoxDomain::centered(1, 1.0);
        let pts = DenseMatrix::from_rows(&sample_initial_conditions(&dom, 50, 25));
        let derivs = DenseMatrix::from_fn(50, 1, |i, _| -pts[(i, 0)] + 0.001);
        let sys = sindy_stlsq(&pts, &derivs, &dict, 0.0, 10).unwrap();
        // nothing thresholded: the small constant survives
        assert!((sys.coefficients[(0, 0)] - 0.001).abs() < 1e-10);
    }

    #[test]
    fn stlsq_cubic_support() {
        let dict = Dictionary::monomial_total_degree(1, 4);
        let dom = BoxDomain::centered(1, 1.0);
        let pts = DenseMatrix::from_rows(&sample_initial_conditions(&dom, 60, 26));
        let derivs = DenseMatrix::from_fn(60, 1, |i, _| -pts[(i, 0)].powi(3));
        let sys = sindy_stlsq(&pts, &derivs, &dict, 0.05, 10).unwrap();
        for (j, c) in sys.coefficients.row(0).iter().enumerate() {
            if j == 3 {
                assert_abs_diff_eq!(*c, -1.0, epsilon = 1e-9);
            } else {
                assert_eq!(*c, 0.0, "slot {j} should be thresholded away");
            }
        }
    }

    #[test]
    fn stlsq_idempotent() {
        let dict = Dictionary::monomial_total_degree(1, 3);
        let dom = BoxDomain::centered(1, 1.0);
        let pts = DenseMatrix::from_rows(&sample_initial_conditions(&dom, 50, 27));
        let derivs = DenseMatrix::from_fn(50, 1, |i, _| -pts[(i, 0)] + 0.3 * pts[(i, 0)].powi(2));
        let first = sindy_stlsq(&pts, &derivs, &dict, 0.05, 10).unwrap();
        let second = sindy_stlsq(&pts, &derivs, &dict, 0.05, 10).unwrap();
        assert_eq!(first.coefficients.data(), second.coefficients.data());
    }

    #[test]
    fn stlsq_empty_support_error() {
        let dict = Dictionary::monomial_total_degree(1, 2);
        let dom = BoxDomain::centered(1, 1.0);
        let pts = DenseMatrix::from_rows(&sample_initial_conditions(&dom, 30, 28));
        let derivs = DenseMatrix::from_fn(30, 1, |i, _| 1e-6 * pts[(i, 0)]);
        assert!(matches!(
            sindy_stlsq(&pts, &derivs, &dict, 0.5, 10),
            Err(BaselineError::DegenerateFit(_))
        ));
    }

    #[test]
    fn central_differences_quadratic() {
        // x(t) = t^2 sampled on a uniform grid: central diffs are exact
        let tau = 0.1;
        let states = DenseMatrix::from_fn(6, 1, |k, _| (k as f64 * tau).powi(2));
        let d = central_differences(&states, tau);
        for k in 0..6 {
            assert_abs_diff_eq!(d[(k, 0)], 2.0 * k as f64 * tau, epsilon = 1e-12);
        }
    }
}
