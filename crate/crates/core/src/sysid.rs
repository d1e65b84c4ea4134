//! Vector-field recovery from a learned generator, trajectory prediction with
//! the identified field, RMSE metrics, and SRTM sparsification.
//!
//! Recovery uses the generator identity on coordinates: applying the
//! generator to `z(x) = x_j` yields `f_j`, so the coefficient vector of the
//! j-th field component is the generator column at the coordinate slot.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SnapshotDataset;
use crate::dictionary::{Dictionary, DictionaryError};
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::rtm::LearnedGenerator;
use crate::systems::{integrate_field, IntegratorOptions, SystemsError, Trajectory};

#[derive(Debug, Error)]
pub enum SysidError {
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty support after sparsification")]
    EmptySupport,
    #[error("invalid argument: {0}")]
    InvalidInput(String),
}

/// Identified vector field `f_j(x) = Z(x)^T theta_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentifiedSystem {
    /// d x N coefficient matrix; row j holds the weights of component j.
    pub coefficients: DenseMatrix,
    pub dictionary: Dictionary,
    pub method: String,
}

impl IdentifiedSystem {
    pub fn dim(&self) -> usize {
        self.coefficients.rows()
    }

    pub fn eval_field(&self, x: &[f64], out: &mut [f64]) {
        let mut z = vec![0.0; self.dictionary.size()];
        self.dictionary.evaluate_point(x, &mut z);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self
                .coefficients
                .row(j)
                .iter()
                .zip(&z)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    /// Jacobian of the identified field via dictionary gradients.
    pub fn jacobian(&self, x: &[f64]) -> DenseMatrix {
        let g = self.dictionary.gradient_point(x); // N x d
        self.coefficients.matmul(&g) // d x d
    }
}

/// Extracts the identified field from a learned generator: coefficient row j
/// is the generator column at the slot of coordinate `x_j`.
pub fn recover_field(gen: &LearnedGenerator) -> Result<IdentifiedSystem, SysidError> {
    let d = gen.dictionary.dim();
    let n = gen.dictionary.size();
    let slots = gen.dictionary.coordinate_indices()?;
    let mut theta = DenseMatrix::zeros(d, n);
    for (j, &slot) in slots.iter().enumerate() {
        for i in 0..n {
            theta[(j, i)] = gen.matrix[(i, slot)];
        }
    }
    Ok(IdentifiedSystem {
        coefficients: theta,
        dictionary: gen.dictionary.clone(),
        method: gen.method.to_string(),
    })
}

/// Outcome of predicting one trajectory with an identified field.
#[derive(Clone, Debug)]
pub enum FlowPrediction {
    Ok(Trajectory),
    /// The identified dynamics diverged (stiffness, finite-time blow-up, or
    /// the state cap); recorded, not fatal.
    BlowUp {
        at_time: f64,
    },
}

/// Integrates the identified dynamics with dense output at
/// `t_k = k T_s / Γ_s`, `k = 1..=Γ_s`.
pub fn predict_flow(
    sys: &IdentifiedSystem,
    x0: &[f64],
    t_s: f64,
    snapshot_count: usize,
    opts: &IntegratorOptions,
) -> FlowPrediction {
    let times: Vec<f64> = (1..=snapshot_count)
        .map(|k| k as f64 * t_s / snapshot_count as f64)
        .collect();
    let d = sys.dim();
    let f = move |x: &[f64], out: &mut [f64]| sys.eval_field(x, out);
    debug_assert_eq!(x0.len(), d);
    match integrate_field(&f, x0, &times, opts) {
        Ok(traj) => FlowPrediction::Ok(traj),
        Err(SystemsError::BlowUp { t, .. })
        | Err(SystemsError::Stiffness { t })
        | Err(SystemsError::NonFinite { t }) => FlowPrediction::BlowUp { at_time: t },
        Err(SystemsError::MaxSteps) => FlowPrediction::BlowUp { at_time: f64::NAN },
        Err(e) => panic!("unexpected integration failure: {e}"),
    }
}

/// Root mean squared flow error: mean over trajectories of the per-trajectory
/// RMS Euclidean deviation over snapshots `k = 1..Γ_s` (initial point
/// excluded).
pub fn rmse_flow(truth: &[Trajectory], predicted: &[Trajectory]) -> Result<f64, SysidError> {
    if truth.len() != predicted.len() {
        return Err(SysidError::ShapeMismatch(format!(
            "{} truth vs {} predicted trajectories",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(SysidError::InvalidInput("no trajectories".into()));
    }
    let mut total = 0.0;
    for (t, p) in truth.iter().zip(predicted) {
        total += per_trajectory_rms(t, p)?;
    }
    Ok(total / truth.len() as f64)
}

fn per_trajectory_rms(t: &Trajectory, p: &Trajectory) -> Result<f64, SysidError> {
    if t.states.rows() != p.states.rows() || t.states.cols() != p.states.cols() {
        return Err(SysidError::ShapeMismatch(format!(
            "trajectory shapes {}x{} vs {}x{}",
            t.states.rows(),
            t.states.cols(),
            p.states.rows(),
            p.states.cols()
        )));
    }
    // skip any leading t = 0 row: the metric starts at k = 1
    let skip = if t.times.first() == Some(&0.0) { 1 } else { 0 };
    let count = t.states.rows() - skip;
    if count == 0 {
        return Err(SysidError::InvalidInput("no snapshots past t=0".into()));
    }
    let mut acc = 0.0;
    for k in skip..t.states.rows() {
        let mut dist2 = 0.0;
        for j in 0..t.states.cols() {
            let d = t.states[(k, j)] - p.states[(k, j)];
            dist2 += d * d;
        }
        acc += dist2;
    }
    Ok((acc / count as f64).sqrt())
}

/// Weight RMSE `sqrt(1/(dN) sum |theta - theta_hat|^2)`.
pub fn rmse_weights(theta_hat: &DenseMatrix, theta_true: &DenseMatrix) -> Result<f64, SysidError> {
    if theta_hat.rows() != theta_true.rows() || theta_hat.cols() != theta_true.cols() {
        return Err(SysidError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            theta_hat.rows(),
            theta_hat.cols(),
            theta_true.rows(),
            theta_true.cols()
        )));
    }
    let dn = (theta_hat.rows() * theta_hat.cols()) as f64;
    let sum: f64 = theta_hat
        .data()
        .iter()
        .zip(theta_true.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / dn).sqrt())
}

/// Flow-prediction evaluation report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowMetrics {
    pub rmse_flow: f64,
    pub rmse_weights: Option<f64>,
    pub per_trajectory: Vec<f64>,
    pub horizon: f64,
    pub snapshot_count: usize,
    pub blowups: usize,
}

/// Predicts every evaluation trajectory with the identified field and scores
/// it against the supplied truth. Divergent predictions are excluded from the
/// mean and counted separately.
pub fn evaluate_flow(
    sys: &IdentifiedSystem,
    truth: &[Trajectory],
    t_s: f64,
    snapshot_count: usize,
    opts: &IntegratorOptions,
) -> Result<FlowMetrics, SysidError> {
    if truth.is_empty() {
        return Err(SysidError::InvalidInput(
            "no evaluation trajectories".into(),
        ));
    }
    let predictions: Vec<FlowPrediction> = truth
        .par_iter()
        .map(|t| predict_flow(sys, &t.initial, t_s, snapshot_count, opts))
        .collect();
    let mut per = Vec::new();
    let mut blowups = 0usize;
    for (t, p) in truth.iter().zip(&predictions) {
        match p {
            FlowPrediction::Ok(pred) => per.push(per_trajectory_rms(t, pred)?),
            FlowPrediction::BlowUp { .. } => blowups += 1,
        }
    }
    let rmse = if per.is_empty() {
        f64::NAN
    } else {
        per.iter().sum::<f64>() / per.len() as f64
    };
    Ok(FlowMetrics {
        rmse_flow: rmse,
        rmse_weights: None,
        per_trajectory: per,
        horizon: t_s,
        snapshot_count,
        blowups,
    })
}

/// Sparse RTM: thresholded least-squares refit of the recovered field against
/// generator outputs on a validation dataset.
///
/// Targets are the identified field values `Z(x)^T (L e_slot)` at the
/// validation states; coefficients below the threshold are zeroed and the
/// survivors refit, to a fixed point or 10 iterations.
pub fn srtm_sparsify(
    gen: &LearnedGenerator,
    validation: &SnapshotDataset,
    threshold: f64,
) -> Result<IdentifiedSystem, SysidError> {
    let base = recover_field(gen)?;
    if threshold == 0.0 {
        return Ok(IdentifiedSystem {
            method: "SRTM".to_string(),
            ..base
        });
    }
    let states = validation.stacked_uniform_states();
    let z = gen.dictionary.evaluate_batch(&states);
    let d = base.dim();
    let n = gen.dictionary.size();
    let mut theta = DenseMatrix::zeros(d, n);
    for axis in 0..d {
        // validation targets from the unsparsified identified field
        let coef = base.coefficients.row(axis);
        let target = DenseMatrix::from_fn(z.rows(), 1, |i, _| {
            z.row(i).iter().zip(coef).map(|(a, b)| a * b).sum()
        });
        let mut support: Vec<usize> = (0..n).filter(|&i| coef[i].abs() >= threshold).collect();
        if support.is_empty() {
            continue;
        }
        let mut coefs = refit(&z, &target, &support)?;
        for _ in 0..10 {
            let next: Vec<usize> = support
                .iter()
                .copied()
                .zip(&coefs)
                .filter(|(_, c)| c.abs() >= threshold)
                .map(|(s, _)| s)
                .collect();
            if next.len() == support.len() {
                break;
            }
            if next.is_empty() {
                support.clear();
                break;
            }
            support = next;
            coefs = refit(&z, &target, &support)?;
        }
        for (slot, c) in support.iter().zip(&coefs) {
            theta[(axis, *slot)] = *c;
        }
    }
    if (0..d).all(|axis| theta.row(axis).iter().all(|&c| c == 0.0)) {
        return Err(SysidError::EmptySupport);
    }
    Ok(IdentifiedSystem {
        coefficients: theta,
        dictionary: gen.dictionary.clone(),
        method: "SRTM".to_string(),
    })
}

fn refit(z: &DenseMatrix, target: &DenseMatrix, support: &[usize]) -> Result<Vec<f64>, SysidError> {
    let sub = DenseMatrix::from_fn(z.rows(), support.len(), |i, j| z[(i, support[j])]);
    let (x, _) = linalg::lstsq(&sub, target, linalg::DEFAULT_RCOND)?;
    Ok((0..support.len()).map(|i| x[(i, 0)]).collect())
}

/// True dictionary weights of a built-in polynomial system, by symbolic
/// expansion of its vector field onto the monomial dictionary. `None` when
/// the truth is not expressible (non-polynomial system, tanh dictionary, or
/// missing monomials).
pub fn true_weights(
    system: &str,
    params: &std::collections::BTreeMap<String, f64>,
    dict: &Dictionary,
) -> Option<DenseMatrix> {
    let d = dict.dim();
    let terms: Vec<Vec<(Vec<u32>, f64)>> = match system {
        "vdp" => {
            // x1' = -x2; x2' = x1 - x2 + x1^2 x2
            vec![
                vec![(vec![0, 1], -1.0)],
                vec![(vec![1, 0], 1.0), (vec![0, 1], -1.0), (vec![2, 1], 1.0)],
            ]
        }
        "lorenz63_scaled" => {
            let g = |k: &str, dflt: f64| params.get(k).copied().unwrap_or(dflt);
            let sigma = g("sigma", 10.0);
            let gamma = g("gamma", 0.28);
            let beta = g("beta", 8.0 / 3.0);
            let eps = g("epsilon", 0.1);
            vec![
                vec![(vec![0, 1, 0], sigma), (vec![1, 0, 0], -sigma * eps)],
                vec![
                    (vec![1, 0, 0], gamma),
                    (vec![1, 0, 1], -1.0),
                    (vec![0, 1, 0], -eps),
                ],
                vec![(vec![1, 1, 0], 1.0), (vec![0, 0, 1], -eps * beta)],
            ]
        }
        "lorenz96" => {
            let forcing = params.get("forcing").copied().unwrap_or(0.1);
            let mut all = Vec::with_capacity(d);
            for j in 0..d {
                let jm1 = (j + d - 1) % d;
                let jm2 = (j + d - 2) % d;
                let jp1 = (j + 1) % d;
                let mono = |axes: &[usize]| {
                    let mut e = vec![0u32; d];
                    for &a in axes {
                        e[a] += 1;
                    }
                    e
                };
                all.push(vec![
                    (mono(&[jm2, jm1]), -1.0),
                    (mono(&[jm1, jp1]), 1.0),
                    (mono(&[j]), -1.0),
                    (vec![0; d], forcing),
                ]);
            }
            all
        }
        "cubic1d" => vec![vec![(vec![3], -1.0)]],
        _ => return None,
    };
    if terms.len() != d {
        return None;
    }
    let n = dict.size();
    let mut theta = DenseMatrix::zeros(d, n);
    for (j, axis_terms) in terms.iter().enumerate() {
        for (e, c) in axis_terms {
            let idx = dict.monomial_index(e)?;
            theta[(j, idx)] = *c;
        }
    }
    Some(theta)
}
