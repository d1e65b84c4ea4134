//! The resolvent-type method: learn the generator matrix of an unknown
//! system from trajectory snapshots.
//!
//! Pipeline, for a dictionary `Z` of N observables and M trajectories:
//!
//! 1. stack features `X[m, i] = z_i(x_m)`;
//! 2. evaluate the truncated Laplace integral
//!    `I[m, i] = quad of e^(-mu t) z_i(phi(t, x_m)) over [0, T]`;
//! 3. stack endpoint features `Phi_T[m, i] = z_i(phi(T, x_m))`;
//! 4. solve `Xi = pinv(X - e^(-mu T) Phi_T) I`, a fixed-point evaluation of
//!    the resolvent at `mu` that removes the horizon-truncation error;
//! 5. transfer to the large shift through the first resolvent identity:
//!    `Y_A = (lambda - mu) X Xi + X`, `Y_B = lambda mu X Xi - lambda X`;
//! 6. regress `A = lstsq(X, Y_A)`, `B = lstsq(X, Y_B)` and return
//!    `L = pinv(A) B` (or the Tikhonov-regularized solve when `delta > 0`).
//!
//! Only step 2 touches the quadrature mode: with `gl_nodes` the snapshots are
//! taken at the Gauss-Legendre abscissae; the uniform modes integrate the
//! weighted samples `e^(-mu k tau) Z(phi(k tau, x_m))` from the uniform grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SnapshotDataset;
use crate::dictionary::Dictionary;
use crate::linalg::{self, DenseMatrix, LinalgError, LstsqDiagnostics};
use crate::quadrature::{self, UniformMode};

#[derive(Debug, Error)]
pub enum RtmError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset does not match the configuration: {0}")]
    DataMismatch(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("quadrature: {0}")]
    Quadrature(#[from] quadrature::QuadratureError),
}

/// Where the Laplace integrand samples come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    /// Snapshots taken directly at the Gauss-Legendre nodes.
    #[default]
    GlNodes,
    /// Uniform-grid snapshots, monotone-cubic interpolated to the GL nodes.
    UniformInterp,
    /// Uniform-grid snapshots, composite Simpson.
    UniformComposite,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RtmConfig {
    /// Small resolvent shift; the integrand is `e^(-mu t)` weighted.
    pub mu: f64,
    /// Large Yosida shift, only entering algebraically.
    pub lambda: f64,
    /// Data-collection horizon T.
    pub horizon: f64,
    /// Snapshots per trajectory.
    pub gamma_count: usize,
    /// Tikhonov regularizer for the final solve; 0 disables it.
    pub delta: f64,
    pub quadrature_mode: QuadratureMode,
    /// Relative singular-value cutoff for the SVD solves.
    pub rcond: f64,
}

impl Default for RtmConfig {
    fn default() -> Self {
        Self {
            mu: 2.5,
            lambda: 1e8,
            horizon: 1.0,
            gamma_count: 50,
            delta: 0.0,
            quadrature_mode: QuadratureMode::GlNodes,
            rcond: linalg::DEFAULT_RCOND,
        }
    }
}

impl RtmConfig {
    // negated comparisons are deliberate: NaN parameters must fail validation
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<(), RtmError> {
        if !(self.mu > 0.0) {
            return Err(RtmError::InvalidConfig(format!(
                "mu {} must be > 0",
                self.mu
            )));
        }
        if !(self.lambda > self.mu) {
            return Err(RtmError::InvalidConfig(format!(
                "lambda {} must exceed mu {}",
                self.lambda, self.mu
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(RtmError::InvalidConfig("horizon must be positive".into()));
        }
        if self.gamma_count == 0 {
            return Err(RtmError::InvalidConfig("gamma_count must be >= 1".into()));
        }
        if self.delta < 0.0 {
            return Err(RtmError::InvalidConfig("delta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Feature stacks produced by [`assemble`].
#[derive(Clone, Debug)]
pub struct Assembled {
    /// `X`, M x N.
    pub features: DenseMatrix,
    /// `I_quad`, M x N: quadrature of the weighted Koopman flow.
    pub quad: DenseMatrix,
    /// `Phi_T`, M x N endpoint features.
    pub endpoint_features: DenseMatrix,
}

/// Everything the learner computed, retained for inspection.
#[derive(Clone, Debug)]
pub struct RtmIntermediates {
    pub assembled: Assembled,
    /// `Xi`, N x N resolvent weights.
    pub resolvent_weights: DenseMatrix,
    pub y_a: DenseMatrix,
    pub y_b: DenseMatrix,
    pub a: DenseMatrix,
    pub b: DenseMatrix,
}

/// Conditioning report for the three SVD solves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionDiagnostics {
    /// Diagnostics of `X - e^(-mu T) Phi_T` (the resolvent solve).
    pub resolvent_matrix: LstsqDiagnostics,
    /// Diagnostics of `X` (the A/B regressions).
    pub features: LstsqDiagnostics,
    /// Diagnostics of `A` (the final solve).
    pub a_matrix: LstsqDiagnostics,
    pub warnings: Vec<String>,
}

/// Which algorithm produced a generator matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorMethod {
    Rtm,
    Fdm,
    Klm,
}

impl std::fmt::Display for GeneratorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeneratorMethod::Rtm => "RTM",
            GeneratorMethod::Fdm => "FDM",
            GeneratorMethod::Klm => "KLM",
        })
    }
}

/// A learned generator matrix `L` acting on dictionary coefficients:
/// `(L h_theta)(x) ~ Z(x)^T (L theta)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnedGenerator {
    pub matrix: DenseMatrix,
    pub method: GeneratorMethod,
    /// Max-abs imaginary residual (KLM only; exactly 0 for RTM/FDM).
    pub imag_norm: f64,
    pub dictionary: Dictionary,
    pub provenance: Provenance,
}

/// Full configuration record carried by every learned model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub system: String,
    pub m: usize,
    pub config: RtmConfig,
    pub seed: Option<u64>,
    pub diagnostics: Option<ConditionDiagnostics>,
}

impl LearnedGenerator {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Output of [`learn`]: the generator plus all intermediates.
#[derive(Clone, Debug)]
pub struct LearnOutput {
    pub generator: LearnedGenerator,
    pub intermediates: RtmIntermediates,
    pub diagnostics: ConditionDiagnostics,
}

/// Algorithm steps 1-4: feature, quadrature, and endpoint stacks.
pub fn assemble(
    dataset: &SnapshotDataset,
    dict: &Dictionary,
    cfg: &RtmConfig,
) -> Result<Assembled, RtmError> {
    cfg.validate()?;
    if dataset.m() == 0 {
        return Err(RtmError::DegenerateData("no trajectories".into()));
    }
    if (dataset.horizon - cfg.horizon).abs() > 1e-12 * cfg.horizon.max(1.0) {
        return Err(RtmError::DataMismatch(format!(
            "dataset horizon {} != config horizon {}",
            dataset.horizon, cfg.horizon
        )));
    }
    if dataset.gamma_count != cfg.gamma_count {
        return Err(RtmError::DataMismatch(format!(
            "dataset gamma count {} != config {}",
            dataset.gamma_count, cfg.gamma_count
        )));
    }
    if dict.dim() != dataset.dim {
        return Err(RtmError::DataMismatch(format!(
            "dictionary dimension {} != dataset dimension {}",
            dict.dim(),
            dataset.dim
        )));
    }
    let n = dict.size();
    let m = dataset.m();
    let features = dict.evaluate_batch(&dataset.initial_states());
    let endpoint_features = dict.evaluate_batch(&dataset.endpoint_states());

    let mut quad = DenseMatrix::zeros(m, n);
    match cfg.quadrature_mode {
        QuadratureMode::GlNodes => {
            let weights = gl_weights(dataset);
            for (mi, traj) in dataset.trajectories.iter().enumerate() {
                let gl = traj.gl_states.as_ref().ok_or_else(|| {
                    RtmError::DataMismatch(
                        "gl_nodes quadrature requested but the dataset only carries uniform-grid snapshots".into(),
                    )
                })?;
                let z = dict.evaluate_batch(gl);
                let row = quad.row_mut(mi);
                for (k, (&t, &w)) in dataset.gl_times.iter().zip(&weights).enumerate() {
                    let damp = w * (-cfg.mu * t).exp();
                    let zrow = z.row(k);
                    for i in 0..n {
                        row[i] += damp * zrow[i];
                    }
                }
            }
        }
        QuadratureMode::UniformInterp | QuadratureMode::UniformComposite => {
            let mode = if cfg.quadrature_mode == QuadratureMode::UniformInterp {
                UniformMode::InterpGl
            } else {
                UniformMode::Composite
            };
            let damps: Vec<f64> = dataset
                .uniform_times
                .iter()
                .map(|&t| (-cfg.mu * t).exp())
                .collect();
            for (mi, traj) in dataset.trajectories.iter().enumerate() {
                let z = dict.evaluate_batch(&traj.uniform_states);
                let mut samples = vec![0.0; dataset.uniform_times.len()];
                for i in 0..n {
                    for (k, s) in samples.iter_mut().enumerate() {
                        *s = damps[k] * z[(k, i)];
                    }
                    quad[(mi, i)] = quadrature::integrate_uniform(cfg.horizon, &samples, mode)?;
                }
            }
        }
    }
    Ok(Assembled {
        features,
        quad,
        endpoint_features,
    })
}

fn gl_weights(dataset: &SnapshotDataset) -> Vec<f64> {
    quadrature::gl_rule(dataset.horizon, dataset.gamma_count).weights
}

/// Algorithm step 5: `Xi = pinv(X - e^(-mu T) Phi_T) I_quad`.
pub fn solve_resolvent_weights(
    assembled: &Assembled,
    cfg: &RtmConfig,
) -> Result<(DenseMatrix, LstsqDiagnostics), RtmError> {
    let damp = (-cfg.mu * cfg.horizon).exp();
    let lhs = assembled
        .features
        .sub(&assembled.endpoint_features.scale(damp));
    let (xi, diag) = linalg::lstsq(&lhs, &assembled.quad, cfg.rcond)?;
    if diag.rank == 0 {
        return Err(RtmError::DegenerateData(
            "resolvent matrix X - e^(-mu T) Phi_T has no numerically detectable rank".into(),
        ));
    }
    Ok((xi, diag))
}

/// Threshold on cond(A) above which a warning is recorded.
pub const CONDITION_WARN_THRESHOLD: f64 = 1e10;

/// Full Algorithm: learns the generator matrix from a snapshot dataset.
pub fn learn(
    dataset: &SnapshotDataset,
    dict: &Dictionary,
    cfg: &RtmConfig,
) -> Result<LearnOutput, RtmError> {
    let assembled = assemble(dataset, dict, cfg)?;
    let (xi, resolvent_diag) = solve_resolvent_weights(&assembled, cfg)?;

    let x = &assembled.features;
    let x_xi = x.matmul(&xi);
    let y_a = x_xi.scale(cfg.lambda - cfg.mu).add(x);
    let y_b = x_xi.scale(cfg.lambda * cfg.mu).sub(&x.scale(cfg.lambda));

    let (a, features_diag) = linalg::lstsq(x, &y_a, cfg.rcond)?;
    let (b, _) = linalg::lstsq(x, &y_b, cfg.rcond)?;

    let (l, a_diag) = if cfg.delta == 0.0 {
        linalg::lstsq(&a, &b, cfg.rcond)?
    } else {
        let (_, diag) = linalg::lstsq(&a, &b, cfg.rcond)?;
        let l = linalg::tikhonov_pinv(&a, cfg.delta)?.matmul(&b);
        (l, diag)
    };

    let mut warnings = Vec::new();
    if a_diag.cond > CONDITION_WARN_THRESHOLD {
        warnings.push(format!(
            "cond(A) = {:.3e} exceeds {CONDITION_WARN_THRESHOLD:e}",
            a_diag.cond
        ));
    }
    if resolvent_diag.cond > CONDITION_WARN_THRESHOLD {
        warnings.push(format!(
            "cond(X - e^(-mu T) Phi_T) = {:.3e} exceeds {CONDITION_WARN_THRESHOLD:e}",
            resolvent_diag.cond
        ));
    }
    let diagnostics = ConditionDiagnostics {
        resolvent_matrix: resolvent_diag,
        features: features_diag,
        a_matrix: a_diag,
        warnings,
    };
    let generator = LearnedGenerator {
        matrix: l,
        method: GeneratorMethod::Rtm,
        imag_norm: 0.0,
        dictionary: dict.clone(),
        provenance: Provenance {
            system: dataset.system.clone(),
            m: dataset.m(),
            config: cfg.clone(),
            seed: None,
            diagnostics: Some(diagnostics.clone()),
        },
    };
    Ok(LearnOutput {
        generator,
        intermediates: RtmIntermediates {
            assembled,
            resolvent_weights: xi,
            y_a,
            y_b,
            a,
            b,
        },
        diagnostics,
    })
}

/// Horizon-truncation error bound `C lambda^2 e^(-lambda T) / (lambda - omega)`
/// of the raw (unmodified) truncated Yosida approximation. Diagnostic only;
/// `omega` and `C` are user-supplied growth estimates.
pub fn truncation_bound(lambda: f64, t_end: f64, omega: f64, c: f64) -> Result<f64, RtmError> {
    if lambda <= omega {
        return Err(RtmError::InvalidConfig(format!(
            "lambda {lambda} must exceed omega {omega}"
        )));
    }
    Ok(c * lambda * lambda * (-lambda * t_end).exp() / (lambda - omega))
}
