//! Trajectory snapshot collection: M trajectories sampled over `[0, T]` with
//! states at the Gauss-Legendre quadrature nodes (for the resolvent
//! integral), at the uniform grid `k T / Γ` (for the baselines and SINDy),
//! and at the endpoint `T`.
//!
//! States are raw; dictionary features are evaluated downstream, so one
//! dataset serves every method and every `mu` in a sweep.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::quadrature::gl_rule;
use crate::systems::{
    integrate, sample_initial_conditions, DomainExit, IntegratorOptions, SystemSpec, SystemsError,
    Trajectory,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("trajectory {index}: {source}")]
    Integration { index: usize, source: SystemsError },
    #[error("invalid argument: {0}")]
    InvalidInput(String),
}

/// Snapshots of one trajectory.
#[derive(Clone, Debug)]
pub struct SnapshotTrajectory {
    pub initial: Vec<f64>,
    /// States at the GL nodes, `Γ x d`; absent for externally supplied
    /// uniform-grid data.
    pub gl_states: Option<DenseMatrix>,
    /// States at `k T / Γ` for `k = 0..=Γ`, `(Γ+1) x d`.
    pub uniform_states: DenseMatrix,
    pub domain_exit: Option<DomainExit>,
}

impl SnapshotTrajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.uniform_states.row(self.uniform_states.rows() - 1)
    }
}

/// M trajectories sampled on `[0, T]` at frequency `Γ / T`.
#[derive(Clone, Debug)]
pub struct SnapshotDataset {
    pub system: String,
    pub dim: usize,
    pub horizon: f64,
    pub gamma_count: usize,
    pub gl_times: Vec<f64>,
    pub uniform_times: Vec<f64>,
    pub trajectories: Vec<SnapshotTrajectory>,
}

impl SnapshotDataset {
    pub fn m(&self) -> usize {
        self.trajectories.len()
    }

    /// Sampling period `τ = T / Γ`.
    pub fn tau(&self) -> f64 {
        self.horizon / self.gamma_count as f64
    }

    pub fn initial_states(&self) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = self
            .trajectories
            .iter()
            .map(|t| t.initial.clone())
            .collect();
        DenseMatrix::from_rows(&rows)
    }

    pub fn endpoint_states(&self) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = self
            .trajectories
            .iter()
            .map(|t| t.endpoint().to_vec())
            .collect();
        DenseMatrix::from_rows(&rows)
    }

    /// States after the first sampling period `τ`.
    pub fn tau_states(&self) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = self
            .trajectories
            .iter()
            .map(|t| t.uniform_states.row(1).to_vec())
            .collect();
        DenseMatrix::from_rows(&rows)
    }

    pub fn domain_exit_count(&self) -> usize {
        self.trajectories
            .iter()
            .filter(|t| t.domain_exit.is_some())
            .count()
    }

    /// Generates a dataset by sampling `m` initial conditions uniformly from
    /// the system domain (seeded) and integrating each trajectory with dense
    /// output at the merged GL + uniform time grid. Trajectories are
    /// integrated in parallel; the result is ordered and deterministic.
    pub fn generate(
        spec: &SystemSpec,
        m: usize,
        horizon: f64,
        gamma_count: usize,
        seed: u64,
        opts: &IntegratorOptions,
    ) -> Result<Self, DatasetError> {
        if m == 0 {
            return Err(DatasetError::Empty);
        }
        if horizon <= 0.0 || gamma_count == 0 {
            return Err(DatasetError::InvalidInput(format!(
                "horizon {horizon} and gamma count {gamma_count} must be positive"
            )));
        }
        let initials = sample_initial_conditions(&spec.domain, m, seed);
        Self::from_initials(spec, &initials, horizon, gamma_count, opts)
    }

    /// Same as [`SnapshotDataset::generate`] but with caller-supplied initial
    /// conditions.
    pub fn from_initials(
        spec: &SystemSpec,
        initials: &[Vec<f64>],
        horizon: f64,
        gamma_count: usize,
        opts: &IntegratorOptions,
    ) -> Result<Self, DatasetError> {
        let rule = gl_rule(horizon, gamma_count);
        let uniform_times: Vec<f64> = (0..=gamma_count)
            .map(|k| k as f64 * horizon / gamma_count as f64)
            .collect();
        let request = merge_times(&rule.nodes, &uniform_times);

        let results: Vec<Result<SnapshotTrajectory, SystemsError>> = initials
            .par_iter()
            .map(|x0| {
                let traj = integrate(spec, x0, &request, opts)?;
                Ok(split_trajectory(&traj, &rule.nodes, &uniform_times))
            })
            .collect();
        let mut trajectories = Vec::with_capacity(initials.len());
        for (index, r) in results.into_iter().enumerate() {
            trajectories.push(r.map_err(|source| DatasetError::Integration { index, source })?);
        }
        Ok(Self {
            system: spec.name.clone(),
            dim: spec.dim,
            horizon,
            gamma_count,
            gl_times: rule.nodes,
            uniform_times,
            trajectories,
        })
    }

    /// Builds a dataset from a closed-form flow map `phi(t, x0)`; used for
    /// exact-data oracles in tests and for externally defined flows.
    pub fn from_flow_map(
        system: &str,
        initials: &[Vec<f64>],
        horizon: f64,
        gamma_count: usize,
        phi: impl Fn(f64, &[f64]) -> Vec<f64> + Sync,
    ) -> Self {
        let rule = gl_rule(horizon, gamma_count);
        let uniform_times: Vec<f64> = (0..=gamma_count)
            .map(|k| k as f64 * horizon / gamma_count as f64)
            .collect();
        let dim = initials.first().map_or(0, |x| x.len());
        let trajectories: Vec<SnapshotTrajectory> = initials
            .par_iter()
            .map(|x0| {
                let gl_rows: Vec<Vec<f64>> = rule.nodes.iter().map(|&t| phi(t, x0)).collect();
                let uni_rows: Vec<Vec<f64>> = uniform_times.iter().map(|&t| phi(t, x0)).collect();
                SnapshotTrajectory {
                    initial: x0.clone(),
                    gl_states: Some(DenseMatrix::from_rows(&gl_rows)),
                    uniform_states: DenseMatrix::from_rows(&uni_rows),
                    domain_exit: None,
                }
            })
            .collect();
        Self {
            system: system.to_string(),
            dim,
            horizon,
            gamma_count,
            gl_times: rule.nodes,
            uniform_times,
            trajectories,
        }
    }

    /// Builds a dataset from uniform-grid trajectories only (e.g. imported
    /// CSV data). GL-node states are unavailable, so only the uniform
    /// quadrature modes apply.
    pub fn from_uniform_trajectories(
        system: &str,
        trajectories: &[Trajectory],
        horizon: f64,
        gamma_count: usize,
    ) -> Result<Self, DatasetError> {
        if trajectories.is_empty() {
            return Err(DatasetError::Empty);
        }
        let uniform_times: Vec<f64> = (0..=gamma_count)
            .map(|k| k as f64 * horizon / gamma_count as f64)
            .collect();
        let mut out = Vec::with_capacity(trajectories.len());
        for (i, traj) in trajectories.iter().enumerate() {
            if traj.times.len() != uniform_times.len() {
                return Err(DatasetError::InvalidInput(format!(
                    "trajectory {i} has {} samples, expected {}",
                    traj.times.len(),
                    uniform_times.len()
                )));
            }
            for (a, b) in traj.times.iter().zip(&uniform_times) {
                if (a - b).abs() > 1e-9 * horizon.max(1.0) {
                    return Err(DatasetError::InvalidInput(format!(
                        "trajectory {i} is not sampled on the uniform grid (got t={a}, want {b})"
                    )));
                }
            }
            out.push(SnapshotTrajectory {
                initial: traj.initial.clone(),
                gl_states: None,
                uniform_states: traj.states.clone(),
                domain_exit: traj.domain_exit.clone(),
            });
        }
        Ok(Self {
            system: system.to_string(),
            dim: out[0].initial.len(),
            horizon,
            gamma_count,
            gl_times: gl_rule(horizon, gamma_count).nodes,
            uniform_times,
            trajectories: out,
        })
    }

    /// Trailing fraction of the trajectories, used as the SRTM validation
    /// slice.
    pub fn tail_slice(&self, fraction: f64) -> SnapshotDataset {
        let m = self.m();
        let keep = ((m as f64 * fraction).round() as usize).clamp(1, m);
        let start = m - keep;
        SnapshotDataset {
            system: self.system.clone(),
            dim: self.dim,
            horizon: self.horizon,
            gamma_count: self.gamma_count,
            gl_times: self.gl_times.clone(),
            uniform_times: self.uniform_times.clone(),
            trajectories: self.trajectories[start..].to_vec(),
        }
    }

    /// All uniform-grid states of all trajectories stacked, `M (Γ+1) x d`.
    pub fn stacked_uniform_states(&self) -> DenseMatrix {
        let per = self.gamma_count + 1;
        let mut out = DenseMatrix::zeros(self.m() * per, self.dim);
        for (m, traj) in self.trajectories.iter().enumerate() {
            for k in 0..per {
                out.row_mut(m * per + k)
                    .copy_from_slice(traj.uniform_states.row(k));
            }
        }
        out
    }
}

fn merge_times(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    // drop an exact leading zero only if absent; integrate() handles t=0
    all
}

fn split_trajectory(
    traj: &Trajectory,
    gl_times: &[f64],
    uniform_times: &[f64],
) -> SnapshotTrajectory {
    let find = |t: f64| -> usize {
        traj.times
            .binary_search_by(|v| v.total_cmp(&t))
            .unwrap_or_else(|i| {
                // nearest of the dedup-merged grid
                if i == 0 {
                    0
                } else if i >= traj.times.len() {
                    traj.times.len() - 1
                } else if (traj.times[i] - t).abs() < (traj.times[i - 1] - t).abs() {
                    i
                } else {
                    i - 1
                }
            })
    };
    let d = traj.states.cols();
    let mut gl = DenseMatrix::zeros(gl_times.len(), d);
    for (k, &t) in gl_times.iter().enumerate() {
        gl.row_mut(k).copy_from_slice(traj.states.row(find(t)));
    }
    let mut uni = DenseMatrix::zeros(uniform_times.len(), d);
    for (k, &t) in uniform_times.iter().enumerate() {
        uni.row_mut(k).copy_from_slice(traj.states.row(find(t)));
    }
    SnapshotTrajectory {
        initial: traj.initial.clone(),
        gl_states: Some(gl),
        uniform_states: uni,
        domain_exit: traj.domain_exit.clone(),
    }
}
