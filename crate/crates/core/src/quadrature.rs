//! Gauss-Legendre rules for the truncated Laplace integral, uniform-grid
//! fallbacks for externally sampled data, and quadrature error-bound
//! diagnostics.
//!
//! Nodes are computed by Newton iteration on the Legendre polynomials, so any
//! node count is supported without tables. Only half the roots are solved;
//! the rest are mirrored, which makes the rule exactly symmetric about T/2.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("values length {got} does not match rule node count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("invalid argument: {0}")]
    InvalidInput(String),
    #[error("internal consistency violation: {0}")]
    InternalConsistency(String),
}

/// A quadrature rule on `[0, T]` with positive weights summing to `T`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub t_end: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre polynomial value and derivative at `x` by the three-term
/// recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule with `gamma_count` nodes mapped from [-1,1] to [0,T].
pub fn gl_rule(t_end: f64, gamma_count: usize) -> QuadratureRule {
    assert!(gamma_count >= 1, "gl_rule requires at least one node");
    assert!(t_end > 0.0, "gl_rule requires T > 0");
    let n = gamma_count;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = t_end / 2.0;
    for k in 0..n / 2 {
        // root of P_n in descending order, Newton from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-14 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w_std = 2.0 / ((1.0 - x * x) * dp * dp);
        // x > 0 maps to the upper half of [0,T]; mirror for exact symmetry
        nodes[n - 1 - k] = half * (1.0 + x);
        nodes[k] = t_end - nodes[n - 1 - k];
        weights[k] = half * w_std;
        weights[n - 1 - k] = weights[k];
    }
    if n % 2 == 1 {
        let mid = n / 2;
        nodes[mid] = half;
        let (_, dp) = legendre_pair(n, 0.0);
        weights[mid] = half * 2.0 / (dp * dp);
    }
    QuadratureRule {
        t_end,
        nodes,
        weights,
    }
}

/// Weighted sum of integrand values at the rule nodes.
pub fn gl_integrate(
    rule: &QuadratureRule,
    values_at_nodes: &[f64],
) -> Result<f64, QuadratureError> {
    if values_at_nodes.len() != rule.nodes.len() {
        return Err(QuadratureError::LengthMismatch {
            expected: rule.nodes.len(),
            got: values_at_nodes.len(),
        });
    }
    Ok(rule
        .weights
        .iter()
        .zip(values_at_nodes)
        .map(|(w, v)| w * v)
        .sum())
}

/// How to integrate samples given on a uniform grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformMode {
    /// Monotone cubic interpolation through the samples, evaluated at the GL
    /// nodes of the same count, then Gauss-Legendre summation.
    InterpGl,
    /// Composite Simpson; odd interval counts get a trapezoid tail.
    Composite,
}

/// Integrates Γ+1 samples taken at `k T / Γ`, `k = 0..Γ`.
pub fn integrate_uniform(
    t_end: f64,
    samples: &[f64],
    mode: UniformMode,
) -> Result<f64, QuadratureError> {
    if samples.len() < 2 {
        return Err(QuadratureError::TooFewSamples(
            "need at least 2 uniform samples".into(),
        ));
    }
    let gamma = samples.len() - 1;
    let h = t_end / gamma as f64;
    match mode {
        UniformMode::Composite => {
            let mut total = 0.0;
            let even_end = if gamma.is_multiple_of(2) {
                gamma
            } else {
                gamma - 1
            };
            let mut k = 0;
            while k < even_end {
                total += h / 3.0 * (samples[k] + 4.0 * samples[k + 1] + samples[k + 2]);
                k += 2;
            }
            if gamma % 2 == 1 {
                total += h / 2.0 * (samples[gamma - 1] + samples[gamma]);
            }
            Ok(total)
        }
        UniformMode::InterpGl => {
            if gamma < 3 {
                return Err(QuadratureError::TooFewSamples(
                    "interp_gl needs at least 4 uniform samples".into(),
                ));
            }
            let times: Vec<f64> = (0..=gamma).map(|k| k as f64 * h).collect();
            let interp = Pchip::new(&times, samples);
            let rule = gl_rule(t_end, gamma);
            let values: Vec<f64> = rule.nodes.iter().map(|&t| interp.eval(t)).collect();
            gl_integrate(&rule, &values)
        }
    }
}

/// Monotone cubic Hermite interpolant with Fritsch-Carlson slopes.
pub(crate) struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub(crate) fn new(x: &[f64], y: &[f64]) -> Self {
        assert_eq!(x.len(), y.len());
        let n = x.len();
        assert!(n >= 2);
        let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= 0.0 {
                    d[i] = 0.0;
                } else {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        }
    }

    pub(crate) fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return self.y[i],
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

/// One-sided three-point slope estimate with the standard monotonicity clamps.
fn edge_slope(h0: f64, h1: f64, delta0: f64, delta1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * delta0 - h0 * delta1) / (h0 + h1);
    if d * delta0 <= 0.0 {
        0.0
    } else if delta0 * delta1 < 0.0 && d.abs() > 3.0 * delta0.abs() {
        3.0 * delta0
    } else {
        d
    }
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Gauss-Legendre coefficient `E(k) = (k!)^4 / ((2k+1) ((2k)!)^3)`.
pub fn gl_error_coefficient(k: usize) -> f64 {
    (4.0 * ln_factorial(k) - ((2 * k + 1) as f64).ln() - 3.0 * ln_factorial(2 * k)).exp()
}

/// Simplified coefficient bound `(1/(8k^2))^k`.
pub fn gl_error_coefficient_bound(k: usize) -> f64 {
    (1.0 / (8.0 * (k * k) as f64)).powi(k as i32)
}

/// Verifies `E(k) <= (1/(8k^2))^k` for `k = 1..=k_max` and returns the
/// `(k, E(k), bound)` triples. A violation would indicate an implementation
/// bug and is reported as an internal-consistency error.
pub fn gl_coefficient_bound_check(k_max: usize) -> Result<Vec<(usize, f64, f64)>, QuadratureError> {
    if k_max == 0 || k_max > 20 {
        return Err(QuadratureError::InvalidInput(format!(
            "k_max {k_max} must be in 1..=20"
        )));
    }
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let exact = gl_error_coefficient(k);
        let bound = gl_error_coefficient_bound(k);
        if exact > bound {
            return Err(QuadratureError::InternalConsistency(format!(
                "E({k}) = {exact:e} exceeds bound {bound:e}"
            )));
        }
        out.push((k, exact, bound));
    }
    Ok(out)
}

/// Quadrature error-bound diagnostic for monomial observables of total order
/// `order_n` under a field with Lipschitz estimate `l_f`:
///
/// `|x|^N T^(2Γ+1) ((mu + N L_f) / (8 Γ^2))^(2Γ)` when `mu >= N L_f`; for
/// smaller `mu` the decaying-exponential simplification is invalid and the
/// bound keeps the `sup_t e^((N L_f - mu) t)` factor. Diagnostic only, never
/// a correctness gate.
pub fn quad_error_bound(
    mu: f64,
    order_n: usize,
    l_f: f64,
    t_end: f64,
    gamma_count: usize,
    x_norm: f64,
) -> f64 {
    let n = order_n as f64;
    let g = gamma_count as f64;
    let core = x_norm.powf(n)
        * t_end.powi(2 * gamma_count as i32 + 1)
        * ((mu + n * l_f) / (8.0 * g * g)).powi(2 * gamma_count as i32);
    if mu >= n * l_f {
        core
    } else {
        core * ((n * l_f - mu) * t_end).exp()
    }
}

/// The unsimplified mathematical error bound
/// `T^(2Γ+1) E(Γ) sup_t |d^(2Γ)/dt^(2Γ) e^(-mu t) K_t h|`, with the
/// derivative bounded per the monomial estimate. Tighter than
/// [`quad_error_bound`] at small node counts; used by the diagnostics tests.
pub fn quad_error_bound_full(
    mu: f64,
    order_n: usize,
    l_f: f64,
    t_end: f64,
    gamma_count: usize,
    x_norm: f64,
) -> f64 {
    let n = order_n as f64;
    let sup_q = if mu >= n * l_f {
        1.0
    } else {
        ((n * l_f - mu) * t_end).exp()
    };
    x_norm.powf(n)
        * t_end.powi(2 * gamma_count as i32 + 1)
        * gl_error_coefficient(gamma_count)
        * (mu + n * l_f).powi(2 * gamma_count as i32)
        * sup_q
}
