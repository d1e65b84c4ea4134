//! Data-driven learning of Koopman generators for continuous-time dynamical
//! systems from discrete trajectory snapshots.
//!
//! The centrepiece is the resolvent-type method (RTM): instead of estimating
//! time derivatives (finite differences) or taking an operator logarithm, it
//! evaluates the resolvent of the generator at a small shift `mu` by a
//! Laplace-type quadrature along trajectories, then transfers to a Yosida
//! approximation at a large shift `lambda` through the first resolvent
//! identity. The learned generator matrix acts on a dictionary of observables
//! and supports downstream system identification, trajectory prediction, and
//! region-of-attraction estimation via the Zubov equation.
//!
//! Modules:
//! - [`linalg`]: dense kernels (pseudoinverse, Tikhonov, complex eig, log/exp)
//! - [`systems`]: benchmark vector fields and an adaptive RK45 integrator
//! - [`dictionary`]: monomial and random-tanh observable dictionaries
//! - [`quadrature`]: Gauss-Legendre rules, uniform-grid fallbacks, error bounds
//! - [`dataset`]: trajectory snapshot collection
//! - [`rtm`]: the resolvent-type learning algorithm
//! - [`baselines`]: EDMD, finite-difference, Koopman-logarithm, SINDy
//! - [`sysid`]: vector-field recovery, flow prediction, RMSE metrics, SRTM
//! - [`zubov`]: Zubov-equation solve and region-of-attraction extraction
//! - [`bench`]: reproducible benchmark/sweep/zubov harness used by the CLI

pub mod baselines;
pub mod bench;
pub mod dataset;
pub mod dictionary;
pub mod linalg;
pub mod quadrature;
pub mod rtm;
pub mod sysid;
pub mod systems;
pub mod zubov;

pub use linalg::DenseMatrix;
