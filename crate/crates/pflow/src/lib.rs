//! Power-flow toolkit built around the continuous Newton flow.
//!
//! The AC power-flow equations `g(y) = 0` are solved by integrating the
//! Newton flow `g_y * y' = -g(y)` to steady state with explicit,
//! implicit, and quantized-state-controlled discretizations. The crate
//! provides:
//!
//! - [`casefile`]: MATPOWER-style case parsing and result tables;
//! - [`network`]: admittance assembly, residual, analytic sparse Jacobian
//!   and state mapping;
//! - [`linalg`]: sparse LU with partial pivoting plus a condition
//!   estimator;
//! - [`solvers`]: the seven solver configurations (fem, fdpf, rk4,
//!   bem-j1, bem-j, bem-j1-qss, bem-j-qss) with full iteration traces;
//! - [`analysis`]: closed-form convergence regions of the discretization
//!   pencils in the z- and s-domains;
//! - [`harness`]: solver comparison and the scaled-initial-angle
//!   robustness sweep.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (f32 or f64);
//! the `*64` aliases below pin the double-precision variants most callers
//! want.

pub mod analysis;
pub mod casefile;
pub mod cases;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod scalar;
pub mod solvers;

pub use scalar::Scalar;

/// Double-precision aliases for the main types.
pub type NetworkCase64 = casefile::NetworkCase<f64>;
pub type Network64 = network::Network<f64>;
pub type StateVector64 = network::StateVector<f64>;
pub type SparseMatrix64 = linalg::SparseMatrix<f64>;
pub type Factorization64 = linalg::Factorization<f64>;
pub type SolverConfig64 = solvers::SolverConfig<f64>;
pub type SolverReport64 = solvers::SolverReport<f64>;
pub type PencilSpec64 = analysis::PencilSpec<f64>;
