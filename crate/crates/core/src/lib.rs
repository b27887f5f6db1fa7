//! Spectral deferred corrections with diagonal, node-parallel preconditioners.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod optimize;
pub mod precond;
pub mod problems;
pub mod quadrature;
pub mod sweeper;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use precond::{build, ButcherTableau, PrecondKind, Preconditioner};
pub use quadrature::{CollocationSystem, NodeFamily, NodeSet};
pub use problems::{Jacobian, Problem};
pub use sweeper::{integrate, step, Counters, SweepConfig, Trajectory};
