//! Spectral data and inverse reconstruction for matrix Sturm-Liouville
//! operators
//!
//! ```text
//! -(Y^[1])' - sigma Y^[1] - sigma^2 Y = lambda Y,   Y^[1] = Y' - sigma Y,   x in (0, pi)
//! T1 Y^[1](0) - T1perp Y(0) = 0
//! T2 (Y^[1](pi) - H2 Y(pi)) - T2perp Y(pi) = 0
//! ```
//!
//! with a Hermitian matrix potential `sigma` and orthogonal projectors `T1`, `T2`.

pub mod checks;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod model;
pub mod problem;
pub mod spectral;

pub use error::{Result, SlqError};
pub use linalg::CMat;
pub use problem::{ProblemSpec, Sigma, SpectralIndex, ValidatedProblem};
pub use spectral::{SpectralDataSet, SpectralEntry};
