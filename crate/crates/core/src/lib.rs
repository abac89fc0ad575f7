//! Rotation-number spectral methods for selfadjoint block tridiagonal
//! ("block Jacobi") matrices: matrix Pruefer phases, eigenvalue counting and
//! localization, Riccati/Green's-function machinery, and disorder-averaged
//! density of states and Lyapunov estimators for random families.

pub mod error;
pub mod jacobi;
pub mod matrices;
pub mod rotation;
pub mod sampling;
pub mod symplectic;

pub use error::{Error, Result};
pub use jacobi::JacobiModel;
pub use matrices::{C64, CMatrix, RMatrix};
pub use symplectic::{CanonicalForms, FieldTag, LagrangianFrame};
