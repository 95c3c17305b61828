//! Mixed P1 finite element solver for the Cahn-Hilliard equation.
//!
//! Time stepping uses a convex splitting of the double-well potential; each
//! step is solved by Newton's method, whose scaled Jacobian system is driven
//! by a MINRES iteration with a block-diagonal geometric multigrid
//! preconditioner. A dense spectral harness verifies the eigenvalue bounds
//! that make the preconditioner robust in the mesh size and time step.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod fem;
pub mod io;
pub mod jacobian;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod quadrature;
pub mod sparse;
pub mod spectrum;
pub mod stepper;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod test_oracle;
