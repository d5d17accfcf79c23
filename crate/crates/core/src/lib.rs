//! Numerical laboratory for the one-dimensional periodic Euler alignment
//! system with mildly singular interaction kernels.
//!
//! The solver evolves the conservative density/G formulation on the 2π-torus
//! with a pseudo-spectral method of lines, and [`diagnostics`] measures the
//! bounds, maximum principles and moduli of continuity that the regularity
//! theory predicts.

pub mod convergence;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod io;
pub mod kernels;
pub mod operator;
pub mod quadrature;

pub use error::{Error, Result};
pub use field::{Grid, TorusField};
pub use kernels::{Kernel, KernelFamily, KernelSpec};
pub use operator::SpectralSymbol;
