//! Executable field-space calculus.
//!
//! Plots of smooth, super and thickened field spaces are represented as
//! parity-preserving homomorphisms into algebras
//! `C∞(ℝ^k) ⊗ Λ[θ_1..θ_q] ⊗ ℝ[ε_1..ε_m]/(ε)^{r+1}`. On top of that value
//! type sit jet prolongation and the Euler–Lagrange operator, differential
//! forms with super coefficients, the fermionic odd-order analysis,
//! dual-number calculus and truncated simplicial gauge groupoids.

pub mod checks;
pub mod fermion;
pub mod forms;
pub mod infinitesimal;
pub mod jet;
pub mod probes;
pub mod random;
pub mod scalar;
pub mod simplicial;
pub mod superalgebra;

pub use scalar::{rat, Rational, Scalar};
pub use superalgebra::{Ambient, AlgebraError, Parity, SuperPoly};
