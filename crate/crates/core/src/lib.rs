//! Asymptotic profiles and long-range scattering diagnostics for the 3D
//! Wave–Schrödinger system
//!
//! ```text
//! i ∂_t u = -½ Δu + A u,      □A = -|u|²
//! ```
//!
//! The crate builds the explicit asymptotic pair `(u_a, A_a)` from scattering
//! data `(w_+, A_+, Ȧ_+)`, evaluates the remainders it leaves in the equations,
//! integrates the full system backward from large times with a pseudospectral
//! split-step scheme, and fits the decay rates of everything it measures.

pub mod diagnostics;
pub mod error;
pub mod profiles;
pub mod quadrature;
pub mod remainders;
pub mod scenario;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
