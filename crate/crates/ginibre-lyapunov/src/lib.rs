//! Numerical toolkit for the singular values of products of complex Ginibre
//! matrices Π_M = X_M ⋯ X_1.
//!
//! * [`specfun`]: log Γ, ψ, ψ′, the root t₀ of ψ′(t₀) = γ, Jacobi ϑ, Airy Ai.
//! * [`contours`]: integration paths and adaptive Gauss–Kronrod quadrature.
//! * [`kernels`]: the finite-N kernel of log(Π*Π) and its limiting kernels.
//! * [`fredholm`]: Nyström evaluation of det(I − K) on (x, ∞).
//! * [`ensemble`]: Monte Carlo sampling with stable log singular values.
//! * [`cli`]: the command-line driver behind the `ginibre-lyapunov` binary.

pub mod cli;
pub mod contours;
pub mod ensemble;
pub mod error;
pub mod fredholm;
pub mod kernels;
pub mod specfun;

pub use error::{Error, Result};
