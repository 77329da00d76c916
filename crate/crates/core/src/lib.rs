//! Gradient descent on deep linear networks.
//!
//! The crate covers the scalar objective `f(w₁⋯w_k)` and the matrix objective
//! `½‖W₁⋯W_k − Y‖²_F`, the random initializations used with them, a
//! reproducible convergence-time harness, and numerical checks of the
//! inequalities that govern the dynamics.

pub mod config;
pub mod error;
pub mod experiments;
pub mod init;
pub mod io;
pub mod matrix;
pub mod plot;
pub mod rng;
pub mod scalar;
pub mod theory;
pub mod trajectory;

pub use error::{Error, Result};
