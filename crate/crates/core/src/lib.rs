//! Entanglement in translation-invariant pure finitely correlated states
//! (matrix product states).
//!
//! The crate builds a state from its defining isometry, derives the transfer
//! operator, its fixed point and the reduced density matrices of finite
//! intervals, and measures how the entanglement of a single spin with its
//! neighbours approaches the spin-versus-memory value.

pub mod bounds;
pub mod cli;
pub mod entanglement;
pub mod error;
pub mod fcs;
pub mod linalg;
pub mod models;

pub use error::{Error, Result};
