//! Stochastic energetics of a quantum Brownian particle coupled to a
//! classical heat bath, cross-checked in three representations: a phase-space
//! (Wigner) PDE, Heisenberg-picture operator SDEs in a truncated oscillator
//! basis, and classical Langevin Monte Carlo.

pub mod crosscheck;
pub mod engine;
pub mod error;
pub mod heisenberg;
pub mod langevin;
pub mod linalg;
pub mod matrixqa;
pub mod model;
pub mod noise;
mod stats;
pub mod thermo;
pub mod wignerpde;

pub use error::{QseError, Result};
