//! Simulation-free metastability analysis for Langevin dynamics on the torus.
//!
//! The spatial transfer operator of Langevin dynamics is approximated from its
//! second pseudo generator `G2 = (1/beta) Laplacian - grad V . grad`, discretized
//! by Fourier collocation, either by the Taylor form `R^t` or the exponential
//! form `E^t = exp(t^2/2 G2)`. A Monte-Carlo Ulam discretization of the exact
//! operator serves as the trajectory-based reference.

pub mod collocation;
pub mod error;
pub mod experiment;
pub mod expm;
pub mod io;
pub mod layout;
pub mod metastability;
pub mod potential;
pub mod sim;
pub mod spectrum;
pub mod streams;
pub mod ulam;

pub use error::{Error, Result};
