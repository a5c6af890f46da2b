//! Simulation library for stochastic Allen-Cahn dynamics with a regularized
//! Flory-Huggins logarithmic potential.
//!
//! The pieces, bottom up:
//! - [`potential`]: the logarithmic double well, its smooth regularized family
//!   and the C² bound functionals.
//! - [`spectral`]: Laplacian-eigenbasis Galerkin machinery on 2-D tensor grids
//!   (Fourier for periodic, cosine for Neumann), transforms, projections and
//!   diagonal implicit solves.
//! - [`noise`]: Q-Wiener increments in the eigenbasis, common-path coarsening,
//!   and the additive / Nemytskii diffusion operators.
//! - [`solver`]: the stabilized semi-implicit stochastic stepper and a
//!   deterministic ETDRK2 comparator, with trajectory recording and blow-up
//!   signaling.
//! - [`diagnostics`]: energy, bound-violation observables and the averaged
//!   energy-evolution-law residual.
//! - [`harness`]: Monte Carlo ensembles with coupled Brownian paths, strong
//!   error / order estimation, parameter sweeps and the experiment CLI
//!   plumbing.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod noise;
pub mod potential;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
