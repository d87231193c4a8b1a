//! Simulation and verification toolkit for jump diffusions on the cone of
//! symmetric positive definite matrices.
//!
//! The library is organized around one state space and three activities:
//!
//! * [`psd`] — symmetric-matrix algebra and cone primitives (spectral
//!   decompositions, matrix powers, determinant calculus, cone projection).
//! * [`model`] + [`jump`] — declarative SDE descriptions of the form
//!   `dX = F dB G + Gᵀ dBᵀ Fᵀ + H dt + K(X₋) dJ` with named presets
//!   (Wishart, GCIR/GARCH, OU-type) and a PSD-increasing jump driver.
//! * [`conditions`] — static and sampled checks of the sufficient
//!   boundary-non-attainment conditions for those models.
//! * [`sim`], [`verify`], [`mc`] — Euler–Maruyama path simulation with
//!   boundary policies, numerical verification of the log-determinant Itô
//!   decomposition along paths, and ensemble boundary-hitting experiments.
//!
//! Everything is deterministic given the seeds in play: noise comes from
//! counter-based streams ([`rng`]) so that results are bit-reproducible
//! across thread counts and boundary policies.

pub mod conditions;
pub mod error;
pub mod exec;
pub mod jump;
pub mod mc;
pub mod model;
pub mod psd;
pub mod rng;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
