//! Simulation and analysis of higher-order photon correlations of faint
//! quantum light.
//!
//! The crate is organized around [`fock::PhotonStatistics`], a truncated
//! photon-number distribution with an explicit tail-mass bound. States from
//! the catalog in [`fock`] feed three measurement routes:
//!
//! - [`detection`]: Hanbury Brown-Twiss and multiplexed click-detector
//!   networks, coincidence estimators and click-statistics deconvolution;
//! - [`tes`]: the trace-area analysis chain for photon-number-resolving
//!   transition-edge sensors;
//! - [`homodyne`]: phase-randomized quadrature sampling and the inversion of
//!   phase-averaged quadrature moments into factorial moments.
//!
//! On top of those, [`moments`] computes normalized factorial moments and
//! nonclassicality criteria, [`pdc`] covers twin-beam joint moments and
//! heralding, and [`phasespace`] reconstructs Wigner, Husimi Q and
//! characteristic functions from displaced-state moments.
//!
//! Every stochastic operation takes an explicit seed and is deterministic for
//! a fixed (seed, worker-count) pair; see [`seeding`].

pub mod detection;
mod error;
pub mod experiment;
pub mod fock;
pub mod homodyne;
pub mod moments;
pub mod pdc;
pub mod phasespace;
pub mod seeding;
pub mod tes;
pub mod verify;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
