//! Core algorithms for learned adaptive subsampling of a simulated
//! circular-array (intravascular) ultrasound probe.
//!
//! The acquisition of one frame is a set of `N = E * A` pulse-echo
//! measurements (element pairs). An actor-critic agent picks `K` of them per
//! frame via Gumbel top-K sampling; the frame is reconstructed from the
//! zero-filled channel data by delay-and-sum beamforming and scored against
//! the fully sampled reconstruction.
//!
//! Modules:
//! - [`sim`] — wire-target scenes and pulse-echo RF simulation
//! - [`mask`] — binary acquisition masks, element-pair indexing, random baseline
//! - [`beamform`] — delay-and-sum reconstruction, envelope, log compression
//! - [`gumbel`] — exact and relaxed Gumbel top-K with noise-scale annealing
//! - [`nn`] — small MLPs with reverse-mode gradients and an Adam optimizer
//! - [`quality`] — image metrics, rewards, pre-filters, discriminator
//! - [`agent`] — replay memory, critic regression, policy gradient, targets
//! - [`env`] — the episodic acquisition/reconstruction environment
//!
//! The crate is `no_std` (alloc only); file formats and the CLI live in the
//! companion `ivus-cli` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod beamform;
pub mod env;
mod error;
mod fft;
pub mod gumbel;
pub mod mask;
pub mod nn;
pub mod quality;
pub mod rng;
pub mod sim;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
