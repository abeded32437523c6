//! Heat kernels of the fractional Laplacian perturbed by a gradient drift.
//!
//! The crate evaluates and samples the free symmetric α-stable law
//! ([`stable`]), measures drift fields ([`kato`]), builds the drifted free
//! kernel from its perturbation series ([`duhamel`]), describes bounded
//! domains and the comparison templates used for killed kernels
//! ([`geometry`]), simulates the drifted and killed process ([`mc`]) and runs
//! the property suites that check the two-sided estimates ([`verify`]).

pub mod drift;
pub mod duhamel;
pub mod error;
pub mod geometry;
pub mod kato;
pub mod mc;
pub mod rng;
pub mod special;
pub mod stable;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use stable::{JumpKernel, StableLaw};
