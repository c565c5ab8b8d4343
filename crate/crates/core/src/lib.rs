//! Adiabatic transition amplitudes for two-level systems.
//!
//! The crate computes the probability that a spin in a slowly varying field
//! ends up in the other level, two ways: by integrating the amplitude
//! equations directly ([`oracle`]) and from the complex turning points of the
//! adiabatic energy gap ([`stokes`], [`contours`], [`amplitudes`]).

pub mod amplitudes;
pub mod contours;
pub mod exprlang;
pub mod field;
pub mod jet;
pub mod oracle;
pub mod potential;
pub mod quad;
pub mod roots;
pub mod stokes;
pub mod transition;
