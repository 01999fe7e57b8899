//! Physics core for high-photon-number dispersive readout of a fluxonium
//! atom coupled inductively to a readout resonator.
//!
//! The crate is `no_std` (with `alloc`). Enable the `std` feature for the
//! faster eigensolver kernels and `std::error::Error` impls; IO, config and
//! parallel fan-out live in the `qndsim` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod circuit;
pub mod constants;
pub mod displacement;
pub mod dressed;
pub mod eigen;
mod error;
pub mod feedback;
pub mod jumps;
pub mod mixture;
pub mod readout;
pub mod spectro;
pub mod stats;

pub use circuit::{
    Basis, CircuitParams, CoupledHamiltonian, EffectiveJunction, FluxBias, FluxLine,
    HermitianMatrix, HilbertTruncation,
};
pub use dressed::{AtomLevel, DressedLevel, DressedSpectrum, Label, Retention};
pub use error::{Error, Result};
