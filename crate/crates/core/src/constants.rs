//! SI constants (exact 2019 SI definitions) and unit conversions.
//!
//! Internally energies are frequencies `E/h` in GHz, times are in ns and
//! fluxes are in units of the flux quantum.

use core::f64::consts::PI;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Superconducting flux quantum `h / 2e` in Wb.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

pub const NANO_HENRY: f64 = 1e-9;
pub const FEMTO_FARAD: f64 = 1e-15;
pub const GHZ: f64 = 1e9;

/// Critical photon number quoted for the device. Documentation only: no
/// formula is available for it and nothing in the crate computes it.
pub const N_CRIT_QUOTED: f64 = 8.0e3;

/// Readout linewidth `kappa / 2pi` of the device, MHz.
pub const KAPPA_MHZ: f64 = 1.16;

/// FPGA feedback latency of the device, ns.
pub const FEEDBACK_LATENCY_NS: f64 = 428.0;
