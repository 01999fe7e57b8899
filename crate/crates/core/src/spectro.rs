//! Observables derived from dressed spectra: transition frequencies,
//! dispersive shift, AC-Stark shift, inherited Kerr and matrix elements.

use alloc::vec::Vec;

use crate::circuit::NodeOperator;
use crate::dressed::{AtomLevel, DressedSpectrum, Label};
use crate::{Error, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

const GHZ_TO_MHZ: f64 = 1e3;
const GHZ_TO_HZ: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionCurve {
    pub flux_grid: Vec<f64>,
    pub f_ge: Vec<f64>,
    pub f_gf: Vec<f64>,
}

/// `(f_ge, f_gf)` in GHz from the zero-photon dressed levels.
pub fn transition_point(spec: &DressedSpectrum) -> Result<(f64, f64)> {
    let g = spec.energy(AtomLevel::G.label(0))?;
    let e = spec.energy(AtomLevel::E.label(0))?;
    let f = spec.energy(AtomLevel::F.label(0))?;
    Ok((e - g, f - g))
}

pub fn transition_frequencies(
    flux_grid: &[f64],
    spectra: &[DressedSpectrum],
) -> Result<TransitionCurve> {
    if flux_grid.len() != spectra.len() {
        return Err(Error::invalid("flux grid and spectra differ in length"));
    }
    let mut f_ge = Vec::with_capacity(spectra.len());
    let mut f_gf = Vec::with_capacity(spectra.len());
    for s in spectra {
        let (ge, gf) = transition_point(s)?;
        f_ge.push(ge);
        f_gf.push(gf);
    }
    Ok(TransitionCurve {
        flux_grid: flux_grid.to_vec(),
        f_ge,
        f_gf,
    })
}

fn check_edge(spec: &DressedSpectrum, levels: &[usize], top: usize) -> Result<()> {
    let max = spec.retained_photon_range(levels);
    if top >= max {
        return Err(Error::TruncationEdge {
            n: top,
            max: max.saturating_sub(1),
        });
    }
    Ok(())
}

/// Photon-ladder spacing `E(n+1, i) - E(n, i)` in GHz.
fn ladder(spec: &DressedSpectrum, i: usize, n: usize) -> Result<f64> {
    Ok(spec.energy(Label::new(n + 1, i))? - spec.energy(Label::new(n, i))?)
}

/// `chi_ge(n)`, the difference of the photon-ladder spacings of `|e>` and
/// `|g>`, in MHz (signed).
pub fn dispersive_shift(spec: &DressedSpectrum, n: usize) -> Result<f64> {
    check_edge(spec, &[0, 1], n + 1)?;
    Ok((ladder(spec, 1, n)? - ladder(spec, 0, n)?) * GHZ_TO_MHZ)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DispersiveCurve {
    pub photon_index: Vec<usize>,
    /// MHz, signed.
    pub chi_ge: Vec<f64>,
}

pub fn dispersive_curve(spec: &DressedSpectrum, n_max: usize) -> Result<DispersiveCurve> {
    let photon_index: Vec<usize> = (0..=n_max).collect();
    let chi_ge = photon_index
        .iter()
        .map(|&n| dispersive_shift(spec, n))
        .collect::<Result<_>>()?;
    Ok(DispersiveCurve {
        photon_index,
        chi_ge,
    })
}

/// Inherited resonator nonlinearity `alpha_i(n)`: second difference of the
/// photon ladder of atom state `i`, in Hz.
pub fn inherited_nonlinearity(spec: &DressedSpectrum, level: AtomLevel, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("inherited nonlinearity needs n >= 1"));
    }
    let i = level.index();
    check_edge(spec, &[i], n + 1)?;
    Ok((ladder(spec, i, n)? - ladder(spec, i, n - 1)?) * GHZ_TO_HZ)
}

/// Qubit frequency shift at photon number `n` relative to `n = 0`, MHz.
pub fn ac_stark_shift(spec: &DressedSpectrum, n: usize) -> Result<f64> {
    check_edge(spec, &[0, 1], n)?;
    let qubit = |n: usize| -> Result<f64> {
        Ok(spec.energy(AtomLevel::E.label(n))? - spec.energy(AtomLevel::G.label(n))?)
    };
    Ok((qubit(n)? - qubit(0)?) * GHZ_TO_MHZ)
}

/// `|<to|O|from>|` in zero-point units of the bare node oscillators.
pub fn operator_matrix_element(
    spec: &DressedSpectrum,
    op: NodeOperator,
    from: Label,
    to: Label,
) -> Result<f64> {
    spec.operator_element(op, from, to)
}

/// Photon number at the onset of Kerr bistability, `kappa / (sqrt 3 K11)`.
/// Both arguments in the same frequency units.
pub fn bifurcation_photon_number(k11: f64, kappa: f64) -> Result<f64> {
    if !(k11 > 0.0) {
        return Err(Error::NonPositiveKerr(k11));
    }
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    Ok(kappa / (3f64.sqrt() * k11))
}

/// Default intrinsic self-Kerr `K11 / 2pi` in kHz per photon, chosen so that
/// `n_max = 8e3` at `kappa / 2pi = 1.16 MHz`.
pub fn default_self_kerr_khz() -> f64 {
    crate::constants::KAPPA_MHZ * 1e3 / (3f64.sqrt() * crate::constants::N_CRIT_QUOTED)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KerrReport {
    /// kHz per photon.
    pub self_kerr_k11: f64,
    pub n_max: f64,
    /// Hz.
    pub alpha_g: f64,
    /// Hz.
    pub alpha_e: f64,
    pub photon_index: usize,
}

pub fn kerr_report(
    spec: &DressedSpectrum,
    k11_khz: f64,
    kappa_mhz: f64,
    n: usize,
) -> Result<KerrReport> {
    Ok(KerrReport {
        self_kerr_k11: k11_khz,
        n_max: bifurcation_photon_number(k11_khz * 1e-3, kappa_mhz)?,
        alpha_g: inherited_nonlinearity(spec, AtomLevel::G, n)?,
        alpha_e: inherited_nonlinearity(spec, AtomLevel::E, n)?,
        photon_index: n,
    })
}

/// Indices of strict interior local minima of `values`.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] < values[k - 1] && values[k] < values[k + 1])
        .collect()
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while (hi - lo).abs() > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(0.5 * (lo + hi))
}
