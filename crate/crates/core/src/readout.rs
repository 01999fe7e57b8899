//! Driven single-port readout resonator: pointer states, SNR, measurement
//! time, Kerr (Duffing) steady state, reflection phase and the inversions
//! used to calibrate photon number and dispersive shift.
//!
//! Frequencies are cyclic (`omega / 2pi`) in MHz unless noted; times in ns.
//! The resonator frequency for atom state g/e is `f_r0 -/+ chi/2`, and a Kerr
//! coefficient `K` moves the resonance to `f + K n`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::constants::{BOLTZMANN, PLANCK};
use crate::spectro::golden_section;
use crate::{Error, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Vacuum variance per quadrature before amplification, photon units.
pub const SIGMA0_SQ: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ReadoutSettings {
    /// Linewidth `kappa / 2pi`, MHz.
    pub kappa_mhz: f64,
    /// Bare resonator frequency, GHz.
    pub f_r0_ghz: f64,
    /// Drive frequency minus `f_r0`, MHz.
    pub drive_detuning_mhz: f64,
    pub n_bar: f64,
    pub tau_m_ns: f64,
    /// Noise photons `n_n = 1 / eta`; 1 is the quantum limit.
    pub n_noise: f64,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        ReadoutSettings {
            kappa_mhz: crate::constants::KAPPA_MHZ,
            f_r0_ghz: 7.244,
            drive_detuning_mhz: 0.0,
            n_bar: 114.0,
            tau_m_ns: 480.0,
            n_noise: 1.0 / 0.06,
        }
    }
}

impl ReadoutSettings {
    pub fn validated(self) -> Result<Self> {
        if !(self.kappa_mhz > 0.0) {
            return Err(Error::invalid("kappa must be positive"));
        }
        if !(self.n_bar >= 0.0) {
            return Err(Error::invalid("n_bar must be non-negative"));
        }
        if !(self.tau_m_ns > 0.0) {
            return Err(Error::invalid("tau_m must be positive"));
        }
        if !(self.n_noise >= 1.0) {
            return Err(Error::invalid(
                "n_noise must be >= 1 (efficiency in (0, 1])",
            ));
        }
        if !(self.f_r0_ghz > 0.0) {
            return Err(Error::invalid("f_r0 must be positive"));
        }
        Ok(self)
    }

    pub fn efficiency(&self) -> f64 {
        1.0 / self.n_noise
    }

    /// Angular linewidth in rad/ns.
    pub fn kappa_rad_per_ns(&self) -> f64 {
        2.0 * PI * self.kappa_mhz * 1e-3
    }

    /// Measurement photon number `n_m = n_bar kappa tau_m / 4`.
    pub fn measurement_photons(&self) -> f64 {
        self.n_bar * self.kappa_rad_per_ns() * self.tau_m_ns / 4.0
    }

    /// Measured noise standard deviation per quadrature, `sqrt(n_n / 2)`.
    pub fn sigma_m(&self) -> f64 {
        (self.n_noise / 2.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointerState {
    pub i: f64,
    pub q: f64,
    pub sigma: f64,
}

/// `2 kappa chi / (kappa^2 + chi^2)`: the Q-quadrature geometric factor.
pub fn pointer_factor(chi: f64, kappa: f64) -> f64 {
    2.0 * kappa * chi / (kappa * kappa + chi * chi)
}

/// Reflected pointer states for a drive at `f_r0`, vacuum noise `sigma0`.
pub fn steady_quadratures(chi: f64, kappa: f64, a_in: f64) -> (PointerState, PointerState) {
    let den = kappa * kappa + chi * chi;
    let i = (kappa * kappa - chi * chi) / den * a_in.abs();
    let q = pointer_factor(chi, kappa) * a_in.abs();
    let sigma = SIGMA0_SQ.sqrt();
    (
        PointerState { i, q, sigma },
        PointerState { i, q: -q, sigma },
    )
}

/// `sqrt(n_m) / sigma_m * 2 kappa chi / (kappa^2 + chi^2)`; sign of `chi`
/// dropped.
pub fn snr(settings: &ReadoutSettings, chi_mhz: f64) -> f64 {
    settings.measurement_photons().sqrt() / settings.sigma_m()
        * pointer_factor(chi_mhz.abs(), settings.kappa_mhz)
}

/// Integration time (ns) reaching `target_snr` at the settings' `n_bar`.
pub fn measurement_time(target_snr: f64, settings: &ReadoutSettings, chi_mhz: f64) -> Result<f64> {
    if !(target_snr > 0.0) {
        return Err(Error::invalid("target SNR must be positive"));
    }
    let g = pointer_factor(chi_mhz.abs(), settings.kappa_mhz);
    if g == 0.0 || settings.n_bar <= 0.0 {
        return Err(Error::invalid(
            "zero dispersive shift or photon number gives no signal",
        ));
    }
    let n_m = (target_snr * settings.sigma_m() / g).powi(2);
    Ok(4.0 * n_m / (settings.n_bar * settings.kappa_rad_per_ns()))
}

/// System noise photons with a quantum-limited preamplifier of `gain_db`
/// ahead of a chain with `n_noise`: `1 + (n_noise - 1) / G` (Friis).
pub fn amplified_noise(n_noise: f64, gain_db: f64) -> Result<f64> {
    if !(n_noise >= 1.0) || !gain_db.is_finite() || gain_db < 0.0 {
        return Err(Error::invalid("amplified noise needs n_noise >= 1 and a finite gain >= 0 dB"));
    }
    Ok(1.0 + (n_noise - 1.0) / libm::pow(10.0, gain_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimePoint {
    pub n_bar: f64,
    pub chi_mhz: f64,
    pub tau_m_ns: f64,
}

/// `tau_m(n_bar)` curve, with `chi` supplied per photon number.
pub fn measurement_time_for_snr<F>(
    target_snr: f64,
    settings: &ReadoutSettings,
    n_bars: &[f64],
    mut chi_of_nbar: F,
) -> Result<Vec<TimePoint>>
where
    F: FnMut(f64) -> Result<f64>,
{
    n_bars
        .iter()
        .map(|&n_bar| {
            let chi = chi_of_nbar(n_bar)?;
            let s = ReadoutSettings { n_bar, ..*settings };
            Ok(TimePoint {
                n_bar,
                chi_mhz: chi,
                tau_m_ns: measurement_time(target_snr, &s, chi)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branch {
    /// Error out when the response is multivalued.
    #[default]
    Unique,
    /// Take the low-amplitude stable solution.
    Low,
}

/// Input photon flux giving `n_bar` photons at resonance without Kerr.
pub fn input_flux_for(n_bar: f64, kappa: f64) -> f64 {
    n_bar * kappa / 4.0
}

/// Intracavity photon number solving `n[(kappa/2)^2 + (delta - K n)^2] =
/// kappa n_in`, where `delta` is drive minus resonance frequency.
pub fn duffing_steady_state(
    kerr: f64,
    kappa: f64,
    detuning: f64,
    n_in: f64,
    branch: Branch,
) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    if !(n_in >= 0.0) {
        return Err(Error::invalid("input flux must be non-negative"));
    }
    let lin = kappa * kappa / 4.0 + detuning * detuning;
    let rhs = kappa * n_in;
    if n_in == 0.0 {
        return Ok(0.0);
    }
    if kerr == 0.0 {
        return Ok(rhs / lin);
    }
    let a = kerr * kerr;
    let b = -2.0 * detuning * kerr;
    let roots = real_cubic_roots(a, b, lin, -rhs);
    let f = |n: f64| n * (kappa * kappa / 4.0 + (detuning - kerr * n).powi(2)) - rhs;
    let df = |n: f64| lin - 4.0 * detuning * kerr * n + 3.0 * a * n * n;
    let mut polished: Vec<f64> = roots
        .into_iter()
        .map(|mut n| {
            for _ in 0..8 {
                let d = df(n);
                if d == 0.0 {
                    break;
                }
                let step = f(n) / d;
                n -= step;
                if step.abs() <= 1e-15 * n.abs() {
                    break;
                }
            }
            n
        })
        .filter(|n| *n > 0.0)
        .collect();
    polished.sort_by(|x, y| x.total_cmp(y));
    polished.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * y.abs());
    if polished.is_empty() {
        return Err(Error::EigenFailed);
    }
    if polished.len() > 1 && branch == Branch::Unique {
        return Err(Error::Bifurcated);
    }
    let n = polished[0];
    let n_max = kappa / (3f64.sqrt() * kerr.abs());
    if n > n_max {
        return Err(Error::AboveBifurcation { n_bar: n, n_max });
    }
    Ok(n)
}

/// Real roots of `a x^3 + b x^2 + c x + d` (`a != 0`), ascending.
pub fn real_cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let (b, c, d) = (b / a, c / a, d / a);
    // x = t - b/3 gives t^3 + p t + q = 0
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let mut out = Vec::with_capacity(3);
    if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        out.push(u + v + shift);
    } else if p == 0.0 {
        out.push(shift);
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        for k in 0..3 {
            out.push(r * (phi - 2.0 * PI * k as f64 / 3.0).cos() + shift);
        }
    }
    out.sort_by(|x, y| x.total_cmp(y));
    out
}

/// Reflection phase `arg[(x - i)/(x + i)]`, `x = 2 (f - f_eff) / kappa`,
/// wrapped to `(-pi, pi]`; equals `pi` on resonance.
pub fn reflection_phase(detuning: f64, kappa: f64) -> f64 {
    wrap(-2.0 * 1f64.atan2(2.0 * detuning / kappa))
}

fn wrap(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Forward model for the state-dependent reflection phase.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PhaseModel {
    /// Signed dispersive shift, MHz.
    pub chi_mhz: f64,
    pub kappa_mhz: f64,
    /// Intrinsic Kerr, MHz per photon (signed; negative pulls down).
    pub kerr_mhz: f64,
    /// Inherited nonlinearity of the g / e ladders, MHz per photon.
    pub alpha_g_mhz: f64,
    pub alpha_e_mhz: f64,
    /// Drive strength as the resonant linear photon number.
    pub n_bar: f64,
}

impl PhaseModel {
    pub fn linear(chi_mhz: f64, kappa_mhz: f64) -> Self {
        PhaseModel {
            chi_mhz,
            kappa_mhz,
            kerr_mhz: 0.0,
            alpha_g_mhz: 0.0,
            alpha_e_mhz: 0.0,
            n_bar: 0.0,
        }
    }

    fn state(&self, excited: bool) -> (f64, f64) {
        if excited {
            (0.5 * self.chi_mhz, self.kerr_mhz + self.alpha_e_mhz)
        } else {
            (-0.5 * self.chi_mhz, self.kerr_mhz + self.alpha_g_mhz)
        }
    }

    /// Phase of the reflected signal at drive detuning `delta` (MHz from
    /// `f_r0`) for atom state g (`excited = false`) or e.
    pub fn phase(&self, delta: f64, excited: bool) -> Result<f64> {
        let (center, k) = self.state(excited);
        let n_in = input_flux_for(self.n_bar, self.kappa_mhz);
        let n = duffing_steady_state(k, self.kappa_mhz, delta - center, n_in, Branch::Low)?;
        Ok(reflection_phase(delta - center - k * n, self.kappa_mhz))
    }

    pub fn separation(&self, delta: f64) -> Result<f64> {
        Ok(wrap(self.phase(delta, false)? - self.phase(delta, true)?).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseCurve {
    pub detuning_mhz: Vec<f64>,
    pub phase_g: Vec<f64>,
    pub phase_e: Vec<f64>,
}

pub fn phase_response(model: &PhaseModel, detuning_grid_mhz: &[f64]) -> Result<PhaseCurve> {
    let mut phase_g = Vec::with_capacity(detuning_grid_mhz.len());
    let mut phase_e = Vec::with_capacity(detuning_grid_mhz.len());
    for &d in detuning_grid_mhz {
        phase_g.push(model.phase(d, false)?);
        phase_e.push(model.phase(d, true)?);
    }
    Ok(PhaseCurve {
        detuning_mhz: detuning_grid_mhz.to_vec(),
        phase_g,
        phase_e,
    })
}

/// Drive detuning (MHz) and value of the maximal g/e phase separation.
pub fn max_phase_separation(model: &PhaseModel) -> Result<(f64, f64)> {
    let k_tot =
        (model.kerr_mhz.abs() + model.alpha_g_mhz.abs().max(model.alpha_e_mhz.abs())) * model.n_bar;
    let half = 0.5 * model.chi_mhz.abs() + 3.0 * model.kappa_mhz + k_tot;
    let steps = 801;
    let mut best = (0.0, f64::NEG_INFINITY);
    let mut best_k = 0usize;
    for k in 0..steps {
        let d = -half + 2.0 * half * k as f64 / (steps - 1) as f64;
        let s = model.separation(d)?;
        if s > best.1 {
            best = (d, s);
            best_k = k;
        }
    }
    let step = 2.0 * half / (steps - 1) as f64;
    let lo = -half + step * best_k.saturating_sub(1) as f64;
    let hi = -half + step * (best_k + 1).min(steps - 1) as f64;
    let d = golden_section(
        |d| model.separation(d).map(|s| -s),
        lo,
        hi,
        1e-9 * model.kappa_mhz,
    )?;
    let s = model.separation(d)?;
    Ok(if s >= best.1 { (d, s) } else { best })
}

/// Inverts [`max_phase_separation`] for `|chi|` by bisection on
/// `(0, upper_kappa * kappa]`. The returned value carries the sign of
/// `template.chi_mhz`; the other template fields define the forward model.
pub fn extract_chi_from_phase(
    separation: f64,
    template: &PhaseModel,
    upper_kappa: f64,
) -> Result<f64> {
    if !(separation > 0.0 && separation <= PI) {
        return Err(Error::invalid("phase separation must lie in (0, pi]"));
    }
    let sign = if template.chi_mhz < 0.0 { -1.0 } else { 1.0 };
    let sep_at = |chi: f64| {
        max_phase_separation(&PhaseModel {
            chi_mhz: sign * chi,
            ..*template
        })
        .map(|r| r.1)
    };
    let mut lo = 1e-9 * template.kappa_mhz;
    let mut hi = upper_kappa * template.kappa_mhz;
    let (s_lo, s_hi) = (sep_at(lo)?, sep_at(hi)?);
    if separation < s_lo || separation > s_hi + 1e-12 {
        return Err(Error::NoBracket {
            target: separation,
            max: s_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sep_at(mid)? < separation {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(sign * 0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhotonCalibration {
    /// Photons per unit drive power.
    pub slope: f64,
    pub slope_err: f64,
}

impl PhotonCalibration {
    pub fn n_bar(&self, power: f64) -> f64 {
        self.slope * power
    }
}

/// Linear fit through the origin of `n = stark / chi` against drive power.
pub fn calibrate_photon_number(
    points: &[(f64, f64)],
    chi_per_photon_mhz: f64,
) -> Result<PhotonCalibration> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }
    if chi_per_photon_mhz == 0.0 {
        return Err(Error::invalid(
            "dispersive shift per photon must be non-zero",
        ));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(p, stark) in points {
        let n = stark / chi_per_photon_mhz;
        sxy += p * n;
        sxx += p * p;
    }
    if sxx == 0.0 {
        return Err(Error::invalid("all calibration powers are zero"));
    }
    let slope = sxy / sxx;
    let rss: f64 = points
        .iter()
        .map(|&(p, s)| (s / chi_per_photon_mhz - slope * p).powi(2))
        .sum();
    let dof = (points.len() - 1) as f64;
    Ok(PhotonCalibration {
        slope,
        slope_err: (rss / dof / sxx).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EfficiencyReport {
    pub eta: f64,
    pub n_noise: f64,
    /// K.
    pub t_eff: f64,
}

/// Efficiency, noise photons and noise temperature from the measured
/// per-quadrature standard deviation.
pub fn efficiency_report(sigma_m: f64, f_r_ghz: f64) -> Result<EfficiencyReport> {
    if !(sigma_m > 0.0) {
        return Err(Error::invalid("sigma_m must be positive"));
    }
    let var = sigma_m * sigma_m;
    let n_noise = 2.0 * var;
    Ok(EfficiencyReport {
        eta: 0.5 / var,
        n_noise,
        t_eff: n_noise * PLANCK * f_r_ghz * 1e9 / BOLTZMANN,
    })
}
