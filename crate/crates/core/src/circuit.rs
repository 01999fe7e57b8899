//! Lumped-element circuit model of the fluxonium and its readout resonator.
//!
//! Node 0 is the resonator, node 1 the fluxonium. The inductive energy is
//! `phi^T M phi / 2` with the inverse-inductance matrix `M` of the shared
//! inductance network, the charging energy is diagonal, and the SQUID
//! junction contributes a single equivalent cosine on the atom node flux.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use faer::Mat;

use crate::constants::{FEMTO_FARAD, FLUX_QUANTUM, GHZ, HBAR, NANO_HENRY, PLANCK};
use crate::displacement::{phase_factor, DisplacementTable};
use crate::{Error, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Device element values. Inductances in nH, capacitances in fF, Josephson
/// energies as `E/h` in GHz.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CircuitParams {
    pub l: f64,
    pub c: f64,
    pub l_r: f64,
    pub c_r: f64,
    pub l_s: f64,
    pub e_j_prime: f64,
    pub e_j_dprime: f64,
}

impl Default for CircuitParams {
    /// Device values; the junction pair is fixed by `E_J' + E_J'' = 24.0 GHz`
    /// and `E_J' - E_J'' = 0.71 GHz`.
    fn default() -> Self {
        CircuitParams {
            l: 231.0,
            c: 6.9,
            l_r: 22.5,
            c_r: 21.5,
            l_s: 0.57,
            e_j_prime: 12.355,
            e_j_dprime: 11.645,
        }
    }
}

impl CircuitParams {
    /// Validates and normalizes so that the primed junction is the larger one.
    pub fn new(
        l: f64,
        c: f64,
        l_r: f64,
        c_r: f64,
        l_s: f64,
        e_j_prime: f64,
        e_j_dprime: f64,
    ) -> Result<Self> {
        CircuitParams {
            l,
            c,
            l_r,
            c_r,
            l_s,
            e_j_prime,
            e_j_dprime,
        }
        .validated()
    }

    pub fn validated(mut self) -> Result<Self> {
        let named = [
            ("L", self.l),
            ("C", self.c),
            ("L_r", self.l_r),
            ("C_r", self.c_r),
            ("L_s", self.l_s),
            ("E_J'", self.e_j_prime),
            ("E_J''", self.e_j_dprime),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.l_s >= self.l || self.l_s >= self.l_r {
            return Err(Error::invalid(format!(
                "shared inductance L_s = {} must be smaller than L and L_r",
                self.l_s
            )));
        }
        if self.e_j_dprime > self.e_j_prime {
            core::mem::swap(&mut self.e_j_prime, &mut self.e_j_dprime);
        }
        Ok(self)
    }

    pub fn with_l_s(mut self, l_s: f64) -> Self {
        self.l_s = l_s;
        self
    }

    /// Bare resonator frequency `1 / (2 pi sqrt(L_r C_r))` in GHz.
    pub fn bare_resonator_ghz(&self) -> f64 {
        lc_frequency_ghz(self.l_r, self.c_r)
    }

    /// LC frequency of the fluxonium without junction, GHz.
    pub fn atom_lc_ghz(&self) -> f64 {
        lc_frequency_ghz(self.l, self.c)
    }

    /// Inverse-inductance matrix in 1/nH, node order (resonator, atom).
    pub fn inverse_inductance(&self) -> [[f64; 2]; 2] {
        let det = self.l_r * self.l + self.l_r * self.l_s + self.l * self.l_s;
        [
            [(self.l + self.l_s) / det, -self.l_s / det],
            [-self.l_s / det, (self.l_r + self.l_s) / det],
        ]
    }
}

/// `1 / (2 pi sqrt(L C))` with L in nH and C in fF, returned in GHz.
pub fn lc_frequency_ghz(l_nh: f64, c_ff: f64) -> f64 {
    1.0 / (2.0 * PI * (l_nh * NANO_HENRY * c_ff * FEMTO_FARAD).sqrt()) / GHZ
}

/// Loop fluxes in units of the flux quantum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FluxBias {
    phi_s: f64,
    phi_l: f64,
}

fn canonical(x: f64) -> f64 {
    // Eq-1 physics is invariant under shifting either loop flux by 2.
    let r = x - 2.0 * ((x + 1.0) / 2.0).floor();
    if r >= 1.0 {
        r - 2.0
    } else {
        r
    }
}

impl FluxBias {
    pub fn new(phi_s: f64, phi_l: f64) -> Self {
        FluxBias {
            phi_s: canonical(phi_s),
            phi_l: canonical(phi_l),
        }
    }

    /// Bias with the given external flux and SQUID flux.
    pub fn from_external(phi_ext: f64, phi_s: f64) -> Self {
        FluxBias::new(phi_s, phi_ext - phi_s / 2.0)
    }

    pub fn phi_s(&self) -> f64 {
        self.phi_s
    }

    pub fn phi_l(&self) -> f64 {
        self.phi_l
    }

    /// `phi_l + phi_s / 2`.
    pub fn phi_ext(&self) -> f64 {
        self.phi_l + self.phi_s / 2.0
    }
}

/// How a single coil bias moves both loops: `phi_s = offset + ratio * phi_ext`.
///
/// A uniform field threads the SQUID and the fluxonium loop in proportion to
/// their areas, so sweeps over the external flux move along a line in the
/// `(phi_s, phi_l)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct FluxLine {
    pub ratio: f64,
    pub offset: f64,
}

impl Default for FluxLine {
    fn default() -> Self {
        FluxLine {
            ratio: DEFAULT_SQUID_RATIO,
            offset: DEFAULT_SQUID_OFFSET,
        }
    }
}

/// SQUID-to-total loop flux ratio of the shipped flux line (small SQUID,
/// large superinductor loop).
pub const DEFAULT_SQUID_RATIO: f64 = 0.011;
/// SQUID flux at `phi_ext = 0` of the shipped flux line. Places the two
/// spectrum minima of the default window at effective `E_J` of roughly 6.7
/// and 5.9 GHz, on either side of the `|1,e> - |0,f>` resonance.
pub const DEFAULT_SQUID_OFFSET: f64 = 0.416;

impl FluxLine {
    pub fn bias(&self, phi_ext: f64) -> FluxBias {
        FluxBias::from_external(phi_ext, self.offset + self.ratio * phi_ext)
    }
}

/// Single equivalent cosine of the asymmetric SQUID.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveJunction {
    /// `sqrt(E_J+^2 + E_J-^2)`, GHz.
    pub amplitude: f64,
    /// `arctan(E_J- / E_J+)` in `(-pi/2, pi/2]`.
    pub phase_offset: f64,
    /// `sgn(E_J+)`, +1 when `E_J+` vanishes.
    pub sign: f64,
}

impl EffectiveJunction {
    pub fn signed_amplitude(&self) -> f64 {
        self.sign * self.amplitude
    }

    /// Phase subtracted inside the cosine: `2 pi phi_ext + phase_offset`.
    pub fn cosine_phase(&self, flux: &FluxBias) -> f64 {
        2.0 * PI * flux.phi_ext() + self.phase_offset
    }
}

pub fn effective_josephson(params: &CircuitParams, flux: &FluxBias) -> EffectiveJunction {
    let arg = PI * flux.phi_s();
    let e_plus = (params.e_j_prime + params.e_j_dprime) * arg.cos();
    let e_minus = (params.e_j_prime - params.e_j_dprime) * arg.sin();
    let amplitude = (e_plus * e_plus + e_minus * e_minus).sqrt();
    if e_plus == 0.0 {
        // cos(x - (-pi/2)) = -cos(x - pi/2): keep the offset in (-pi/2, pi/2].
        let sign = if e_minus < 0.0 { -1.0 } else { 1.0 };
        return EffectiveJunction {
            amplitude,
            phase_offset: FRAC_PI_2,
            sign,
        };
    }
    EffectiveJunction {
        amplitude,
        phase_offset: (e_minus / e_plus).atan(),
        sign: if e_plus > 0.0 { 1.0 } else { -1.0 },
    }
}

/// Real symmetric matrix (all Hamiltonians here are real in the chosen
/// bases), energies in GHz.
#[derive(Debug, Clone)]
pub struct HermitianMatrix(pub Mat<f64>);

impl HermitianMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.0
    }

    /// Largest `|H_ij - H_ji|` and largest `|H_ij|`.
    pub fn asymmetry(&self) -> (f64, f64) {
        let n = self.dim();
        let mut asym: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let v = self.0[(i, j)];
                scale = scale.max(v.abs());
                if i > j {
                    asym = asym.max((v - self.0[(j, i)]).abs());
                }
            }
        }
        (asym, scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Basis {
    /// Fock states of the two node oscillators; linear coupling is explicit.
    #[default]
    BareFock,
    /// Fock states of the two exact normal modes of the linear circuit.
    NormalMode,
}

/// Default resource guard for dense matrices.
pub const DEFAULT_DIMENSION_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct HilbertTruncation {
    pub n_res: usize,
    pub n_atom: usize,
    pub basis: Basis,
}

impl Default for HilbertTruncation {
    fn default() -> Self {
        HilbertTruncation::bare_fock()
    }
}

impl HilbertTruncation {
    pub fn new(n_res: usize, n_atom: usize, basis: Basis) -> Result<Self> {
        if n_res < 2 || n_atom < 2 {
            return Err(Error::invalid(format!(
                "truncation needs at least 2 levels per mode, got {n_res}x{n_atom}"
            )));
        }
        Ok(HilbertTruncation {
            n_res,
            n_atom,
            basis,
        })
    }

    /// 220 resonator by 20 atom levels in the bare Fock basis.
    pub fn bare_fock() -> Self {
        HilbertTruncation {
            n_res: 220,
            n_atom: 20,
            basis: Basis::BareFock,
        }
    }

    /// 150 resonator by 15 atom levels in the normal-mode basis.
    pub fn normal_mode() -> Self {
        HilbertTruncation {
            n_res: 150,
            n_atom: 15,
            basis: Basis::NormalMode,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_res * self.n_atom
    }

    #[inline]
    pub fn index(&self, n: usize, k: usize) -> usize {
        n * self.n_atom + k
    }
}

/// One harmonic mode of the linear circuit and how the node operators load
/// onto it.
///
/// `flux[node]` and `charge[node]` are the coefficients of `(b + b^dag)` and
/// `i(b^dag - b)` in the node flux and node charge, expressed in units of the
/// zero-point fluctuations of the bare node oscillators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub freq_ghz: f64,
    /// Coefficient of `(b + b^dag)` in `2 pi phi_atom / Phi_0`.
    pub phase_zpf: f64,
    pub flux: [f64; 2],
    pub charge: [f64; 2],
}

/// Node oscillator of one node with its diagonal inverse inductance.
#[derive(Debug, Clone, Copy)]
struct NodeOscillator {
    omega: f64,
    flux_zpf: f64,
    charge_zpf: f64,
}

impl NodeOscillator {
    fn new(inv_l_si: f64, c_si: f64) -> Self {
        let omega = (inv_l_si / c_si).sqrt();
        let impedance = 1.0 / (omega * c_si);
        NodeOscillator {
            omega,
            flux_zpf: (HBAR * impedance / 2.0).sqrt(),
            charge_zpf: (HBAR / (2.0 * impedance)).sqrt(),
        }
    }
}

/// The two modes `(resonator-like, atom-like)` for the requested basis plus
/// the bilinear flux coupling between them (GHz, zero in the normal-mode
/// basis).
pub fn linear_modes(params: &CircuitParams, basis: Basis) -> ([Mode; 2], f64) {
    let m = params.inverse_inductance();
    let inv_l = [m[0][0] / NANO_HENRY, m[1][1] / NANO_HENRY];
    let caps = [params.c_r * FEMTO_FARAD, params.c * FEMTO_FARAD];
    let nodes = [
        NodeOscillator::new(inv_l[0], caps[0]),
        NodeOscillator::new(inv_l[1], caps[1]),
    ];
    let to_ghz = |omega: f64| omega / (2.0 * PI) / GHZ;
    match basis {
        Basis::BareFock => {
            let modes = [0, 1].map(|k| {
                let mut flux = [0.0; 2];
                let mut charge = [0.0; 2];
                flux[k] = 1.0;
                charge[k] = 1.0;
                Mode {
                    freq_ghz: to_ghz(nodes[k].omega),
                    phase_zpf: if k == 1 {
                        2.0 * PI * nodes[1].flux_zpf / FLUX_QUANTUM
                    } else {
                        0.0
                    },
                    flux,
                    charge,
                }
            });
            let coupling =
                m[0][1] / NANO_HENRY * nodes[0].flux_zpf * nodes[1].flux_zpf / PLANCK / GHZ;
            (modes, coupling)
        }
        Basis::NormalMode => {
            // x = C^(1/2) phi turns the kinetic term into the identity; the
            // potential becomes C^(-1/2) M C^(-1/2) = O diag(w^2) O^T.
            let s = [caps[0].sqrt(), caps[1].sqrt()];
            let a = m[0][0] / NANO_HENRY / (s[0] * s[0]);
            let b = m[0][1] / NANO_HENRY / (s[0] * s[1]);
            let d = m[1][1] / NANO_HENRY / (s[1] * s[1]);
            let (w2, o) = symmetric_2x2_eigen(a, b, d);
            // Column k of `o` is mode k; order so mode 0 is resonator-like.
            let order = if o[0][0].abs() >= o[0][1].abs() {
                [0, 1]
            } else {
                [1, 0]
            };
            let modes = order.map(|k| {
                let omega = w2[k].sqrt();
                let y_zpf = (HBAR / (2.0 * omega)).sqrt();
                let p_zpf = (HBAR * omega / 2.0).sqrt();
                let mut flux = [0.0; 2];
                let mut charge = [0.0; 2];
                for node in 0..2 {
                    flux[node] = o[node][k] * y_zpf / s[node] / nodes[node].flux_zpf;
                    charge[node] = o[node][k] * p_zpf * s[node] / nodes[node].charge_zpf;
                }
                Mode {
                    freq_ghz: to_ghz(omega),
                    phase_zpf: 2.0 * PI * o[1][k] * y_zpf / s[1] / FLUX_QUANTUM,
                    flux,
                    charge,
                }
            });
            (modes, 0.0)
        }
    }
}

/// Eigen-decomposition of `[[a, b], [b, d]]`; returns eigenvalues and the
/// orthogonal matrix whose columns are eigenvectors.
fn symmetric_2x2_eigen(a: f64, b: f64, d: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let (s, c) = theta.sin_cos();
    let l0 = a * c * c + 2.0 * b * s * c + d * s * s;
    let l1 = a * s * s - 2.0 * b * s * c + d * c * c;
    ([l0, l1], [[c, -s], [s, c]])
}

/// Bare fluxonium in the Fock basis of its own LC oscillator.
pub fn build_fluxonium_hamiltonian(
    params: &CircuitParams,
    flux: &FluxBias,
    n_atom: usize,
) -> Result<HermitianMatrix> {
    if n_atom < 2 {
        return Err(Error::invalid("n_atom must be at least 2"));
    }
    let node = NodeOscillator::new(1.0 / (params.l * NANO_HENRY), params.c * FEMTO_FARAD);
    let freq = node.omega / (2.0 * PI) / GHZ;
    let lambda = 2.0 * PI * node.flux_zpf / FLUX_QUANTUM;
    Ok(HermitianMatrix(atom_block(
        freq,
        lambda,
        &effective_josephson(params, flux),
        flux,
        n_atom,
    )))
}

fn atom_block(
    freq: f64,
    lambda: f64,
    junction: &EffectiveJunction,
    flux: &FluxBias,
    n_atom: usize,
) -> Mat<f64> {
    let table = DisplacementTable::new(lambda, n_atom);
    let phase = junction.cosine_phase(flux);
    let ej = junction.signed_amplitude();
    Mat::from_fn(n_atom, n_atom, |i, j| {
        let diag = if i == j { freq * (i as f64 + 0.5) } else { 0.0 };
        diag - ej * phase_factor(i.abs_diff(j), phase) * table.get(i, j)
    })
}

/// Coupled Hamiltonian plus everything needed to label and probe its
/// eigenstates.
#[derive(Debug, Clone)]
pub struct CoupledHamiltonian {
    pub matrix: HermitianMatrix,
    pub trunc: HilbertTruncation,
    pub flux: FluxBias,
    /// Atom Hamiltonian projected on the vacuum of the resonator-like mode;
    /// its eigenvectors define the bare atom states `|i>`.
    pub bare_atom: HermitianMatrix,
    pub modes: [Mode; 2],
}

pub fn build_coupled_hamiltonian(
    params: &CircuitParams,
    flux: &FluxBias,
    trunc: &HilbertTruncation,
) -> Result<CoupledHamiltonian> {
    build_coupled_hamiltonian_capped(params, flux, trunc, DEFAULT_DIMENSION_CAP)
}

pub fn build_coupled_hamiltonian_capped(
    params: &CircuitParams,
    flux: &FluxBias,
    trunc: &HilbertTruncation,
    cap: usize,
) -> Result<CoupledHamiltonian> {
    let trunc = HilbertTruncation::new(trunc.n_res, trunc.n_atom, trunc.basis)?;
    let dim = trunc.dim();
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let junction = effective_josephson(params, flux);
    let (modes, coupling) = linear_modes(params, trunc.basis);
    let (nr, na) = (trunc.n_res, trunc.n_atom);
    let mut h = Mat::<f64>::zeros(dim, dim);
    let phase = junction.cosine_phase(flux);
    let ej = junction.signed_amplitude();

    let atom_table = DisplacementTable::new(modes[1].phase_zpf, na);
    let bare_atom;
    match trunc.basis {
        Basis::BareFock => {
            let block = atom_block(modes[1].freq_ghz, modes[1].phase_zpf, &junction, flux, na);
            for n in 0..nr {
                let res = modes[0].freq_ghz * (n as f64 + 0.5);
                for i in 0..na {
                    for j in 0..na {
                        h[(trunc.index(n, i), trunc.index(n, j))] = block[(i, j)];
                    }
                    h[(trunc.index(n, i), trunc.index(n, i))] += res;
                }
            }
            // g (a + a^dag)(b + b^dag)
            for n in 0..nr - 1 {
                let sn = ((n + 1) as f64).sqrt();
                for k in 0..na {
                    for k2 in [k.wrapping_sub(1), k + 1] {
                        if k2 >= na {
                            continue;
                        }
                        let v = coupling * sn * (k.max(k2) as f64).sqrt();
                        let (r, c) = (trunc.index(n, k), trunc.index(n + 1, k2));
                        h[(r, c)] += v;
                        h[(c, r)] += v;
                    }
                }
            }
            bare_atom = block;
        }
        Basis::NormalMode => {
            let res_table = DisplacementTable::new(modes[0].phase_zpf, nr);
            for n in 0..nr {
                for m in 0..nr {
                    let r_nm = res_table.get(n, m);
                    let dn = n.abs_diff(m);
                    for i in 0..na {
                        for j in 0..na {
                            let f = phase_factor(dn + i.abs_diff(j), phase);
                            h[(trunc.index(n, i), trunc.index(m, j))] =
                                -ej * f * r_nm * atom_table.get(i, j);
                        }
                    }
                }
            }
            for n in 0..nr {
                for i in 0..na {
                    let idx = trunc.index(n, i);
                    h[(idx, idx)] +=
                        modes[0].freq_ghz * (n as f64 + 0.5) + modes[1].freq_ghz * (i as f64 + 0.5);
                }
            }
            let vac = res_table.get(0, 0);
            bare_atom = Mat::from_fn(na, na, |i, j| {
                let diag = if i == j {
                    modes[1].freq_ghz * (i as f64 + 0.5)
                } else {
                    0.0
                };
                diag - ej * vac * phase_factor(i.abs_diff(j), phase) * atom_table.get(i, j)
            });
        }
    }
    Ok(CoupledHamiltonian {
        matrix: HermitianMatrix(h),
        trunc,
        flux: *flux,
        bare_atom: HermitianMatrix(bare_atom),
        modes,
    })
}

/// Which node operator to probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NodeOperator {
    ResonatorCharge,
    AtomFlux,
    AtomCharge,
}

impl CoupledHamiltonian {
    pub fn apply_operator(&self, op: NodeOperator, v: &[f64]) -> Vec<f64> {
        apply_node_operator(&self.trunc, &self.modes, op, v)
    }
}

/// Applies a node operator to a product-basis vector. The overall `i` of the
/// charge operators is dropped, which leaves matrix-element magnitudes
/// between real states unchanged.
pub fn apply_node_operator(
    trunc: &HilbertTruncation,
    modes: &[Mode; 2],
    op: NodeOperator,
    v: &[f64],
) -> Vec<f64> {
    let (node, charge) = match op {
        NodeOperator::ResonatorCharge => (0, true),
        NodeOperator::AtomFlux => (1, false),
        NodeOperator::AtomCharge => (1, true),
    };
    let coef = |k: usize| {
        if charge {
            modes[k].charge[node]
        } else {
            modes[k].flux[node]
        }
    };
    let (nr, na) = (trunc.n_res, trunc.n_atom);
    let mut out = vec![0.0; v.len()];
    // X = b + b^dag, P = b^dag - b
    let sign = if charge { -1.0 } else { 1.0 };
    let (c0, c1) = (coef(0), coef(1));
    for n in 0..nr {
        for k in 0..na {
            let x = v[trunc.index(n, k)];
            if x == 0.0 {
                continue;
            }
            if n + 1 < nr {
                out[trunc.index(n + 1, k)] += c0 * ((n + 1) as f64).sqrt() * x;
            }
            if n > 0 {
                out[trunc.index(n - 1, k)] += sign * c0 * (n as f64).sqrt() * x;
            }
            if k + 1 < na {
                out[trunc.index(n, k + 1)] += c1 * ((k + 1) as f64).sqrt() * x;
            }
            if k > 0 {
                out[trunc.index(n, k - 1)] += sign * c1 * (k as f64).sqrt() * x;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::SymmetricEigen;

    #[test]
    fn eq1_endpoints() {
        let p = CircuitParams::default();
        let j0 = effective_josephson(&p, &FluxBias::new(0.0, 0.0));
        assert!((j0.amplitude - 24.0).abs() < 1e-12);
        assert_eq!(j0.phase_offset, 0.0);
        let jh = effective_josephson(&p, &FluxBias::new(0.5, 0.0));
        assert!((jh.amplitude - 0.71).abs() < 1e-12);
        assert!((jh.phase_offset.abs() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn symmetric_squid_has_no_offset() {
        let p = CircuitParams {
            e_j_prime: 5.0,
            e_j_dprime: 5.0,
            ..CircuitParams::default()
        };
        for &phi_s in &[0.0, 0.13, 0.37, 0.49, -0.8] {
            let j = effective_josephson(&p, &FluxBias::new(phi_s, 0.2));
            let want = 10.0 * (PI * FluxBias::new(phi_s, 0.0).phi_s()).cos();
            assert!((j.signed_amplitude() - want).abs() < 1e-12);
            assert_eq!(j.phase_offset, 0.0);
        }
    }

    #[test]
    fn params_normalize_junction_order() {
        let p = CircuitParams::new(231.0, 6.9, 22.5, 21.5, 0.57, 3.0, 4.0).unwrap();
        assert_eq!((p.e_j_prime, p.e_j_dprime), (4.0, 3.0));
        assert!(CircuitParams::new(231.0, 6.9, 22.5, 21.5, 30.0, 3.0, 4.0).is_err());
        assert!(CircuitParams::new(231.0, -6.9, 22.5, 21.5, 0.5, 3.0, 4.0).is_err());
    }

    #[test]
    fn flux_bias_canonical_window() {
        let f = FluxBias::new(2.3, -1.5);
        assert!((f.phi_s() - 0.3).abs() < 1e-12);
        assert!((f.phi_l() - 0.5).abs() < 1e-12);
        assert!(f.phi_s() >= -1.0 && f.phi_s() < 1.0);
        let g = FluxBias::from_external(0.7, 0.2);
        assert!((g.phi_ext() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn bare_resonator_frequency() {
        let f = CircuitParams::default().bare_resonator_ghz();
        assert!((f - 7.244).abs() / 7.244 < 5e-3, "{f}");
    }

    #[test]
    fn junctionless_fluxonium_is_harmonic() {
        let p = CircuitParams {
            e_j_prime: 1e-300,
            e_j_dprime: 1e-300,
            ..CircuitParams::default()
        };
        let h = build_fluxonium_hamiltonian(&p, &FluxBias::new(0.1, 0.3), 12).unwrap();
        let eig = SymmetricEigen::new(&h).unwrap();
        let f = p.atom_lc_ghz();
        for (k, e) in eig.values.iter().enumerate() {
            assert!((e - f * (k as f64 + 0.5)).abs() < 1e-10);
        }
    }

    #[test]
    fn normal_modes_reduce_to_bare_modes_without_coupling() {
        let p = CircuitParams::default().with_l_s(1e-9);
        let (bare, g) = linear_modes(&p, Basis::BareFock);
        let (nm, g0) = linear_modes(&p, Basis::NormalMode);
        assert!(g.abs() < 1e-9);
        assert_eq!(g0, 0.0);
        for k in 0..2 {
            assert!((bare[k].freq_ghz - nm[k].freq_ghz).abs() < 1e-9);
            assert!((bare[k].phase_zpf.abs() - nm[k].phase_zpf.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn normal_mode_frequencies_match_linear_spectrum() {
        // Both bases must give the same linear (junctionless) spectrum.
        let p = CircuitParams::default();
        let (bare, g) = linear_modes(&p, Basis::BareFock);
        let (nm, _) = linear_modes(&p, Basis::NormalMode);
        // Exact 2x2 oscillator problem: w^2 eigenvalues of the coupled system
        // relate to the bare ones by w1^2 w2^2 = wr^2 wa^2 - 4 g^2 wr wa (GHz^2 units).
        let (wr, wa) = (bare[0].freq_ghz, bare[1].freq_ghz);
        let prod = nm[0].freq_ghz.powi(2) * nm[1].freq_ghz.powi(2);
        let want = wr * wr * wa * wa - 4.0 * g * g * wr * wa;
        assert!((prod - want).abs() / want < 1e-10);
    }
}
