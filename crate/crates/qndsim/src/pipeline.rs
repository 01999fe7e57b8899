//! Parallel drivers over the core: flux sweeps, flux-minimum location,
//! photon-number ladders, trace synthesis and state-preparation shots. Each
//! parallel map is order-preserving, so results do not depend on the worker
//! count.

use rayon::prelude::*;

use qndsim_core::circuit::build_coupled_hamiltonian;
use qndsim_core::dressed::{diagonalize_and_label, LabelOptions};
use qndsim_core::feedback::{run_shot, ProtocolConfig, ShotOutcome, StatePrepReport};
use qndsim_core::jumps::{fill_segment, sample_count, simulate_state_path, IqTrace, JumpModel, JumpSimulation, TraceMeta, SEGMENT_LEN};
use qndsim_core::spectro::{dispersive_shift, golden_section, local_minima, transition_point};
use qndsim_core::circuit::NodeOperator;
use qndsim_core::{Basis, CircuitParams, Label, DressedSpectrum, Error, FluxLine, HilbertTruncation, Result, Retention};

pub fn spectrum_at(params: &CircuitParams, line: &FluxLine, phi_ext: f64, trunc: &HilbertTruncation, retention: Retention) -> Result<DressedSpectrum> {
    spectrum_with(params, line, phi_ext, trunc, retention, false)
}

fn spectrum_with(params: &CircuitParams, line: &FluxLine, phi_ext: f64, trunc: &HilbertTruncation, retention: Retention, keep_vectors: bool) -> Result<DressedSpectrum> {
    let h = build_coupled_hamiltonian(params, &line.bias(phi_ext), trunc)?;
    diagonalize_and_label(&h, &LabelOptions { retention, keep_vectors, ..Default::default() })
}

/// `|<n,e|O|n,g>|` for resonator charge, atom flux and atom charge.
pub fn qubit_matrix_elements(s: &DressedSpectrum, n: usize) -> Result<[f64; 3]> {
    let (g, e) = (Label::new(n, 0), Label::new(n, 1));
    Ok([
        s.operator_element(NodeOperator::ResonatorCharge, g, e)?,
        s.operator_element(NodeOperator::AtomFlux, g, e)?,
        s.operator_element(NodeOperator::AtomCharge, g, e)?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub phi_ext: f64,
    pub phi_s: f64,
    pub f_ge: f64,
    pub f_gf: f64,
    /// `chi_ge(0)`, MHz.
    pub chi0: f64,
    /// Ambiguous labels among the retained levels.
    pub ambiguous: usize,
    /// `qubit_matrix_elements` for `n = 0..matrix_photons`.
    pub matrix_elements: Vec<[f64; 3]>,
}

pub fn sweep_point(params: &CircuitParams, line: &FluxLine, phi: f64, trunc: &HilbertTruncation, retention: Retention, matrix_photons: usize) -> Result<SweepPoint> {
    let s = spectrum_with(params, line, phi, trunc, retention, matrix_photons > 0)?;
    let (f_ge, f_gf) = transition_point(&s)?;
    Ok(SweepPoint {
        phi_ext: phi,
        phi_s: line.bias(phi).phi_s(),
        f_ge,
        f_gf,
        chi0: dispersive_shift(&s, 0)?,
        ambiguous: s.ambiguous_count(),
        matrix_elements: (0..matrix_photons).map(|n| qubit_matrix_elements(&s, n)).collect::<Result<_>>()?,
    })
}

pub fn flux_sweep(params: &CircuitParams, line: &FluxLine, grid: &[f64], trunc: &HilbertTruncation, retention: Retention, matrix_photons: usize) -> Result<Vec<SweepPoint>> {
    grid.par_iter().map(|&phi| sweep_point(params, line, phi, trunc, retention, matrix_photons)).collect()
}

/// Small coupled model used to locate flux minima and to fit spectra: the
/// qubit transition barely depends on how many resonator levels are kept.
pub const LOCATE_TRUNCATION: HilbertTruncation = HilbertTruncation { n_res: 12, n_atom: 15, basis: Basis::BareFock };

pub fn qubit_frequency(params: &CircuitParams, line: &FluxLine, phi: f64, trunc: &HilbertTruncation) -> Result<f64> {
    Ok(transition_point(&spectrum_at(params, line, phi, trunc, Retention::All)?)?.0)
}

/// Local minima of `f_ge` on the grid, each refined by golden-section search
/// between its grid neighbours.
pub fn locate_minima(params: &CircuitParams, line: &FluxLine, grid: &[f64], trunc: &HilbertTruncation) -> Result<Vec<f64>> {
    let f: Vec<f64> = grid.par_iter().map(|&phi| qubit_frequency(params, line, phi, trunc)).collect::<Result<_>>()?;
    local_minima(&f)
        .into_par_iter()
        .map(|k| golden_section(|phi| qubit_frequency(params, line, phi, trunc), grid[k - 1], grid[k + 1], 1e-6))
        .collect()
}

/// The two flux points of the default window, `(Phi1, Phi2)` in ascending
/// order; anything other than exactly two minima is an error.
pub fn flux_points(params: &CircuitParams, line: &FluxLine, grid: &[f64]) -> Result<[f64; 2]> {
    let m = locate_minima(params, line, grid, &LOCATE_TRUNCATION)?;
    match m[..] {
        [a, b] => Ok([a, b]),
        _ => Err(Error::InvalidParameter(format!("expected two f_ge minima in the sweep window, found {}", m.len()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    pub phi_ext: f64,
    pub f_ge: f64,
    /// `chi_ge(n)` for `n = 0..=n_max`, MHz.
    pub chi: Vec<f64>,
    /// AC-Stark shift of the qubit at `n`, MHz.
    pub stark: Vec<f64>,
}

pub fn ladder(params: &CircuitParams, line: &FluxLine, phi: f64, trunc: &HilbertTruncation, retention: Retention, n_max: usize) -> Result<Ladder> {
    let s = spectrum_at(params, line, phi, trunc, retention)?;
    let chi = (0..=n_max).map(|n| dispersive_shift(&s, n)).collect::<Result<Vec<_>>>()?;
    let stark = (0..=n_max).map(|n| qndsim_core::spectro::ac_stark_shift(&s, n)).collect::<Result<Vec<_>>>()?;
    Ok(Ladder { phi_ext: phi, f_ge: transition_point(&s)?.0, chi, stark })
}

/// Parallel trace synthesis, bit-identical to the core's sequential
/// `simulate_jump_trace`.
pub fn simulate_trace(model: &JumpModel, duration_ns: f64, dt_ns: f64) -> Result<JumpSimulation> {
    let model = model.validated()?;
    let n = sample_count(duration_ns, dt_ns)?;
    let excited = simulate_state_path(&model, n, dt_ns);
    let mut i = vec![0.0; n];
    let mut q = vec![0.0; n];
    excited
        .par_chunks(SEGMENT_LEN)
        .zip(i.par_chunks_mut(SEGMENT_LEN))
        .zip(q.par_chunks_mut(SEGMENT_LEN))
        .enumerate()
        .for_each(|(seg, ((ex, ci), cq))| fill_segment(&model, seg, ex, ci, cq));
    let meta = TraceMeta { sigma: model.sigma, q_g: model.q_g, q_e: model.q_e };
    Ok(JumpSimulation { trace: IqTrace::new(dt_ns, i, q, meta)?, excited })
}

pub fn state_prep(cfg: &ProtocolConfig, shots: usize, seed: u64) -> Result<StatePrepReport> {
    let cfg = cfg.validated()?;
    let outcomes: Vec<ShotOutcome> = (0..shots as u64).into_par_iter().map(|k| run_shot(&cfg, seed, k)).collect();
    StatePrepReport::from_outcomes(&cfg, &outcomes)
}

/// Runs `f` on a pool of `workers` threads (hardware parallelism if `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build().expect("thread pool").install(f)
}
