//! Quantum-jump traces: synthesis from a two-state rate model with Gaussian
//! measurement noise, and analysis by IQ rotation, latching-filter state
//! assignment, dwell statistics, repeated-measurement QND fidelity and the
//! filter-free triggered decay.
//!
//! Rates are in 1/µs, times in ns, quadratures in √photon units. In state
//! sequences `true` means |e⟩.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::constants::{BOLTZMANN, PLANCK};
use crate::mixture::{fit_iq_mixture, rotate};
use crate::stats::{levenberg_marquardt, LmOptions};
use crate::{Error, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Noise is drawn in independent segments of this many samples, each from its
/// own stream, so a trace can be generated in parallel bit-identically.
pub const SEGMENT_LEN: usize = 1 << 16;

pub const DEFAULT_THRESHOLD_SIGMA: f64 = 2.5;

/// Minimum number of complete dwells per state for a rate estimate.
pub const MIN_DWELLS: usize = 30;

/// Minimum number of adjacent window pairs for a QND estimate.
pub const MIN_WINDOW_PAIRS: usize = 100;

/// Minimum number of trigger samples for the triggered-decay fit.
pub const MIN_TRIGGERS: usize = 100;

/// Trigger half-width around `q_e`, in units of sigma.
pub const TRIGGER_HALF_WIDTH: f64 = 0.1;

const US_PER_NS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Start {
    Ground,
    Excited,
    /// Drawn from the stationary population `gamma_up / (gamma_up + gamma_down)`.
    #[default]
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JumpModel {
    /// 1/µs.
    pub gamma_up: f64,
    /// 1/µs.
    pub gamma_down: f64,
    pub q_g: f64,
    pub q_e: f64,
    /// Noise standard deviation per sample and quadrature.
    pub sigma: f64,
    pub seed: u64,
    pub start: Start,
    /// The generated signal axis sits at this angle from Q; zero means the
    /// trace is already Q-aligned.
    pub iq_angle: f64,
}

impl JumpModel {
    pub fn new(gamma_up: f64, gamma_down: f64, q_g: f64, q_e: f64, sigma: f64, seed: u64) -> Self {
        JumpModel {
            gamma_up,
            gamma_down,
            q_g,
            q_e,
            sigma,
            seed,
            start: Start::Stationary,
            iq_angle: 0.0,
        }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.gamma_up >= 0.0 && self.gamma_down >= 0.0)
            || !self.gamma_up.is_finite()
            || !self.gamma_down.is_finite()
        {
            return Err(Error::invalid("jump rates must be finite and non-negative"));
        }
        if self.q_g == self.q_e || !self.q_g.is_finite() || !self.q_e.is_finite() {
            return Err(Error::invalid(
                "pointer centers must be finite and distinct",
            ));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(
                "noise sigma must be finite and non-negative",
            ));
        }
        Ok(self)
    }

    pub fn stationary_excited(&self) -> f64 {
        let total = self.gamma_up + self.gamma_down;
        if total > 0.0 {
            self.gamma_up / total
        } else {
            0.0
        }
    }

    /// Per-sample SNR, `|q_e - q_g| / 2 sigma`.
    pub fn snr(&self) -> f64 {
        (self.q_e - self.q_g).abs() / (2.0 * self.sigma)
    }
}

/// Stream `k` of the model's seed.
pub fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceMeta {
    pub sigma: f64,
    pub q_g: f64,
    pub q_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqTrace {
    pub dt_ns: f64,
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    pub meta: TraceMeta,
}

impl IqTrace {
    pub fn new(dt_ns: f64, i: Vec<f64>, q: Vec<f64>, meta: TraceMeta) -> Result<Self> {
        if !(dt_ns > 0.0) {
            return Err(Error::invalid("trace dt must be positive"));
        }
        if q.is_empty() || i.len() != q.len() {
            return Err(Error::invalid(
                "trace needs equal, non-empty I and Q columns",
            ));
        }
        Ok(IqTrace { dt_ns, i, q, meta })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn duration_ns(&self) -> f64 {
        self.len() as f64 * self.dt_ns
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSimulation {
    pub trace: IqTrace,
    /// True state at each sample instant.
    pub excited: Vec<bool>,
}

/// Continuous-time two-state Markov path with exact exponential holding
/// times, read off at `t_k = k dt`. Uses stream 0.
pub fn simulate_state_path(model: &JumpModel, samples: usize, dt_ns: f64) -> Vec<bool> {
    let mut rng = stream(model.seed, 0);
    let mut excited = match model.start {
        Start::Ground => false,
        Start::Excited => true,
        Start::Stationary => rng.random::<f64>() < model.stationary_excited(),
    };
    let hold = |rng: &mut ChaCha8Rng, excited: bool| -> f64 {
        let rate = if excited {
            model.gamma_down
        } else {
            model.gamma_up
        } * US_PER_NS;
        if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / rate
        } else {
            f64::INFINITY
        }
    };
    let mut path = Vec::with_capacity(samples);
    let mut t_switch = hold(&mut rng, excited);
    for k in 0..samples {
        let t = k as f64 * dt_ns;
        while t >= t_switch {
            excited = !excited;
            t_switch += hold(&mut rng, excited);
        }
        path.push(excited);
    }
    path
}

/// Fills one noise segment; `i` and `q` cover samples
/// `segment * SEGMENT_LEN ..` and have the same length as `excited`.
pub fn fill_segment(
    model: &JumpModel,
    segment: usize,
    excited: &[bool],
    i: &mut [f64],
    q: &mut [f64],
) {
    let mut rng = stream(model.seed, 1 + segment as u64);
    for k in 0..excited.len() {
        let ni: f64 = StandardNormal.sample(&mut rng);
        let nq: f64 = StandardNormal.sample(&mut rng);
        let center = if excited[k] { model.q_e } else { model.q_g };
        let (a, b) = rotate(model.sigma * ni, center + model.sigma * nq, -model.iq_angle);
        i[k] = a;
        q[k] = b;
    }
}

/// Number of samples of a trace of `duration_ns`.
pub fn sample_count(duration_ns: f64, dt_ns: f64) -> Result<usize> {
    if !(dt_ns > 0.0) || !(duration_ns >= dt_ns) {
        return Err(Error::invalid("need dt > 0 and duration >= dt"));
    }
    Ok((duration_ns / dt_ns).floor() as usize)
}

/// Sequential trace generation; the companion crate's parallel driver gives
/// bit-identical output.
pub fn simulate_jump_trace(
    model: &JumpModel,
    duration_ns: f64,
    dt_ns: f64,
) -> Result<JumpSimulation> {
    let model = model.validated()?;
    let n = sample_count(duration_ns, dt_ns)?;
    let excited = simulate_state_path(&model, n, dt_ns);
    let mut i = vec![0.0; n];
    let mut q = vec![0.0; n];
    for (seg, ((ex, ci), cq)) in excited
        .chunks(SEGMENT_LEN)
        .zip(i.chunks_mut(SEGMENT_LEN))
        .zip(q.chunks_mut(SEGMENT_LEN))
        .enumerate()
    {
        fill_segment(&model, seg, ex, ci, cq);
    }
    let meta = TraceMeta {
        sigma: model.sigma,
        q_g: model.q_g,
        q_e: model.q_e,
    };
    Ok(JumpSimulation {
        trace: IqTrace::new(dt_ns, i, q, meta)?,
        excited,
    })
}

/// True when `dt` is not small against the fastest holding time.
pub fn undersampled(model: &JumpModel, dt_ns: f64) -> bool {
    model.gamma_up.max(model.gamma_down) * US_PER_NS * dt_ns > 0.01
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Rotation applied to every sample.
    pub angle: f64,
    /// Rotated Q quadrature.
    pub q: Vec<f64>,
    pub q_g: f64,
    pub q_e: f64,
    /// Pooled width of the two clouds.
    pub sigma: f64,
}

/// Upper bound on the samples used for the mixture fit; longer traces are
/// decimated with a fixed stride.
pub const ALIGN_SAMPLES: usize = 200_000;

/// Rotates the IQ plane so the signal lies along Q. The angle, the centers
/// and the pooled width come from a two-component mixture fit. When the trace
/// metadata carries finite centers they resolve which cloud is |g⟩ (and the
/// sign of the axis); otherwise the more populated cloud is taken as |g⟩.
pub fn align_trace(trace: &IqTrace) -> Result<Alignment> {
    let stride = (trace.len() / ALIGN_SAMPLES).max(1);
    let si: Vec<f64> = trace.i.iter().step_by(stride).copied().collect();
    let sq: Vec<f64> = trace.q.iter().step_by(stride).copied().collect();
    let mix = fit_iq_mixture(&si, &sq, 500)?;
    let base = mix.rotation_angle();
    let rotated_q = |angle: f64, k: usize| rotate(mix.means[k][0], mix.means[k][1], angle).1;
    let (meta_g, meta_e) = (trace.meta.q_g, trace.meta.q_e);
    let (angle, g_idx) = if meta_g.is_finite() && meta_e.is_finite() {
        let mut best = (f64::INFINITY, base, 0);
        for angle in [base, base + core::f64::consts::PI] {
            for g in 0..2 {
                let cost = (rotated_q(angle, g) - meta_g).powi(2)
                    + (rotated_q(angle, 1 - g) - meta_e).powi(2);
                if cost < best.0 {
                    best = (cost, angle, g);
                }
            }
        }
        (best.1, best.2)
    } else {
        (base, usize::from(mix.weights[1] > mix.weights[0]))
    };
    let q = trace
        .i
        .iter()
        .zip(&trace.q)
        .map(|(&a, &b)| rotate(a, b, angle).1)
        .collect();
    Ok(Alignment {
        angle,
        q,
        q_g: rotated_q(angle, g_idx),
        q_e: rotated_q(angle, 1 - g_idx),
        sigma: mix.sigma,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatchOutput {
    pub excited: Vec<bool>,
    /// The two ±threshold windows overlap; samples inside both never switch.
    pub degenerate: bool,
}

/// Two-window latching filter on a Q-aligned sequence. Starts in the nearer
/// state; switches only on a sample inside the other state's window and not
/// inside the current state's window.
pub fn latching_filter(
    q: &[f64],
    q_g: f64,
    q_e: f64,
    sigma: f64,
    threshold_sigma: f64,
) -> Result<LatchOutput> {
    if q.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if q_g == q_e || !(sigma > 0.0) || !(threshold_sigma > 0.0) {
        return Err(Error::invalid(
            "latching filter needs distinct centers and positive widths",
        ));
    }
    let w = threshold_sigma * sigma;
    let degenerate = (q_e - q_g).abs() < 2.0 * w;
    let mut state = (q[0] - q_e).abs() < (q[0] - q_g).abs();
    let excited = q
        .iter()
        .map(|&x| {
            let in_g = (x - q_g).abs() < w;
            let in_e = (x - q_e).abs() < w;
            if state && in_g && !in_e {
                state = false;
            } else if !state && in_e && !in_g {
                state = true;
            }
            state
        })
        .collect();
    Ok(LatchOutput {
        excited,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateEstimate {
    /// 1/µs.
    pub gamma_up: f64,
    pub gamma_up_err: f64,
    /// 1/µs.
    pub gamma_down: f64,
    pub gamma_down_err: f64,
    pub p_e: f64,
    pub qnd_fidelity: Option<f64>,
}

impl RateEstimate {
    pub fn gamma_total(&self) -> f64 {
        self.gamma_up + self.gamma_down
    }

    pub fn gamma_total_err(&self) -> f64 {
        self.gamma_up_err.hypot(self.gamma_down_err)
    }
}

/// Log-spaced dwell histogram.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DwellHistogram {
    /// Bin edges in µs (`counts.len() + 1` entries).
    pub edges_us: Vec<f64>,
    pub counts: Vec<u64>,
}

pub const BINS_PER_DECADE: usize = 20;

impl DwellHistogram {
    pub fn from_dwells(dwells_us: &[f64], min_us: f64) -> Self {
        let max = dwells_us.iter().copied().fold(min_us, f64::max);
        let decades = libm::log10(max / min_us).max(0.0);
        let bins = ((decades * BINS_PER_DECADE as f64).ceil() as usize).max(1);
        let edges_us: Vec<f64> = (0..=bins)
            .map(|b| min_us * libm::pow(10.0, b as f64 / BINS_PER_DECADE as f64))
            .collect();
        let mut counts = vec![0u64; bins];
        for &d in dwells_us {
            let b = (libm::log10(d / min_us) * BINS_PER_DECADE as f64).floor();
            let b = if b < 0.0 {
                0
            } else {
                (b as usize).min(bins - 1)
            };
            counts[b] += 1;
        }
        DwellHistogram { edges_us, counts }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwellReport {
    pub rates: RateEstimate,
    pub ground: DwellHistogram,
    pub excited: DwellHistogram,
    pub ground_dwells: usize,
    pub excited_dwells: usize,
}

/// Run lengths of a state sequence as `(state, length)`.
pub fn runs(states: &[bool]) -> Vec<(bool, usize)> {
    let mut out: Vec<(bool, usize)> = Vec::new();
    for &s in states {
        match out.last_mut() {
            Some((last, len)) if *last == s => *len += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

/// Exponential-mean rates from complete dwells; the censored first and last
/// intervals are dropped. `p_e` is the fraction of samples in |e⟩.
pub fn dwell_statistics(states: &[bool], dt_ns: f64) -> Result<DwellReport> {
    if !(dt_ns > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let r = runs(states);
    let inner = if r.len() > 2 {
        &r[1..r.len() - 1]
    } else {
        &r[..0]
    };
    let dt_us = dt_ns * US_PER_NS;
    let dwells = |want: bool| -> Vec<f64> {
        inner
            .iter()
            .filter(|(s, _)| *s == want)
            .map(|&(_, len)| len as f64 * dt_us)
            .collect()
    };
    let (g, e) = (dwells(false), dwells(true));
    for (d, state) in [(&g, 'g'), (&e, 'e')] {
        if d.len() < MIN_DWELLS {
            return Err(Error::InsufficientDwells {
                state,
                needed: MIN_DWELLS,
                got: d.len(),
            });
        }
    }
    let rate = |d: &[f64]| {
        let gamma = d.len() as f64 / d.iter().sum::<f64>();
        (gamma, gamma / (d.len() as f64).sqrt())
    };
    let (gamma_up, gamma_up_err) = rate(&g);
    let (gamma_down, gamma_down_err) = rate(&e);
    let p_e = states.iter().filter(|&&s| s).count() as f64 / states.len() as f64;
    Ok(DwellReport {
        rates: RateEstimate {
            gamma_up,
            gamma_up_err,
            gamma_down,
            gamma_down_err,
            p_e,
            qnd_fidelity: None,
        },
        ground: DwellHistogram::from_dwells(&g, dt_us),
        excited: DwellHistogram::from_dwells(&e, dt_us),
        ground_dwells: g.len(),
        excited_dwells: e.len(),
    })
}

/// Two-level Boltzmann population of |e⟩.
pub fn thermal_population(f_ge_ghz: f64, t_mk: f64) -> Result<f64> {
    if !(f_ge_ghz > 0.0) || !(t_mk >= 0.0) {
        return Err(Error::invalid(
            "thermal population needs f_ge > 0 and T >= 0",
        ));
    }
    let x = PLANCK * f_ge_ghz * 1e9 / (BOLTZMANN * t_mk * 1e-3);
    Ok(1.0 / (1.0 + libm::exp(x)))
}

/// Inverse of [`thermal_population`], in mK.
pub fn effective_temperature(p_e: f64, f_ge_ghz: f64) -> Result<f64> {
    if p_e >= 0.5 {
        return Err(Error::Unphysical(
            "|e> population >= 0.5 has no positive temperature".into(),
        ));
    }
    if !(p_e > 0.0) || !(f_ge_ghz > 0.0) {
        return Err(Error::invalid(
            "effective temperature needs 0 < p_e and f_ge > 0",
        ));
    }
    Ok(PLANCK * f_ge_ghz * 1e9 / (BOLTZMANN * libm::log(1.0 / p_e - 1.0)) * 1e3)
}

/// Averages `q` over consecutive windows of `tau_m` and assigns each window
/// by the midpoint threshold (`true` = |e⟩).
pub fn window_assignments(
    q: &[f64],
    dt_ns: f64,
    tau_m_ns: f64,
    q_g: f64,
    q_e: f64,
) -> Result<Vec<bool>> {
    if !(dt_ns > 0.0) || !(tau_m_ns > 0.0) || q_g == q_e {
        return Err(Error::invalid(
            "window assignment needs dt, tau_m > 0 and distinct centers",
        ));
    }
    let w = ((tau_m_ns / dt_ns).round() as usize).max(1);
    let mid = 0.5 * (q_g + q_e);
    let e_above = q_e > q_g;
    Ok(q.chunks_exact(w)
        .map(|c| (c.iter().sum::<f64>() / w as f64 > mid) == e_above)
        .collect())
}

/// `Q = (P_g|g + P_e|e) / 2` over adjacent window pairs. A state that never
/// opens a pair is left out of the average.
pub fn qnd_from_windows(windows: &[bool]) -> Result<f64> {
    let pairs = windows.len().saturating_sub(1);
    if pairs < MIN_WINDOW_PAIRS {
        return Err(Error::InsufficientData {
            needed: MIN_WINDOW_PAIRS + 1,
            got: windows.len(),
        });
    }
    let mut same = [0usize; 2];
    let mut total = [0usize; 2];
    for w in windows.windows(2) {
        let s = usize::from(w[0]);
        total[s] += 1;
        same[s] += usize::from(w[0] == w[1]);
    }
    let terms: Vec<f64> = (0..2)
        .filter(|&s| total[s] > 0)
        .map(|s| same[s] as f64 / total[s] as f64)
        .collect();
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

pub fn qnd_fidelity(q: &[f64], dt_ns: f64, tau_m_ns: f64, q_g: f64, q_e: f64) -> Result<f64> {
    qnd_from_windows(&window_assignments(q, dt_ns, tau_m_ns, q_g, q_e)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecayFit {
    /// `gamma_up + gamma_down`, 1/µs.
    pub gamma_total: f64,
    pub gamma_total_err: f64,
    pub amplitude: f64,
    /// Steady-state |e⟩ population the average decays to.
    pub offset: f64,
    pub triggers: usize,
    pub horizon_ns: f64,
}

const DECAY_BINS: usize = 100;
const DECAY_BLOCKS: usize = 10;

/// Average |e⟩ population after each trigger, in `DECAY_BINS` bins of `w`
/// samples; `prefix` is the running sum of the population estimate.
fn triggered_average(prefix: &[f64], triggers: &[usize], w: usize) -> Vec<f64> {
    let mut avg = vec![0.0; DECAY_BINS];
    for &k in triggers {
        for (b, a) in avg.iter_mut().enumerate() {
            let lo = k + 1 + b * w;
            *a += prefix[lo + w] - prefix[lo];
        }
    }
    let norm = (triggers.len() * w) as f64;
    avg.iter_mut().for_each(|a| *a /= norm);
    avg
}

fn fit_decay(avg: &[f64], t_ns: &[f64], gamma0: f64) -> Result<[f64; 3]> {
    let b0 = avg[avg.len() - 1];
    let a0 = avg[0] - b0;
    let fit = levenberg_marquardt(
        |p, r| {
            for k in 0..avg.len() {
                r[k] = p[0] * libm::exp(-p[1] * t_ns[k]) + p[2] - avg[k];
            }
            Ok(())
        },
        &[a0, gamma0, b0],
        avg.len(),
        &LmOptions {
            lower: Some(vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]),
            ..Default::default()
        },
    )?;
    if !(fit.x[1] > 0.0) || !fit.x.iter().all(|v| v.is_finite()) {
        return Err(Error::FitDiverged {
            reason: "non-positive decay rate".into(),
            initializations: 1,
        });
    }
    Ok([fit.x[0], fit.x[1], fit.x[2]])
}

/// Filter-free total decay rate: the trace is converted to an |e⟩ population
/// estimate `(Q - q_g) / (q_e - q_g)`, averaged after every sample within
/// ±0.1σ of `q_e`, and fitted by `A exp(-Γ t) + B`. The horizon adapts to
/// five decay times; the error is the spread of fits over contiguous blocks
/// of triggers.
pub fn free_decay_rate(q: &[f64], dt_ns: f64, q_g: f64, q_e: f64, sigma: f64) -> Result<DecayFit> {
    if !(dt_ns > 0.0) || q_g == q_e || !(sigma > 0.0) {
        return Err(Error::invalid(
            "triggered decay needs dt > 0, distinct centers and sigma > 0",
        ));
    }
    let n = q.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let scale = 1.0 / (q_e - q_g);
    let mut acc = 0.0;
    for &x in q {
        acc += (x - q_g) * scale;
        prefix.push(acc);
    }
    let half = TRIGGER_HALF_WIDTH * sigma;
    let all_triggers: Vec<usize> = (0..n).filter(|&k| (q[k] - q_e).abs() < half).collect();
    let mut horizon = (n / 50).clamp(DECAY_BINS, 20_000);
    let mut gamma_ns = 5.0 / (horizon as f64 * dt_ns);
    let mut result = None;
    for _ in 0..6 {
        let w = (horizon / DECAY_BINS).max(1);
        let span = 1 + DECAY_BINS * w;
        let triggers: Vec<usize> = all_triggers
            .iter()
            .copied()
            .filter(|&k| k + span < n + 1)
            .collect();
        if triggers.len() < MIN_TRIGGERS {
            return Err(Error::InsufficientTriggers {
                needed: MIN_TRIGGERS,
                got: triggers.len(),
            });
        }
        let t_ns: Vec<f64> = (0..DECAY_BINS)
            .map(|b| (1.0 + (b * w) as f64 + 0.5 * (w as f64 - 1.0)) * dt_ns)
            .collect();
        let p = fit_decay(&triggered_average(&prefix, &triggers, w), &t_ns, gamma_ns)?;
        gamma_ns = p[1];
        result = Some((p, triggers, w, t_ns));
        let next = ((5.0 / (gamma_ns * dt_ns)).round() as usize)
            .clamp(DECAY_BINS, (n / 4).max(DECAY_BINS));
        let change = (next as f64 / horizon as f64 - 1.0).abs();
        horizon = next;
        if change < 0.2 {
            break;
        }
    }
    let (p, triggers, w, t_ns) = result.expect("at least one pass");
    let per_block = triggers.len() / DECAY_BLOCKS;
    let mut blocks = Vec::with_capacity(DECAY_BLOCKS);
    if per_block >= MIN_TRIGGERS / DECAY_BLOCKS {
        for b in 0..DECAY_BLOCKS {
            let sel = &triggers[b * per_block..(b + 1) * per_block];
            if let Ok(pb) = fit_decay(&triggered_average(&prefix, sel, w), &t_ns, p[1]) {
                blocks.push(pb[1]);
            }
        }
    }
    let err_ns = if blocks.len() >= 3 {
        let m = blocks.iter().sum::<f64>() / blocks.len() as f64;
        let var = blocks.iter().map(|g| (g - m) * (g - m)).sum::<f64>() / (blocks.len() - 1) as f64;
        (var / blocks.len() as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(DecayFit {
        gamma_total: p[1] / US_PER_NS,
        gamma_total_err: err_ns / US_PER_NS,
        amplitude: p[0],
        offset: p[2],
        triggers: triggers.len(),
        horizon_ns: (DECAY_BINS * w) as f64 * dt_ns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnalysisOptions {
    pub threshold_sigma: f64,
    /// Window for the repeated-measurement QND estimate; skipped when absent.
    pub tau_m_ns: Option<f64>,
    /// Run the filter-free triggered decay fit.
    pub free_decay: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            threshold_sigma: DEFAULT_THRESHOLD_SIGMA,
            tau_m_ns: None,
            free_decay: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpAnalysis {
    pub angle: f64,
    pub q_g: f64,
    pub q_e: f64,
    pub sigma: f64,
    pub degenerate: bool,
    pub dwell: DwellReport,
    pub free_decay: Option<DecayFit>,
}

/// Full pipeline: rotate, latch, dwell statistics, and optionally the QND
/// estimate and the triggered decay.
pub fn analyze_trace(trace: &IqTrace, opts: &AnalysisOptions) -> Result<JumpAnalysis> {
    let al = align_trace(trace)?;
    let latch = latching_filter(&al.q, al.q_g, al.q_e, al.sigma, opts.threshold_sigma)?;
    let mut dwell = dwell_statistics(&latch.excited, trace.dt_ns)?;
    if let Some(tau) = opts.tau_m_ns {
        dwell.rates.qnd_fidelity = Some(qnd_fidelity(&al.q, trace.dt_ns, tau, al.q_g, al.q_e)?);
    }
    let free_decay = if opts.free_decay {
        Some(free_decay_rate(
            &al.q,
            trace.dt_ns,
            al.q_g,
            al.q_e,
            al.sigma,
        )?)
    } else {
        None
    };
    Ok(JumpAnalysis {
        angle: al.angle,
        q_g: al.q_g,
        q_e: al.q_e,
        sigma: al.sigma,
        degenerate: latch.degenerate,
        dwell,
        free_decay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(up: f64, down: f64, sigma: f64, seed: u64) -> JumpModel {
        JumpModel::new(up, down, 3.0, -3.0, sigma, seed)
    }

    #[test]
    fn zero_rates_constant_mean() {
        let mut m = model(0.0, 0.0, 1.0, 1);
        m.start = Start::Ground;
        let sim = simulate_jump_trace(&m, 1e6, 100.0).unwrap();
        let n = sim.trace.len() as f64;
        let mean = sim.trace.q.iter().sum::<f64>() / n;
        assert!((mean - 3.0).abs() < 3.0 / n.sqrt());
        assert!(sim.excited.iter().all(|&e| !e));
    }

    #[test]
    fn symmetric_rates_half_occupancy() {
        let sim = simulate_jump_trace(&model(0.1, 0.1, 1.0, 2), 1e8, 100.0).unwrap();
        let p = sim.excited.iter().filter(|&&e| e).count() as f64 / sim.excited.len() as f64;
        // ~ 1e4 independent dwells
        assert!((p - 0.5).abs() < 0.02, "{p}");
    }

    #[test]
    fn generator_dwell_mean() {
        // true dwells from the generator itself, 1 s at Γ↓ = 1/100 µs
        let m = model(0.01, 0.01, 1.0, 3);
        let path = simulate_state_path(&m, 10_000_000, 100.0);
        let rep = dwell_statistics(&path, 100.0).unwrap();
        let z = (rep.rates.gamma_down - 0.01) / rep.rates.gamma_down_err;
        assert!(z.abs() < 3.0, "{:?}", rep.rates);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_jump_trace(&model(0.01, 0.02, 1.0, 9), 1e7, 100.0).unwrap();
        let b = simulate_jump_trace(&model(0.01, 0.02, 1.0, 9), 1e7, 100.0).unwrap();
        assert_eq!(a, b);
        let c = simulate_jump_trace(&model(0.01, 0.02, 1.0, 10), 1e7, 100.0).unwrap();
        assert_ne!(a.trace.q, c.trace.q);
    }

    #[test]
    fn noiseless_filter_is_exact() {
        let truth = [false, false, true, true, true, false, true, false, false];
        let q: Vec<f64> = truth.iter().map(|&e| if e { -3.0 } else { 3.0 }).collect();
        let out = latching_filter(&q, 3.0, -3.0, 0.5, 2.5).unwrap();
        assert_eq!(out.excited, truth);
        assert!(!out.degenerate);
    }

    #[test]
    fn outlier_does_not_switch() {
        let q = [3.0, 3.1, 40.0, -40.0, 2.9];
        let out = latching_filter(&q, 3.0, -3.0, 1.0, 2.5).unwrap();
        assert!(out.excited.iter().all(|&e| !e));
    }

    #[test]
    fn overlapping_windows_flagged_and_latched() {
        let out = latching_filter(&[1.0, 0.0, 0.1, -1.0], 1.0, -1.0, 1.0, 2.5).unwrap();
        assert!(out.degenerate);
        assert!(out.excited.iter().all(|&e| !e));
    }

    #[test]
    fn whole_trace_single_dwell() {
        let err = dwell_statistics(&vec![false; 1000], 100.0).unwrap_err();
        assert!(matches!(err, Error::InsufficientDwells { .. }));
    }

    #[test]
    fn thermal_examples() {
        assert_eq!(thermal_population(1.0, 0.0).unwrap(), 0.0);
        // h f = k_B T
        let t_mk = PLANCK * 1e9 / BOLTZMANN * 1e3;
        assert!(
            (thermal_population(1.0, t_mk).unwrap() - 1.0 / (1.0 + core::f64::consts::E)).abs()
                < 1e-14
        );
        // h f / k_B T = 1.548 at 1 GHz, 31 mK
        let p = thermal_population(1.0, 31.0).unwrap();
        assert!((p - 1.0 / (1.0 + 1.548_f64.exp())).abs() < 2e-4, "{p}");
        assert!((effective_temperature(p, 1.0).unwrap() - 31.0).abs() < 1e-9);
        assert!(matches!(
            effective_temperature(0.5, 1.0),
            Err(Error::Unphysical(_))
        ));
    }

    #[test]
    fn qnd_perfect_without_noise_or_jumps() {
        let q = vec![3.0; 100_000];
        assert_eq!(qnd_fidelity(&q, 100.0, 400.0, 3.0, -3.0).unwrap(), 1.0);
        assert!(matches!(
            qnd_fidelity(&q[..400], 100.0, 400.0, 3.0, -3.0),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn rotation_recovered() {
        let mut m = model(0.05, 0.2, 0.5, 4);
        m.iq_angle = 0.7;
        let sim = simulate_jump_trace(&m, 2e6, 100.0).unwrap();
        let al = align_trace(&sim.trace).unwrap();
        assert!(
            (al.q_g - 3.0).abs() < 0.02 && (al.q_e + 3.0).abs() < 0.05,
            "{al:?}"
        );
        assert!((al.sigma - 0.5).abs() < 0.01);
    }

    #[test]
    fn free_decay_matches_generator() {
        let m = model(0.05, 0.2, 0.5, 5);
        let sim = simulate_jump_trace(&m, 2e8, 100.0).unwrap();
        let fit = free_decay_rate(&sim.trace.q, 100.0, 3.0, -3.0, 0.5).unwrap();
        assert!((fit.gamma_total - 0.25).abs() < 0.1 * 0.25, "{fit:?}");
        assert!((fit.offset - 0.2).abs() < 0.02, "{fit:?}");
    }

    #[test]
    fn dwell_histogram_is_log_spaced() {
        let h = DwellHistogram::from_dwells(&[0.1, 1.0, 10.0], 0.1);
        assert_eq!(h.counts.len(), 40);
        assert!((h.edges_us[20] - 1.0).abs() < 1e-12);
        assert_eq!(h.counts.iter().sum::<u64>(), 3);
    }
}
