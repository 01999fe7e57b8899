//! TOML run configuration. Every section has defaults, unknown keys are
//! rejected, and the parsed form re-serializes losslessly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qndsim_core::feedback::{Target, DEFAULT_PI_PULSE_NS};
use qndsim_core::readout::ReadoutSettings;
use qndsim_core::{Basis, CircuitParams, FluxLine, HilbertTruncation, Retention};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Levels labeled per diagonalization; unset means the lowest half for
    /// spectra and all levels for photon-number ladders.
    pub retention: Option<Retention>,
    pub circuit: CircuitParams,
    pub truncation: HilbertTruncation,
    pub flux_line: FluxLine,
    pub flux_sweep: FluxSweep,
    pub readout: ReadoutSettings,
    pub chi: ChiConfig,
    pub snr_time: SnrTimeConfig,
    pub jumps: JumpsConfig,
    pub state_prep: StatePrepConfig,
    pub calibrate: CalibrateConfig,
    pub fit: FitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            output_dir: PathBuf::from("out"),
            seeds: vec![1],
            retention: None,
            circuit: CircuitParams::default(),
            truncation: HilbertTruncation::normal_mode(),
            flux_line: FluxLine::default(),
            flux_sweep: FluxSweep::default(),
            readout: ReadoutSettings::default(),
            chi: ChiConfig::default(),
            snr_time: SnrTimeConfig::default(),
            jumps: JumpsConfig::default(),
            state_prep: StatePrepConfig::default(),
            calibrate: CalibrateConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

/// Grid of external flux in flux quanta, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluxSweep {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    /// Photon numbers `0..matrix_photons` at which `<n,e|O|n,g>` is reported.
    pub matrix_photons: usize,
}

impl Default for FluxSweep {
    fn default() -> Self {
        FluxSweep { start: -1.0, stop: 1.0, steps: 100, matrix_photons: 3 }
    }
}

impl FluxSweep {
    pub fn grid(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n).map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChiConfig {
    pub n_max: usize,
    /// Photon-number ladders need far more resonator levels than the
    /// spectrum, hence a separate truncation.
    pub truncation: HilbertTruncation,
}

impl Default for ChiConfig {
    fn default() -> Self {
        ChiConfig { n_max: 150, truncation: HilbertTruncation::bare_fock() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnrTimeConfig {
    pub target_snr: f64,
    pub n_bars: Vec<f64>,
    /// Fixed `chi_ge` per flux point (MHz); computed from the spectrum when
    /// absent.
    pub chi_mhz: Option<[f64; 2]>,
    /// Power gain of the preamplifier for the amplified column.
    pub amplifier_gain_db: f64,
}

impl Default for SnrTimeConfig {
    fn default() -> Self {
        SnrTimeConfig {
            target_snr: 3.0,
            n_bars: vec![10.0, 18.0, 36.0, 54.0, 74.0, 91.0, 114.0, 130.0, 150.0],
            chi_mhz: None,
            amplifier_gain_db: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpsConfig {
    /// 1/µs.
    pub gamma_up: f64,
    /// 1/µs.
    pub gamma_down: f64,
    pub q_g: f64,
    pub q_e: f64,
    pub sigma: f64,
    pub duration_ns: f64,
    pub dt_ns: f64,
    pub iq_angle: f64,
    pub threshold_sigma: f64,
    /// Window of the repeated-measurement QND estimate.
    pub tau_m_ns: Option<f64>,
    pub free_decay: bool,
}

impl Default for JumpsConfig {
    fn default() -> Self {
        JumpsConfig {
            gamma_up: 1.0 / 300.0,
            gamma_down: 1.0 / 80.0,
            q_g: 3.0,
            q_e: -3.0,
            sigma: 1.0,
            duration_ns: 1e9,
            dt_ns: 100.0,
            iq_angle: 0.0,
            threshold_sigma: 2.5,
            tau_m_ns: None,
            free_decay: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatePrepConfig {
    pub targets: Vec<Target>,
    pub shots: usize,
    /// Readout window and photon number override `[readout]` when set.
    pub tau_m_ns: Option<f64>,
    pub n_bar: Option<f64>,
    pub latency_ns: f64,
    pub pi_pulse_duration_ns: f64,
    pub pi_pulse_error: f64,
    /// 1/µs.
    pub gamma_up: f64,
    /// 1/µs.
    pub gamma_down: f64,
    pub leakage_to_f: f64,
    /// Dispersive shift entering the window SNR, MHz.
    pub chi_mhz: f64,
    /// Window SNR override.
    pub snr: Option<f64>,
    pub initial_excited: Option<f64>,
}

impl Default for StatePrepConfig {
    fn default() -> Self {
        StatePrepConfig {
            targets: vec![Target::G, Target::E],
            shots: 20_000,
            tau_m_ns: Some(560.0),
            n_bar: Some(74.0),
            latency_ns: qndsim_core::constants::FEEDBACK_LATENCY_NS,
            pi_pulse_duration_ns: DEFAULT_PI_PULSE_NS,
            pi_pulse_error: 0.0,
            gamma_up: 1.0 / 80.0,
            gamma_down: 1.0 / 20.0,
            leakage_to_f: 0.01,
            chi_mhz: -1.21,
            snr: None,
            initial_excited: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    /// Qubit shift per circulating photon used to convert Stark shifts, MHz.
    pub chi_per_photon_mhz: f64,
    /// Dispersive shift of the phase-response model, MHz.
    pub chi_mhz: f64,
    /// Signed self-Kerr of the phase-response model, MHz per photon.
    pub kerr_mhz: f64,
    pub detuning_span_mhz: f64,
    pub detuning_steps: usize,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            chi_per_photon_mhz: -1.21,
            chi_mhz: -1.21,
            kerr_mhz: -qndsim_core::spectro::default_self_kerr_khz() * 1e-3,
            detuning_span_mhz: 6.0,
            detuning_steps: 241,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Hold `L_s` at its configured value instead of letting it move ±5 %.
    pub fix_l_s: bool,
    pub truncation: HilbertTruncation,
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { fix_l_s: false, truncation: HilbertTruncation { n_res: 12, n_atom: 15, basis: Basis::BareFock }, max_iter: 100 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validated()
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validated(mut self) -> Result<Self, CliError> {
        let bad = |m: String| CliError::Config(m);
        if self.version != CONFIG_VERSION {
            return Err(bad(format!("unsupported config version {}", self.version)));
        }
        self.circuit = self.circuit.validated()?;
        for t in [self.truncation, self.chi.truncation, self.fit.truncation] {
            HilbertTruncation::new(t.n_res, t.n_atom, t.basis)?;
        }
        self.readout = self.readout.validated()?;
        if !(self.flux_line.ratio.is_finite() && self.flux_line.offset.is_finite()) {
            return Err(bad("flux line must be finite".into()));
        }
        if !(self.flux_sweep.start.is_finite() && self.flux_sweep.stop.is_finite()) {
            return Err(bad("flux sweep bounds must be finite".into()));
        }
        if self.seeds.is_empty() {
            return Err(bad("at least one seed is required".into()));
        }
        if !(self.snr_time.target_snr > 0.0) || self.snr_time.n_bars.iter().any(|n| !(*n > 0.0)) {
            return Err(bad("snr_time needs a positive target and positive photon numbers".into()));
        }
        if !(self.snr_time.amplifier_gain_db >= 0.0) || !self.snr_time.amplifier_gain_db.is_finite() {
            return Err(bad("snr_time.amplifier_gain_db must be finite and >= 0".into()));
        }
        let j = &self.jumps;
        if !(j.dt_ns > 0.0) || !(j.duration_ns >= j.dt_ns) || !(j.threshold_sigma > 0.0) || !(j.sigma > 0.0) {
            return Err(bad("jumps needs dt > 0, duration >= dt, sigma > 0 and threshold > 0".into()));
        }
        if self.state_prep.shots == 0 || self.state_prep.targets.is_empty() {
            return Err(bad("state_prep needs shots >= 1 and at least one target".into()));
        }
        if self.calibrate.detuning_steps < 2 || !(self.calibrate.detuning_span_mhz > 0.0) {
            return Err(bad("calibrate needs at least 2 detuning steps over a positive span".into()));
        }
        Ok(self)
    }

    /// Seeds to run: the `--seed` override or the configured list.
    pub fn seeds_with(&self, seed: Option<u64>) -> Vec<u64> {
        seed.map_or_else(|| self.seeds.clone(), |s| vec![s])
    }

    pub fn spectrum_retention(&self) -> Retention {
        self.retention.unwrap_or_default()
    }

    pub fn ladder_retention(&self) -> Retention {
        self.retention.unwrap_or(Retention::All)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("[circuit]\nq = 2.0"), Err(CliError::Config(_))));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("seeds = [4, 5]\n[flux_sweep]\nsteps = 7\n[truncation]\nn_res = 10\nn_atom = 8\nbasis = \"bare_fock\"\n").unwrap();
        assert_eq!(cfg.seeds, vec![4, 5]);
        assert_eq!(cfg.flux_sweep.grid().len(), 7);
        assert_eq!(cfg.truncation.basis, Basis::BareFock);
        assert_eq!(cfg.circuit, CircuitParams::default());
    }

    #[test]
    fn retention_forms() {
        let cfg = RunConfig::from_toml("retention = \"all\"").unwrap();
        assert_eq!(cfg.retention, Some(Retention::All));
        let cfg = RunConfig::from_toml("retention = { fraction = 0.25 }").unwrap();
        assert_eq!(cfg.retention, Some(Retention::Fraction(0.25)));
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("[circuit]\nl = -1.0"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("seeds = []"), Err(CliError::Config(_))));
    }
}
