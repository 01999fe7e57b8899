//! One function per subcommand: run the pipeline, write CSVs, return the
//! written paths.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use qndsim_core::feedback::{ProtocolConfig, StatePrepReport, Target};
use qndsim_core::jumps::{analyze_trace, undersampled, AnalysisOptions, DwellHistogram, JumpModel};
use qndsim_core::mixture::Histogram;
use qndsim_core::readout::{
    amplified_noise, calibrate_photon_number, efficiency_report, max_phase_separation, measurement_time_for_snr, phase_response, snr,
    PhaseModel, ReadoutSettings,
};
use qndsim_core::stats::{levenberg_marquardt, LmOptions};
use qndsim_core::spectro::{ac_stark_shift, dispersive_shift, inherited_nonlinearity, transition_point};
use qndsim_core::{AtomLevel, CircuitParams, Error};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{num, read_numeric_csv, read_trace, write_trace, CsvOut, Provenance};
use crate::pipeline::{flux_points, flux_sweep, ladder, simulate_trace, spectrum_at, state_prep};

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub prov: Provenance,
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a RunConfig, out: Option<PathBuf>, seed: Option<u64>) -> Self {
        Ctx { cfg, out: out.unwrap_or_else(|| cfg.output_dir.clone()), seed, prov: Provenance::new(cfg.hash(), seed) }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

const FLUX_POINT_NAMES: [&str; 2] = ["phi1", "phi2"];

pub fn spectrum(ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.cfg;
    let grid = cfg.flux_sweep.grid();
    if grid.len() < 3 {
        return Err(CliError::Usage("flux sweep needs at least 3 steps".into()));
    }
    let mp = cfg.flux_sweep.matrix_photons;
    let points = flux_sweep(&cfg.circuit, &cfg.flux_line, &grid, &cfg.truncation, cfg.spectrum_retention(), mp)?;
    let mut t = CsvOut::create(
        &ctx.path("transitions.csv"),
        &ctx.prov,
        &[],
        &["flux_ext", "f_ge_GHz", "f_gf_GHz", "phi_s", "chi0_MHz", "ambiguous_labels"],
    )?;
    for p in &points {
        t.row([num(p.phi_ext), num(p.f_ge), num(p.f_gf), num(p.phi_s), num(p.chi0), p.ambiguous.to_string()])?;
    }
    let mut written = vec![t.finish()?];
    if mp > 0 {
        let mut m = CsvOut::create(&ctx.path("matrix_elements.csv"), &ctx.prov, &[], &["flux_ext", "n", "|q_r|", "|phi_a|", "|q_a|"])?;
        for p in &points {
            for (n, e) in p.matrix_elements.iter().enumerate() {
                m.row([num(p.phi_ext), n.to_string(), num(e[0]), num(e[1]), num(e[2])])?;
            }
        }
        written.push(m.finish()?);
    }

    let minima = flux_points(&cfg.circuit, &cfg.flux_line, &grid)?;
    let spectra = minima
        .par_iter()
        .map(|&phi| spectrum_at(&cfg.circuit, &cfg.flux_line, phi, &cfg.truncation, cfg.spectrum_retention()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut m = CsvOut::create(&ctx.path("flux_points.csv"), &ctx.prov, &[], &["point", "flux_ext", "phi_s", "f_ge_GHz", "f_gf_GHz", "chi0_MHz"])?;
    for ((name, &phi), s) in FLUX_POINT_NAMES.iter().zip(&minima).zip(&spectra) {
        let (f_ge, f_gf) = transition_point(s)?;
        m.row([name.to_string(), num(phi), num(cfg.flux_line.bias(phi).phi_s()), num(f_ge), num(f_gf), num(dispersive_shift(s, 0)?)])?;
    }
    written.push(m.finish()?);
    let mut d = CsvOut::create(&ctx.path("dressed_spectrum.csv"), &ctx.prov, &[], &["flux_ext", "n", "i", "energy_GHz", "overlap", "ambiguous"])?;
    for (&phi, s) in minima.iter().zip(&spectra) {
        for l in &s.levels {
            d.row([num(phi), l.label.n.to_string(), l.label.i.to_string(), num(l.energy), num(l.overlap), l.ambiguous.to_string()])?;
        }
    }
    written.push(d.finish()?);
    Ok(written)
}

fn default_grid(cfg: &RunConfig) -> Vec<f64> {
    let g = cfg.flux_sweep.grid();
    if g.len() >= 3 { g } else { crate::config::FluxSweep::default().grid() }
}

pub fn chi(ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.cfg;
    let n_max = cfg.chi.n_max;
    let pts = flux_points(&cfg.circuit, &cfg.flux_line, &default_grid(cfg))?;
    let mut written = Vec::new();
    for (name, &phi) in FLUX_POINT_NAMES.iter().zip(&pts) {
        let s = spectrum_at(&cfg.circuit, &cfg.flux_line, phi, &cfg.chi.truncation, cfg.ladder_retention())?;
        let extra = [("flux_ext", num(phi))];
        let mut w = CsvOut::create(&ctx.path(&format!("chi_{name}.csv")), &ctx.prov, &extra, &["n", "chi_MHz", "stark_MHz"])?;
        for n in 0..=n_max {
            w.row([n.to_string(), num(dispersive_shift(&s, n)?), num(ac_stark_shift(&s, n)?)])?;
        }
        written.push(w.finish()?);
        let mut a = CsvOut::create(&ctx.path(&format!("nonlinearity_{name}.csv")), &ctx.prov, &extra, &["n", "alpha_g_Hz", "alpha_e_Hz"])?;
        for n in 1..n_max {
            a.row([
                n.to_string(),
                num(inherited_nonlinearity(&s, AtomLevel::G, n)?),
                num(inherited_nonlinearity(&s, AtomLevel::E, n)?),
            ])?;
        }
        written.push(a.finish()?);
    }
    Ok(written)
}

/// Linear interpolation of `chi(n)` at a real photon number.
fn interpolate(chi: &[f64], n_bar: f64) -> Result<f64, Error> {
    let lo = n_bar.floor();
    if lo < 0.0 || lo as usize + 1 >= chi.len() {
        return Err(Error::TruncationEdge { n: n_bar.ceil() as usize, max: chi.len().saturating_sub(1) });
    }
    let k = lo as usize;
    Ok(chi[k] + (n_bar - lo) * (chi[k + 1] - chi[k]))
}

pub fn snr_time(ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.cfg;
    let st = &cfg.snr_time;
    let pts = flux_points(&cfg.circuit, &cfg.flux_line, &default_grid(cfg))?;
    let curves: Vec<Vec<f64>> = match st.chi_mhz {
        Some(c) => vec![vec![c[0]; 2], vec![c[1]; 2]],
        None => {
            let n_max = st.n_bars.iter().fold(0.0f64, |a, &b| a.max(b)).ceil() as usize + 1;
            pts.iter()
                .map(|&phi| {
                    ladder(&cfg.circuit, &cfg.flux_line, phi, &cfg.chi.truncation, cfg.ladder_retention(), n_max).map(|l| l.chi)
                })
                .collect::<Result<_, _>>()?
        }
    };
    let amplified = ReadoutSettings { n_noise: amplified_noise(cfg.readout.n_noise, st.amplifier_gain_db)?, ..cfg.readout };
    let extra = [("target_snr", num(st.target_snr)), ("n_noise", num(cfg.readout.n_noise)), ("n_noise_amplified", num(amplified.n_noise))];
    let mut w = CsvOut::create(
        &ctx.path("snr_time.csv"),
        &ctx.prov,
        &extra,
        &["n_bar", "tau_m_ns", "tau_m_amplified_ns", "point", "flux_ext", "chi_MHz"],
    )?;
    for (k, curve) in curves.iter().enumerate() {
        let chi_of = |n: f64| if st.chi_mhz.is_some() { Ok(curve[0]) } else { interpolate(curve, n) };
        let plain = measurement_time_for_snr(st.target_snr, &cfg.readout, &st.n_bars, chi_of)?;
        let amp = measurement_time_for_snr(st.target_snr, &amplified, &st.n_bars, chi_of)?;
        for (p, a) in plain.iter().zip(&amp) {
            w.row([num(p.n_bar), num(p.tau_m_ns), num(a.tau_m_ns), FLUX_POINT_NAMES[k].to_string(), num(pts[k]), num(p.chi_mhz)])?;
        }
    }
    Ok(vec![w.finish()?])
}

pub fn jump_model(cfg: &RunConfig, seed: u64) -> JumpModel {
    let j = &cfg.jumps;
    JumpModel { iq_angle: j.iq_angle, ..JumpModel::new(j.gamma_up, j.gamma_down, j.q_g, j.q_e, j.sigma, seed) }
}

pub fn jumps_simulate(ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.cfg;
    let mut written = Vec::new();
    for seed in cfg.seeds_with(ctx.seed) {
        let model = jump_model(cfg, seed);
        if undersampled(&model, cfg.jumps.dt_ns) {
            eprintln!("warning: dt = {} ns is not small against the fastest holding time", cfg.jumps.dt_ns);
        }
        let sim = simulate_trace(&model, cfg.jumps.duration_ns, cfg.jumps.dt_ns)?;
        written.push(write_trace(&ctx.path(&format!("trace_seed{seed}.csv")), &ctx.prov.with_seed(seed), &sim.trace)?);
    }
    Ok(written)
}

pub const RATE_COLUMNS: [&str; 11] = [
    "gamma_up",
    "gamma_up_err",
    "gamma_down",
    "gamma_down_err",
    "p_e",
    "qnd_fidelity",
    "free_decay_gamma_total",
    "free_decay_gamma_total_err",
    "iq_angle",
    "degenerate",
    "trace",
];

fn write_dwell_hist(path: &Path, prov: &Provenance, h: &DwellHistogram) -> Result<PathBuf, CliError> {
    let mut w = CsvOut::create(path, prov, &[], &["bin_lo_us", "bin_hi_us", "counts"])?;
    for (k, c) in h.counts.iter().enumerate() {
        w.row([num(h.edges_us[k]), num(h.edges_us[k + 1]), c.to_string()])?;
    }
    w.finish()
}

pub fn jumps_analyze(ctx: &Ctx, traces: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    if traces.is_empty() {
        return Err(CliError::Usage("jumps analyze needs at least one --trace".into()));
    }
    let j = &ctx.cfg.jumps;
    let opts = AnalysisOptions { threshold_sigma: j.threshold_sigma, tau_m_ns: j.tau_m_ns, free_decay: j.free_decay };
    let results = traces
        .par_iter()
        .map(|p| -> Result<_, CliError> { Ok(analyze_trace(&read_trace(p)?, &opts)?) })
        .collect::<Result<Vec<_>, _>>()?;
    let mut w = CsvOut::create(&ctx.path("rates.csv"), &ctx.prov, &[], &RATE_COLUMNS)?;
    let mut written = Vec::new();
    for (path, a) in traces.iter().zip(&results) {
        let r = &a.dwell.rates;
        let stem = path.file_stem().map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
        let (fd, fd_err) = a.free_decay.map_or((f64::NAN, f64::NAN), |f| (f.gamma_total, f.gamma_total_err));
        w.row([
            num(r.gamma_up),
            num(r.gamma_up_err),
            num(r.gamma_down),
            num(r.gamma_down_err),
            num(r.p_e),
            num(r.qnd_fidelity.unwrap_or(f64::NAN)),
            num(fd),
            num(fd_err),
            num(a.angle),
            a.degenerate.to_string(),
            stem.clone(),
        ])?;
        written.push(write_dwell_hist(&ctx.path(&format!("dwell_g_{stem}.csv")), &ctx.prov, &a.dwell.ground)?);
        written.push(write_dwell_hist(&ctx.path(&format!("dwell_e_{stem}.csv")), &ctx.prov, &a.dwell.excited)?);
    }
    written.insert(0, w.finish()?);
    Ok(written)
}

pub fn protocol(cfg: &RunConfig, target: Target) -> ProtocolConfig {
    let sp = &cfg.state_prep;
    let settings = ReadoutSettings {
        tau_m_ns: sp.tau_m_ns.unwrap_or(cfg.readout.tau_m_ns),
        n_bar: sp.n_bar.unwrap_or(cfg.readout.n_bar),
        ..cfg.readout
    };
    ProtocolConfig {
        latency_ns: sp.latency_ns,
        pi_pulse_duration_ns: sp.pi_pulse_duration_ns,
        pi_pulse_error: sp.pi_pulse_error,
        leakage_to_f: sp.leakage_to_f,
        initial_excited: sp.initial_excited,
        snr: sp.snr.unwrap_or_else(|| snr(&settings, sp.chi_mhz)),
        ..ProtocolConfig::from_readout(target, &settings, sp.chi_mhz, sp.gamma_up, sp.gamma_down)
    }
}

pub const STATE_PREP_COLUMNS: [&str; 14] = [
    "target",
    "n_bar",
    "tau_m_ns",
    "latency_ns",
    "fidelity",
    "err_transitions",
    "err_f",
    "err_overlap",
    "shots",
    "seed",
    "fidelity_err",
    "occupation_fidelity",
    "occupation_fidelity_err",
    "snr",
];

fn write_histogram(path: &Path, prov: &Provenance, h: &Histogram) -> Result<PathBuf, CliError> {
    let mut w = CsvOut::create(path, prov, &[], &["bin_center", "counts"])?;
    for (c, n) in h.centers.iter().zip(&h.counts) {
        w.row([num(*c), num(*n)])?;
    }
    w.finish()
}

pub fn state_prep_cmd(ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.cfg;
    let seeds = cfg.seeds_with(ctx.seed);
    let mut rows: Vec<(u64, ProtocolConfig, StatePrepReport)> = Vec::new();
    for &seed in &seeds {
        for &target in &cfg.state_prep.targets {
            let p = protocol(cfg, target);
            rows.push((seed, p, state_prep(&p, cfg.state_prep.shots, seed)?));
        }
    }
    let mut w = CsvOut::create(&ctx.path("state_prep.csv"), &ctx.prov, &[], &STATE_PREP_COLUMNS)?;
    for (seed, p, r) in &rows {
        w.row([
            r.target.symbol().to_string(),
            num(p.n_bar),
            num(p.tau_m_ns),
            num(p.latency_ns),
            num(r.fidelity),
            num(r.error_transitions),
            num(r.error_f_leakage),
            num(r.error_overlap),
            r.shots.to_string(),
            seed.to_string(),
            num(r.fidelity_err),
            num(r.occupation_fidelity),
            num(r.occupation_fidelity_err),
            num(p.snr),
        ])?;
    }
    let mut written = vec![w.finish()?];
    let first = seeds[0];
    let prov = ctx.prov.with_seed(first);
    let mut before_done = false;
    for (_, _, r) in rows.iter().filter(|(s, _, _)| *s == first) {
        if !before_done {
            written.push(write_histogram(&ctx.path("histogram_before.csv"), &prov, &r.before)?);
            before_done = true;
        }
        let name = format!("histogram_after_{}_prep.csv", r.target.symbol());
        written.push(write_histogram(&ctx.path(&name), &prov, &r.after)?);
    }
    Ok(written)
}

pub fn calibrate(ctx: &Ctx, stark: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cfg = ctx.cfg;
    let c = &cfg.calibrate;
    let data = read_numeric_csv(stark)?;
    let (cp, cs) = match (data.column("power"), data.column("stark_mhz")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(CliError::Input { path: stark.display().to_string(), msg: "needs power and stark_mhz columns".into() })
        }
    };
    let points: Vec<(f64, f64)> = data.rows.iter().map(|r| (r[cp], r[cs])).collect();
    let cal = calibrate_photon_number(&points, c.chi_per_photon_mhz)?;
    let mut w = CsvOut::create(
        &ctx.path("calibration.csv"),
        &ctx.prov,
        &[("slope", num(cal.slope)), ("slope_err", num(cal.slope_err))],
        &["power", "n_bar", "stark_MHz"],
    )?;
    for &(p, s) in &points {
        w.row([num(p), num(cal.n_bar(p)), num(s)])?;
    }
    let mut written = vec![w.finish()?];

    let eff = efficiency_report(cfg.readout.sigma_m(), cfg.readout.f_r0_ghz)?;
    let mut e = CsvOut::create(&ctx.path("efficiency.csv"), &ctx.prov, &[], &["sigma_m", "eta", "n_noise", "t_eff_k"])?;
    e.row([num(cfg.readout.sigma_m()), num(eff.eta), num(eff.n_noise), num(eff.t_eff)])?;
    written.push(e.finish()?);

    let model = PhaseModel { kerr_mhz: c.kerr_mhz, n_bar: cfg.readout.n_bar, ..PhaseModel::linear(c.chi_mhz, cfg.readout.kappa_mhz) };
    let half = 0.5 * c.detuning_span_mhz;
    let grid: Vec<f64> = (0..c.detuning_steps).map(|k| -half + c.detuning_span_mhz * k as f64 / (c.detuning_steps - 1) as f64).collect();
    let curve = phase_response(&model, &grid)?;
    let (d_max, sep_max) = max_phase_separation(&model)?;
    let mut p = CsvOut::create(
        &ctx.path("phase.csv"),
        &ctx.prov,
        &[("max_separation_rad", num(sep_max)), ("detuning_at_max_mhz", num(d_max))],
        &["f_GHz", "phase_g_rad", "phase_e_rad", "detuning_MHz"],
    )?;
    for k in 0..grid.len() {
        let f = cfg.readout.f_r0_ghz + grid[k] * 1e-3;
        p.row([num(f), num(curve.phase_g[k]), num(curve.phase_e[k]), num(grid[k])])?;
    }
    written.push(p.finish()?);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFit {
    pub params: CircuitParams,
    pub names: Vec<&'static str>,
    pub values: Vec<f64>,
    pub std_err: Vec<f64>,
    pub at_bound: Vec<bool>,
    pub residuals: Vec<f64>,
    pub cost: f64,
}

/// Least squares of measured `f_ge` (and optionally `f_gf`) against the
/// coupled model over `(E_J', E_J'', L, C)` and `L_s` within ±5 %.
pub fn fit_spectrum_data(cfg: &RunConfig, flux: &[f64], f_ge: &[f64], f_gf: Option<&[f64]>) -> Result<SpectrumFit, CliError> {
    const MIN_POINTS: usize = 4;
    if flux.len() < MIN_POINTS {
        return Err(Error::InsufficientData { needed: MIN_POINTS, got: flux.len() }.into());
    }
    let p0 = cfg.circuit;
    let mut names = vec!["e_j_prime", "e_j_dprime", "l", "c"];
    let mut x0 = vec![p0.e_j_prime, p0.e_j_dprime, p0.l, p0.c];
    let mut lower = vec![1e-3; 4];
    let mut upper = vec![f64::INFINITY; 4];
    if !cfg.fit.fix_l_s {
        names.push("l_s");
        x0.push(p0.l_s);
        lower.push(0.95 * p0.l_s);
        upper.push(1.05 * p0.l_s);
    }
    let params_of = |x: &[f64]| CircuitParams {
        e_j_prime: x[0],
        e_j_dprime: x[1],
        l: x[2],
        c: x[3],
        l_s: if x.len() > 4 { x[4] } else { p0.l_s },
        ..p0
    };
    let trunc = cfg.fit.truncation;
    let line = cfg.flux_line;
    let m = flux.len() * if f_gf.is_some() { 2 } else { 1 };
    let fit = levenberg_marquardt(
        |x, r| {
            let p = params_of(x).validated()?;
            let model: Vec<(f64, f64)> = flux
                .par_iter()
                .map(|&phi| {
                    let s = spectrum_at(&p, &line, phi, &trunc, qndsim_core::Retention::All)?;
                    transition_point(&s)
                })
                .collect::<Result<_, _>>()?;
            for (k, (ge, gf)) in model.iter().enumerate() {
                r[k] = ge - f_ge[k];
                if let Some(d) = f_gf {
                    r[flux.len() + k] = gf - d[k];
                }
            }
            Ok(())
        },
        &x0,
        m,
        &LmOptions { max_iter: cfg.fit.max_iter, fd_step: 1e-5, lower: Some(lower), upper: Some(upper), ..Default::default() },
    )?;
    if !fit.converged {
        return Err(Error::FitDiverged { reason: format!("no convergence in {} iterations", fit.iterations), initializations: 1 }.into());
    }
    let std_err = (0..fit.x.len()).map(|k| fit.std_err(k).unwrap_or(f64::NAN)).collect();
    Ok(SpectrumFit {
        params: params_of(&fit.x).validated()?,
        names,
        values: fit.x.clone(),
        std_err,
        at_bound: fit.at_bound.clone(),
        residuals: fit.residuals.clone(),
        cost: fit.cost,
    })
}

pub fn fit_spectrum(ctx: &Ctx, data_path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let data = read_numeric_csv(data_path)?;
    let (cf, cg) = match (data.column("flux"), data.column("f_ge")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(CliError::Input { path: data_path.display().to_string(), msg: "needs flux and f_ge columns".into() })
        }
    };
    let flux: Vec<f64> = data.rows.iter().map(|r| r[cf]).collect();
    let f_ge: Vec<f64> = data.rows.iter().map(|r| r[cg]).collect();
    let f_gf: Option<Vec<f64>> = data.column("f_gf").map(|c| data.rows.iter().map(|r| r[c]).collect());
    let fit = fit_spectrum_data(ctx.cfg, &flux, &f_ge, f_gf.as_deref())?;
    let mut w = CsvOut::create(&ctx.path("fit_params.csv"), &ctx.prov, &[("cost", num(fit.cost))], &["param", "value", "std_err", "at_bound"])?;
    for k in 0..fit.values.len() {
        w.row([fit.names[k].to_string(), num(fit.values[k]), num(fit.std_err[k]), fit.at_bound[k].to_string()])?;
    }
    let mut written = vec![w.finish()?];
    let mut r = CsvOut::create(&ctx.path("fit_residuals.csv"), &ctx.prov, &[], &["flux", "f_ge_data", "f_ge_residual"])?;
    for k in 0..flux.len() {
        r.row([num(flux[k]), num(f_ge[k]), num(fit.residuals[k])])?;
    }
    written.push(r.finish()?);
    if fit.at_bound.iter().any(|&b| b) {
        eprintln!("warning: fit solution sits on a parameter bound");
    }
    Ok(written)
}
