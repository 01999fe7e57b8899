//! Property tests for the physics core's invariants.

use std::sync::OnceLock;

use proptest::prelude::*;

use qndsim_core::circuit::build_coupled_hamiltonian;
use qndsim_core::dressed::{diagonalize_and_label, LabelOptions};
use qndsim_core::feedback::{run_state_prep, ProtocolConfig, Target};
use qndsim_core::jumps::{
    effective_temperature, latching_filter, simulate_jump_trace, thermal_population, JumpModel,
};
use qndsim_core::readout::{
    duffing_steady_state, extract_chi_from_phase, input_flux_for, max_phase_separation,
    measurement_time, snr, steady_quadratures, Branch, PhaseModel, ReadoutSettings,
};
use qndsim_core::spectro::{ac_stark_shift, dispersive_shift};
use qndsim_core::{
    Basis, CircuitParams, DressedSpectrum, FluxBias, FluxLine, HilbertTruncation, Retention,
};

const SMALL: HilbertTruncation = HilbertTruncation {
    n_res: 5,
    n_atom: 10,
    basis: Basis::BareFock,
};

fn energies(flux: FluxBias) -> Vec<f64> {
    let h = build_coupled_hamiltonian(&CircuitParams::default(), &flux, &SMALL).unwrap();
    let s = diagonalize_and_label(
        &h,
        &LabelOptions {
            retention: Retention::All,
            ..Default::default()
        },
    )
    .unwrap();
    s.levels.iter().map(|l| l.energy).collect()
}

fn assert_same_spectrum(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < 1e-8 * x.abs().max(1.0), "{x} vs {y}");
    }
}

fn ladder_spectrum() -> &'static DressedSpectrum {
    static S: OnceLock<DressedSpectrum> = OnceLock::new();
    S.get_or_init(|| {
        let t = HilbertTruncation::new(40, 12, Basis::BareFock).unwrap();
        let bias = FluxLine::default().bias(0.48);
        let h = build_coupled_hamiltonian(&CircuitParams::default(), &bias, &t).unwrap();
        diagonalize_and_label(
            &h,
            &LabelOptions {
                retention: Retention::All,
                ..Default::default()
            },
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn spectrum_periodic_in_each_loop_flux(s in -1.0f64..1.0, l in -1.0f64..1.0) {
        let base = energies(FluxBias::new(s, l));
        assert_same_spectrum(&base, &energies(FluxBias::new(s, l + 1.0)));
        assert_same_spectrum(&base, &energies(FluxBias::new(s + 1.0, l)));
    }

    #[test]
    fn spectrum_symmetric_under_flux_reversal(s in -1.0f64..1.0, l in -1.0f64..1.0) {
        assert_same_spectrum(&energies(FluxBias::new(s, l)), &energies(FluxBias::new(-s, -l)));
    }

    #[test]
    fn symmetric_squid_at_zero_loop_flux_is_even(l in -1.0f64..1.0) {
        assert_same_spectrum(&energies(FluxBias::new(0.0, l)), &energies(FluxBias::new(0.0, -l)));
    }
}

proptest! {
    #[test]
    fn stark_shift_telescopes(n in 0usize..30) {
        let s = ladder_spectrum();
        let sum: f64 = (0..n).map(|k| dispersive_shift(s, k).unwrap()).sum();
        // MHz; 1e-6 GHz is 1e-3 MHz.
        prop_assert!((ac_stark_shift(s, n).unwrap() - sum).abs() < 1e-3);
    }

    #[test]
    fn pointer_states_are_lossless(chi in -5.0f64..5.0, kappa in 0.1f64..5.0, a in 0.0f64..100.0) {
        let (g, e) = steady_quadratures(chi, kappa, a);
        for p in [g, e] {
            prop_assert!((p.i * p.i + p.q * p.q - a * a).abs() <= 1e-9 * (a * a).max(1.0));
        }
    }

    #[test]
    fn pointer_contrast_scales_with_drive(chi in -5.0f64..5.0, kappa in 0.1f64..5.0, a in 0.1f64..10.0, c in 0.1f64..10.0) {
        let sep = |a: f64| {
            let (g, e) = steady_quadratures(chi, kappa, a);
            (g.i - e.i).hypot(g.q - e.q)
        };
        // Noise scaled by the same c leaves the ratio unchanged.
        let (r1, r2) = (sep(a) / 1.0, sep(c * a) / c);
        prop_assert!((r1 - r2).abs() <= 1e-9 * r1.max(1e-12));
    }

    #[test]
    fn measurement_time_solves_snr(target in 0.5f64..10.0, chi in 0.05f64..4.0, n_bar in 1.0f64..300.0, n_noise in 1.0f64..30.0) {
        let s = ReadoutSettings { n_bar, n_noise, ..Default::default() };
        let tau = measurement_time(target, &s, chi).unwrap();
        let back = snr(&ReadoutSettings { tau_m_ns: tau, ..s }, chi);
        prop_assert!((back - target).abs() < 1e-9 * target);
    }

    #[test]
    fn duffing_solution_satisfies_cubic(k in -1e-3f64..-1e-6, delta in -1.0f64..1.0, n_lin in 0.1f64..200.0) {
        let kappa = 1.16;
        let n_in = input_flux_for(n_lin, kappa);
        let n = duffing_steady_state(k, kappa, delta, n_in, Branch::Low).unwrap();
        let lhs = n * (kappa * kappa / 4.0 + (delta - k * n).powi(2));
        prop_assert!((lhs - kappa * n_in).abs() < 1e-10 * kappa * n_in);
    }

    #[test]
    fn thermal_round_trip(f in 0.1f64..10.0, t in 5.0f64..500.0) {
        let p = thermal_population(f, t).unwrap();
        prop_assume!(p > 1e-280);
        let back = effective_temperature(p, f).unwrap();
        prop_assert!((back - t).abs() < 1e-10 * t);
    }

    #[test]
    fn latch_never_switches_outside_windows(q in prop::collection::vec(-8.0f64..8.0, 1..400), sigma in 0.3f64..2.0) {
        let (q_g, q_e, thr) = (3.0, -3.0, 2.5);
        let out = latching_filter(&q, q_g, q_e, sigma, thr).unwrap();
        for k in 1..q.len() {
            let in_g = (q[k] - q_g).abs() <= thr * sigma;
            let in_e = (q[k] - q_e).abs() <= thr * sigma;
            if out.excited[k] != out.excited[k - 1] {
                prop_assert!(in_g ^ in_e);
                prop_assert_eq!(out.excited[k], in_e);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chi_round_trips_through_phase(chi in 0.1f64..1.1, sign in prop::bool::ANY, n_bar in 1.0f64..150.0) {
        let chi = if sign { chi } else { -chi };
        let m = PhaseModel { kerr_mhz: -8.4e-5, alpha_g_mhz: -2e-6, alpha_e_mhz: 3e-4, n_bar, ..PhaseModel::linear(chi, 1.16) };
        let (_, sep) = max_phase_separation(&m).unwrap();
        prop_assume!(sep < std::f64::consts::PI - 1e-6);
        let got = extract_chi_from_phase(sep, &m, 1.2).unwrap();
        prop_assert!((got - chi).abs() < 1e-3 * chi.abs(), "{} -> {}", chi, got);
    }

    #[test]
    fn traces_are_deterministic_per_seed(seed in 0u64..1_000_000) {
        let m = JumpModel::new(0.02, 0.05, 3.0, -3.0, 1.0, seed);
        let a = simulate_jump_trace(&m, 2e5, 100.0).unwrap();
        let b = simulate_jump_trace(&m, 2e5, 100.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn state_prep_is_deterministic_per_seed(seed in 0u64..1_000_000, e in prop::bool::ANY) {
        let target = if e { Target::E } else { Target::G };
        let cfg = ProtocolConfig { gamma_up: 0.01, gamma_down: 0.05, snr: 2.5, ..ProtocolConfig::ideal(target, 500.0) };
        prop_assert_eq!(run_state_prep(&cfg, 300, seed).unwrap(), run_state_prep(&cfg, 300, seed).unwrap());
    }
}
