//! Rate recovery through the latching filter where false switches are
//! negligible (pointer separation 12 sigma).

use qndsim::pipeline::simulate_trace;
use qndsim_core::jumps::{analyze_trace, AnalysisOptions, JumpModel};

#[test]
fn latching_filter_recovers_rates_at_high_snr() {
    const SEEDS: u64 = 20;
    let (up, down) = (1.0 / 300.0, 1.0 / 80.0);
    let (mut ok, mut ok_total) = (0, 0);
    let mut bias = [0.0; 2];
    for seed in 0..SEEDS {
        let m = JumpModel::new(up, down, 3.0, -3.0, 0.5, 1000 + seed);
        let sim = simulate_trace(&m, 2e8, 100.0).unwrap();
        let a = analyze_trace(&sim.trace, &AnalysisOptions::default()).unwrap();
        let r = a.dwell.rates;
        if (r.gamma_up - up).abs() <= 2.0 * r.gamma_up_err && (r.gamma_down - down).abs() <= 2.0 * r.gamma_down_err {
            ok += 1;
        }
        let fd = a.free_decay.expect("free-decay fit");
        if (r.gamma_total() - fd.gamma_total).abs() <= 2.0 * r.gamma_total_err().hypot(fd.gamma_total_err) {
            ok_total += 1;
        }
        bias[0] += (r.gamma_up / up - 1.0) / SEEDS as f64;
        bias[1] += (r.gamma_down / down - 1.0) / SEEDS as f64;
    }
    assert!(ok >= 15, "rates within 2 SE for {ok}/{SEEDS}");
    assert!(ok_total >= 15, "filter vs free decay within 2 SE for {ok_total}/{SEEDS}");
    assert!(bias[0].abs() < 0.03 && bias[1].abs() < 0.03, "mean bias {bias:?}");
}
