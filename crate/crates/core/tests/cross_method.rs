//! Agreement between the resolvent series, the transported exact solution and
//! the first-order formulas.

use raman_core::model::{DriveParams, SystemParams};
use raman_core::resolvent::{stark_shift_resolvent, stark_shift_resolvent_with, ResolventConfig};
use raman_core::spectral::{effective_coupling_pt, exact_splitting};
use raman_core::stark::stark_parallel_transport;
use raman_core::units::ghz;

#[test]
fn resolvent_offset_is_a_small_constant() {
    let p = SystemParams::device();
    let st = stark_parallel_transport(&p, ghz(0.1), 400).unwrap();
    let devs: Vec<f64> = [0.0125, 0.025, 0.05, 0.075, 0.1]
        .iter()
        .map(|&f| {
            let om = ghz(f);
            let res = stark_shift_resolvent(&p, om, 6).unwrap().delta_f0g1;
            res / st.stark_shift_at(om).unwrap() - 1.0
        })
        .collect();
    for d in &devs {
        assert!(d.abs() < 0.02, "{devs:?}");
    }
    let spread = devs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - devs.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-3, "{devs:?}");
}

#[test]
fn zero_drive_resonance_agrees() {
    let p = SystemParams::device();
    let st = stark_parallel_transport(&p, ghz(0.05), 100).unwrap();
    let res = stark_shift_resolvent(&p, 0.0, 6).unwrap();
    assert!((res.drive_frequency(&p) - st.omega_d0()).abs() < 1e-6 * st.omega_d0());
}

#[test]
fn resolvent_series_converges_in_order() {
    let p = SystemParams::device();
    let om = ghz(0.15);
    let d: Vec<f64> = [2, 4, 6, 8]
        .iter()
        .map(|&n| stark_shift_resolvent_with(&p, om, &ResolventConfig::with_order(n)).unwrap().delta_f0g1)
        .collect();
    let (d24, d46, d68) = ((d[1] - d[0]).abs(), (d[2] - d[1]).abs(), (d[3] - d[2]).abs());
    assert!(d46 < d24 && d68 < d46, "{d:?}");
}

#[test]
fn first_order_coupling_is_the_weak_g_limit() {
    // exact/first-order − 1 shrinks as g² at small Ω
    let devs: Vec<f64> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&s| {
            let base = SystemParams::device();
            let p = SystemParams { g: s * base.g, ..base };
            let om = ghz(0.0125);
            let st = stark_parallel_transport(&p, om, 100).unwrap();
            let d = DriveParams::new(&p, om, 0.0, st.omega_d_at(om).unwrap()).unwrap();
            0.5 * exact_splitting(&p, &d).unwrap() / effective_coupling_pt(&p, &d, 0).unwrap().norm() - 1.0
        })
        .collect();
    for w in devs.windows(2) {
        let r = w[0] / w[1];
        assert!((r - 4.0).abs() < 0.4, "{devs:?}");
    }
}
