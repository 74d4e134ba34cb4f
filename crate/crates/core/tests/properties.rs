//! Randomized invariants across modules.

use std::f64::consts::PI;

use proptest::prelude::*;

use raman_core::dynamics::{evolve, make_pulse, ConstantDrive};
use raman_core::model::{build_hamiltonian, build_hjc, excitation_number, DriveParams, SystemParams};
use raman_core::spectral::{diagonalize, dressed_pair, effective_coupling_pt, exact_splitting, polariton_pair};
use raman_core::spectroscopy::{probe_grid, response, ResponseModel};
use raman_core::units::{ghz, mhz};

fn dispersive() -> impl Strategy<Value = SystemParams> {
    (6.0..9.0f64, 0.6..1.6f64, -0.45..-0.15f64, 20.0..80.0f64).prop_map(|(wq, delta, alpha, g)| {
        SystemParams::new(ghz(wq), ghz(wq - delta), mhz(g), ghz(alpha), mhz(6.6), mhz(1.0), 4, 5).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_hermitian(p in dispersive(), om in 0.0..0.5f64, phi in -PI..PI, dwd in -0.2..0.2f64) {
        let d = DriveParams::new(&p, ghz(om), phi, p.bare_resonance() + ghz(dwd)).unwrap();
        let h = build_hamiltonian(&p, &d).unwrap();
        prop_assert!(h.hermiticity_error() <= 1e-12 * h.max_abs());
    }

    #[test]
    fn undriven_hamiltonian_conserves_excitations(p in dispersive(), dwd in -0.2..0.2f64) {
        let h = build_hjc(&p, &DriveParams::undriven(&p, p.bare_resonance() + ghz(dwd))).unwrap().entries;
        let n = excitation_number(&p);
        let c = &h * &n - &n * &h;
        prop_assert!(c.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn eigenvectors_are_orthonormal(p in dispersive(), om in 0.0..0.3f64, phi in -PI..PI) {
        let d = DriveParams::new(&p, ghz(om), phi, p.bare_resonance()).unwrap();
        let eig = diagonalize(&build_hamiltonian(&p, &d).unwrap()).unwrap();
        let v = &eig.eigenvectors;
        let gram = v.adjoint() * v;
        for i in 0..eig.dim() {
            for j in 0..eig.dim() {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)].re - target).abs() < 1e-10 && gram[(i, j)].im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn overlaps_are_complete(p in dispersive(), om in 0.0..0.3f64, phi in -PI..PI) {
        let d = DriveParams::new(&p, ghz(om), phi, p.bare_resonance()).unwrap();
        let pair = polariton_pair(&p, &d).unwrap();
        prop_assert!((pair.overlaps.alpha_norm() - 1.0).abs() < 1e-10);
        prop_assert!((pair.overlaps.beta_norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn phase_only_rotates_the_coupling(p in dispersive(), om in 0.01..0.3f64, phi in -PI..PI, theta in -PI..PI) {
        let d = DriveParams::new(&p, ghz(om), phi, p.bare_resonance()).unwrap();
        let d2 = d.with_phase(phi + theta);
        prop_assert!((exact_splitting(&p, &d).unwrap() - exact_splitting(&p, &d2).unwrap()).abs() < 1e-12);
        let a = effective_coupling_pt(&p, &d, 0).unwrap();
        let b = effective_coupling_pt(&p, &d2, 0).unwrap();
        prop_assert!((a.norm() - b.norm()).abs() <= 1e-15 * a.norm().max(1.0));
        let rot = (b / a).arg();
        prop_assert!(((rot - theta + PI).rem_euclid(2.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn pulse_area_is_gmax_times_t_minus_rise(g in 0.0..0.2f64, t in 5.0..200.0f64, frac in 0.01..0.5f64) {
        let pulse = make_pulse(g, t, frac * t).unwrap();
        let n = 20_000;
        let h = t / n as f64;
        let q: f64 = (0..n).map(|i| pulse.gtilde((i as f64 + 0.5) * h) * h).sum();
        prop_assert!((q - pulse.area()).abs() <= 1e-6 * pulse.area().max(1e-12));
    }

    #[test]
    fn response_scales_with_amplitude_squared(a in 0.1..10.0f64, g in 0.5..20.0f64, k in 1.0..10.0f64, gm in 0.1..10.0f64, c in 0.1..10.0f64) {
        let m = ResponseModel::new(a, mhz(g), ghz(7.0), mhz(k), mhz(gm)).unwrap();
        let m2 = ResponseModel { a0: a * c.sqrt(), ..m };
        for w in probe_grid(ghz(7.0) - mhz(30.0), ghz(7.0) + mhz(30.0), 17) {
            let (s1, s2) = (response(&m, w).unwrap(), response(&m2, w).unwrap());
            prop_assert!((s2 / (c * s1) - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_is_unitary_and_closed(p in dispersive(), om in 0.02..0.2f64, phi in -PI..PI) {
        let wd = p.bare_resonance();
        let d = DriveParams::new(&p, ghz(om), phi, wd).unwrap();
        let (f0, _) = dressed_pair(&p, wd).unwrap();
        let grid: Vec<f64> = (0..=8).map(|i| 5.0 * i as f64).collect();
        let r = evolve(&p, &ConstantDrive(d), &f0, &grid).unwrap();
        prop_assert!(r.max_norm_drift < 1e-9);
        for i in 0..r.times.len() {
            prop_assert!((r.p_f0[i] + r.p_g1[i] + r.leakage[i] - 1.0).abs() < 1e-10);
        }
    }
}
