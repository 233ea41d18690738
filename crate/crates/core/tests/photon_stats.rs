use approx::assert_relative_eq;
use proptest::prelude::*;

use dlcz_core::photon_stats::*;

/// Click probabilities by explicit enumeration of every Fock state of `K`
/// truncated mode pairs and every split of the read photons.
fn fock_table(model: &TmsvDetectorModel) -> [f64; 8] {
    let k = model.modes as f64;
    let q = model.p / (k * (1.0 - model.p) + model.p);
    let n_max = model.n_max as usize;
    let norm: f64 = (0..=n_max).map(|n| q.powi(n as i32)).sum();
    let mut states: Vec<(usize, f64)> = vec![(0, 1.0)];
    for _ in 0..model.modes {
        let mut next = Vec::new();
        for &(total, amp) in &states {
            for n in 0..=n_max {
                next.push((total + n, amp * q.powi(n as i32) / norm));
            }
        }
        states = next;
    }
    let ew = model.write.efficiency;
    let e1 = model.split * model.read1.efficiency;
    let e2 = (1.0 - model.split) * model.read2.efficiency;
    let mut table = [0.0; 8];
    for (n, pn) in states {
        let pw_dark = (1.0 - model.write.dark) * (1.0 - ew).powi(n as i32);
        for n1 in 0..=n {
            for n2 in 0..=n - n1 {
                let lost = n - n1 - n2;
                let ways = fact(n) / (fact(n1) * fact(n2) * fact(lost));
                let pr = ways
                    * e1.powi(n1 as i32)
                    * e2.powi(n2 as i32)
                    * (1.0 - e1 - e2).powi(lost as i32);
                let c1 = if n1 > 0 { 1.0 } else { model.read1.dark };
                let c2 = if n2 > 0 { 1.0 } else { model.read2.dark };
                for mask in 0..8usize {
                    let w = if mask & 1 != 0 {
                        1.0 - pw_dark
                    } else {
                        pw_dark
                    };
                    let r1 = if mask & 2 != 0 { c1 } else { 1.0 - c1 };
                    let r2 = if mask & 4 != 0 { c2 } else { 1.0 - c2 };
                    table[mask] += pn * pr * w * r1 * r2;
                }
            }
        }
    }
    table
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn model(p: f64, modes: u32, w: Detector, r: Detector) -> TmsvDetectorModel {
    TmsvDetectorModel::new(p, modes)
        .unwrap()
        .with_detectors(w, r, r)
        .unwrap()
}

#[test]
fn click_table_matches_fock_enumeration() {
    for modes in [1, 2] {
        for (w, r) in [
            (Detector::IDEAL, Detector::IDEAL),
            (Detector::new(0.086, 1e-3), Detector::new(0.3, 4e-4)),
            (Detector::new(0.5, 0.02), Detector::new(0.7, 0.05)),
        ] {
            let m = model(0.05, modes, w, r);
            let table = m.click_probabilities().unwrap().table;
            let oracle = fock_table(&m);
            for (a, b) in table.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-13, "K={modes}: {a:e} vs {b:e}");
            }
            assert_relative_eq!(table.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn pair_correlation_at_one_percent() {
    let m = model(0.01, 1, Detector::IDEAL, Detector::IDEAL);
    let c = m.click_probabilities().unwrap();
    let oracle = fock_table(&m);
    let w = c.marginal(WRITE);
    let any_read = c.table[3] + c.table[5] + c.table[7];
    let oracle_any = oracle[3] + oracle[5] + oracle[7];
    let oracle_w: f64 = [1, 3, 5, 7].iter().map(|&i| oracle[i]).sum();
    assert_relative_eq!(any_read / w, 1.0, epsilon = 1e-12);
    assert_relative_eq!(any_read / w, oracle_any / oracle_w, epsilon = 1e-12);
}

#[test]
fn heralded_g2_with_weak_heralding() {
    let herald = Detector::new(0.04, 0.0);
    let m = model(0.01, 1, herald, Detector::IDEAL);
    let g = g2_conditional(&m).unwrap();
    let t = fock_table(&m);
    let marg = |mask: usize| -> f64 { (0..8).filter(|s| s & mask == mask).map(|s| t[s]).sum() };
    let oracle = marg(7) * marg(1) / (marg(3) * marg(5));
    assert!((g - oracle).abs() <= 1e-8, "{g} vs {oracle}");
    assert!((g - 0.04).abs() < 0.005, "{g}");
}

#[test]
fn single_pairs_are_antibunched() {
    let m = model(1e-6, 1, Detector::IDEAL, Detector::IDEAL);
    assert!(g2_conditional(&m).unwrap() < 1e-5);
}

#[test]
fn multimode_scaling() {
    let lossy = Detector::new(1e-3, 0.0);
    for (modes, expect) in [(1, 2.0), (2, 1.5), (4, 1.25)] {
        let g = g2_unconditional(&model(1e-4, modes, lossy, lossy)).unwrap();
        assert!((g - expect).abs() <= 1e-6, "K={modes}: {g}");
    }
}

#[test]
fn dark_dominated_read_is_poissonian() {
    let r = Detector::new(1e-4, 0.05);
    let g = g2_unconditional(&model(1e-3, 1, Detector::IDEAL, r)).unwrap();
    assert!((g - 1.0).abs() < 1e-3, "{g}");
}

#[test]
fn g2_rises_with_gate_width() {
    let eta_read = 0.6 * 0.2 * 0.43 * 0.28;
    let herald = 0.2 * 0.43;
    let curve: Vec<f64> = [10e-9, 100e-9, 1e-6, 10e-6, 30e-6]
        .iter()
        .map(|&gate| {
            let dark = Detector::dark_probability(130.0, gate);
            let m = model(
                0.0025,
                1,
                Detector::new(herald, dark),
                Detector::new(eta_read, dark),
            );
            g2_conditional(&m).unwrap()
        })
        .collect();
    assert!(curve.windows(2).all(|w| w[1] > w[0]), "{curve:?}");
}

#[test]
fn truncation_error_suggests_a_larger_cutoff() {
    let m = TmsvDetectorModel::new(0.2, 1).unwrap();
    match m.clone().with_n_max(4) {
        Err(dlcz_core::Error::Truncation { suggested, .. }) => assert!(suggested as u32 > 4),
        other => panic!("{other:?}"),
    }
    assert!(m.tail_mass() < TRUNCATION_TAIL);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_is_a_distribution(
        p in 0.0..0.2f64,
        modes in 1u32..4,
        ew in 0.0..1.0f64,
        er in 0.0..1.0f64,
        d in 0.0..0.1f64,
    ) {
        let m = model(p, modes, Detector::new(ew, d), Detector::new(er, d));
        let t = m.click_probabilities().unwrap().table;
        prop_assert!(t.iter().all(|&v| v >= 0.0));
        prop_assert!((t.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn truncation_stability(p in 1e-4..0.1f64, modes in 1u32..3, e in 0.05..1.0f64) {
        let m = model(p, modes, Detector::new(e, 1e-4), Detector::new(e, 1e-4));
        let wider = m.clone().with_n_max(m.n_max + m.n_max.div_ceil(2)).unwrap();
        for f in [g2_conditional, g2_unconditional] {
            let (a, b) = (f(&m).unwrap(), f(&wider).unwrap());
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }
    }

    #[test]
    fn split_symmetry(p in 1e-3..0.1f64, rho in 0.05..0.95f64, e1 in 0.1..1.0f64) {
        let w = Detector::new(0.3, 1e-3);
        let r = Detector::new(e1, 1e-3);
        let a = model(p, 1, w, r).with_split(rho).unwrap();
        let b = model(p, 1, w, r).with_split(1.0 - rho).unwrap();
        let (ga, gb) = (g2_conditional(&a).unwrap(), g2_conditional(&b).unwrap());
        prop_assert!((ga - gb).abs() <= 1e-12 * ga.max(1.0));
    }

    #[test]
    fn heralded_g2_nondecreasing_in_p(p in 1e-4..0.099f64, dp in 1e-5..1e-3f64) {
        let a = model(p, 1, Detector::IDEAL, Detector::IDEAL);
        let b = model((p + dp).min(0.1), 1, Detector::IDEAL, Detector::IDEAL);
        prop_assert!(g2_conditional(&b).unwrap() >= g2_conditional(&a).unwrap() - 1e-12);
    }

    #[test]
    fn thermal_g2_insensitive_to_efficiency(e in 0.01..0.5f64) {
        let d = Detector::new(e, 0.0);
        let g = g2_unconditional(&model(1e-3, 1, d, d)).unwrap();
        let reference = g2_unconditional(&model(1e-3, 1, Detector::new(0.01, 0.0), Detector::new(0.01, 0.0))).unwrap();
        prop_assert!((g - reference).abs() < 1e-3);
    }
}
