use std::f64::consts::PI;

use proptest::prelude::*;
use wqed_numerics::{
    fourier_oscillatory, lambert_w, pv_integrate, quad::adaptive_gk, FourierTable, MomentumGrid, TailSpec, C64,
};

fn sample<F: Fn(f64) -> C64>(g: &MomentumGrid, f: F) -> Vec<C64> {
    g.nodes().iter().map(|&k| f(k)).collect()
}

#[test]
fn grid_nodes_are_symmetric() {
    for n in [3, 7, 401, 1601, 3201] {
        let g = MomentumGrid::uniform(40.0, n).unwrap();
        let x = g.nodes();
        for i in 0..n {
            assert!((x[i] + x[n - 1 - i]).abs() < 1e-14);
        }
        assert!((g.weight_sum() - 80.0).abs() < 1e-12);
    }
}

#[test]
fn pv_matches_adaptive_reference() {
    let g = MomentumGrid::uniform(20.0, 4001).unwrap();
    let f = |k: f64| C64::new(1.0 / (k * k + 1.0), 0.0);
    let p = 0.3;
    let v = pv_integrate(&sample(&g, f), p, &g).unwrap();
    // Symmetric pairing about the pole, then the remainder on the left.
    let d = 20.0 - p;
    let paired = adaptive_gk(|u| (f(p + u) - f(p - u)) / u, 0.0, d, 1e-14, 1e-14, 2000).unwrap();
    let rest = adaptive_gk(|k| f(k) / (k - p), -20.0, p - d, 1e-14, 1e-14, 2000).unwrap();
    let reference = paired + rest;
    assert!((v - reference).norm() < 1e-8, "{v} vs {reference}");
}

#[test]
fn pv_converges_at_least_second_order() {
    let f = |k: f64| C64::new((-(k - 0.2) * (k - 0.2)).exp(), 0.3 * k / (1.0 + k * k));
    let p = 0.37;
    let reference = {
        let g = MomentumGrid::uniform(8.0, 16001).unwrap();
        pv_integrate(&sample(&g, f), p, &g).unwrap()
    };
    let mut errs = Vec::new();
    for n in [101, 201, 401] {
        let g = MomentumGrid::uniform(8.0, n).unwrap();
        errs.push((pv_integrate(&sample(&g, f), p, &g).unwrap() - reference).norm());
    }
    assert!(errs[1] < errs[0] / 4.0 || errs[1] < 1e-12, "{errs:?}");
    assert!(errs[2] < errs[1] / 4.0 || errs[2] < 1e-12, "{errs:?}");
}

#[test]
fn fourier_kinked_profile_against_dense_grid() {
    let r = 5.0;
    let gamma = 1.0;
    let f = |k: f64| C64::from_polar(1.0, -k * r) / (k * k + gamma * gamma);
    let g = MomentumGrid::uniform(40.0, 8001).unwrap();
    let tail = TailSpec::Lorentzian {
        terms: vec![(-r, C64::new(1.0, 0.0))],
        rate: gamma,
    };
    let table = FourierTable::new(&sample(&g, f), &g, &tail).unwrap();
    let dense = MomentumGrid::uniform(160.0, 4 * 4 * 8000 + 1).unwrap();
    let dense_table = FourierTable::new(&sample(&dense, f), &dense, &TailSpec::None).unwrap();
    let dt = 0.01;
    let ts: Vec<f64> = (0..=1000).map(|i| i as f64 * dt).collect();
    let assembled: Vec<f64> = ts
        .iter()
        .map(|&t| (C64::new(1.0, 0.0) - table.eval(t)).norm_sqr())
        .collect();
    for (i, &t) in ts.iter().enumerate().step_by(25) {
        let exact = 1.0 - (PI / gamma) * (-gamma * (t - r).abs()).exp();
        assert!((assembled[i] - exact * exact).abs() < 1e-8, "t={t}");
        // The untailed dense sum converges like 1/(K²|t − R|), so the
        // neighbourhood of the kink is left to the closed form above.
        if (t - r).abs() > 1.0 {
            let reference = (C64::new(1.0, 0.0) - dense_table.eval(t)).norm_sqr();
            assert!((assembled[i] - reference).abs() < 1e-4 * reference.max(1.0), "t={t}");
        }
    }
    // One-sided slopes around t = R differ by a finite jump; elsewhere they agree.
    let jump = |i: usize| {
        let left = (assembled[i] - assembled[i - 5]) / (5.0 * dt);
        let right = (assembled[i + 5] - assembled[i]) / (5.0 * dt);
        (right - left).abs()
    };
    let at_r = jump(500);
    for i in [100, 250, 400, 600, 800] {
        assert!(at_r > 20.0 * jump(i), "kink at R not distinguished from t={}", ts[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pv_antisymmetric_under_pole_reflection(p in -15.0f64..15.0, a in 0.2f64..3.0, c in -1.0f64..1.0) {
        let g = MomentumGrid::uniform(20.0, 801).unwrap();
        let f = sample(&g, |k| C64::new(1.0 / (k * k + a * a), c * (-k * k).exp()));
        let plus = pv_integrate(&f, p, &g).unwrap();
        let minus = pv_integrate(&f, -p, &g).unwrap();
        prop_assert!((plus + minus).norm() < 1e-10);
    }

    #[test]
    fn fourier_conjugate_symmetry(t in -10.0f64..10.0, a in 0.3f64..2.0, s in -3.0f64..3.0) {
        let g = MomentumGrid::uniform(30.0, 1201).unwrap();
        let f = |k: f64| C64::from_polar(1.0, k * s) / C64::new(k * k - 0.3 * k + a * a, 0.2 * k);
        let reflected_conj = |k: f64| f(-k).conj();
        let fwd = fourier_oscillatory(&sample(&g, f), t, &g, &TailSpec::None).unwrap();
        let refl = fourier_oscillatory(&sample(&g, reflected_conj), t, &g, &TailSpec::None).unwrap();
        prop_assert!((refl - fwd.conj()).norm() < 1e-10);
        let conj_only = fourier_oscillatory(&sample(&g, |k| f(k).conj()), t, &g, &TailSpec::None).unwrap();
        let back = fourier_oscillatory(&sample(&g, f), -t, &g, &TailSpec::None).unwrap();
        prop_assert!((conj_only - back.conj()).norm() < 1e-10);
    }

    #[test]
    fn lambert_residual_on_annulus(r in 0.1f64..10.0, theta in -PI..PI, branch in -1i64..=1) {
        let z = C64::from_polar(r, theta);
        let w = lambert_w(z, branch).unwrap();
        prop_assert!((w * w.exp() - z).norm() <= 1e-12 * r.max(1.0));
    }
}

#[test]
fn lambert_500_point_annulus_sweep() {
    // Deterministic low-discrepancy sweep complementing the randomized test.
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    for i in 0..500 {
        let u = (i as f64 * golden).fract();
        let v = ((i as f64 + 0.5) / 500.0).fract();
        let r = 0.1 * 100f64.powf(u);
        let z = C64::from_polar(r, PI * (2.0 * v - 1.0));
        for n in -1..=1 {
            let w = lambert_w(z, n).unwrap_or_else(|e| panic!("z={z} n={n}: {e}"));
            assert!((w * w.exp() - z).norm() <= 1e-12 * r.max(1.0), "z={z} n={n}");
        }
    }
}
