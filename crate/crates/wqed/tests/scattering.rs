use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use wqed::{
    model::propagator,
    scattering::{
        channel_triples, connected_core, single_photon_s, symmetric_core, symmetrize_m, symmetrize_q,
        three_photon_connected_t, three_photon_prefactor, two_photon_connected_t, AmplitudeMode, BareVertices,
        ChannelMatrix, ConnectedVertices, OnShellColumn, SinglePhotonS, ThreePhotonAmplitude, TwoPhotonAmplitude,
    },
    vertex::{solve_f11, solve_f11_family, solve_f12_slice, FamilyOptions, SliceOptions, SolverOptions},
    Channel, ModelParams, ScatteringError, VertexMode,
};
use wqed_numerics::{fourier_oscillatory, MomentumGrid, TailSpec};

fn params(gamma: f64, r: f64, phase: f64) -> ModelParams {
    ModelParams::new(gamma, r, phase, 0.0).unwrap()
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// A smooth stand-in for the one-photon vertex, used where only the
/// algebra of the three-photon assembly is under test.
struct Synthetic;

impl ConnectedVertices for Synthetic {
    fn regular(&self, k: f64, e: f64) -> C64 {
        C64::new(0.3 * (k - 0.2 * e).sin(), 0.1 + 0.05 * k * e) / C64::new(1.0 + k * k, 0.4 * e)
    }

    fn pair(&self, a: f64, b: f64) -> C64 {
        C64::new((a * b).cos(), a - b) * 0.01
    }
}

/// `G(0) G(a) [1/a + F̄(b,0;a+b)] G(−c) [−1/c + F̄(c,0;0)]`, the product form
/// before the free-vertex poles are rewritten; valid at generic momenta.
fn product_form(p: &ModelParams, v: &dyn ConnectedVertices, m: [f64; 3]) -> C64 {
    let [a, b, c] = m;
    let g = |x: f64| propagator(p, C64::new(x, 0.0));
    g(0.0) * g(a) * (1.0 / a + v.regular(b, a + b)) * g(-c) * (-1.0 / c + v.regular(c, 0.0))
}

fn permutations(m: [f64; 3]) -> [[f64; 3]; 6] {
    let [x, y, z] = m;
    [[x, y, z], [x, z, y], [y, x, z], [y, z, x], [z, x, y], [z, y, x]]
}

#[test]
fn full_extinction_on_resonance() {
    let p = params(1.0, 5.0, 0.0);
    let s = single_photon_s(&p, 0.0).unwrap();
    assert!(s[0][0].norm() < 1e-14);
    assert!((s[1][0] + 1.0).norm() < 1e-14);
}

#[test]
fn decoupled_atom_scatters_trivially() {
    let p = params(0.0, 5.0, 0.3);
    let s = single_photon_s(&p, 0.7).unwrap();
    assert_eq!(
        s,
        [
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
        ]
    );
    let grid = MomentumGrid::uniform(5.0, 51).unwrap();
    let m = TwoPhotonAmplitude::new(&p, OnShellColumn::bare(), &grid, AmplitudeMode::Exact);
    assert_eq!(m.sup_norm(), 0.0);
    let q = ThreePhotonAmplitude::new(
        &p,
        &BareVertices,
        &MomentumGrid::uniform(2.0, 9).unwrap(),
        AmplitudeMode::QuasiMarkovian,
    );
    assert_eq!(q.sup_norm(), 0.0);
}

#[test]
fn weak_coupling_amplitudes_scale_away() {
    let grid = MomentumGrid::uniform(5.0, 51).unwrap();
    let mut prev = f64::INFINITY;
    for gamma in [1e-2, 1e-3, 1e-4] {
        let p = params(gamma, 1.0, PI / 4.0);
        let m = TwoPhotonAmplitude::new(&p, OnShellColumn::bare(), &grid, AmplitudeMode::Markovian);
        // The carrier factor G(0) ∝ 1/γ leaves M ∝ γ.
        let away = m.at(Channel::One, Channel::One, 3.0).norm();
        assert!(away < prev * 0.2);
        prev = away;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn single_photon_s_is_unitary(gamma in 0.01f64..5.0, r in 0.0f64..10.0, phase in 0.0f64..(2.0 * PI),
                                  delta in -2.0f64..2.0, frac in 0.05f64..0.95) {
        let p = ModelParams::asymmetric(gamma, frac, r, phase, delta).unwrap();
        let s = SinglePhotonS::new(p);
        let ks: Vec<f64> = (0..1001).map(|i| -20.0 + 0.04 * i as f64).collect();
        prop_assert!(s.unitarity_defect(&ks).unwrap() < 1e-10);
    }

    #[test]
    fn symmetric_legs_are_reciprocal(gamma in 0.01f64..5.0, r in 0.0f64..10.0, phase in 0.0f64..(2.0 * PI),
                                     k in -20.0f64..20.0) {
        let s = single_photon_s(&params(gamma, r, phase), k).unwrap();
        prop_assert!((s[0][1] - s[1][0]).norm() < 1e-12);
    }

    #[test]
    fn bare_m_is_symmetric(gamma in 0.1f64..3.0, r in 0.0f64..8.0, phase in 0.0f64..(2.0 * PI)) {
        let grid = MomentumGrid::uniform(10.0, 201).unwrap();
        let m = TwoPhotonAmplitude::new(&params(gamma, r, phase), OnShellColumn::bare(), &grid, AmplitudeMode::QuasiMarkovian);
        prop_assert!(m.symmetry_defect() <= 1e-9 * m.sup_norm().max(1.0));
    }

    #[test]
    fn symmetrized_core_matches_product_form(gamma in 0.2f64..2.0, r in 0.0f64..6.0, phase in 0.0f64..(2.0 * PI),
                                             k in -3.0f64..3.0, q in -3.0f64..3.0) {
        let m = [-k - q, k, q];
        let gap = m.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
            .min((m[0] - m[1]).abs()).min((m[1] - m[2]).abs()).min((m[0] - m[2]).abs());
        prop_assume!(gap > 1e-2);
        let p = params(gamma, r, phase);
        for v in [&Synthetic as &dyn ConnectedVertices, &BareVertices] {
            let got = symmetric_core(&p, v, m, false);
            let want = permutations(m).iter().map(|&x| product_form(&p, v, x)).sum::<C64>() / 6.0;
            prop_assert!(rel(got, want) < 1e-9, "{} vs {}", got, want);
        }
    }
}

#[test]
fn exact_m_is_symmetric_on_the_grid() {
    let p = params(1.0, 5.0, PI / 4.0);
    let grid = MomentumGrid::uniform(20.0, 801).unwrap();
    let m = TwoPhotonAmplitude::solve(
        &p,
        &MomentumGrid::uniform(40.0, 801).unwrap(),
        &grid,
        AmplitudeMode::Exact,
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(m.symmetry_defect() < 1e-9 * m.sup_norm());
}

#[test]
fn point_coupling_m_matches_closed_form() {
    let gamma = 0.7;
    let delta = 0.3;
    let p = ModelParams::new(gamma, 0.0, 0.0, delta).unwrap();
    let grid = MomentumGrid::uniform(10.0, 201).unwrap();
    let a = C64::new(delta, 2.0 * gamma);
    let closed = |k: f64| -(gamma / PI).powi(2) / (a * (a * a - k * k));
    let markov = TwoPhotonAmplitude::new(&p, OnShellColumn::bare(), &grid, AmplitudeMode::Markovian);
    let exact = TwoPhotonAmplitude::solve(
        &p,
        &MomentumGrid::uniform(80.0, 1601).unwrap(),
        &grid,
        AmplitudeMode::Exact,
        &SolverOptions::default(),
    )
    .unwrap();
    for (i, &k) in grid.nodes().iter().enumerate() {
        for o in Channel::ALL {
            for inc in Channel::ALL {
                assert!(rel(markov.values(o, inc)[i], closed(k)) < 1e-12, "k = {k}");
                let e = rel(exact.values(o, inc)[i], closed(k));
                // Limited by truncating the path at ±80.
                assert!(e < 1e-4, "k = {k}: {e:e}");
            }
        }
    }
}

#[test]
fn two_photon_sector_identical_in_exact_and_weak_correlation_modes() {
    let p = params(1.0, 5.0, PI / 4.0);
    let vg = MomentumGrid::uniform(40.0, 801).unwrap();
    let column = OnShellColumn::solve(&p, &vg, VertexMode::Exact, &SolverOptions::default()).unwrap();
    let grid = MomentumGrid::uniform(20.0, 401).unwrap();
    let exact = TwoPhotonAmplitude::new(&p, column.clone(), &grid, AmplitudeMode::Exact);
    let wc = TwoPhotonAmplitude::new(&p, column, &grid, AmplitudeMode::WeakCorrelation);
    for o in Channel::ALL {
        for i in Channel::ALL {
            for (a, b) in exact.values(o, i).iter().zip(wc.values(o, i)) {
                assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
            }
        }
    }
}

#[test]
fn m_agrees_with_symmetrized_connected_t() {
    let p = params(1.0, 3.0, PI / 4.0);
    let vgrid = MomentumGrid::uniform(10.0, 201).unwrap();
    let table = solve_f11(&p, 0.0, &vgrid, VertexMode::Exact).unwrap();
    let grid = MomentumGrid::uniform(4.0, 41).unwrap();
    let centre = grid.center();
    // The node k = 0 sits on the free pole; its symmetrized value is not compared.
    let t: Vec<ChannelMatrix> = grid
        .nodes()
        .iter()
        .map(|&k| two_photon_connected_t(&p, &table, k).unwrap_or_default())
        .collect();
    let sym = symmetrize_m(&grid, &t, AmplitudeMode::Exact);
    let direct = TwoPhotonAmplitude::new(
        &p,
        OnShellColumn::from_table(&table).unwrap(),
        &grid,
        AmplitudeMode::Exact,
    );
    for o in Channel::ALL {
        for i in Channel::ALL {
            for (j, (a, b)) in sym.values(o, i).iter().zip(direct.values(o, i)).enumerate() {
                assert!(j == centre || rel(*a, *b) < 1e-10);
            }
        }
    }
    assert!(matches!(
        two_photon_connected_t(&p, &table, 0.0),
        Err(ScatteringError::CoincidentMomenta { .. })
    ));
}

#[test]
fn symmetrize_m_projects_onto_the_symmetric_part() {
    let grid = MomentumGrid::uniform(3.0, 31).unwrap();
    let f = |o: usize, i: usize, k: f64| C64::new(k * (1.0 + o as f64), (2 * i + o) as f64 * k * k);
    let anti: Vec<ChannelMatrix> = grid
        .nodes()
        .iter()
        .map(|&k| std::array::from_fn(|o| std::array::from_fn(|i| f(o, i, k) - f(i, o, -k))))
        .collect();
    let zero = symmetrize_m(&grid, &anti, AmplitudeMode::Exact);
    assert!(zero.sup_norm() < 1e-15);
    let sym: Vec<ChannelMatrix> = grid
        .nodes()
        .iter()
        .map(|&k| std::array::from_fn(|o| std::array::from_fn(|i| f(o, i, k) + f(i, o, -k))))
        .collect();
    let same = symmetrize_m(&grid, &sym, AmplitudeMode::Exact);
    for o in Channel::ALL {
        for i in Channel::ALL {
            for (j, v) in same.values(o, i).iter().enumerate() {
                assert!((v - sym[j][o.index()][i.index()]).norm() < 1e-15);
            }
        }
    }
}

#[test]
fn m_tail_is_consistent_with_the_table() {
    let p = params(1.0, 5.0, PI / 4.0);
    let grid = MomentumGrid::uniform(40.0, 4001).unwrap();
    let m = TwoPhotonAmplitude::solve(
        &p,
        &MomentumGrid::uniform(80.0, 1601).unwrap(),
        &grid,
        AmplitudeMode::Exact,
        &SolverOptions::default(),
    )
    .unwrap();
    for o in Channel::ALL {
        for i in Channel::ALL {
            let TailSpec::Lorentzian { terms, rate } = m.tail(o, i) else {
                panic!("expected a Lorentzian tail");
            };
            for k in [-40.0, 40.0, 60.0] {
                let model: C64 =
                    terms.iter().map(|(s, a)| a * C64::new(0.0, k * s).exp()).sum::<C64>() / (k * k + rate * rate);
                assert!(rel(model, m.at(o, i, k)) < 0.1, "k = {k}");
            }
            fourier_oscillatory(m.values(o, i), 1.0, &grid, &m.tail(o, i)).unwrap();
        }
    }
    // |M|² falls below 1e-4 of its peak at the edge of a desk-scale grid.
    let peak = m
        .values(Channel::One, Channel::One)
        .iter()
        .map(|z| z.norm_sqr())
        .fold(0.0, f64::max);
    assert!(m.at(Channel::One, Channel::One, 40.0).norm_sqr() < 1e-4 * peak);
    assert!(m.at(Channel::One, Channel::One, 80.0).norm_sqr() < 1e-4 * peak);
}

/// Largest deviation across the collision scan from the quartic through
/// the samples at `a ∈ {0, ±h, ±2h}`; a jump at `a = 0` or a `1/a` remnant
/// survives the subtraction, smooth dependence does not.
fn collision_scan(p: &ModelParams, v: &dyn ConnectedVertices, b: f64) -> f64 {
    let t = |a: f64| connected_core(p, v, [a, b, -a - b], false);
    let h = 1e-3;
    let xs: Vec<f64> = (-2..=2).map(|m| m as f64 * h).collect();
    let ys: Vec<C64> = xs.iter().map(|&x| t(x)).collect();
    let quartic = |s: f64| -> C64 {
        (0..5)
            .map(|i| {
                let w: f64 = (0..5)
                    .filter(|&j| j != i)
                    .map(|j| (s - xs[j]) / (xs[i] - xs[j]))
                    .product();
                ys[i] * w
            })
            .sum()
    };
    let scale = ys[2].norm();
    let mut worst: f64 = 0.0;
    for e in 0..=60 {
        let a = 10f64.powf(-9.0 + 0.1 * e as f64);
        for s in [a, -a] {
            worst = worst.max((t(s) - quartic(s)).norm() / scale);
        }
    }
    worst
}

#[test]
fn collision_limit_is_removable() {
    for (gamma, r) in [(1.0, 5.0), (0.3, 1.0)] {
        let p = params(gamma, r, PI / 4.0);
        for b in [0.7, -0.25, 1e-7] {
            let bare = collision_scan(&p, &BareVertices, b);
            let synthetic = collision_scan(&p, &Synthetic, b);
            assert!(
                bare < 1e-4 && synthetic < 1e-4,
                "γ={gamma} R={r} b={b}: {bare:e} {synthetic:e}"
            );
        }
    }
}

#[test]
fn q_is_invariant_under_simultaneous_permutations() {
    let p = params(1.0, 5.0, PI / 4.0);
    let grid = MomentumGrid::uniform(2.0, 21).unwrap();
    let q = ThreePhotonAmplitude::new(&p, &Synthetic, &grid, AmplitudeMode::Exact);
    let nodes = grid.nodes();
    let scale = q.sup_norm();
    for (i, &k) in nodes.iter().enumerate() {
        for (j, &qq) in nodes.iter().enumerate() {
            let m = [-k - qq, k, qq];
            for ch in channel_triples() {
                let stored = q.value(ch, i, j);
                for s in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                    let pm = [m[s[0]], m[s[1]], m[s[2]]];
                    let pc = [ch[s[0]], ch[s[1]], ch[s[2]]];
                    let again = three_photon_prefactor(&p, pc, pm) * symmetric_core(&p, &Synthetic, pm, true);
                    assert!((again - stored).norm() < 1e-8 * scale);
                }
            }
        }
    }
}

#[test]
fn symmetrize_q_examples() {
    let grid = MomentumGrid::uniform(1.0, 7).unwrap();
    let weight = |c: Channel| 1.0 + c.index() as f64;
    let invariant = |ch: [Channel; 3], m: [f64; 3]| {
        let s: f64 = ch.iter().zip(m).map(|(&c, k)| weight(c) * k * k).sum();
        C64::new(s.cos(), s)
    };
    let q = symmetrize_q(invariant, &grid, AmplitudeMode::Exact);
    let nodes = grid.nodes();
    for ch in channel_triples() {
        for (i, &k) in nodes.iter().enumerate() {
            for (j, &qq) in nodes.iter().enumerate() {
                assert!((q.value(ch, i, j) - invariant(ch, [-k - qq, k, qq])).norm() < 1e-14);
            }
        }
    }
    let odd = |ch: [Channel; 3], m: [f64; 3]| {
        let x = |n: usize| weight(ch[n]) * m[n];
        C64::new(x(0) - x(1), 0.0) * (x(2) + 1.0)
    };
    assert!(symmetrize_q(odd, &grid, AmplitudeMode::Exact).sup_norm() < 1e-14);
}

#[test]
fn three_photon_inputs_are_checked() {
    let p = params(1.0, 2.0, PI / 4.0);
    let grid = MomentumGrid::uniform(4.0, 41).unwrap();
    let markov = solve_f11_family(&p, &[0.0], &grid, VertexMode::Markovian, &FamilyOptions::default()).unwrap();
    assert!(matches!(
        three_photon_connected_t(&p, &markov, None, 0.2, 0.3, AmplitudeMode::Exact),
        Err(ScatteringError::MissingF12)
    ));
    assert!(matches!(
        three_photon_connected_t(&p, &markov, None, 0.2, 0.3, AmplitudeMode::WeakCorrelation),
        Err(ScatteringError::Incompatible(_))
    ));
    let t = three_photon_connected_t(&p, &markov, None, 0.2, 0.3, AmplitudeMode::QuasiMarkovian).unwrap();
    let core = connected_core(&p, &BareVertices, [-0.5, 0.2, 0.3], false);
    for (ch, v) in channel_triples().iter().zip(t) {
        assert!(rel(v, three_photon_prefactor(&p, *ch, [-0.5, 0.2, 0.3]) * core) < 1e-14);
    }
}

/// Largest pairwise relative distance between the exact, weak-correlation
/// and quasi-Markovian `Q` over a small grid.
fn mode_spread(p: &ModelParams, contour_grid: MomentumGrid, depth: Option<f64>) -> (f64, f64) {
    let solver = SolverOptions {
        contour_depth: depth,
        ..SolverOptions::default()
    };
    let k2 = 6.0;
    let energies: Vec<f64> = (0..=24).map(|i| -k2 + 0.5 * i as f64).collect();
    let fam = solve_f11_family(
        p,
        &energies,
        &MomentumGrid::uniform(k2, 241).unwrap(),
        VertexMode::Exact,
        &FamilyOptions {
            contour_grid: Some(contour_grid.clone()),
            solver,
            ..FamilyOptions::default()
        },
    )
    .unwrap();
    let slice = solve_f12_slice(
        p,
        &fam,
        &SliceOptions {
            contour_grid: contour_grid.clone(),
            table_extent: Some(3.0),
            table_points: 121,
            solver,
            ..SliceOptions::default()
        },
    )
    .unwrap();
    let grid = MomentumGrid::uniform(1.0, 11).unwrap();
    let build = |mode| ThreePhotonAmplitude::from_tables(p, &fam, Some(&slice), &grid, mode).unwrap();
    let exact = build(AmplitudeMode::Exact);
    let wc = build(AmplitudeMode::WeakCorrelation);
    let qm = build(AmplitudeMode::QuasiMarkovian);
    let all = [Channel::One; 3];
    let dist = |a: &ThreePhotonAmplitude, b: &ThreePhotonAmplitude| {
        let (ta, tb) = (a.table(all), b.table(all));
        let scale = tb.iter().map(|z| z.norm()).fold(0.0, f64::max);
        ta.iter().zip(&tb).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    };
    (dist(&wc, &exact).max(dist(&qm, &exact)), dist(&qm, &wc))
}

#[test]
fn modes_agree_only_in_the_markovian_regime() {
    let (near, _) = mode_spread(
        &params(1.0, 1e-3, PI / 4.0),
        MomentumGrid::uniform(80.0, 321).unwrap(),
        Some(2.0),
    );
    assert!(near < 1e-3, "spread {near} at γR = 1e-3");
    let (_, far) = mode_spread(
        &params(1.0, 5.0, PI / 4.0),
        MomentumGrid::uniform(6.0, 121).unwrap(),
        None,
    );
    assert!(far > 0.05, "spread {far} at γR = 5");
}
