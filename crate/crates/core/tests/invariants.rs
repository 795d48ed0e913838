//! Property tests of the scheme, the Pucci operators and the propagation
//! diagnostics, plus small benchmark runs of the scheme.

use proptest::prelude::*;

use nmpl::diagnostics::{nondegeneracy_probe, propagation_test, ProbeConfig};
use nmpl::measures::{geometric_grid, least_squares};
use nmpl::operators::{pucci_minus, pucci_plus};
use nmpl::reachability::{iterate_reachable, MeasureFamily, ReachConfig};
use nmpl::scheme::{discrete_comparison_check, simulate, stability_dt, SchemeConfig, StepRecord, Trajectory};
use nmpl::{Boundary, Exterior, Grid, GridField, MeasureSpec, Nonlinearity, PucciParams, QuadratureConfig, SymMatrix};

fn periodic_field(values: Vec<f64>) -> GridField<f64> {
    let n = values.len();
    let grid = Grid::new(vec![0.0], vec![1.0], vec![n], true).unwrap();
    GridField::new(grid, Boundary::Periodic, values, 0.0).unwrap()
}

fn run(u: GridField<f64>, f: Nonlinearity<f64>, m: MeasureSpec<f64>, steps: f64, dt: Option<f64>) -> Trajectory<f64> {
    let mut c = SchemeConfig::new(u, f, m, 1.0);
    let dt = dt.unwrap_or_else(|| stability_dt(&c).unwrap());
    c.dt = Some(dt);
    c.t_end = steps * dt;
    c.stride = 1;
    simulate(&c).unwrap()
}

fn symmetric(n: usize, entries: &[f64]) -> SymMatrix<f64> {
    let mut rows = vec![0.0; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            rows[i * n + j] = entries[k];
            rows[j * n + i] = entries[k];
            k += 1;
        }
    }
    SymMatrix::from_rows(n, &rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn discrete_maximum_principle(values in prop::collection::vec(-1.0f64..1.0, 8..24), beta in 0.3f64..1.9) {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tr = run(periodic_field(values), Nonlinearity::PureNonlocal, MeasureSpec::radial_stable(beta, 1).unwrap(), 15.0, None);
        for r in &tr.records {
            prop_assert!(r.max <= hi && r.min >= lo, "{} {} outside [{lo}, {hi}]", r.min, r.max);
        }
        for w in tr.records.windows(2) {
            prop_assert!(w[1].max <= w[0].max && w[1].min >= w[0].min);
        }
    }

    #[test]
    fn ordered_data_stay_ordered(
        values in prop::collection::vec(-1.0f64..1.0, 12),
        gaps in prop::collection::vec(0.0f64..0.3, 12),
        growing in any::<bool>(),
    ) {
        let f = if growing { Nonlinearity::GrowingInterface } else { Nonlinearity::PureNonlocal };
        let m = MeasureSpec::radial_stable(1.2, 1).unwrap();
        let v: Vec<f64> = values.iter().zip(&gaps).map(|(a, b)| a + b).collect();
        let (u, v) = (periodic_field(values), periodic_field(v));
        let probe = |x: &GridField<f64>| stability_dt(&SchemeConfig::new(x.clone(), f.clone(), m.clone(), 1.0)).unwrap();
        let dt = probe(&u).min(probe(&v));
        let tu = run(u, f.clone(), m.clone(), 10.0, Some(dt));
        let tv = run(v, f, m, 10.0, Some(dt));
        prop_assert!(discrete_comparison_check(&tu, &tv).unwrap().violation <= 1e-12);
    }

    #[test]
    fn pucci_operators(
        n in 1usize..5,
        entries in prop::collection::vec(-4.0f64..4.0, 10),
        dir in prop::collection::vec(-2.0f64..2.0, 4),
        lambda in 0.0f64..1.0,
        spread in 0.1f64..2.0,
        s in 0.0f64..5.0,
    ) {
        let p = PucciParams::new(lambda, lambda + spread).unwrap();
        let x = symmetric(n, &entries);
        let a = &dir[..n];
        let psd = SymMatrix::outer(a);
        let scale = 1.0 + entries.iter().map(|v| v.abs()).sum::<f64>() + a.iter().map(|v| v * v).sum::<f64>();
        let tol = 1e-12 * scale * (lambda + spread);
        prop_assert!((pucci_plus(&x.scale(s), &p) - s * pucci_plus(&x, &p)).abs() <= tol * (1.0 + s));
        prop_assert!(pucci_plus(&x.add(&psd), &p) >= pucci_plus(&x, &p) - tol);
        prop_assert!(pucci_minus(&x, &p) <= pucci_plus(&x, &p) + tol);
        prop_assert!((pucci_minus(&x, &p) + pucci_plus(&x.scale(-1.0), &p)).abs() <= tol);
    }

    #[test]
    fn constant_field_propagates(c in -5.0f64..5.0, n in 4usize..20) {
        let tr = run(periodic_field(vec![c; n]), Nonlinearity::PureNonlocal, MeasureSpec::radial_stable(1.0, 1).unwrap(), 5.0, None);
        let rep = propagation_test(&tr, 1e-12, None).unwrap();
        prop_assert!(rep.all_horizontal() && rep.all_vertical());
    }

    #[test]
    fn probe_is_monotone_in_the_nonlocal_term(beta in 0.6f64..1.9, t0 in 0.1f64..2.0) {
        let m = MeasureSpec::half_space_stable(beta, 1, 0).unwrap();
        let cfg = ProbeConfig {
            xbar: vec![0.0],
            t0,
            r: 1.0,
            eta: 0.5,
            c: 1.0,
            gammas: geometric_grid(1.0, 1e3, 4),
            samples: 4,
            seed: 1,
            quad: QuadratureConfig::default(),
        };
        for f in [Nonlinearity::PureNonlocal, Nonlinearity::GrowingInterface] {
            prop_assert!(nondegeneracy_probe(&f, &m, &cfg).unwrap().monotone_in_l);
        }
    }
}

/// `∫ (1 - cos z) |z|^(-1-β) dz`, the decay rate of `cos x`.
fn stable_symbol(beta: f64) -> f64 {
    -2.0 * statrs::function::gamma::gamma(-beta) * (std::f64::consts::FRAC_PI_2 * beta).cos()
}

fn decayed_amplitude(beta: f64, cells: usize, t: f64, dt: Option<f64>) -> f64 {
    let tau = std::f64::consts::TAU;
    let g = Grid::new(vec![0.0], vec![tau], vec![cells], true).unwrap();
    let u = GridField::sample(g, Boundary::Periodic, 0.0, |x| x[0].cos()).unwrap();
    let mut c = SchemeConfig::new(u, Nonlinearity::PureNonlocal, MeasureSpec::radial_stable(beta, 1).unwrap(), t);
    c.dt = dt;
    simulate(&c).unwrap().records.last().unwrap().max
}

#[test]
fn heat_benchmark_converges_at_first_order() {
    // Refinement at a fixed ratio dt/h, about three quarters of the
    // stability bound, so the time error scales exactly with h.
    let t = 0.1;
    let exact = (-std::f64::consts::PI * t).exp();
    let cells = [64usize, 128, 256, 512, 1024];
    let hs: Vec<f64> = cells.iter().map(|&n| (std::f64::consts::TAU / n as f64).ln()).collect();
    let errs: Vec<f64> = cells.iter().map(|&n| (decayed_amplitude(1.0, n, t, Some(t / (3 * n / 32) as f64)) - exact).abs().ln()).collect();
    let (order, _) = least_squares(&hs, &errs).unwrap();
    assert!(order >= 1.0, "observed order {order}");
}

#[test]
fn stable_decay_matches_gamma_symbol() {
    // The stability bound for β = 0.5 allows steps so long that the time
    // error alone exceeds the tolerance.
    for (beta, dt) in [(0.5, Some(1e-3)), (1.5, None)] {
        let exact = (-stable_symbol(beta) * 0.1).exp();
        let amp = decayed_amplitude(beta, 256, 0.1, dt);
        assert!((amp - exact).abs() / exact < 0.02, "beta {beta}: {amp} vs {exact}");
    }
}

#[test]
fn dirichlet_exterior_drains_mass() {
    let g = Grid::new(vec![0.0], vec![1.0], vec![32], false).unwrap();
    let u = GridField::sample(g, Boundary::Dirichlet(Exterior::constant(0.0)), 0.0, |_| 1.0).unwrap();
    let initial: f64 = u.values().iter().sum();
    let tr = simulate(&SchemeConfig::new(u, Nonlinearity::PureNonlocal, MeasureSpec::radial_stable(1.0, 1).unwrap(), 0.05)).unwrap();
    let last: f64 = tr.snapshots.last().unwrap().1.values().iter().sum();
    assert!(last < 0.99 * initial, "{last} vs {initial}");
}

#[test]
fn linearized_comparison_maximum_does_not_grow() {
    let g = Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![16, 16], false).unwrap();
    let u = GridField::sample(g, Boundary::Dirichlet(Exterior::constant(0.0)), 0.0, |x| {
        (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) + 0.3 * (5.0f64 * x[0]).sin()
    })
    .unwrap();
    let f = Nonlinearity::LinearizedComparison { c: 0.5, pucci: PucciParams::new(0.5, 1.0).unwrap() };
    let tr = run(u, f, MeasureSpec::radial_stable(1.5, 2).unwrap(), 40.0, None);
    for w in tr.records.windows(2) {
        assert!(w[1].max <= w[0].max + 1e-14, "{} -> {}", w[0].max, w[1].max);
    }
}

#[test]
fn nonconstant_heat_does_not_propagate_horizontally() {
    let tau = std::f64::consts::TAU;
    let g = Grid::new(vec![0.0], vec![tau], vec![64], true).unwrap();
    let u = GridField::sample(g, Boundary::Periodic, 0.0, |x| x[0].cos()).unwrap();
    let tr = simulate(&SchemeConfig::new(u, Nonlinearity::PureNonlocal, MeasureSpec::radial_stable(1.0, 1).unwrap(), 0.1)).unwrap();
    let rep = propagation_test(&tr, 1e-8, None).unwrap();
    assert!(rep.levels.iter().all(|l| !l.horizontal));
}

#[test]
fn one_sided_reachable_set_is_a_propagation_component() {
    let n = 32;
    let g = Grid::new(vec![-1.0], vec![1.0], vec![n], false).unwrap();
    let m = MeasureSpec::half_space_stable(1.5, 1, 0).unwrap();
    let seed = (0..n).find(|&i| g.node(i)[0] > 0.0).unwrap();
    let reach = iterate_reachable(&MeasureFamily::Constant(m), &[seed], &g, None, 100, &ReachConfig::default()).unwrap();
    let right: Vec<bool> = (0..n).map(|i| g.node(i)[0] > 0.0).collect();
    assert_eq!(reach.mask, right);
    // A state at its maximum on the reachable half line and below it elsewhere.
    let snapshots: Vec<(usize, GridField<f64>)> = (0..3)
        .map(|k| {
            let u = GridField::sample(g.clone(), Boundary::Dirichlet(Exterior::constant(1.0)), 0.1 * k as f64, |x| {
                if x[0] > 0.0 {
                    1.0
                } else {
                    0.2 + 0.1 * k as f64
                }
            })
            .unwrap();
            (k, u)
        })
        .collect();
    let records = snapshots.iter().map(|(k, u)| StepRecord { step: *k, t: u.time(), max: 1.0, argmax: seed, min: u.values()[0] }).collect();
    let tr = Trajectory { dt: 0.1, horizon_limited: false, records, snapshots };
    let on_component = propagation_test(&tr, 1e-12, Some(&reach.mask)).unwrap();
    let everywhere = propagation_test(&tr, 1e-12, None).unwrap();
    assert!(on_component.all_horizontal() && on_component.all_vertical());
    assert!(everywhere.levels.iter().all(|l| !l.horizontal));
}
