use proptest::prelude::*;

use routhlab_core::calculus::{fd_jet, jet, value};
use routhlab_core::expr::Expr;
use routhlab_core::homogenize::{
    ftau, gauge_shift, homogenize, jacobi_finsler, quasi_definite_check, solve_iota0, GaugeFunction,
};
use routhlab_core::lagrangian::energy;
use routhlab_core::ode::IntegratorStats;
use routhlab_core::routh::{momentum, solve_momentum, CyclicSplit};
use routhlab_core::sampling::rng;
use routhlab_core::spray::canonical_spray;
use routhlab_core::verify::{builtin_lagrangian, point_set_distance, rescale_to_energy, FAMILIES};
use routhlab_core::{LagrangianModel, MechanicalData, Trajectory};

fn family() -> impl Strategy<Value = usize> {
    0..FAMILIES.len()
}

fn point(radius: f64) -> impl Strategy<Value = Vec<f64>> {
    (0.0..1.0f64, 0.0..std::f64::consts::TAU).prop_map(move |(r, a)| vec![radius * r.sqrt() * a.cos(), radius * r.sqrt() * a.sin()])
}

fn velocity() -> impl Strategy<Value = Vec<f64>> {
    (0.2..2.0f64, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| vec![r * a.cos(), r * a.sin()])
}

/// Model, energy level and a start point inside the sampling region.
fn model_at(i: usize, x: &[f64], s: f64) -> (LagrangianModel, f64, Vec<f64>) {
    let (l, floor) = builtin_lagrangian(FAMILIES[i]).unwrap();
    if FAMILIES[i] == "poincare_magnetic" {
        (l, 1.0 + 2.0 * s, x.iter().map(|c| 0.5 * c).collect())
    } else {
        (l, floor + 0.5 + 1.5 * s, x.iter().map(|c| 0.8 * c).collect())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn finsler_function_is_one_homogeneous(i in family(), x in point(1.0), y in velocity(), s in 0.0..1.0f64, lambda in 0.05..20.0f64) {
        let (l, e, x) = model_at(i, &x, s);
        let f = jacobi_finsler(&l, e).unwrap();
        let ys: Vec<f64> = y.iter().map(|c| lambda * c).collect();
        prop_assert!(rel(value(&f, &x, &ys).unwrap(), lambda * value(&f, &x, &y).unwrap()) <= 1e-10);
    }

    #[test]
    fn canonical_spray_is_two_homogeneous(i in family(), x in point(1.0), y in velocity(), s in 0.0..1.0f64, lambda in 0.05..20.0f64) {
        let (l, e, x) = model_at(i, &x, s);
        let f = jacobi_finsler(&l, e).unwrap();
        let a = canonical_spray(&f, &x, &y).unwrap().accel;
        let ys: Vec<f64> = y.iter().map(|c| lambda * c).collect();
        let b = canonical_spray(&f, &x, &ys).unwrap().accel;
        let expect = &a * (lambda * lambda);
        prop_assert!((b - &expect).amax() <= 1e-8 * expect.amax().max(1e-300));
    }

    #[test]
    fn autodiff_matches_finite_differences(i in family(), x in point(1.0), y in velocity(), s in 0.0..1.0f64) {
        let (l, e, x) = model_at(i, &x, s);
        let ad = jet(&l, &x, &y).unwrap();
        prop_assert!(ad.max_rel_diff(&fd_jet(&l, &x, &y, None).unwrap()) <= 1e-6);
        let f = jacobi_finsler(&l, e).unwrap();
        let ad = jet(&f, &x, &y).unwrap();
        prop_assert!(ad.max_rel_diff(&fd_jet(&f, &x, &y, None).unwrap()) <= 1e-6);
    }

    #[test]
    fn fibre_hessian_is_quasi_definite(i in family(), x in point(1.0), y in velocity(), s in 0.0..1.0f64, seed in any::<u64>()) {
        let (l, e, x) = model_at(i, &x, s);
        let f = jacobi_finsler(&l, e).unwrap();
        let report = quasi_definite_check(&f, &x, &y, 32, &mut rng(seed)).unwrap();
        prop_assert!(report.overall, "{:?}", report.metrics);
    }

    #[test]
    fn rescaled_velocity_sits_on_the_level(i in family(), x in point(1.0), y in velocity(), s in 0.0..1.0f64) {
        let (l, e, x) = model_at(i, &x, s);
        let v = rescale_to_energy(&l, &x, &y, e).unwrap();
        prop_assert!((energy(&l, &x, &v).unwrap() - e).abs() <= 1e-12 * (1.0 + e));
        let iota = solve_iota0(&l, e, &x, &v, None).unwrap().iota0;
        prop_assert!((iota - 1.0).abs() <= 1e-12);
        let lambda = v[0] / y[0];
        let iota_y = solve_iota0(&l, e, &x, &y, None).unwrap().iota0;
        prop_assert!((lambda * iota_y - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn homogenized_field_is_one_homogeneous(x in point(1.0), y in velocity(), t in -3.0..3.0f64, y0 in 0.1..4.0f64, lambda in 0.05..20.0f64) {
        let l = builtin_lagrangian("magnetic").unwrap().0;
        let f = homogenize(&l).unwrap();
        let xs = [t, x[0], x[1]];
        let ys = [y0, y[0], y[1]];
        let scaled: Vec<f64> = ys.iter().map(|c| lambda * c).collect();
        prop_assert!(rel(value(&f, &xs, &scaled).unwrap(), lambda * value(&f, &xs, &ys).unwrap()) <= 1e-12);
    }

    #[test]
    fn gauge_shift_round_trips(x in point(0.9), y in velocity(), a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let f = ftau(0.5).unwrap();
        let g = GaugeFunction::parse(2, &format!("{a}*x1*x2 + {b}*sin(x1)")).unwrap();
        let back = gauge_shift(&gauge_shift(&f, &g).unwrap(), &g.negated()).unwrap();
        prop_assert!((value(&back, &x, &y).unwrap() - value(&f, &x, &y).unwrap()).abs() <= 1e-14);
    }

    #[test]
    fn momentum_solve_inverts_momentum(r in 0.5..3.0f64, vr in -1.0..1.0f64, mu in -3.0..3.0f64) {
        let d = MechanicalData::parse(2, &["1", "0", "0", "x1^2"], None, "-1/x1").unwrap();
        let l = LagrangianModel::simple_mechanical(d).unwrap();
        let split = CyclicSplit::new(2, &[1]).unwrap();
        let sol = solve_momentum(&l, &split, &[mu], &[r], &[vr], None).unwrap();
        let p = momentum(&l, &split, &[r, 0.0], &[vr, sol.velocities[0]]).unwrap();
        prop_assert!((p[0] - mu).abs() <= 1e-12 * (1.0 + mu.abs()));
        prop_assert!((sol.velocities[0] - mu / (r * r)).abs() <= 1e-12 * (1.0 + mu.abs()));
    }
}

/// Circle arc of radius `r` centered at `c`, from angle `a0` over `span`.
fn arc(c: [f64; 2], r: f64, a0: f64, span: f64) -> Trajectory {
    let m = 400;
    let times: Vec<f64> = (0..m).map(|k| span * k as f64 / (m - 1) as f64).collect();
    Trajectory {
        positions: times.iter().map(|t| vec![c[0] + r * (a0 + t).cos(), c[1] + r * (a0 + t).sin()]).collect(),
        velocities: times.iter().map(|t| vec![-r * (a0 + t).sin(), r * (a0 + t).cos()]).collect(),
        energy_log: Vec::new(),
        times,
        stats: IntegratorStats::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn point_set_distance_is_a_pseudometric(
        r1 in 0.5..2.0f64, r2 in 0.5..2.0f64, r3 in 0.5..2.0f64,
        a0 in 0.0..6.0f64, span in 0.5..2.5f64,
    ) {
        // Arcs sharing a start point and tangent, with equal lengths.
        let mk = |r: f64| arc([-r * a0.cos() + a0.cos(), -r * a0.sin() + a0.sin()], r, a0, span / r);
        let (t1, t2, t3) = (mk(r1), mk(r2), mk(r3));
        let d12 = point_set_distance(&t1, &t2).unwrap();
        prop_assert_eq!(d12, point_set_distance(&t2, &t1).unwrap());
        prop_assert!(point_set_distance(&t1, &t1).unwrap() <= 1e-12);
        let d13 = point_set_distance(&t1, &t3).unwrap();
        let d23 = point_set_distance(&t2, &t3).unwrap();
        prop_assert!(d13 <= d12 + d23 + 1e-8);
    }

    #[test]
    fn expression_display_reparses(
        c in -5.0..5.0f64, d in 0.1..3.0f64, x in point(1.0), v in velocity(),
        pick in 0..4usize,
    ) {
        let texts = [
            format!("{c}*x1^2 + sin(x2)*v1 - {d}/(1 + v2^2)"),
            format!("sqrt({d} + x1^2)*exp(-v1) - log({d} + v2^2)"),
            format!("-(x1 - {c})^3 / {d} + cos(v1*v2)^2"),
            format!("({c})*v1*v2 - x1/(-{d}) + 2^x2"),
        ];
        let e = Expr::parse(&texts[pick]).unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        prop_assert_eq!(e.eval::<f64>(&x, &v).unwrap(), again.eval::<f64>(&x, &v).unwrap());
    }
}
