use proptest::prelude::*;

use finslerkit::autocoords::{AutoparallelChart, ChartKind};
use finslerkit::connection::GeneralConnection;
use finslerkit::dynamics::{integrate_horizontal_autoparallel, IntegratorConfig};
use finslerkit::lagrangian::{builtin, Expr, FinslerLagrangian};
use finslerkit::TangentBundlePoint;

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>], scale: f64) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0f64, |m, (u, v)| m.max((u - scale * v).abs()))
}

/// Points near the randers base with fibre norm in `[0.5, 2]`.
fn randers_point() -> impl Strategy<Value = TangentBundlePoint> {
    (-0.5..0.5f64, -0.5..0.5f64, 0.0..std::f64::consts::TAU, 0.5..2.0f64)
        .prop_map(|(x1, x2, phi, r)| TangentBundlePoint::new(vec![x1, x2], vec![r * phi.cos(), r * phi.sin()]))
}

/// Timelike points for the quartic model.
fn quartic_point() -> impl Strategy<Value = TangentBundlePoint> {
    (
        prop::collection::vec(-0.3..0.3f64, 4),
        0.8..1.5f64,
        prop::collection::vec(-0.3..0.3f64, 3),
    )
        .prop_map(|(x, t, s)| {
            let y = std::iter::once(t).chain(s.into_iter().map(|v| v * t)).collect();
            TangentBundlePoint::new(x, y)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn connection_is_one_homogeneous(p in randers_point(), lambda in 0.2..5.0f64) {
        let c = GeneralConnection::cartan(builtin("randers2d").unwrap().lagrangian);
        let n1 = c.nonlinear(&p).unwrap();
        let n2 = c.nonlinear(&p.scaled(lambda)).unwrap();
        prop_assert!(max_diff(&n2, &n1, lambda) <= 1e-12 * lambda);
    }

    #[test]
    fn euler_identity_for_the_quartic(p in quartic_point()) {
        let l = builtin("quartic4d").unwrap().lagrangian;
        let grad = l.fibre_gradient(&p).unwrap();
        let lhs: f64 = grad.iter().zip(&p.y).map(|(g, y)| g * y).sum();
        let rhs = 4.0 * l.evaluate(&p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn lagrangian_is_horizontally_constant(p in randers_point()) {
        let l = builtin("randers2d").unwrap().lagrangian;
        let c = GeneralConnection::cartan(l.clone());
        let d = c.horizontal_derivative(&l, &p).unwrap();
        prop_assert!(d.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn berwald_coefficients_are_symmetric(p in quartic_point()) {
        let c = GeneralConnection::cartan(builtin("quartic4d").unwrap().lagrangian);
        let d = c.berwald(&p).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                for k in 0..4 {
                    prop_assert!((d[a][b][k] - d[a][k][b]).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn curvature_is_antisymmetric_and_annihilates_the_gradient(p in randers_point()) {
        let l = builtin("randers2d").unwrap().lagrangian;
        let c = GeneralConnection::cartan(l.clone());
        let r = c.eval(&p).unwrap().curvature;
        let dl = l.fibre_gradient(&p).unwrap();
        for b in 0..2 {
            for k in 0..2 {
                let contraction: f64 = (0..2).map(|a| r[a][b][k] * dl[a]).sum();
                prop_assert!(contraction.abs() <= 1e-12);
                for a in 0..2 {
                    prop_assert!((r[a][b][k] + r[a][k][b]).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn expressions_survive_printing(a in -3.0..3.0f64, b in 0.1..2.0f64, x in -1.0..1.0f64, y in 0.5..2.0f64) {
        let src = format!("{a}*sin(x1)^2 + ({b})*y1*y2 - exp(-x1)*y2^2/({b} + x1^2)");
        let e = Expr::parse(&src).unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        let (xs, ys) = ([x, 0.0], [y, 1.0 - y]);
        let (u, v): (f64, f64) = (e.eval(&xs, &ys), again.eval(&xs, &ys));
        prop_assert!((u - v).abs() <= 1e-14 * (1.0 + u.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn rescaling_the_velocity_seed_rescales_time(
        u in prop::collection::vec(-0.3..0.3f64, 2),
        phi in 0.0..std::f64::consts::TAU,
        alpha in 0.2..2.0f64,
    ) {
        let m = builtin("sphere2d").unwrap();
        let c = GeneralConnection::cartan(m.lagrangian);
        let v = vec![phi.cos(), phi.sin()];
        let cfg = IntegratorConfig::default();
        let au: Vec<f64> = u.iter().map(|s| alpha * s).collect();
        let a = integrate_horizontal_autoparallel(&c, &m.base, &au, &v, 1.0, &cfg).unwrap();
        let b = integrate_horizontal_autoparallel(&c, &m.base, &u, &v, alpha, &cfg).unwrap();
        prop_assert!(a.final_sample().point.max_abs_diff(&b.final_sample().point) <= 1e-8);
    }

    #[test]
    fn charts_invert(
        dx in prop::collection::vec(-0.2..0.2f64, 2),
        phi in 0.0..std::f64::consts::TAU,
        r in 0.5..2.0f64,
        standard in any::<bool>(),
    ) {
        let m = builtin("sphere2d").unwrap();
        let kind = if standard { ChartKind::Standard } else { ChartKind::Extended };
        let chart = AutoparallelChart::new(GeneralConnection::cartan(m.lagrangian), m.base.clone(), kind).unwrap();
        let x: Vec<f64> = m.base.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let p = TangentBundlePoint::new(x, vec![r * phi.cos(), r * phi.sin()]);
        let (xt, yt) = chart.from_manifold(&p).unwrap();
        prop_assert!(chart.to_manifold(&xt, &yt).unwrap().max_abs_diff(&p) <= 1e-8);
    }

    #[test]
    fn model_files_round_trip(p in randers_point()) {
        let l = builtin("randers2d").unwrap().lagrangian;
        let again = FinslerLagrangian::from_json(&l.to_json().unwrap()).unwrap();
        let (u, v) = (l.evaluate(&p).unwrap(), again.evaluate(&p).unwrap());
        prop_assert!((u - v).abs() <= 1e-15 * (1.0 + u.abs()));
    }
}
