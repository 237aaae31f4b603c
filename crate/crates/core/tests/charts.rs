use finslerkit::autocoords::{AutoparallelChart, ChartKind};
use finslerkit::connection::GeneralConnection;
use finslerkit::lagrangian::builtin;

fn chart(name: &str, kind: ChartKind) -> AutoparallelChart {
    let m = builtin(name).unwrap();
    AutoparallelChart::new(GeneralConnection::cartan(m.lagrangian), m.base, kind).unwrap()
}

#[test]
fn chart_kinds_share_first_order_data() {
    for name in ["sphere2d", "randers2d"] {
        let ext = chart(name, ChartKind::Extended);
        let std = chart(name, ChartKind::Standard);
        for y in [[1.0, 0.0], [0.3, -1.2], [-0.7, 0.7]] {
            let a = ext.series_forward(&[0.0, 0.0], &y, 1).unwrap();
            let b = std.series_forward(&[0.0, 0.0], &y, 1).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-9, "{name}");
            let ja = ext.jacobian(&[0.0, 0.0], &y).unwrap();
            let jb = std.jacobian(&[0.0, 0.0], &y).unwrap();
            let gap = ja.iter().flatten().zip(jb.iter().flatten()).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            assert!(gap <= 1e-7, "{name}: jacobian gap {gap:e}");
        }
    }
}

#[test]
fn inverse_series_seed_improves_with_scale() {
    let c = chart("sphere2d", ChartKind::Extended);
    let y = [0.8, 0.6];
    let err = |s: f64| {
        let xt = [s, -0.5 * s];
        let p = c.to_manifold(&xt, &y).unwrap();
        let (gx, _) = c.inverse_series(&p).unwrap();
        gx.iter().zip(&xt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let ratio = err(0.1) / err(0.05);
    assert!(ratio >= 6.0, "ratio {ratio}");
}
