use std::process::{Command, Output};

use serde_json::Value;

fn finslerkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finslerkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn connection_report_for_polar_coordinates() {
    let out = finslerkit(&["connection", "--model", "builtin:polar2d", "--point", "2,0", "--direction", "1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["version"], "1.0");
    let want = [[0.0, -2.0], [0.5, 0.5]];
    for a in 0..2 {
        for b in 0..2 {
            let got = v["N"][a][b].as_f64().unwrap();
            assert!((got - want[a][b]).abs() < 1e-12, "N[{a}][{b}] = {got}");
        }
    }
    for key in ["dn_y", "dn_x", "delta_n", "R", "berwald", "delta_christoffel"] {
        assert!(v[key].is_array(), "{key}");
    }
}

#[test]
fn parse_errors_exit_2() {
    let cases: [&[&str]; 4] = [
        &["connection", "--model", "builtin:nowhere", "--point", "1,0", "--direction", "1,0"],
        &["connection", "--model", "builtin:polar2d", "--point", "1,x", "--direction", "1,0"],
        &["connection", "--model", "builtin:polar2d", "--point", "1,0,0", "--direction", "1,0"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = finslerkit(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn model_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plane.json");
    std::fs::write(
        &path,
        r#"{"dimension": 2, "homogeneity_degree": 2, "family": "quadratic",
            "parameters": {"metric": [["1", "0"], ["0", "1"]]}}"#,
    )
    .unwrap();
    let out = finslerkit(&[
        "expmap",
        "--model",
        path.to_str().unwrap(),
        "--point",
        "0.5,-0.5",
        "--velocity",
        "0.25,0.5",
        "--direction",
        "1,2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let x: Vec<f64> = serde_json::from_value(v["image"]["x"].clone()).unwrap();
    assert!((x[0] - 0.75).abs() < 1e-12 && x[1].abs() < 1e-12, "{x:?}");
}

#[test]
fn bad_model_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, r#"{"dimension": 2, "family": "quadratic"}"#).unwrap();
    let out = finslerkit(&["connection", "--model", path.to_str().unwrap(), "--point", "0,0", "--direction", "1,0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn geodesic_csv_layout() {
    let out = finslerkit(&[
        "geodesic",
        "--model",
        "builtin:sphere2d",
        "--point",
        "1,0",
        "--direction",
        "0,1",
        "--samples",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,x2,y1,y2");
    assert_eq!(lines.len(), 6);
}

#[test]
fn chart_forward_inverse_and_grid() {
    let fwd = finslerkit(&["chart", "--model", "builtin:sphere2d", "--x-tilde", "0.1,-0.05", "--y-tilde", "1,0.5"]);
    assert_eq!(fwd.status.code(), Some(0));
    let v = json(&fwd);
    let x = v["record"]["x"].clone();
    let y = v["record"]["y"].clone();
    let xs = format!("{},{}", x[0], x[1]);
    let ys = format!("{},{}", y[0], y[1]);
    let inv = finslerkit(&["chart", "--model", "builtin:sphere2d", "--x", &xs, "--y", &ys]);
    assert_eq!(inv.status.code(), Some(0));
    let w = json(&inv);
    assert!((w["x_tilde"][0].as_f64().unwrap() - 0.1).abs() < 1e-8);
    assert!((w["x_tilde"][1].as_f64().unwrap() + 0.05).abs() < 1e-8);

    let grid = finslerkit(&[
        "chart", "--model", "builtin:sphere2d", "--kind", "extended", "--grid", "3", "--y-tilde", "1,0",
    ]);
    assert_eq!(grid.status.code(), Some(0));
    let text = String::from_utf8(grid.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "xt1,xt2,yt1,yt2,x1,x2,y1,y2");
    assert_eq!(text.lines().count(), 10);

    let neither = finslerkit(&["chart", "--model", "builtin:sphere2d", "--x-tilde", "0.1,0"]);
    assert_eq!(neither.status.code(), Some(2));
}

#[test]
fn validate_reports_conditions() {
    let out = finslerkit(&["validate", "--model", "builtin:flat4d", "--samples", "20", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert!(!v["conditions"].as_array().unwrap().is_empty());
}

#[test]
fn verify_flat_model_is_exact() {
    let out = finslerkit(&[
        "verify", "--model", "builtin:flat4d", "--seed", "1", "--samples", "20", "--chart-samples", "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["version"], "1.0");
    assert_eq!(v["passed"], true);
    for c in v["checks"].as_array().unwrap() {
        if c.get("tolerance").is_some() && c["id"] != "exp.local_diffeomorphism" {
            assert!(c["max_residual"].as_f64().unwrap() <= 1e-10, "{c}");
        }
    }
    let table = String::from_utf8(out.stderr).unwrap();
    assert!(table.contains("PASS"));
}

#[test]
fn thread_variable_must_be_positive() {
    let out = Command::new(env!("CARGO_BIN_EXE_finslerkit"))
        .args(["connection", "--model", "builtin:polar2d", "--point", "1,0", "--direction", "1,0"])
        .env("FINSLERKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
