use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lightpath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lightpath")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lightpath(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a headed CSV as maps from column name to field.
fn csv_rows(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().clone();
    r.records().map(|rec| head.iter().map(String::from).zip(rec.unwrap().iter().map(String::from)).collect()).collect()
}

#[test]
fn simulate_writes_maps_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--scene", "semi_ellipsoid", "--res", "24", "--out", s(dir.path())]);
    for f in ["liquid_pose0.corr", "liquid_pose1.corr", "ambient_pose0.corr", "ambient_pose1.corr", "manifest.toml", "scene.toml", "truth.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("[calibration"));
}

#[test]
fn index_matched_liquid_changes_nothing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["simulate", "--scene", "hemisphere", "--res", "24", "--liquid-index", "1.0", "--out", s(a.path())]);
    for p in 0..2 {
        let liquid = fs::read(a.path().join(format!("liquid_pose{p}.corr"))).unwrap();
        let ambient = fs::read(a.path().join(format!("ambient_pose{p}.corr"))).unwrap();
        assert_eq!(liquid, ambient, "pose {p}");
    }
    // and a second run reproduces the same bytes
    ok(&["simulate", "--scene", "hemisphere", "--res", "24", "--liquid-index", "1.0", "--out", s(b.path())]);
    assert_eq!(fs::read(a.path().join("liquid_pose0.corr")).unwrap(), fs::read(b.path().join("liquid_pose0.corr")).unwrap());
}

#[test]
fn semi_ellipsoid_reconstructs_almost_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let rec = dir.path().join("rec");
    ok(&["simulate", "--scene", "semi_ellipsoid", "--res", "32", "--out", s(&sim)]);
    ok(&["reconstruct", "--input", s(&sim), "--out", s(&rec)]);
    let rows = csv_rows(&rec.join("points.csv"));
    let with_fep: Vec<_> = rows.iter().filter(|r| !r["x"].is_empty()).collect();
    let good = with_fep.iter().filter(|r| r["ok"] == "true").count();
    assert!(!with_fep.is_empty());
    assert!(good as f64 > 0.95 * with_fep.len() as f64, "{good} of {}", with_fep.len());

    ok(&["evaluate", "--input", s(&rec.join("points.ply")), "--scene", "semi_ellipsoid", "--res", "32", "--out", s(&rec)]);
    let eval = csv_rows(&rec.join("evaluation.csv"));
    let pos = eval.iter().find(|r| r["metric"] == "position").unwrap();
    assert!(pos["rms"].parse::<f64>().unwrap() < 1e-6);
}

#[test]
fn thin_cone_from_stripe_stacks() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let rec = dir.path().join("rec");
    ok(&["simulate", "--scene", "thin_cone", "--h", "0", "--thin", "--stacks", "--res", "16", "--out", s(&sim)]);
    assert!(sim.join("stacks").is_dir());
    ok(&["reconstruct", "--input", s(&sim), "--stacks", "--out", s(&rec)]);
    let rows = csv_rows(&rec.join("points.csv"));
    assert!(rows.iter().any(|r| r["ok"] == "true"));
}

#[test]
fn parallel_plate_thin_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--scene", "parallel_plate", "--thin", "--res", "16", "--out", s(&sim)]);
    let out = lightpath(&["reconstruct", "--input", s(&sim), "--out", s(&dir.path().join("rec"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_media_drops_normals() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let rec = dir.path().join("rec");
    ok(&["simulate", "--scene", "semi_ellipsoid", "--res", "16", "--out", s(&sim)]);
    ok(&["reconstruct", "--input", s(&sim), "--unknown-media", "--out", s(&rec)]);
    let ply = fs::read_to_string(rec.join("points.ply")).unwrap();
    assert!(ply.contains("property double x"));
    assert!(!ply.contains("property double nx"));
}

#[test]
fn missing_calibration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--scene", "semi_ellipsoid", "--res", "16", "--out", s(&sim)]);
    let path = sim.join("manifest.toml");
    let text = fs::read_to_string(&path).unwrap();
    let cut = text.find("[calibration").unwrap();
    // calibration tables come after the scalar keys and before the map lists
    let rest = &text[cut..];
    let end = rest.find("[[").unwrap_or(rest.len());
    fs::write(&path, format!("{}{}", &text[..cut], &rest[end..])).unwrap();
    let out = lightpath(&["reconstruct", "--input", s(&sim), "--out", s(&dir.path().join("rec"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluating_an_empty_cloud_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("empty.ply");
    fs::write(&ply, "ply\nformat ascii 1.0\nelement vertex 0\nproperty double x\nproperty double y\nproperty double z\nend_header\n").unwrap();
    let out = lightpath(&["evaluate", "--input", s(&ply), "--reference", "plane", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hemisphere_sphere_fit() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let rec = dir.path().join("rec");
    ok(&["simulate", "--scene", "hemisphere", "--res", "48", "--out", s(&sim)]);
    ok(&["reconstruct", "--input", s(&sim), "--out", s(&rec)]);
    ok(&["evaluate", "--input", s(&rec.join("points.ply")), "--reference", "sphere", "--threshold", "0.01", "--out", s(&rec)]);
    let fit = &csv_rows(&rec.join("primitive.csv"))[0];
    assert_eq!(fit["kind"], "sphere");
    let r: f64 = fit["radius"].parse().unwrap();
    assert!((r - 10.0).abs() < 1e-3, "radius {r}");
    for c in ["px", "py", "pz"] {
        assert!(fit[c].parse::<f64>().unwrap().abs() < 1e-3);
    }
}

#[test]
fn sweep_is_reproducible_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |out: &Path, threads: &'static str| {
        ok(&["--threads", threads, "sweep", "--experiment", "fig10", "--trials", "2", "--sigmas", "0.1,0.5", "--values", "0,1", "--res", "16", "--seed", "5", "--out", s(out)]);
    };
    args(a.path(), "1");
    args(b.path(), "3");
    for f in ["thickness.csv", "thickness_position.csv", "thickness_normal.csv", "thickness.dat"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(csv_rows(&a.path().join("thickness.csv")).len(), 4);
}

#[test]
fn mesh_from_semi_ellipsoid() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let rec = dir.path().join("rec");
    ok(&["simulate", "--scene", "semi_ellipsoid", "--res", "32", "--out", s(&sim)]);
    ok(&["reconstruct", "--input", s(&sim), "--out", s(&rec)]);
    ok(&["mesh", "--input", s(&rec.join("points.csv")), "--manifest", s(&sim.join("manifest.toml")), "--out", s(&rec)]);
    let obj = fs::read_to_string(rec.join("mesh.obj")).unwrap();
    assert!(obj.lines().filter(|l| l.starts_with("f ")).count() > 100);
    assert!(fs::read(rec.join("depth.pfm")).unwrap().starts_with(b"Pf\n"));

    // vertices land near the reconstructed entry points
    let truth: Vec<[f64; 3]> = csv_rows(&rec.join("points.csv"))
        .iter()
        .filter(|r| r["ok"] == "true")
        .map(|r| [r["x"].parse().unwrap(), r["y"].parse().unwrap(), r["z"].parse().unwrap()])
        .collect();
    let verts: Vec<[f64; 3]> = obj
        .lines()
        .filter_map(|l| l.strip_prefix("v "))
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    let worst = verts
        .iter()
        .map(|v| truth.iter().map(|t| (0..3).map(|k| (v[k] - t[k]).powi(2)).sum::<f64>()).fold(f64::INFINITY, f64::min).sqrt())
        .fold(0.0, f64::max);
    assert!(worst < 0.5, "worst vertex offset {worst}");
}

#[test]
fn bad_usage_exits_1() {
    assert_eq!(lightpath(&["simulate", "--res", "8"]).status.code(), Some(1));
    assert_eq!(lightpath(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lightpath(&["simulate", "--scene", "nope", "--out", "/tmp/x"]).status.code(), Some(1));
    assert_eq!(lightpath(&["--threads", "0", "sweep", "--experiment", "fig6"]).status.code(), Some(1));
    assert_eq!(lightpath(&["--help"]).status.code(), Some(0));
}
