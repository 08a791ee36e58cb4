use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures");

fn cheeger(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cheeger")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn solve_square_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("square");
    let o = cheeger(&["solve", "--domain", "square:1", "--h", "0.03125", "--n", "1", "--restarts", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let r = report(&out);
    let energy = r["energy"].as_f64().unwrap();
    assert!((energy - 3.7725).abs() / 3.7725 < 0.05, "{energy}");
    assert_eq!(r["n"], 1);
    assert_eq!(r["lambda_n_estimate"], r["energy"]);
    assert!(r["h_n_estimate"].as_f64().unwrap() >= energy * 0.95);
    assert!(r.get("m2_estimate").is_none() && r.get("eigen_bounds").is_none());
    for key in ["perimeter", "volume", "ratio", "threshold"] {
        assert!(r["chambers"][0][key].is_number(), "{key}");
    }
    for key in ["iterations", "converged", "energy_trace", "restart_energies"] {
        assert!(r["solver"].get(key).is_some(), "{key}");
    }

    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,energy,residual"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert!(!rows.is_empty() && rows.iter().all(|r| r.len() == 3));

    let img = image::open(out.join("chamber_0.png")).unwrap();
    assert_eq!(img.color(), image::ColorType::L8);
    assert!(img.into_luma8().pixels().any(|p| p.0[0] == 255));
    assert!(fs::read_to_string(out.join("contours.svg")).unwrap().contains("chamber_0"));
    let stray: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(stray.len(), 1);
}

#[test]
fn symmetric_barbell_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("barbell");
    let o = cheeger(&[
        "solve", "--domain", "barbell:1,0.05,0", "--h", "0.015625", "--n", "2", "--restarts", "1", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["chambers"].as_array().unwrap().len(), 2);
    assert_eq!(r["eigen_bounds"]["certificate"], true);
    let lower = r["eigen_bounds"]["lower"].as_f64().unwrap();
    assert!((lower - r["energy"].as_f64().unwrap() / 2.0).abs() < 1e-12);
    assert!(out.join("chamber_1.png").exists());
}

#[test]
fn signed_needs_two_chambers_and_leaves_output_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("keep");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("old.txt"), "old").unwrap();
    let o = cheeger(&["solve", "--signed", "--n", "3", "--domain", "disc:1", "--h", "0.05", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("signed requires N=2"));
    assert!(out.join("old.txt").exists());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn signed_solve_reports_m2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("signed");
    let o = cheeger(&[
        "solve", "--signed", "--n", "2", "--domain", "square:1", "--h", "0.0625", "--restarts", "1", "--max-iter",
        "2000", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["signed"], true);
    assert_eq!(r["m2_estimate"], r["energy"]);
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        &["solve", "--domain", "disc:1", "--n", "1"][..],
        &["solve", "--domain", "ellipse:1", "--h", "0.1", "--n", "1"],
        &["solve", "--domain", "disc:-1", "--h", "0.1", "--n", "1"],
        &["solve", "--domain", "disc:1", "--h", "0.1", "--n", "1", "--tol", "0"],
        &["solve", "--domain", "disc:1", "--h", "0.1"],
        &["frobnicate"],
        &["oracle", "--shape", "barbell:1,0.05,0"],
        &["oracle", "--shape", "disc:1", "--n", "2"],
    ] {
        let o = cheeger(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn missing_input_exits_3_with_its_name() {
    let o = cheeger(&["solve", "--domain", "/nonexistent/mask.png", "--h", "0.1", "--n", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/nonexistent/mask.png"));
}

#[test]
fn infeasible_cluster_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let poly = tmp.path().join("tiny.json");
    fs::write(&poly, r#"{"h": 1.0, "polygons": [[[0, 0], [2, 0], [2, 1], [0, 1]]]}"#).unwrap();
    let out = tmp.path().join("out");
    let o = cheeger(&["solve", "--domain", poly.to_str().unwrap(), "--n", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn oracle_values() {
    let o = cheeger(&["oracle", "--shape", "square:1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("3.77245"), "{}", stdout(&o));
    let o = cheeger(&["oracle", "--shape", "disc:2"]);
    assert_eq!(stdout(&o).trim(), "1");

    let strip = format!("{FIXTURES}/strip4.json");
    let a = cheeger(&["oracle", "--fixture", &strip, "--n", "2"]);
    let b = cheeger(&["oracle", "--fixture", &strip, "--n", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a).trim(), "6");
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stderr(&a).contains("matches"));

    let o = cheeger(&["oracle", "--fixture", &strip, "--n", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_write_fills_a_seed_file() {
    let tmp = tempfile::tempdir().unwrap();
    let seed = tmp.path().join("seed.json");
    fs::write(&seed, r#"{"mask": ["111", "101"], "h": 1.0, "N": 1}"#).unwrap();
    let o = cheeger(&["oracle", "--fixture", seed.to_str().unwrap(), "--write"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fx: serde_json::Value = serde_json::from_str(&fs::read_to_string(&seed).unwrap()).unwrap();
    assert_eq!(fx["value"].as_f64().unwrap().to_string(), stdout(&o).trim());
    assert_eq!(fx["masks"].as_array().unwrap().len(), 1);
}

#[test]
fn corrupted_fixture_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    fs::copy(format!("{FIXTURES}/strip4.json"), tmp.path().join("strip4.json")).unwrap();
    fs::write(tmp.path().join("broken.json"), "{ not json").unwrap();
    let o = cheeger(&["check", "--quick", "--fixtures", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("broken.json"));
}

#[test]
fn quick_check_passes() {
    let o = cheeger(&["check", "--quick"]);
    let table = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{table}");
    assert!(table.contains("PASS fixtures") && !table.contains("FAIL"), "{table}");
}
