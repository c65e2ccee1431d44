use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn system(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("systems").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mop-trees")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

#[test]
fn worked_example_has_nine_eigenvalues() {
    let sys = system("ang_u.json");
    let v = json(&run(&["tree", "spectrum", "--system", sys.to_str().unwrap(), "--N", "2,1", "--kappa", "0,1"]));
    assert_eq!(v["schema"], "mop-trees/1");
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 9);
    assert!(v["dense_mismatch"].as_f64().unwrap() < 1e-10);
}

#[test]
fn zeroth_coefficients() {
    let sys = system("ang_u.json");
    let v = json(&run(&["mop", "coeffs", "--system", sys.to_str().unwrap(), "--n", "0,0"]));
    assert_eq!(v["b"], serde_json::json!([-1.5, 1.5]));
    assert_eq!(v["a"], serde_json::json!([0.0, 0.0]));
}

#[test]
fn nikishin_verify_passes() {
    let sys = system("nik_u.json");
    let v = json(&run(&["verify", "all", "--system", sys.to_str().unwrap(), "--nmax", "6"]));
    assert_eq!(v["pass"], true);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"sign_pattern"));
}

#[test]
fn angelesco_verify_passes() {
    let sys = system("ang_u.json");
    let v = json(&run(&["verify", "all", "--system", sys.to_str().unwrap(), "--nmax", "5"]));
    assert_eq!(v["pass"], true);
}

#[test]
fn dos_csv_has_header_plus_grid_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dos.csv");
    let out = run(&["periodic", "dos", "--params", "0.25,0.25,-1,1", "--grid", "500", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 501);
    assert_eq!(lines[0], "x,dos");
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
        assert!(v[1] > 0.0);
    }
}

#[test]
fn empty_grid_is_usage_error() {
    let out = run(&["periodic", "dos", "--params", "0.25,0.25,-1,1", "--grid", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_flag_is_usage_error() {
    let sys = system("ang_u.json");
    let out = run(&["mop", "coeffs", "--system", sys.to_str().unwrap(), "--n", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validation_failure_exits_with_two_and_module_code() {
    let sys = system("ang_u.json");
    let out = run(&["tree", "spectrum", "--system", sys.to_str().unwrap(), "--N", "1,1", "--kappa", "0.3,0.3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[tree/"));
    let out = run(&["periodic", "surface", "--params", "1,1,-0.1,0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid_surface"));
}

#[test]
fn wrong_system_type_is_rejected() {
    let sys = system("nik_u.json");
    let out = run(&["angelesco", "rho", "--system", sys.to_str().unwrap(), "--kappa", "1,0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rho_csv_writes_point_mass_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rho.csv");
    let sys = system("ang_u.json");
    let out = run(&[
        "angelesco", "dos-profile", "--system", sys.to_str().unwrap(), "--kappa", "2,-1", "--grid", "40", "--format", "csv",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 41);
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rho.csv.masses.json")).unwrap()).unwrap();
    let masses = side["point_masses"].as_array().unwrap();
    assert_eq!(masses.len(), 1);
    assert!(masses[0][0].as_f64().unwrap() < -2.0);
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let args = ["periodic", "dos", "--params", "0.03,0.05,-1.2,0.9", "--grid", "64", "--format", "csv"];
    let one = Command::new(env!("CARGO_BIN_EXE_mop-trees")).args(args).env("MOP_TREES_THREADS", "1").output().unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_mop-trees")).args(args).env("MOP_TREES_THREADS", "4").output().unwrap();
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn green_matches_resolvent() {
    let sys = system("ang_u.json");
    let v = json(&run(&["angelesco", "green", "--system", sys.to_str().unwrap(), "--kappa", "1,0", "--z", "5,0", "--x", "1", "--y", "3"]));
    assert!(v["relative_error"].as_f64().unwrap() < 1e-6);
}
