use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kuhnfem"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("KUHNFEM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_basis() -> Value {
    json!({"version": 1, "seed": 3, "dims": [1, 2], "r_values": [1.0, 0.25], "points": 2000,
           "gradient_trials": 3, "volume_samples": 20000})
}

#[test]
fn verify_basis_passes_and_tags_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.json", &small_basis());
    let o = run(&["verify-basis", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("verify_basis.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with("# kuhnfem verify-basis config_sha256=") && first.contains("units:"));
}

#[test]
fn schema_errors_carry_json_pointers() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_basis();
    v["r_values"] = json!([0.5, 0.0]);
    let o = run(&["verify-basis", &write_config(dir.path(), "a.json", &v)], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/r_values/1"), "{}", stderr(&o));

    let mut v = small_basis();
    v["r_values"] = json!([0.5, "x"]);
    let o = run(&["verify-basis", &write_config(dir.path(), "b.json", &v)], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/r_values/1"), "{}", stderr(&o));

    let mut v = small_basis();
    v["colour"] = json!(1);
    let o = run(&["verify-basis", &write_config(dir.path(), "c.json", &v)], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let mut v = small_basis();
    v.as_object_mut().unwrap().remove("version");
    let o = run(&["verify-basis", &write_config(dir.path(), "d.json", &v)], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/version"), "{}", stderr(&o));
}

#[test]
fn seed_override_changes_hash_and_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("envelopes_step.json");
    let cfg = cfg.to_str().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run(&["--threads", "1", "envelopes", cfg], &a).status.success());
    assert!(run(&["--threads", "3", "envelopes", cfg], &b).status.success());
    assert!(run(&["--seed", "99", "envelopes", cfg], &c).status.success());
    for f in ["envelopes.csv", "envelopes.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert_ne!(x, std::fs::read(c.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn delta_sweep_with_zero_cutoff_has_zero_columns() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({"version": 1, "seed": 1, "density": {"kind": "gaussian", "mean": [0.0], "var": [1.0]},
                   "cutoff": {"kind": "zero"}, "m_values": [2, 4]});
    let o = run(&["delta-sweep", &write_config(dir.path(), "z.json", &v)], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("delta_sweep.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(f[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn assemble_and_resolvent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(configs().join("resolvent_ou.json")).unwrap()).unwrap();
    v["grid"]["r"] = json!(0.25);
    v["markov_trials"] = json!(20);
    let o = run(&["resolvent", &write_config(dir.path(), "r.json", &v)], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("resolvent.csv")).unwrap();
    // 49 nodes on [-6, 6] at r = 1/4, three alphas
    assert_eq!(csv.lines().count(), 2 + 3 * 49);

    let mut a = v.clone();
    for k in ["alphas", "input", "solver", "markov_trials"] {
        a.as_object_mut().unwrap().remove(k);
    }
    let o = run(&["assemble", &write_config(dir.path(), "a.json", &a)], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let mtx = std::fs::read_to_string(dir.path().join("stiffness.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("assemble.json")).unwrap()).unwrap();
    assert_eq!(rep["result"]["m_matrix"], json!(true));
}

fn small_mosco(n_values: &[usize]) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(configs().join("mosco_shipped.json")).unwrap()).unwrap();
    let r: Vec<f64> = (0..n_values.len()).map(|i| 0.125 / 2f64.powi(i as i32)).collect();
    v["sequence"]["n_values"] = json!(n_values);
    v["sequence"]["r_std"] = json!(r);
    v["z_samples"] = json!(20000);
    v["weighted_samples"] = json!(20000);
    v["markov_trials"] = json!(5);
    v
}

#[test]
fn truncated_mosco_schedule_reports_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["mosco", &write_config(dir.path(), "m.json", &small_mosco(&[1]))], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let flags = rep["result"]["flags"].as_array().unwrap();
    let tail = flags.iter().find(|f| f["name"] == "sufficient_tail").unwrap();
    assert_eq!(tail["passed"], json!(false));
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn trivial_potential_passes() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_mosco(&[1, 2, 3, 4]);
    v["f"] = json!({"breakpoints": [], "values_at": [], "pieces": [{"value": 0.0, "slope": 0.0}]});
    v["tolerances"]["pairing"] = json!(5e-2);
    v["tolerances"]["embedding"] = json!(5e-2);
    v["tolerances"]["energy"] = json!(5e-2);
    let o = run(&["mosco", &write_config(dir.path(), "m.json", &v)], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 4);
}
