use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn packdim(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_packdim"));
    cmd.args(args).env_remove("PACKDIM_SEED");
    if let Some(s) = seed_env {
        cmd.env("PACKDIM_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn generate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cantor.txt");
    let out = packdim(&["generate", "cantor:ratio=1/3,depth=9", "-o", path(&file), "--seed", "3"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(file.exists());
    assert!(dir.path().join("cantor.txt.meta.json").exists());

    let est = dir.path().join("est");
    let out = packdim(&["estimate", "--input", path(&file), "--out", path(&est), "--seed", "3"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&est, "estimate.json");
    assert_eq!(rep["tool"], "packdim");
    assert_eq!(rep["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(rep["seed"], 3);
    let digest = rep["config_digest"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    for csv in ["profile_curve.csv", "critical_point.csv"] {
        let text = fs::read_to_string(est.join(csv)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("# packdim ") && header.contains("seed=3") && header.contains(digest), "{header}");
    }
}

#[test]
fn config_file_flags_and_env_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# estimate a small Cantor measure\nmeasure = cantor:ratio=1/3,depth=8\nseed = 5\ntau = 0.04\n").unwrap();

    let a = dir.path().join("a");
    assert!(packdim(&["estimate", "--config", path(&cfg), "--out", path(&a)], None).status.success());
    assert_eq!(report(&a, "estimate.json")["seed"], 5);

    let b = dir.path().join("b");
    assert!(packdim(&["estimate", "--config", path(&cfg), "--seed", "6", "--out", path(&b)], None).status.success());
    assert_eq!(report(&b, "estimate.json")["seed"], 6);

    let c = dir.path().join("c");
    assert!(packdim(&["estimate", "--config", path(&cfg), "--seed", "6", "--out", path(&c)], Some("7")).status.success());
    assert_eq!(report(&c, "estimate.json")["seed"], 7);
}

#[test]
fn serial_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let st = packdim(
            &["verify", "--measure", "cantor:ratio=1/3,depth=5*cantor:ratio=1/3,depth=5", "--frames", "5", "--serial", "--out", path(&out)],
            None,
        );
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        texts.push(files);
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| dir.path().join(name);
    // Unknown flag and unknown generator are usage errors.
    assert_eq!(packdim(&["estimate", "--colour", "red"], None).status.code(), Some(2));
    assert_eq!(packdim(&["estimate", "--measure", "spiral:depth=3", "--out", path(&out("a"))], None).status.code(), Some(2));
    // A target dimension above the ambient one.
    assert_eq!(
        packdim(&["verify", "--measure", "cantor:ratio=1/3,depth=6", "--m", "2", "--out", path(&out("b"))], None).status.code(),
        Some(2)
    );
    // Bad config line.
    let cfg = out("bad.cfg");
    fs::write(&cfg, "measure cantor\n").unwrap();
    assert_eq!(packdim(&["estimate", "--config", path(&cfg)], None).status.code(), Some(2));
    // Too few atoms to resolve a scale window: the computation fails.
    assert_eq!(
        packdim(&["estimate", "--measure", "cantor:ratio=1/3,depth=2", "--out", path(&out("c"))], None).status.code(),
        Some(3)
    );
    // Failing verdicts are data, not errors.
    let st = packdim(&["fbm", "--measure", "cantor:ratio=1/3,depth=8", "--trials", "5", "--out", path(&out("d"))], None);
    assert_eq!(st.status.code(), Some(0));
}

#[test]
fn single_atom_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let st = packdim(&["estimate", "--measure", "dirac:at=0.5/0.5", "--out", path(dir.path())], None);
    assert!(st.status.success());
    let res = &report(dir.path(), "estimate.json")["results"];
    for key in ["dim_h", "dim_p", "dim_a"] {
        assert_eq!(res[key]["value"], 0.0, "{key}");
    }
    assert_eq!(res["critical_point"]["value"]["value"], 0.0);
    for (_, e) in res["packing_profiles"].as_array().unwrap().iter().map(|p| (p[0].clone(), &p[1])) {
        assert_eq!(e["value"], 0.0);
    }
}

#[test]
fn envelope_writes_tree() {
    let dir = tempfile::tempdir().unwrap();
    let st = packdim(
        &["envelope", "--measure", "cantor:ratio=1/3,depth=6", "--c", "1", "--t", "0.6309", "--base", "3", "--depth", "6", "--out", path(dir.path())],
        None,
    );
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let tree = fs::read_to_string(dir.path().join("envelope_tree.txt")).unwrap();
    assert!(tree.starts_with("# packdim "));
    let res = &report(dir.path(), "envelope.json")["results"];
    assert_eq!(res["branching"], 2);
    assert_eq!(res["padding"], 0);
    assert_eq!(res["contains_input"], true);
}
