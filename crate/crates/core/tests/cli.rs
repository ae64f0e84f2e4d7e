use std::path::Path;
use std::process::{Command, Output};

use ionsqz::scenario::RunManifest;

fn ionsqz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionsqz")).args(args).output().expect("spawn ionsqz")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

const XSTATE: &str = "scenario = \"xstate\"\nr = 1.0\nmode = \"ideal\"\nseed = 5\n[numerics]\nruns = 500\n";

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let out = ionsqz(&["validate", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", p.display(), String::from_utf8_lossy(&out.stderr));
        n += 1;
    }
    assert!(n >= 8);
}

#[test]
fn derive_params_prints_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "d.toml",
        "scenario = \"derive-params\"\n[trap]\nomega_t = 1.0\neta_g = 0.02\nphi = 0.0\n[drive]\nepsilon = 1.0\ntheta = 0.0\nomega_d_over_omega_e = 2.0\n",
    );
    let out_dir = tmp.path().join("out");
    let out = ionsqz(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("omega_e"));
    let m = RunManifest::load(&out_dir).unwrap();
    assert_eq!(m.exit_code, 0);
    assert!(out_dir.join("derived.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "x.toml", XSTATE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert!(ionsqz(&["run", &cfg, "--out", d.to_str().unwrap(), "--format", "json"]).status.success());
    }
    for name in ["branches.json", "transcript.json", "run.log"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let (ma, mb) = (RunManifest::load(&a).unwrap(), RunManifest::load(&b).unwrap());
    assert_eq!(ma.outputs, mb.outputs);
}

#[test]
fn seed_override_changes_sampling_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "x.toml", XSTATE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(ionsqz(&["run", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(ionsqz(&["run", &cfg, "--out", b.to_str().unwrap(), "--seed", "6"]).status.success());
    let (ma, mb) = (RunManifest::load(&a).unwrap(), RunManifest::load(&b).unwrap());
    assert_eq!(mb.seed, 6);
    assert_eq!(ma.summary["probability_g"], mb.summary["probability_g"]);
    assert_ne!(std::fs::read(a.join("transcript.json")).unwrap(), std::fs::read(b.join("transcript.json")).unwrap());
}

#[test]
fn bad_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write(tmp.path(), "u.toml", "scenario = \"zeros\"\nr = 2.0\nparity = \"odd\"\nbogus = 1\n");
    assert_eq!(ionsqz(&["validate", &unknown]).status.code(), Some(1));
    let negative = write(tmp.path(), "n.toml", "scenario = \"zeros\"\nr = -2.0\nparity = \"odd\"\n");
    let out_dir = tmp.path().join("neg");
    let out = ionsqz(&["run", &negative, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    // rejected before anything is written
    assert!(!out_dir.exists());
    assert_eq!(ionsqz(&["validate", "/nonexistent/config.toml"]).status.code(), Some(3));
}

#[test]
fn truncation_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "t.toml",
        "scenario = \"charfun\"\nr = 2.5\nparity = \"even\"\n[numerics]\ndim = 40\n[phase_space]\nmethod = \"numeric\"\nx = { start = -1.0, stop = 1.0, count = 5 }\np = { start = -1.0, stop = 1.0, count = 5 }\n",
    );
    let out_dir = tmp.path().join("o");
    let out = ionsqz(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::load(&out_dir).unwrap();
    assert_eq!(m.exit_code, 2);
    assert!(m.error.is_some());
}
