use std::path::{Path, PathBuf};
use std::process::Command;

const EXPORTS: &[&str] = &[
    "ionsqz_version",
    "ionsqz_last_error_length",
    "ionsqz_last_error_message",
    "ionsqz_derive_params",
    "ionsqz_state_from_amplitudes",
    "ionsqz_state_squeezed",
    "ionsqz_state_xstate",
    "ionsqz_state_free",
    "ionsqz_state_dim",
    "ionsqz_state_amplitudes",
    "ionsqz_state_inner",
    "ionsqz_charfun_closed",
    "ionsqz_charfun_numeric",
    "ionsqz_diagonal_zeros",
    "ionsqz_prepare_xstate",
    "ionsqz_run_scenario",
];

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ionsqz.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).expect("build.rs writes include/ionsqz.h");
    assert!(text.contains("#ifndef IONSQZ_H"));
    assert!(text.contains("typedef struct IonsqzState IonsqzState;"));
    for name in EXPORTS {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
}

fn cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok())
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(header())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const CLIENT: &str = r#"
#include <stdio.h>
#include <math.h>
#include "ionsqz.h"

int main(void) {
    IonsqzDerived d;
    if (ionsqz_derive_params(1.0, 0.02, 0.0, 1.0, &d) != IONSQZ_STATUS_OK) return 1;
    if (fabs(d.omega_e - 1.019804) > 1e-6) return 2;
    IonsqzState *s = NULL;
    if (ionsqz_state_xstate(1, 0.5, 64, &s) != IONSQZ_STATUS_OK) return 3;
    double c = 0.0;
    ionsqz_charfun_closed(1, 0.5, 0.0, 0.0, &c);
    if (fabs(c - 1.0) > 1e-12) return 4;
    double re, im;
    if (ionsqz_state_inner(s, s, &re, &im) != IONSQZ_STATUS_OK || fabs(re - 1.0) > 1e-12) return 5;
    ionsqz_state_free(s);
    if (ionsqz_state_xstate(3, 0.5, 64, &s) != IONSQZ_STATUS_INVALID_INPUT) return 6;
    char msg[256];
    ionsqz_last_error_message(msg, sizeof msg);
    printf("%s | %s\n", ionsqz_version(), msg);
    return 0;
}
"#;

/// `target/<profile>` next to this test binary.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_client_links_against_static_library() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    // `cargo test` builds only the rlib; ask for the archive explicitly
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let mut build = Command::new(cargo);
    build.args(["build", "--quiet", "-p", "ionsqz-ffi", "--lib"]);
    if artifact_dir().ends_with("release") {
        build.arg("--release");
    }
    let status = build.status().unwrap();
    assert!(status.success());
    let lib = artifact_dir().join("libionsqz_ffi.a");
    assert!(lib.exists(), "{}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    std::fs::write(&src, CLIENT).unwrap();
    let out = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")));
    assert!(text.contains("parity"), "{text}");
}
