//! The generated header must compile as C and as C++.

use std::path::Path;
use std::process::Command;

fn compiler(name: &str) -> Option<Command> {
    Command::new(name).arg("--version").output().ok()?.status.success().then(|| Command::new(name))
}

fn check(cc: &str, extra: &[&str]) {
    let Some(mut cmd) = compiler(cc) else {
        eprintln!("{cc} not found, skipping");
        return;
    };
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = cmd
        .args(extra)
        .args(["-fsyntax-only", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(dir.join("include"))
        .arg(dir.join("tests/smoke.c"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{cc}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn header_compiles_as_c() {
    check("cc", &["-std=c11"]);
}

#[test]
fn header_compiles_as_cpp() {
    check("c++", &["-x", "c++", "-std=c++17"]);
}
