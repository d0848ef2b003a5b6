use std::path::PathBuf;
use std::process::Command;

/// Compiles `tests/c/smoke.c` against the generated header and the shared
/// library, then runs it.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // Test binaries and the freshly built library both live in target/<profile>/deps.
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libtweetcheck_ffi.so");
    if !cfg!(target_os = "linux") || !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: needs Linux, cc and {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&profile_dir)
        .args(["-ltweetcheck_ffi", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &profile_dir).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "alpha 0.533333");
}
