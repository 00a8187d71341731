use std::env;
use std::path::{Path, PathBuf};
use std::process::Command;

// Test binaries live in target/<profile>/deps; the static library sits one
// level up.
fn profile_dir() -> PathBuf {
    let exe = env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = profile_dir();
    assert!(
        lib_dir.join("libgrassmann_binary_ffi.a").exists(),
        "static library missing in {}",
        lib_dir.display()
    );
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let status = Command::new(env::var("CC").unwrap_or_else(|_| "cc".into()))
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-o")
        .arg(&exe)
        .arg(lib_dir.join("libgrassmann_binary_ffi.a"))
        .args(["-lm", "-lpthread", "-ldl"])
        .status()
        .expect("C compiler runs");
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
