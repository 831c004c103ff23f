use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nngp-cert")).args(args).current_dir(dir).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_KERNEL: &str = r#"
dims = [3]
hidden_layers = 1
points = 3
widths = [16, 64]
draws = 200
"#;

#[test]
fn passing_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let arch = concat!(env!("CARGO_MANIFEST_DIR"), "/../../archs/conv.json");
    let cfg = write(dir.path(), "c.toml", &format!("arch = \"{arch}\"\nnorm2 = 3.0\n"));
    let out = run(&["certify", "--config", &cfg, "--seed", "4", "--out", "res"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("certify: PASS"));
    assert!(dir.path().join("res/certify.csv").exists());
    assert!(dir.path().join("res/certify_summary.toml").exists());
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.toml", &format!("{SMALL_KERNEL}max_rel_error = 1e-9\n"));
    let out = run(&["verify-kernel", "--config", &cfg, "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verify-kernel: FAIL"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = run(&["covering"], dir.path());
    assert_eq!(no_seed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_seed.stderr).contains("seed"));

    let bad = write(dir.path(), "b.toml", "dims = [0]\n");
    assert_eq!(run(&["covering", "--config", &bad, "--seed", "1"], dir.path()).status.code(), Some(2));

    let unknown = write(dir.path(), "u.toml", "dimz = [4]\n");
    assert_eq!(run(&["covering", "--config", &unknown, "--seed", "1"], dir.path()).status.code(), Some(2));

    let wrong = write(dir.path(), "w.toml", "experiment = \"profile\"\n");
    assert_eq!(run(&["covering", "--config", &wrong, "--seed", "1"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "blocked", "");
    let cfg = write(dir.path(), "k.toml", SMALL_KERNEL);
    let out = run(&["verify-kernel", "--config", &cfg, "--seed", "1", "--out", "blocked"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.toml", SMALL_KERNEL);
    let read = |sub: &str| {
        let out = run(&["verify-kernel", "--config", &cfg, "--seed", "9", "--out", sub], dir.path());
        assert!(out.status.code().is_some_and(|c| c <= 1));
        std::fs::read(dir.path().join(sub).join("verify_kernel.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}
