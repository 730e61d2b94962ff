use std::path::Path;
use std::process::{Command, Output};

fn rmb(args: &[&str], data: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmb")).args(args).env("RMB_DATA_DIR", data).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["collect", "--bogus"][..], &["train", "--policy", "transformer"], &["frobnicate"], &[]] {
        let o = rmb(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", text(&o));
        assert!(!o.stderr.is_empty());
    }
    let v = rmb(&["--version"], dir.path());
    assert!(v.status.success());
    assert!(text(&v).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn pipeline_gate_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).display().to_string();

    // default output root comes from the environment
    let o = rmb(&["collect", "--env", "push", "--episodes", "3", "--seed", "5"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(dir.path().join("push").join("manifest.json").exists());

    let o = rmb(&["dataset", "info", &p("push")], dir.path());
    let info: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((info["episodes"].as_u64(), info["config"]["seed"].as_u64()), (Some(3), Some(5)));
    assert!(rmb(&["dataset", "validate", &p("push")], dir.path()).status.success());

    let o = rmb(&["train", "--policy", "bc", "--dataset", &p("push"), "--out", &p("bc.rmbm"), "--epochs", "2"], dir.path());
    assert!(o.status.success(), "{}", text(&o));

    let model = p("bc.rmbm");
    let roll = |report: &str, extra: &[&str]| {
        let mut args = vec!["rollout", "--model", model.as_str(), "--episodes", "3", "--report", report];
        args.extend_from_slice(extra);
        rmb(&args, dir.path())
    };
    let (a, b) = (p("r/a.json"), p("r/b.json"));
    assert!(roll(&a, &[]).status.success());
    assert!(roll(&b, &[]).status.success());
    // identical flags give byte-identical reports
    let (ra, rb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ra, rb);
    let ja: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    assert!(Path::new(&p("r/a.md")).exists());
    assert_eq!(ja["config"]["seed"], 10_000);

    let gate = roll(&p("r/c.json"), &["--min-success", "1.01"]);
    assert_eq!(gate.status.code(), Some(1), "{}", text(&gate));
    assert!(Path::new(&p("r/c.json")).exists());

    // flip one byte in the middle of an episode file
    let ep = std::fs::read_dir(dir.path().join("push").join("episodes")).unwrap().next().unwrap().unwrap().path();
    let mut bytes = std::fs::read(&ep).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&ep, bytes).unwrap();
    let o = rmb(&["dataset", "validate", &p("push")], dir.path());
    assert_ne!(o.status.code(), Some(0));
    let out = text(&o).to_lowercase();
    assert!(out.contains("fail") && out.contains("crc"), "{out}");
}
