use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skill-transfer"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const TINY: &str = r#"
id = "tiny"
seed = 3
proxies = ["reach"]
methods = ["none"]

[source]
morphology = "three_link"
task = "reach"
horizon = 20

[target]
morphology = "four_link"
task = "reach"
horizon = 20

[budgets]
proxy_iterations = 1
source_iterations = 1
target_iterations = 2

[models]
successful_proxies_only = false

[models.embedding]
epochs = 2
"#;

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn list_shows_the_catalog() {
    let o = bin(&["list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 5);
    assert!(text.contains("button_3to4") && text.contains("tendon_block_pull"));
}

#[test]
fn show_prints_a_parseable_config() {
    let o = bin(&["show", "tendon_block_pull"]);
    assert!(o.status.success());
    let cfg =
        skill_transfer::experiment::parse_config(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.id, "tendon_block_pull");
    assert_eq!(bin(&["show", "nope"]).status.code(), Some(2));
}

#[test]
fn unknown_method_fails_validation_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let o = bin(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--methods",
        "none,telepathy",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("telepathy"));
    assert!(!out.exists());
}

#[test]
fn horizon_mismatch_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY.replacen("horizon = 20", "horizon = 30", 1)).unwrap();
    let o = bin(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).into_owned();
    assert!(
        err.contains("source.horizon") && err.contains("target.horizon"),
        "{err}"
    );
}

#[test]
fn syntax_errors_and_missing_files_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "id = \n").unwrap();
    let o = bin(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    assert_eq!(bin(&["run", "/no/such/config.toml"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("out");
    let o = bin(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = bin(&[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--methods",
            "none,cca",
            "--seed",
            "5",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files(&out)
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    assert!(a == b);
    for f in [
        "summary.csv",
        "curves/cca.csv",
        "curves/no_transfer.csv",
        "checkpoints/cca.json",
        "pairs/pairs.csv",
    ] {
        assert!(a.contains_key(f), "{f} missing");
    }
    let summary = String::from_utf8(a["summary.csv"].clone()).unwrap();
    let rows = skill_transfer::experiment::parse_summary(&summary).unwrap();
    assert_eq!(rows.len(), 2);
    let snapshot = String::from_utf8(a["config.snapshot"].clone()).unwrap();
    let cfg = skill_transfer::experiment::parse_config(&snapshot).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.methods, vec!["none", "cca"]);
}
