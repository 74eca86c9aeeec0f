use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn catpool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catpool")).args(args).output().unwrap()
}

fn fixture() -> PathBuf {
    PathBuf::from(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/fixtures/golden/config.json"
    ))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn pipeline_runs_with_overrides() {
    let out = tempfile::tempdir().unwrap();
    let cfg = fixture();
    let args = |cmd: &'static str| {
        [
            cmd,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ]
    };
    for cmd in ["sample", "optimize-regional", "metrics"] {
        let o = catpool(&args(cmd));
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "annual_losses.csv",
        "manifest.json",
        "optimal_pool_NORTH.json",
        "convergence_WEST.csv",
        "pool_metrics.csv",
    ] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    let first = std::fs::read(out.path().join("annual_losses.csv")).unwrap();
    let o = catpool(&[
        "sample",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert!(o.status.success());
    assert_ne!(first, std::fs::read(out.path().join("annual_losses.csv")).unwrap());
}

#[test]
fn input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = catpool(&["metrics", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let bad = write(dir.path(), "bad.json", r#"{"alpha": 2.0}"#);
    assert_eq!(
        catpool(&["metrics", "--config", bad.to_str().unwrap()]).status.code(),
        Some(1)
    );

    write(dir.path(), "annual_losses.csv", "year,AAA,BBB\n1,1,2\n2,3,4\n");
    let cfg = write(
        dir.path(),
        "global.json",
        r#"{"alpha": 0.5, "pools": [{"name": "A"}], "inputs": {"annual_losses": "annual_losses.csv"}}"#,
    );
    let o = catpool(&["optimize-global", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("regional results"));
}

#[test]
fn empty_region_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "annual_losses.csv", "year,AAA,BBB\n1,1,2\n2,3,4\n");
    write(
        dir.path(),
        "meta.json",
        r#"[{"iso3": "AAA", "region": "X"}, {"iso3": "BBB", "region": "X"}]"#,
    );
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"alpha": 0.5, "pools": [{"name": "Y", "region_filter": "Y"}],
            "inputs": {"annual_losses": "annual_losses.csv", "country_meta": "meta.json"}}"#,
    );
    let o = catpool(&["optimize-regional", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn expand_existing_accepts_scope() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "annual_losses.csv",
        "year,AAA,BBB,CCC\n1,10,0,1\n2,0,10,1\n3,0,0,1\n4,0,0,0\n",
    );
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"alpha": 0.75, "pools": [{"name": "P", "pinned_members": ["AAA"]}],
            "optimizer": {"population_size": 20, "generations": 10, "seeds": 1},
            "inputs": {"annual_losses": "annual_losses.csv"}}"#,
    );
    let o = catpool(&[
        "expand-existing",
        "--config",
        cfg.to_str().unwrap(),
        "--scope",
        "global",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let original = std::fs::read_to_string(dir.path().join("out/original_metrics.csv")).unwrap();
    assert_eq!(
        original,
        "pool,n_members,var,es,rc,rd,degenerate\nP,1,10,10,1,0,false\n"
    );
    let front = std::fs::read_to_string(dir.path().join("out/pareto_front.csv")).unwrap();
    assert!(
        front.starts_with("config_id,rc_P,rd_P,best_for_P\n0,0.5,0.5,true\n"),
        "{front}"
    );
}

#[test]
fn unknown_subcommand_is_rejected() {
    let o = catpool(&["frobnicate"]);
    assert!(!o.status.success());
}
