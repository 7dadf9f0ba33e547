use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subnet-hpo"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "benchmark = \"dc-3\"\nscheduler = \"dcbo\"\nbudget = 3000.0\nseeds = [1]\n",
    )
    .unwrap();
    let out = dir.path().join("runs");

    let ok = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(out.join("dcbo-seed1-fold0.jsonl").exists());

    let offset = bin()
        .env("SUBNET_HPO_SEED_OFFSET", "10")
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(offset.status.code(), Some(0));
    assert!(out.join("dcbo-seed11-fold0.jsonl").exists());

    std::fs::write(
        &cfg,
        "benchmark = \"dc-3\"\nscheduler = \"dcbo\"\nbudget = 3000.0\nseeds = [1]\nv = 1.5\n",
    )
    .unwrap();
    let bad = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("`v`"));

    let missing = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("none.toml"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let report = dir.path().join("cmp/report.json");
    let cmp = bin()
        .args(["compare", "--baseline"])
        .arg(&out)
        .arg("--method")
        .arg(&out)
        .arg("--out")
        .arg(&report)
        .arg("--aggressive-speedup")
        .output()
        .unwrap();
    assert_eq!(
        cmp.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&cmp.stderr)
    );
    let csv = dir.path().join("csv");
    let rep = bin()
        .args(["report", "--in"])
        .arg(&report)
        .arg("--csv")
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(rep.status.code(), Some(0));
    assert!(csv.join("seed11-fold0-method.csv").exists());

    let usage = bin().arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
}
