use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use iccss::neuralsc::{load_checkpoint, Arch, ModelParams};

fn iccss(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iccss"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sc.json"),
        r#"{"k": 3, "m": 8, "n": 20, "rho": 0.3, "snr_sense_db": -5, "snr_report_db": 3}"#,
    )
    .unwrap();
    fs::write(
        dir.path().join("tr.json"),
        r#"{"batch_size": 8, "epochs": 2, "dataset_size": 32, "train_snr_sense_db": -5, "train_snr_report_db": 3, "seed": 2}"#,
    )
    .unwrap();
    dir
}

#[test]
fn theory_values() {
    let d = tempfile::tempdir().unwrap();
    let bound: f64 = stdout(&iccss(&["theory", "hdf-bound", "--snr-report-db", "-3", "--k", "6"], d.path())).parse().unwrap();
    assert!((bound - 0.9454).abs() < 1e-4);
    let floor: f64 = stdout(&iccss(&["theory", "hdf-bound", "--snr-report-db", "-200", "--k", "6"], d.path())).parse().unwrap();
    assert!((floor - 0.34375).abs() < 1e-4);
    let ber: f64 = stdout(&iccss(&["theory", "ber", "--snr-report-db", "3"], d.path())).parse().unwrap();
    assert!((ber - 0.0229).abs() < 1e-4);
    assert_eq!(iccss(&["theory", "ber"], d.path()).status.code(), Some(2));
    assert_eq!(iccss(&["theory", "hdf-bound", "--snr-report-db", "0", "--k", "0"], d.path()).status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let d = setup();
    let o = iccss(&["train", "--config", "missing.json", "--out", "ck"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));

    fs::write(d.path().join("bad.json"), r#"{"k": 0, "m": 1, "iota": 2}"#).unwrap();
    let o = iccss(&["eval", "roc", "--method", "ed-hdf", "--config", "bad.json", "--out", "r"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.matches('\n').count() >= 3, "every problem should be listed: {err}");

    let o = iccss(&["eval", "roc", "--method", "icc", "--config", "sc.json", "--out", "r"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let o = iccss(&["eval", "roc", "--method", "zz-hdf", "--config", "sc.json", "--out", "r"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_epochs_writes_the_initialization() {
    let d = setup();
    let o = iccss(&["train", "--config", "sc.json", "--train-config", "tr.json", "--arch", "miniature", "--epochs", "0", "--out", "ck"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let saved = load_checkpoint(&d.path().join("ck/model.ckpt")).unwrap();
    assert_eq!(saved, ModelParams::init_seeded(&Arch::miniature(8), 2).unwrap());
    assert!(d.path().join("ck/manifest.json").exists());
    assert!(d.path().join("ck/loss.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let d = setup();
    for out in ["a", "b"] {
        let o = iccss(&["train", "--config", "sc.json", "--train-config", "tr.json", "--arch", "miniature", "--threads", "1", "--out", out], d.path());
        assert!(o.status.success());
    }
    let read = |p: &str| fs::read(d.path().join(p)).unwrap();
    assert_eq!(read("a/loss.csv"), read("b/loss.csv"));
    assert_eq!(read("a/model.ckpt"), read("b/model.ckpt"));

    for (out, threads) in [("r1", "1"), ("r2", "1"), ("r3", "3")] {
        let o = iccss(
            &["eval", "roc", "--method", "icc", "--checkpoint", "a/model.ckpt", "--config", "sc.json", "--trials", "300", "--threads", threads, "--out", out],
            d.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read("r1/roc.csv"), read("r2/roc.csv"));
    assert_eq!(read("r1/roc.csv"), read("r3/roc.csv"));
    let csv = String::from_utf8(read("r1/roc.csv")).unwrap();
    assert!(csv.lines().all(|l| l.split(',').count() == 6));
    let side: serde_json::Value = serde_json::from_slice(&read("r1/roc.json")).unwrap();
    assert_eq!(side["scenario"]["m"], 8);
    assert_eq!(side["seed"], 0);
}

#[test]
fn sweep_ablation_constellation_and_prop3() {
    let d = setup();
    let o = iccss(&["train", "--config", "sc.json", "--train-config", "tr.json", "--arch", "miniature", "--out", "ck"], d.path());
    assert!(o.status.success());
    let ck = "ck/model.ckpt";

    let o = iccss(
        &["eval", "sweep", "--axis", "k_sensors", "--values", "2,4,6,8", "--method", "icc", "--checkpoint", ck, "--config", "sc.json", "--trials", "100", "--out", "s"],
        d.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(d.path().join("s/sweep.csv")).unwrap().lines().count(), 5);

    let o = iccss(&["eval", "ablation", "--checkpoint", ck, "--config", "sc.json", "--trials", "100", "--out", "a"], d.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("2 with AirComp, 6 without"));

    let o = iccss(&["eval", "constellation", "--checkpoint", ck, "--config", "sc.json", "--trials", "7", "--out", "c"], d.path());
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(d.path().join("c/constellation.csv")).unwrap().lines().count(), 1 + 7 * 3 * 2);

    let o = iccss(&["eval", "verify-prop3", "--config", "sc.json", "--trials", "2000", "--out", "p"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("p/prop3.json")).unwrap()).unwrap();
    assert_eq!(rep["report"]["simplified_ed_exact"], true);
    assert_eq!(rep["report"]["ed_ec_exact"], true);
    assert_eq!(rep["report"]["spearman_simplified_ed"], 1.0);
}
