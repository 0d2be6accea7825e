use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use iccss::neuralsc::{save_checkpoint, Arch, ModelParams};
use iccss::numerics::RngStream;
use iccss_ffi::*;

fn scenario(json: &str) -> *mut IccssScenario {
    let text = CString::new(json).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { iccss_scenario_new(text.as_ptr(), &mut s) }, IccssStatus::Ok);
    s
}

fn last_error() -> String {
    let p = iccss_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn closed_forms() {
    assert!((iccss_hdf_bound(1.0, -3.0, 6) - 0.9454).abs() < 1e-4);
    assert!((iccss_bpsk_ber(3.0) - 0.0229).abs() < 1e-4);
    assert!((iccss_q_function(0.0) - 0.5).abs() < 1e-15);
}

#[test]
fn bad_scenarios_report_errors() {
    let text = CString::new(r#"{"k": 0}"#).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { iccss_scenario_new(text.as_ptr(), &mut s) }, IccssStatus::InvalidConfig);
    assert!(s.is_null());
    assert!(last_error().contains('k'));
    assert_eq!(unsafe { iccss_scenario_new(ptr::null(), ptr::null_mut()) }, IccssStatus::NullPointer);

    let mut d = ptr::null_mut();
    assert_eq!(unsafe { iccss_scenario_new(ptr::null(), &mut d) }, IccssStatus::Ok);
    assert!(iccss_last_error().is_null());
    let (mut k, mut m) = (0, 0);
    unsafe {
        iccss_scenario_dims(d, &mut k, &mut m);
        iccss_scenario_free(d);
    }
    assert_eq!((k, m), (6, 28));
}

#[test]
fn slots_and_statistics() {
    let s = scenario(r#"{"k": 2, "m": 4, "n": 64, "snr_sense_db": 10}"#);
    let mut buf = vec![0.0; 2 * 2 * 16];
    unsafe {
        assert_eq!(iccss_generate_slot(s, true, 3, 0, buf.as_mut_ptr(), buf.len()), IccssStatus::Ok);
        let mut again = vec![0.0; buf.len()];
        iccss_generate_slot(s, true, 3, 0, again.as_mut_ptr(), again.len());
        assert_eq!(buf, again);
        assert_eq!(iccss_generate_slot(s, true, 3, 0, buf.as_mut_ptr(), 5), IccssStatus::InvalidArgument);

        let ed = CString::new("ed").unwrap();
        let mut t = 0.0;
        assert_eq!(iccss_detector_statistic(s, ed.as_ptr(), buf.as_ptr(), 4, &mut t), IccssStatus::Ok);
        assert!(t > 2.0, "H1 at 10 dB should be well above the noise floor, got {t}");
        assert_eq!(iccss_detector_statistic(s, ed.as_ptr(), buf.as_ptr(), 3, &mut t), IccssStatus::InvalidArgument);
        iccss_scenario_free(s);
    }
}

#[test]
fn model_scores_are_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = ModelParams::init(&Arch::miniature(4), &mut RngStream::new(1, 0)).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    let s = scenario(r#"{"k": 3, "m": 4, "n": 32}"#);
    let mut covs = vec![0.0; 2 * 3 * 16];
    let mut h = ptr::null_mut();
    unsafe {
        iccss_generate_slot(s, false, 5, 1, covs.as_mut_ptr(), covs.len());
        assert_eq!(iccss_model_load(cpath.as_ptr(), &mut h), IccssStatus::Ok);
        let (mut ideal, mut noisy) = (0.0, 0.0);
        assert_eq!(iccss_model_score(h, ptr::null(), covs.as_ptr(), 3, 4, 0, 0, &mut ideal), IccssStatus::Ok);
        assert_eq!(iccss_model_score(h, s, covs.as_ptr(), 3, 4, 9, 0, &mut noisy), IccssStatus::Ok);
        assert!((0.0..=1.0).contains(&ideal) && (0.0..=1.0).contains(&noisy));
        assert_eq!(iccss_model_score(h, s, covs.as_ptr(), 0, 4, 9, 0, &mut noisy), IccssStatus::InvalidArgument);
        iccss_model_free(h);

        let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(iccss_model_load(missing.as_ptr(), &mut h), IccssStatus::Io);
        assert!(h.is_null());
        iccss_scenario_free(s);
    }
}

#[test]
fn header_lists_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/iccss.h")).unwrap();
    for name in [
        "iccss_last_error",
        "iccss_hdf_bound",
        "iccss_scenario_new",
        "iccss_generate_slot",
        "iccss_detector_statistic",
        "iccss_model_score",
        "ICCSS_STATUS_PANIC",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir: PathBuf = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libiccss_ffi.a");
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("iccss_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("2 4 "));
}
