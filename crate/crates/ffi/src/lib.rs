//! C interface to the simulator.
//!
//! Scenarios and trained models are opaque heap handles created by
//! `*_new`/`*_load` and released by `*_free`. Every fallible call returns an
//! [`IccssStatus`]; on failure a message is kept per thread and can be read
//! with [`iccss_last_error`]. Complex matrices cross the boundary as
//! interleaved `(re, im)` doubles in row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use iccss::airmodel::{generate_slot, report_aircomp, ScenarioConfig};
use iccss::detectors::{statistic, DetectorKind, DetectorName};
use iccss::fusion::hdf_theoretical_pd;
use iccss::neuralsc::{load_checkpoint, sigmoid, ModelParams};
use iccss::numerics::{bpsk_ber, q_function, Complex64, ComplexMatrix, RngStream};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IccssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Numerical = 4,
    Io = 5,
    Checkpoint = 6,
    Panic = 7,
}

/// Opaque scenario handle.
pub struct IccssScenario {
    cfg: ScenarioConfig,
}

/// Opaque trained-model handle.
pub struct IccssModel {
    model: ModelParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: IccssStatus, msg: impl Into<String>) -> IccssStatus {
    set_error(msg);
    status
}

fn from_core(e: iccss::Error) -> IccssStatus {
    use iccss::Error as E;
    let status = match &e {
        E::InvalidConfig(_) | E::Json(_) => IccssStatus::InvalidConfig,
        E::Io { .. } => IccssStatus::Io,
        E::Checkpoint(_) => IccssStatus::Checkpoint,
        E::DimensionMismatch(_) | E::NotSquare { .. } | E::NotHermitian { .. } | E::EmptyInput(_) => IccssStatus::InvalidArgument,
        _ => IccssStatus::Numerical,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> IccssStatus) -> IccssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == IccssStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(IccssStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, IccssStatus> {
    if p.is_null() {
        return Err(fail(IccssStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(IccssStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn read_matrix(data: *const f64, m: usize) -> Result<ComplexMatrix, IccssStatus> {
    if data.is_null() {
        return Err(fail(IccssStatus::NullPointer, "matrix data is null"));
    }
    let raw = std::slice::from_raw_parts(data, 2 * m * m);
    let values = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    ComplexMatrix::from_vec(m, m, values).map_err(from_core)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn iccss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Gaussian tail probability `Q(x)`.
#[no_mangle]
pub extern "C" fn iccss_q_function(x: f64) -> f64 {
    q_function(x)
}

/// BPSK bit error rate at the given SNR in dB.
#[no_mangle]
pub extern "C" fn iccss_bpsk_ber(snr_db: f64) -> f64 {
    bpsk_ber(snr_db)
}

/// Majority-rule detection probability of `k` sensors with local detection
/// probability `p_local` reporting over BPSK at `snr_report_db`.
#[no_mangle]
pub extern "C" fn iccss_hdf_bound(p_local: f64, snr_report_db: f64, k: usize) -> f64 {
    hdf_theoretical_pd(p_local, snr_report_db, k)
}

/// Creates a scenario from JSON text; null `json` gives the default scenario.
///
/// # Safety
/// `json` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iccss_scenario_new(json: *const c_char, out: *mut *mut IccssScenario) -> IccssStatus {
    guard(|| {
        if out.is_null() {
            return fail(IccssStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let cfg = if json.is_null() {
            ScenarioConfig::default()
        } else {
            let text = match c_str(json, "json") {
                Ok(t) => t,
                Err(s) => return s,
            };
            match ScenarioConfig::from_json(text) {
                Ok(c) => c,
                Err(e) => return from_core(e),
            }
        };
        *out = Box::into_raw(Box::new(IccssScenario { cfg }));
        IccssStatus::Ok
    })
}

/// # Safety
/// `s` must be null or a handle from [`iccss_scenario_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iccss_scenario_free(s: *mut IccssScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Sensor count and antenna count of a scenario.
///
/// # Safety
/// `s` must be a live handle; `k` and `m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iccss_scenario_dims(s: *const IccssScenario, k: *mut usize, m: *mut usize) -> IccssStatus {
    if s.is_null() || k.is_null() || m.is_null() {
        return fail(IccssStatus::NullPointer, "null argument");
    }
    *k = (*s).cfg.k;
    *m = (*s).cfg.m;
    IccssStatus::Ok
}

/// Simulates one sensing slot and writes the K sample covariances
/// (`2 * K * M * M` doubles) to `out`.
///
/// # Safety
/// `s` must be a live handle and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn iccss_generate_slot(
    s: *const IccssScenario,
    h1: bool,
    seed: u64,
    stream_id: u64,
    out: *mut f64,
    out_len: usize,
) -> IccssStatus {
    guard(|| {
        if s.is_null() || out.is_null() {
            return fail(IccssStatus::NullPointer, "null argument");
        }
        let cfg = &(*s).cfg;
        let need = 2 * cfg.k * cfg.m * cfg.m;
        if out_len != need {
            return fail(IccssStatus::InvalidArgument, format!("output holds {out_len} doubles, need {need}"));
        }
        let slot = match generate_slot(cfg, h1, &mut RngStream::new(seed, stream_id)) {
            Ok(x) => x,
            Err(e) => return from_core(e),
        };
        let dst = std::slice::from_raw_parts_mut(out, out_len);
        for (chunk, z) in dst.chunks_exact_mut(2).zip(slot.covariances.iter().flat_map(|r| r.as_slice())) {
            chunk[0] = z.re;
            chunk[1] = z.im;
        }
        IccssStatus::Ok
    })
}

/// Local statistic of the named detector (`ed`, `med`, `mmed`, `cav`, `ec`)
/// on one `M x M` covariance, with priors taken from the scenario.
///
/// # Safety
/// `s` must be a live handle, `detector` a NUL-terminated string, `cov` must
/// hold `2 * m * m` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iccss_detector_statistic(
    s: *const IccssScenario,
    detector: *const c_char,
    cov: *const f64,
    m: usize,
    out: *mut f64,
) -> IccssStatus {
    guard(|| {
        if s.is_null() || out.is_null() {
            return fail(IccssStatus::NullPointer, "null argument");
        }
        let cfg = &(*s).cfg;
        if m != cfg.m {
            return fail(IccssStatus::InvalidArgument, format!("m = {m} but the scenario has m = {}", cfg.m));
        }
        let name: DetectorName = match c_str(detector, "detector").map(str::parse) {
            Ok(Ok(n)) => n,
            Ok(Err(_)) => return fail(IccssStatus::InvalidArgument, "unknown detector"),
            Err(st) => return st,
        };
        let r = match read_matrix(cov, m) {
            Ok(r) => r,
            Err(st) => return st,
        };
        match DetectorKind::for_scenario(name, cfg).and_then(|k| statistic(&k, &r)) {
            Ok(t) => {
                *out = t;
                IccssStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Loads a trained checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn iccss_model_load(path: *const c_char, out: *mut *mut IccssModel) -> IccssStatus {
    guard(|| {
        if out.is_null() {
            return fail(IccssStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let p = match c_str(path, "path") {
            Ok(p) => p,
            Err(st) => return st,
        };
        match load_checkpoint(Path::new(p)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(IccssModel { model }));
                IccssStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `m` must be null or a handle from [`iccss_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iccss_model_free(m: *mut IccssModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Probability that the PU is present given `k` covariances of size `m`
/// (`2 * k * m * m` doubles). With a null scenario the aggregation is ideal
/// and noiseless; otherwise the scenario's reporting channel is simulated
/// from `(seed, stream_id)`.
///
/// # Safety
/// `model` must be a live handle, `s` null or live, `covs` must hold
/// `2 * k * m * m` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iccss_model_score(
    model: *const IccssModel,
    s: *const IccssScenario,
    covs: *const f64,
    k: usize,
    m: usize,
    seed: u64,
    stream_id: u64,
    out: *mut f64,
) -> IccssStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(IccssStatus::NullPointer, "null argument");
        }
        if k == 0 {
            return fail(IccssStatus::InvalidArgument, "k must be at least 1");
        }
        let model = &(*model).model;
        let mut rs = Vec::with_capacity(k);
        for i in 0..k {
            match read_matrix(covs.wrapping_add(2 * m * m * i), m) {
                Ok(r) => rs.push(r),
                Err(st) => return st,
            }
        }
        let y = match model.encode_batch(&rs) {
            Ok(y) => y,
            Err(e) => return from_core(e),
        };
        let z = if s.is_null() {
            let d = y[0].len();
            (0..d).map(|j| y.iter().map(|v| v[j]).sum::<Complex64>() / k as f64).collect()
        } else {
            let mut cfg = (*s).cfg.clone();
            cfg.set_k(k);
            match report_aircomp(&y, &cfg, &mut RngStream::new(seed, stream_id)) {
                Ok(r) => r.aggregated.expect("aircomp output"),
                Err(e) => return from_core(e),
            }
        };
        match model.decode_logit(&z) {
            Ok(l) => {
                *out = sigmoid(l);
                IccssStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}
