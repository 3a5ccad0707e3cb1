//! C ABI over the `mstbd` experiment harness.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns an
//! [`MstbdStatus`]; the message of the last failure on the calling thread is
//! available from [`mstbd_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mstbd::harness::{emit_outputs, preset, run_experiment, ExperimentOutput, ExperimentSpec, HarnessError};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MstbdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Divergence = 4,
    Io = 5,
    Runtime = 6,
    Panic = 7,
    BufferTooSmall = 8,
}

/// Experiment configuration.
pub struct MstbdExperiment {
    spec: ExperimentSpec,
}

/// Finished batch.
pub struct MstbdResults {
    spec: ExperimentSpec,
    out: ExperimentOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &HarnessError) -> MstbdStatus {
    match e {
        HarnessError::Config(_) => MstbdStatus::Config,
        HarnessError::Divergence { .. } => MstbdStatus::Divergence,
        HarnessError::Io { .. } | HarnessError::Csv(_) | HarnessError::Json(_) => MstbdStatus::Io,
        _ => MstbdStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), MstbdStatus>) -> MstbdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MstbdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            MstbdStatus::Panic
        }
    }
}

fn fail(status: MstbdStatus, msg: impl Into<String>) -> Result<(), MstbdStatus> {
    set_error(msg);
    Err(status)
}

fn harness<T>(r: Result<T, HarnessError>) -> Result<T, MstbdStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, MstbdStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(MstbdStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        MstbdStatus::InvalidArgument
    })
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, MstbdStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle");
        MstbdStatus::NullPointer
    })
}

unsafe fn deref_mut<'a, T>(p: *mut T) -> Result<&'a mut T, MstbdStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null handle");
        MstbdStatus::NullPointer
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), MstbdStatus> {
    if buf.is_null() {
        return fail(MstbdStatus::NullPointer, "null output buffer");
    }
    if len < src.len() {
        return fail(MstbdStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", src.len()));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copy `s` with a trailing NUL into `buf` when it fits. Returns the size
/// needed including the NUL.
unsafe fn write_c_string(s: &str, buf: *mut c_char, len: usize) -> usize {
    let need = s.len() + 1;
    if !buf.is_null() && len >= need {
        ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, s.len());
        *buf.add(s.len()) = 0;
    }
    need
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mstbd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message of this thread into `buf`.
///
/// Returns the buffer size needed including the NUL, or 0 when no error was
/// recorded. Nothing is written when `len` is too small.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mstbd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(s) => write_c_string(s.to_str().unwrap_or(""), buf, len),
        None => 0,
    })
}

/// Build an experiment from a named preset such as `"paper-fig4"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mstbd_experiment_from_preset(
    name: *const c_char,
    out: *mut *mut MstbdExperiment,
) -> MstbdStatus {
    guard(|| {
        let out = deref_mut(out)?;
        let name = c_str(name)?;
        let spec = match preset(name) {
            Some(s) => s,
            None => return fail(MstbdStatus::Config, format!("unknown preset `{name}`")),
        };
        *out = Box::into_raw(Box::new(MstbdExperiment { spec }));
        Ok(())
    })
}

/// Build an experiment from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mstbd_experiment_from_toml(
    toml: *const c_char,
    out: *mut *mut MstbdExperiment,
) -> MstbdStatus {
    guard(|| {
        let out = deref_mut(out)?;
        let spec = harness(ExperimentSpec::from_toml(c_str(toml)?))?;
        harness(spec.validate())?;
        *out = Box::into_raw(Box::new(MstbdExperiment { spec }));
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mstbd_experiment_free(exp: *mut MstbdExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Override the batch size, CPI count and seed.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mstbd_experiment_set_size(
    exp: *mut MstbdExperiment,
    runs: usize,
    num_cpis: usize,
    seed: u64,
) -> MstbdStatus {
    guard(|| {
        let e = deref_mut(exp)?;
        e.spec.runs = runs;
        e.spec.num_cpis = num_cpis;
        e.spec.seed = seed;
        Ok(())
    })
}

/// Override the per-channel reflection SNR, dB.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mstbd_experiment_set_snr_db(exp: *mut MstbdExperiment, snr_db: f64) -> MstbdStatus {
    guard(|| {
        deref_mut(exp)?.spec.scene.snr_db = snr_db;
        Ok(())
    })
}

/// Replace the detector list with a comma-separated list of names.
///
/// # Safety
/// `exp` must be a live handle and `names` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mstbd_experiment_set_detectors(
    exp: *mut MstbdExperiment,
    names: *const c_char,
) -> MstbdStatus {
    guard(|| {
        let e = deref_mut(exp)?;
        let names = c_str(names)?;
        let mut ds = Vec::new();
        for n in names.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match n.parse() {
                Ok(d) => ds.push(d),
                Err(msg) => return fail(MstbdStatus::InvalidArgument, msg),
            }
        }
        e.spec.detectors = ds;
        Ok(())
    })
}

/// Serialize the configuration to TOML. Same size protocol as
/// [`mstbd_last_error`]; `needed` receives the size including the NUL.
///
/// # Safety
/// `exp` must be a live handle, `buf` null or valid for `len` bytes and
/// `needed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mstbd_experiment_to_toml(
    exp: *const MstbdExperiment,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> MstbdStatus {
    guard(|| {
        let text = harness(deref(exp)?.spec.to_toml())?;
        *deref_mut(needed)? = write_c_string(&text, buf, len);
        Ok(())
    })
}

/// Run the Monte Carlo batch.
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mstbd_experiment_run(exp: *const MstbdExperiment, out: *mut *mut MstbdResults) -> MstbdStatus {
    guard(|| {
        let out = deref_mut(out)?;
        let spec = deref(exp)?.spec.clone();
        let res = harness(run_experiment(&spec))?;
        *out = Box::into_raw(Box::new(MstbdResults { spec, out: res }));
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mstbd_results_free(res: *mut MstbdResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of detectors in the batch.
///
/// # Safety
/// `res` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mstbd_results_num_detectors(res: *const MstbdResults) -> usize {
    res.as_ref().map_or(0, |r| r.out.metrics.detectors.len())
}

/// Number of CPIs per run.
///
/// # Safety
/// `res` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mstbd_results_num_cpis(res: *const MstbdResults) -> usize {
    res.as_ref().map_or(0, |r| r.out.metrics.num_cpis)
}

fn detector_index(r: &MstbdResults, i: usize) -> Result<&mstbd::harness::metrics::DetectorMetrics, MstbdStatus> {
    r.out.metrics.detectors.get(i).ok_or_else(|| {
        set_error(format!("detector index {i} out of range"));
        MstbdStatus::InvalidArgument
    })
}

/// Name of detector `i`; size protocol as [`mstbd_experiment_to_toml`].
///
/// # Safety
/// `res` must be a live handle, `buf` null or valid for `len` bytes and
/// `needed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mstbd_results_detector_name(
    res: *const MstbdResults,
    i: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> MstbdStatus {
    guard(|| {
        let d = detector_index(deref(res)?, i)?;
        *deref_mut(needed)? = write_c_string(&d.detector.to_string(), buf, len);
        Ok(())
    })
}

/// Mean integrated log-likelihood ratio of detector `i` at every CPI. `buf`
/// must hold `num_cpis` values.
///
/// # Safety
/// `res` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mstbd_results_mean_integration(
    res: *const MstbdResults,
    i: usize,
    buf: *mut f64,
    len: usize,
) -> MstbdStatus {
    guard(|| copy_out(&detector_index(deref(res)?, i)?.mean_integration, buf, len))
}

/// Mean CFAR threshold (log domain) at every CPI for false-alarm entry
/// `pfa_index`.
///
/// # Safety
/// `res` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mstbd_results_mean_threshold(
    res: *const MstbdResults,
    pfa_index: usize,
    buf: *mut f64,
    len: usize,
) -> MstbdStatus {
    guard(|| {
        let r = deref(res)?;
        match r.out.metrics.mean_threshold.get(pfa_index) {
            Some(t) => copy_out(t, buf, len),
            None => fail(MstbdStatus::InvalidArgument, format!("pfa index {pfa_index} out of range")),
        }
    })
}

/// Detection probability of detector `i` at every CPI for false-alarm entry
/// `pfa_index`.
///
/// # Safety
/// `res` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mstbd_results_pd(
    res: *const MstbdResults,
    i: usize,
    pfa_index: usize,
    buf: *mut f64,
    len: usize,
) -> MstbdStatus {
    guard(|| {
        let d = detector_index(deref(res)?, i)?;
        match d.pd_vs_time.get(pfa_index) {
            Some(pd) => copy_out(pd, buf, len),
            None => fail(MstbdStatus::InvalidArgument, format!("pfa index {pfa_index} out of range")),
        }
    })
}

/// Write `metrics.json`, `traces.csv`, `roc.csv`, `rmse.csv` and
/// `config_resolved.json` into `dir`.
///
/// # Safety
/// `res` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mstbd_results_emit(res: *const MstbdResults, dir: *const c_char) -> MstbdStatus {
    guard(|| {
        let r = deref(res)?;
        let dir = c_str(dir)?;
        harness(emit_outputs(Path::new(dir), &r.spec, &r.out))
    })
}

/// `Q⁻¹(p)`, the upper-tail standard normal quantile.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mstbd_q_inv(p: f64, out: *mut f64) -> MstbdStatus {
    guard(|| {
        let out = deref_mut(out)?;
        match mstbd::detector::q_inv(p) {
            Ok(v) => {
                *out = v;
                Ok(())
            }
            Err(e) => fail(MstbdStatus::InvalidArgument, e.to_string()),
        }
    })
}
