//! C interface to the multiphoton library.
//!
//! Every fallible function returns an [`MpStatus`]; on failure a message is
//! available from [`mp_last_error`] on the same thread. Objects are opaque
//! handles released with their `_free` function; strings returned by the
//! library are released with [`mp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use multiphoton::cluster::{estimate_m_from_g2, g2_cluster, g3_cluster};
use multiphoton::config::RunConfig;
use multiphoton::estimators::{self, EstimateWithError, ReportOptions};
use multiphoton::simulator::{simulate_with_workers, CountsAccumulator};
use multiphoton::stats::{cluster_distribution, g_exact, solve_distribution, PhotonDistribution};
use multiphoton::Error;

/// Result codes. Values 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Infeasible = 3,
    DataMismatch = 4,
    Capacity = 5,
    InvalidArgument = 6,
    Io = 7,
    Panic = 8,
}

/// Photon-number distribution.
pub struct MpDistribution(PhotonDistribution);

/// Click counts of a simulated or recorded run.
pub struct MpCounts(CountsAccumulator);

/// Estimate with standard error. When `upper_bound` is set, `value` is 0
/// and `std_error` is a one-sided 68% upper bound.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_effective: u64,
    pub upper_bound: bool,
}

impl From<EstimateWithError> for MpEstimate {
    fn from(e: EstimateWithError) -> Self {
        Self { value: e.value, std_error: e.std_error, n_effective: e.n_effective, upper_bound: e.upper_bound }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MpStatus {
    match err {
        Error::Config(_) => MpStatus::InvalidConfig,
        Error::Infeasible { .. } | Error::Degenerate(_) | Error::NotInvertible(_) => MpStatus::Infeasible,
        Error::Domain(_) => MpStatus::InvalidArgument,
        Error::Parse { .. }
        | Error::DataMismatch(_)
        | Error::ShapeMismatch(_)
        | Error::InsufficientData(_)
        | Error::AbsentData(_) => MpStatus::DataMismatch,
        Error::Capacity { .. } => MpStatus::Capacity,
        Error::Io(_) => MpStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), MpStatus>>(f: F) -> MpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MpStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            MpStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, MpStatus>;
}

impl<T> OrStatus<T> for multiphoton::Result<T> {
    fn or_status(self) -> Result<T, MpStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn null(what: &str) -> MpStatus {
    set_error(format!("{what} is null"));
    MpStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, MpStatus> {
    // SAFETY: caller passes a pointer obtained from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), MpStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: checked non-null; caller guarantees it is writable.
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, MpStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees a nul-terminated string.
    unsafe { CStr::from_ptr(s) }.to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        MpStatus::InvalidArgument
    })
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on this thread.
#[no_mangle]
pub extern "C" fn mp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mp_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: allocated by CString::into_raw in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Single-emitter distribution on {0..3} with the given mean, `g(2)`, `g(3)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_distribution_solve(mean: f64, g2: f64, g3: f64, out: *mut *mut MpDistribution) -> MpStatus {
    guard(|| {
        let d = solve_distribution(mean, g2, g3).or_status()?;
        unsafe { write(out, Box::into_raw(Box::new(MpDistribution(d)))) }
    })
}

/// # Safety
/// `probs` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_distribution_from_probs(
    probs: *const f64,
    len: usize,
    out: *mut *mut MpDistribution,
) -> MpStatus {
    guard(|| {
        if probs.is_null() {
            return Err(null("probs"));
        }
        // SAFETY: caller guarantees `len` readable values.
        let slice = unsafe { std::slice::from_raw_parts(probs, len) };
        let d = PhotonDistribution::new(slice.to_vec()).or_status()?;
        unsafe { write(out, Box::into_raw(Box::new(MpDistribution(d)))) }
    })
}

/// Distribution of the total photon number of `m` independent copies.
///
/// # Safety
/// `emitter` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_distribution_cluster(
    emitter: *const MpDistribution,
    m: usize,
    out: *mut *mut MpDistribution,
) -> MpStatus {
    guard(|| {
        let e = unsafe { deref(emitter, "emitter") }?;
        let d = cluster_distribution(&e.0, m).or_status()?;
        unsafe { write(out, Box::into_raw(Box::new(MpDistribution(d)))) }
    })
}

/// Normalized correlation function `g(k)`.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_distribution_g(dist: *const MpDistribution, k: usize, out: *mut f64) -> MpStatus {
    guard(|| {
        let d = unsafe { deref(dist, "dist") }?;
        let g = g_exact(&d.0, k).or_status()?;
        unsafe { write(out, g) }
    })
}

/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_distribution_mean(dist: *const MpDistribution, out: *mut f64) -> MpStatus {
    guard(|| {
        let d = unsafe { deref(dist, "dist") }?;
        unsafe { write(out, d.0.mean()) }
    })
}

/// Number of stored probabilities, `n_max + 1`; 0 for a null handle.
///
/// # Safety
/// `dist` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mp_distribution_len(dist: *const MpDistribution) -> usize {
    // SAFETY: live handle or null per contract.
    unsafe { dist.as_ref() }.map_or(0, |d| d.0.probs().len())
}

/// Copies the probabilities into `buf`, which must hold `mp_distribution_len` values.
///
/// # Safety
/// `dist` must be a live handle; `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mp_distribution_probs(dist: *const MpDistribution, buf: *mut f64, len: usize) -> MpStatus {
    guard(|| {
        let d = unsafe { deref(dist, "dist") }?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let probs = d.0.probs();
        if len < probs.len() {
            set_error(format!("buffer holds {len} values, {} needed", probs.len()));
            return Err(MpStatus::InvalidArgument);
        }
        // SAFETY: room for `len >= probs.len()` values.
        unsafe { ptr::copy_nonoverlapping(probs.as_ptr(), buf, probs.len()) };
        Ok(())
    })
}

/// # Safety
/// `dist` must come from this library and not have been freed, or be null.
#[no_mangle]
pub unsafe extern "C" fn mp_distribution_free(dist: *mut MpDistribution) {
    if !dist.is_null() {
        // SAFETY: allocated by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(dist) });
    }
}

/// `g(2)` of a cluster of `m` emitters with single-emitter `g2_1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_g2_cluster(m: f64, g2_1: f64, out: *mut f64) -> MpStatus {
    guard(|| unsafe { write(out, g2_cluster(m, g2_1).or_status()?) })
}

/// `g(3)` of a cluster of `m` emitters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_g3_cluster(m: f64, g2_1: f64, g3_1: f64, out: *mut f64) -> MpStatus {
    guard(|| unsafe { write(out, g3_cluster(m, g2_1, g3_1).or_status()?) })
}

/// Cluster size implied by a measured `g(2)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_estimate_m(g2: f64, g2_1: f64, out: *mut f64) -> MpStatus {
    guard(|| unsafe { write(out, estimate_m_from_g2(g2, g2_1).or_status()?) })
}

/// Simulates the run described by a TOML configuration. `workers` 0 uses all cores.
///
/// # Safety
/// `config_toml` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_simulate_toml(config_toml: *const c_char, workers: usize, out: *mut *mut MpCounts) -> MpStatus {
    guard(|| {
        let text = unsafe { read_str(config_toml, "config_toml") }?;
        let cfg = RunConfig::from_toml(text).or_status()?;
        let workers = if workers == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            workers
        };
        let acc = simulate_with_workers(&cfg.simulation().or_status()?, workers, None).or_status()?;
        unsafe { write(out, Box::into_raw(Box::new(MpCounts(acc)))) }
    })
}

/// Counts from a full pattern histogram of `2^bins` entries, indexed by click mask.
///
/// # Safety
/// `histogram` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_from_histogram(
    bins: usize,
    histogram: *const u64,
    len: usize,
    out: *mut *mut MpCounts,
) -> MpStatus {
    guard(|| {
        if histogram.is_null() {
            return Err(null("histogram"));
        }
        // SAFETY: caller guarantees `len` readable values.
        let h = unsafe { std::slice::from_raw_parts(histogram, len) };
        let acc = CountsAccumulator::from_histogram(bins, h.to_vec()).or_status()?;
        unsafe { write(out, Box::into_raw(Box::new(MpCounts(acc)))) }
    })
}

/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_pulses(counts: *const MpCounts, out: *mut u64) -> MpStatus {
    guard(|| {
        let c = unsafe { deref(counts, "counts") }?;
        unsafe { write(out, c.0.pulses()) }
    })
}

/// Pulses in which every bin of `subset` (a bit mask) clicked.
///
/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_coincidence(counts: *const MpCounts, subset: u32, out: *mut u64) -> MpStatus {
    guard(|| {
        let c = unsafe { deref(counts, "counts") }?;
        if subset & !c.0.full_mask() != 0 {
            set_error(format!("subset {subset:#b} outside {} bins", c.0.bins()));
            return Err(MpStatus::InvalidArgument);
        }
        unsafe { write(out, c.0.coincidence(subset)) }
    })
}

/// `g(k)` on one bin subset (bit mask).
///
/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_g(counts: *const MpCounts, subset: u32, out: *mut MpEstimate) -> MpStatus {
    guard(|| {
        let c = unsafe { deref(counts, "counts") }?;
        let e = estimators::g_from_counts(&c.0, subset).or_status()?;
        unsafe { write(out, e.into()) }
    })
}

/// `g(k)` pooled over all subsets of `k` bins.
///
/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_g_symmetrized(counts: *const MpCounts, k: usize, out: *mut MpEstimate) -> MpStatus {
    guard(|| {
        let c = unsafe { deref(counts, "counts") }?;
        let e = estimators::g_symmetrized(&c.0, k).or_status()?;
        unsafe { write(out, e.into()) }
    })
}

/// `theta(k)` on one bin subset (bit mask).
///
/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_theta(counts: *const MpCounts, subset: u32, out: *mut MpEstimate) -> MpStatus {
    guard(|| {
        let c = unsafe { deref(counts, "counts") }?;
        let e = estimators::theta_from_counts(&c.0, subset).or_status()?;
        unsafe { write(out, e.into()) }
    })
}

/// `theta(k)` pooled over all subsets of `k` bins.
///
/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_theta_symmetrized(
    counts: *const MpCounts,
    k: usize,
    out: *mut MpEstimate,
) -> MpStatus {
    guard(|| {
        let c = unsafe { deref(counts, "counts") }?;
        let e = estimators::theta_symmetrized(&c.0, k).or_status()?;
        unsafe { write(out, e.into()) }
    })
}

/// Witness report as a JSON string (free with [`mp_string_free`]).
/// `bootstrap_resamples` 0 selects propagated errors.
///
/// # Safety
/// `counts` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_report_json(
    counts: *const MpCounts,
    sigma: f64,
    bootstrap_resamples: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> MpStatus {
    guard(|| {
        let c = unsafe { deref(counts, "counts") }?;
        if sigma.is_nan() || sigma <= 0.0 {
            set_error(format!("sigma must be positive, got {sigma}"));
            return Err(MpStatus::InvalidArgument);
        }
        let mut opts = ReportOptions { sigma, seed, ..ReportOptions::default() };
        if bootstrap_resamples > 0 {
            if bootstrap_resamples < estimators::MIN_RESAMPLES {
                set_error(format!("at least {} resamples required", estimators::MIN_RESAMPLES));
                return Err(MpStatus::InvalidArgument);
            }
            opts.method = estimators::ErrorMethod::BlockBootstrap;
            opts.resamples = bootstrap_resamples;
        }
        let report = estimators::full_report(&c.0, &opts);
        let json = serde_json::to_string(&report).expect("report serializes");
        unsafe { write(out, CString::new(json).expect("json has no nul").into_raw()) }
    })
}

/// # Safety
/// `counts` must come from this library and not have been freed, or be null.
#[no_mangle]
pub unsafe extern "C" fn mp_counts_free(counts: *mut MpCounts) {
    if !counts.is_null() {
        // SAFETY: allocated by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(counts) });
    }
}
