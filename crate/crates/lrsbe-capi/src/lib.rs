//! C ABI for the beamspace channel estimation library.
//!
//! All heap objects cross the boundary as opaque handles created and
//! released by paired `_create`/`_free` calls; every fallible function
//! returns an [`LrsbeStatus`] and leaves a human-readable message in
//! thread-local storage readable through [`lrsbe_last_error_message`].
//! Complex vectors are passed as separate real/imaginary `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use lrsbe::beamspace::{synthesize_channel, ChannelDims, ChannelRealization, GeneratorParams};
use lrsbe::eval::nmse;
use lrsbe::measurement::{add_noise, Measurement, PilotSet};
use lrsbe::solvers::{EstimateResult, LrsbeOptions, SolverKind};
use lrsbe::CVec;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrsbeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalError = 3,
    Utf8Error = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into()).unwrap_or_else(|_| CString::new("invalid message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &lrsbe::Error) -> LrsbeStatus {
    set_error(err.to_string());
    match err {
        lrsbe::Error::Numerical { .. } | lrsbe::Error::EmptyModel => LrsbeStatus::NumericalError,
        _ => LrsbeStatus::InvalidArgument,
    }
}

/// Message describing the most recent failure on this thread, or NULL.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lrsbe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lrsbe_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Opaque ground-truth channel realization.
pub struct LrsbeChannel {
    inner: ChannelRealization,
}

/// Opaque pilot set.
pub struct LrsbePilots {
    inner: PilotSet,
}

/// Opaque noisy measurement.
pub struct LrsbeMeasurement {
    inner: Measurement,
}

/// Opaque estimation result.
pub struct LrsbeEstimate {
    inner: EstimateResult,
}

unsafe fn write_complex(v: &CVec, re: *mut f64, im: *mut f64, len: usize) -> LrsbeStatus {
    if re.is_null() || im.is_null() {
        set_error("output buffer is null");
        return LrsbeStatus::NullPointer;
    }
    if len != v.len() {
        set_error(format!("buffer length {len} does not match vector {}", v.len()));
        return LrsbeStatus::InvalidArgument;
    }
    for (i, z) in v.iter().enumerate() {
        unsafe {
            *re.add(i) = z.re;
            *im.add(i) = z.im;
        }
    }
    LrsbeStatus::Ok
}

unsafe fn read_complex(re: *const f64, im: *const f64, len: usize) -> Option<CVec> {
    if re.is_null() || im.is_null() {
        return None;
    }
    Some(CVec::from_fn(len, |i, _| unsafe {
        lrsbe::C64::new(*re.add(i), *im.add(i))
    }))
}

/// Synthesize a ground-truth channel realization.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_channel_synthesize(
    m_h: usize,
    m_v: usize,
    k_users: usize,
    rank_r: usize,
    sparse_blocks: usize,
    block_len_gen: usize,
    power_split: f64,
    energy_concentration: f64,
    gain: f64,
    seed: u64,
    out: *mut *mut LrsbeChannel,
) -> LrsbeStatus {
    if out.is_null() {
        set_error("out is null");
        return LrsbeStatus::NullPointer;
    }
    let params = GeneratorParams {
        rank_r,
        sparse_blocks,
        block_len_gen,
        power_split,
        energy_concentration,
        gain,
    };
    match synthesize_channel(&params, ChannelDims::new(m_h, m_v, k_users), seed) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(LrsbeChannel { inner })) };
            LrsbeStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Parse a channel realization from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_channel_from_json(
    json: *const c_char,
    out: *mut *mut LrsbeChannel,
) -> LrsbeStatus {
    if json.is_null() || out.is_null() {
        set_error("null argument");
        return LrsbeStatus::NullPointer;
    }
    let text = match unsafe { CStr::from_ptr(json) }.to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("channel JSON is not valid UTF-8");
            return LrsbeStatus::Utf8Error;
        }
    };
    match ChannelRealization::from_json(text) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(LrsbeChannel { inner })) };
            LrsbeStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Serialize a channel to JSON; free the string with `lrsbe_string_free`.
///
/// # Safety
/// `channel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_channel_to_json(
    channel: *const LrsbeChannel,
    out: *mut *mut c_char,
) -> LrsbeStatus {
    if channel.is_null() || out.is_null() {
        set_error("null argument");
        return LrsbeStatus::NullPointer;
    }
    let channel = unsafe { &*channel };
    match channel.inner.to_json() {
        Ok(text) => match CString::new(text) {
            Ok(c) => {
                unsafe { *out = c.into_raw() };
                LrsbeStatus::Ok
            }
            Err(_) => {
                set_error("JSON contained an interior NUL");
                LrsbeStatus::NumericalError
            }
        },
        Err(e) => status_of(&e),
    }
}

/// Length `M·K` of the collective channel vector.
///
/// # Safety
/// `channel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_channel_len(channel: *const LrsbeChannel) -> usize {
    if channel.is_null() {
        return 0;
    }
    unsafe { &*channel }.inner.dims.mk()
}

/// Copy the collective ground-truth channel into caller buffers of length
/// `lrsbe_channel_len`.
///
/// # Safety
/// `channel` must be live; `re`/`im` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_channel_collective(
    channel: *const LrsbeChannel,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> LrsbeStatus {
    if channel.is_null() {
        set_error("channel is null");
        return LrsbeStatus::NullPointer;
    }
    let v = unsafe { &*channel }.inner.collective();
    unsafe { write_complex(&v, re, im, len) }
}

/// # Safety
/// `channel` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_channel_free(channel: *mut LrsbeChannel) {
    if !channel.is_null() {
        drop(unsafe { Box::from_raw(channel) });
    }
}

/// Cyclic DFT pilot assignment for `k_users` users over `n_pilots`
/// orthogonal sequences.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_pilots_create(
    n_pilots: usize,
    k_users: usize,
    seed: u64,
    out: *mut *mut LrsbePilots,
) -> LrsbeStatus {
    if out.is_null() {
        set_error("out is null");
        return LrsbeStatus::NullPointer;
    }
    match PilotSet::make_pilots(n_pilots, k_users, seed) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(LrsbePilots { inner })) };
            LrsbeStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// # Safety
/// `pilots` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_pilots_free(pilots: *mut LrsbePilots) {
    if !pilots.is_null() {
        drop(unsafe { Box::from_raw(pilots) });
    }
}

/// Observe a channel through the pilots at the given SNR (dB); pass
/// `INFINITY` for a noiseless measurement.
///
/// # Safety
/// `channel` and `pilots` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_measure(
    channel: *const LrsbeChannel,
    pilots: *const LrsbePilots,
    snr_db: f64,
    seed: u64,
    out: *mut *mut LrsbeMeasurement,
) -> LrsbeStatus {
    if channel.is_null() || pilots.is_null() || out.is_null() {
        set_error("null argument");
        return LrsbeStatus::NullPointer;
    }
    let channel = unsafe { &*channel };
    let pilots = unsafe { &*pilots };
    let clean = match pilots.inner.forward(&channel.inner.collective()) {
        Ok(y) => y,
        Err(e) => return status_of(&e),
    };
    match add_noise(&clean, snr_db, seed) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(LrsbeMeasurement { inner })) };
            LrsbeStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// # Safety
/// `meas` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_measurement_free(meas: *mut LrsbeMeasurement) {
    if !meas.is_null() {
        drop(unsafe { Box::from_raw(meas) });
    }
}

/// Run one estimator. `solver` is one of `lrsbe | omp | ista | sbe | bsbe`;
/// `options_json` may be NULL for defaults or a JSON object matching the
/// library's solver options schema.
///
/// # Safety
/// Handles must be live; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_estimate(
    solver: *const c_char,
    meas: *const LrsbeMeasurement,
    pilots: *const LrsbePilots,
    m_h: usize,
    m_v: usize,
    k_users: usize,
    options_json: *const c_char,
    out: *mut *mut LrsbeEstimate,
) -> LrsbeStatus {
    if solver.is_null() || meas.is_null() || pilots.is_null() || out.is_null() {
        set_error("null argument");
        return LrsbeStatus::NullPointer;
    }
    let name = match unsafe { CStr::from_ptr(solver) }.to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("solver name is not valid UTF-8");
            return LrsbeStatus::Utf8Error;
        }
    };
    let kind = match SolverKind::parse(name) {
        Ok(k) => k,
        Err(e) => return status_of(&e),
    };
    let opts = if options_json.is_null() {
        LrsbeOptions::default()
    } else {
        let text = match unsafe { CStr::from_ptr(options_json) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("options JSON is not valid UTF-8");
                return LrsbeStatus::Utf8Error;
            }
        };
        match serde_json::from_str(text) {
            Ok(o) => o,
            Err(e) => {
                set_error(format!("invalid options: {e}"));
                return LrsbeStatus::InvalidArgument;
            }
        }
    };
    let meas = unsafe { &*meas };
    let pilots = unsafe { &*pilots };
    let dims = ChannelDims::new(m_h, m_v, k_users);
    match kind.estimate(&meas.inner, &pilots.inner, &dims, &opts) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(LrsbeEstimate { inner })) };
            LrsbeStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Length of the estimated collective channel.
///
/// # Safety
/// `est` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_estimate_len(est: *const LrsbeEstimate) -> usize {
    if est.is_null() {
        return 0;
    }
    unsafe { &*est }.inner.h_hat.len()
}

/// Copy the estimate into caller buffers of length `lrsbe_estimate_len`.
///
/// # Safety
/// `est` must be live; `re`/`im` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_estimate_channel(
    est: *const LrsbeEstimate,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> LrsbeStatus {
    if est.is_null() {
        set_error("estimate is null");
        return LrsbeStatus::NullPointer;
    }
    unsafe { write_complex(&(*est).inner.h_hat, re, im, len) }
}

/// # Safety
/// `est` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_estimate_iterations(est: *const LrsbeEstimate) -> usize {
    if est.is_null() {
        return 0;
    }
    unsafe { &*est }.inner.iterations
}

/// # Safety
/// `est` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_estimate_converged(est: *const LrsbeEstimate) -> bool {
    if est.is_null() {
        return false;
    }
    unsafe { &*est }.inner.converged
}

/// # Safety
/// `est` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_estimate_runtime_ms(est: *const LrsbeEstimate) -> f64 {
    if est.is_null() {
        return 0.0;
    }
    unsafe { &*est }.inner.runtime_ms
}

/// # Safety
/// `est` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_estimate_free(est: *mut LrsbeEstimate) {
    if !est.is_null() {
        drop(unsafe { Box::from_raw(est) });
    }
}

/// Per-user normalized MSE between a reference channel and an estimate,
/// in dB. `len` must be a multiple of `k_users`.
///
/// # Safety
/// All arrays must hold `len` doubles; `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_nmse_db(
    true_re: *const f64,
    true_im: *const f64,
    hat_re: *const f64,
    hat_im: *const f64,
    len: usize,
    k_users: usize,
    out_db: *mut f64,
) -> LrsbeStatus {
    if out_db.is_null() {
        set_error("out_db is null");
        return LrsbeStatus::NullPointer;
    }
    let (Some(h_true), Some(h_hat)) = (unsafe { read_complex(true_re, true_im, len) }, unsafe {
        read_complex(hat_re, hat_im, len)
    }) else {
        set_error("input array is null");
        return LrsbeStatus::NullPointer;
    };
    match nmse(&h_true, &h_hat, k_users) {
        Ok((_, db)) => {
            unsafe { *out_db = db };
            LrsbeStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lrsbe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
