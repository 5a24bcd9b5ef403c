//! C ABI over the nvmlens analyses.
//!
//! Every function returns an [`NvmStatus`]. On failure the message is kept in
//! thread-local storage and can be copied out with [`nvm_last_error`].
//! Handles are opaque; free them with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nvmlens::bandwidth::{compute_bandwidth, BandwidthTrace};
use nvmlens::characterize::{
    classify_tier, throttle_risk, AppMetrics, CharacterizeError, ContentionVerdict, ThrottleRisk, ThrottleThresholds,
    TierLabel, TierThresholds,
};
use nvmlens::memsim::DataObject;
use nvmlens::placement::{advise, Strategy};
use nvmlens::predictor::{predict_ipc, FeatureVector, PredictError, RegressionModel};
use nvmlens::trace_io::{account_traffic, parse_trace, TraceError, EVENT_COUNT};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InsufficientData = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvmTier {
    Insensitive = 0,
    Scaled = 1,
    Bottlenecked = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvmThrottle {
    Low = 0,
    High = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvmStrategy {
    GreedyDensity = 0,
    ExactDp = 1,
}

/// Per-interval bandwidth parsed from a counter trace.
pub struct NvmTrace {
    bw: BandwidthTrace,
}

/// Fitted IPC model.
pub struct NvmModel {
    model: RegressionModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: NvmStatus, msg: impl Into<String>) -> NvmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> NvmStatus) -> NvmStatus {
    LAST_ERROR.with(|e| e.borrow_mut().clear());
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(NvmStatus::Panic, "internal panic"))
}

fn characterize_status(e: CharacterizeError) -> NvmStatus {
    let status = match e {
        CharacterizeError::Domain { .. } => NvmStatus::InvalidArgument,
        CharacterizeError::InsufficientData => NvmStatus::InsufficientData,
    };
    fail(status, e.to_string())
}

fn trace_status(e: TraceError) -> NvmStatus {
    let status = match e {
        TraceError::Io { .. } => NvmStatus::Io,
        TraceError::EmptySeries => NvmStatus::InsufficientData,
        _ => NvmStatus::Parse,
    };
    fail(status, e.to_string())
}

fn predict_status(e: PredictError) -> NvmStatus {
    let status = match e {
        PredictError::ModelFile(_) => NvmStatus::Parse,
        PredictError::InsufficientData { .. } | PredictError::EmptyWindow => NvmStatus::InsufficientData,
        _ => NvmStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, NvmStatus> {
    if p.is_null() {
        return Err(fail(NvmStatus::NullArgument, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(NvmStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn opt(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string and stores the full length (without NUL) in
/// `len_out`. Returns `BufferTooSmall` when the message was truncated.
///
/// # Safety
/// `buf` must be valid for `cap` bytes (or null when `cap` is 0) and
/// `len_out` must be null or point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nvm_last_error(buf: *mut c_char, cap: usize, len_out: *mut usize) -> NvmStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    if !len_out.is_null() {
        *len_out = msg.len();
    }
    if cap == 0 {
        return if msg.is_empty() { NvmStatus::Ok } else { NvmStatus::BufferTooSmall };
    }
    if buf.is_null() {
        return NvmStatus::NullArgument;
    }
    let n = msg.len().min(cap - 1);
    ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
    *buf.add(n) = 0;
    if n < msg.len() {
        NvmStatus::BufferTooSmall
    } else {
        NvmStatus::Ok
    }
}

/// Write share of total traffic, in [0, 1].
///
/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nvm_write_ratio(read_mbps: f64, write_mbps: f64, out: *mut f64) -> NvmStatus {
    guard(|| {
        if out.is_null() {
            return fail(NvmStatus::NullArgument, "out is null");
        }
        match nvmlens::characterize::write_ratio(read_mbps, write_mbps) {
            Ok(r) => {
                *out = r;
                NvmStatus::Ok
            }
            Err(e) => characterize_status(e),
        }
    })
}

/// Sensitivity tier with default thresholds. Pass NaN for unknown inputs.
/// With a slowdown the measured tier is reported, otherwise the
/// bandwidth-only advisory label; `borderline_out` is 0 for advisory labels.
///
/// # Safety
/// `tier_out` and `borderline_out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nvm_classify(
    read_mbps: f64,
    write_mbps: f64,
    slowdown: f64,
    tier_out: *mut NvmTier,
    borderline_out: *mut u8,
) -> NvmStatus {
    guard(|| {
        if tier_out.is_null() || borderline_out.is_null() {
            return fail(NvmStatus::NullArgument, "output pointer is null");
        }
        let m = AppMetrics {
            total_bw: None,
            read_bw: opt(read_mbps),
            write_bw: opt(write_mbps),
            slowdown: opt(slowdown),
        };
        let verdict = match classify_tier(&m, &TierThresholds::default()) {
            Ok(v) => v,
            Err(e) => return characterize_status(e),
        };
        let (label, borderline) = match (verdict.tier, verdict.advisory) {
            (Some(t), _) => (t.label, t.borderline),
            (None, Some(a)) => (a, false),
            (None, None) => return fail(NvmStatus::InsufficientData, "no tier"),
        };
        *tier_out = match label {
            TierLabel::Insensitive => NvmTier::Insensitive,
            TierLabel::Scaled => NvmTier::Scaled,
            TierLabel::Bottlenecked => NvmTier::Bottlenecked,
        };
        *borderline_out = borderline as u8;
        NvmStatus::Ok
    })
}

/// Write-throttling risk of a phase with default thresholds.
///
/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nvm_throttle_risk(avg_write_mbps: f64, rw_ratio: f64, out: *mut NvmThrottle) -> NvmStatus {
    guard(|| {
        if out.is_null() {
            return fail(NvmStatus::NullArgument, "out is null");
        }
        if avg_write_mbps.is_nan() || rw_ratio.is_nan() {
            return fail(NvmStatus::InvalidArgument, "inputs must not be NaN");
        }
        *out = match throttle_risk(avg_write_mbps, rw_ratio, &ThrottleThresholds::default()) {
            ThrottleRisk::Low => NvmThrottle::Low,
            ThrottleRisk::High => NvmThrottle::High,
        };
        NvmStatus::Ok
    })
}

/// Sets `*out` to 1 when the uncached-NVM scaling ratio trails the DRAM
/// ratio by at least `gap_threshold`.
///
/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nvm_contention(
    ratio_dram: f64,
    ratio_uncached: f64,
    gap_threshold: f64,
    out: *mut u8,
) -> NvmStatus {
    guard(|| {
        if out.is_null() {
            return fail(NvmStatus::NullArgument, "out is null");
        }
        if !(ratio_dram.is_finite() && ratio_uncached.is_finite() && gap_threshold.is_finite()) {
            return fail(NvmStatus::InvalidArgument, "ratios must be finite");
        }
        *out = ContentionVerdict::new(ratio_dram, None, ratio_uncached, gap_threshold).contended_on_nvm as u8;
        NvmStatus::Ok
    })
}

/// Chooses objects to keep in DRAM. `in_dram_out[i]` is set to 1 for each
/// chosen object and `captured_write_out` to the captured write share.
///
/// # Safety
/// `sizes`, `write_shares` and `in_dram_out` must be valid for `n` elements;
/// `captured_write_out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nvm_place(
    sizes: *const u64,
    write_shares: *const f64,
    n: usize,
    budget_bytes: i64,
    strategy: NvmStrategy,
    in_dram_out: *mut u8,
    captured_write_out: *mut f64,
) -> NvmStatus {
    guard(|| {
        if n > 0 && (sizes.is_null() || write_shares.is_null() || in_dram_out.is_null()) {
            return fail(NvmStatus::NullArgument, "array argument is null");
        }
        if captured_write_out.is_null() {
            return fail(NvmStatus::NullArgument, "captured_write_out is null");
        }
        let (sizes, shares) = if n == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(sizes, n), std::slice::from_raw_parts(write_shares, n))
        };
        // Zero-padded index names keep the tie order equal to input order.
        let objects: Vec<DataObject> = sizes
            .iter()
            .zip(shares)
            .enumerate()
            .map(|(i, (&size_bytes, &write_share))| DataObject {
                name: format!("{i:020}"),
                size_bytes,
                read_share: 0.0,
                write_share,
            })
            .collect();
        let strategy = match strategy {
            NvmStrategy::GreedyDensity => Strategy::GreedyDensity,
            NvmStrategy::ExactDp => Strategy::ExactDp,
        };
        let plan = match advise(&objects, budget_bytes, strategy) {
            Ok(p) => p,
            Err(e) => return fail(NvmStatus::InvalidArgument, e.to_string()),
        };
        if n > 0 {
            let out = std::slice::from_raw_parts_mut(in_dram_out, n);
            out.fill(0);
            for name in &plan.in_dram {
                out[name.parse::<usize>().expect("index name")] = 1;
            }
        }
        *captured_write_out = plan.captured_write_fraction;
        NvmStatus::Ok
    })
}

/// Parses `<stem>.mem.csv`, `<stem>.core.csv` and `<stem>.meta`. `path` may
/// be the stem or the `.mem.csv` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nvm_trace_open(path: *const c_char, out: *mut *mut NvmTrace) -> NvmStatus {
    guard(|| {
        if out.is_null() {
            return fail(NvmStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let bw = match parse_trace(path).and_then(|t| account_traffic(&t)).map_err(trace_status) {
            Ok(series) => match compute_bandwidth(&series) {
                Ok(bw) => bw,
                Err(e) => return fail(NvmStatus::InsufficientData, e.to_string()),
            },
            Err(s) => return s,
        };
        *out = Box::into_raw(Box::new(NvmTrace { bw }));
        NvmStatus::Ok
    })
}

/// # Safety
/// `trace` must come from [`nvm_trace_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nvm_trace_free(trace: *mut NvmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of bandwidth intervals in the trace.
///
/// # Safety
/// `trace` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nvm_trace_len(trace: *const NvmTrace, out: *mut usize) -> NvmStatus {
    guard(|| {
        if trace.is_null() || out.is_null() {
            return fail(NvmStatus::NullArgument, "null argument");
        }
        *out = (*trace).bw.len();
        NvmStatus::Ok
    })
}

/// Copies per-interval read and write bandwidth (MB/s). Both buffers must
/// hold at least [`nvm_trace_len`] values.
///
/// # Safety
/// `trace` must be a live handle; the buffers must be valid for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn nvm_trace_bandwidth(
    trace: *const NvmTrace,
    read_out: *mut f64,
    write_out: *mut f64,
    cap: usize,
) -> NvmStatus {
    guard(|| {
        if trace.is_null() || read_out.is_null() || write_out.is_null() {
            return fail(NvmStatus::NullArgument, "null argument");
        }
        let bw = &(*trace).bw;
        if cap < bw.len() {
            return fail(NvmStatus::BufferTooSmall, format!("need {} values, got {cap}", bw.len()));
        }
        ptr::copy_nonoverlapping(bw.read_mbps.as_ptr(), read_out, bw.len());
        ptr::copy_nonoverlapping(bw.write_mbps.as_ptr(), write_out, bw.len());
        NvmStatus::Ok
    })
}

/// Loads a model written by `nvmlens predict-train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nvm_model_load(path: *const c_char, out: *mut *mut NvmModel) -> NvmStatus {
    guard(|| {
        if out.is_null() {
            return fail(NvmStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(NvmStatus::Io, format!("{}: {e}", path.display())),
        };
        match RegressionModel::from_json(&text) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(NvmModel { model }));
                NvmStatus::Ok
            }
            Err(e) => predict_status(e),
        }
    })
}

/// # Safety
/// `model` must come from [`nvm_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nvm_model_free(model: *mut NvmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted IPC for one window given its six per-thread event counts and
/// the single-thread IPC.
///
/// # Safety
/// `model` must be a live handle, `counts` valid for six values and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nvm_model_predict(
    model: *const NvmModel,
    counts: *const f64,
    ipc_single: f64,
    out: *mut f64,
) -> NvmStatus {
    guard(|| {
        if model.is_null() || counts.is_null() || out.is_null() {
            return fail(NvmStatus::NullArgument, "null argument");
        }
        let raw: [f64; EVENT_COUNT] = std::slice::from_raw_parts(counts, EVENT_COUNT)
            .try_into()
            .expect("six counts");
        if raw.iter().chain([&ipc_single]).any(|v| !v.is_finite()) {
            return fail(NvmStatus::InvalidArgument, "counts and IPC must be finite");
        }
        match predict_ipc(&(*model).model, &FeatureVector::new(raw, ipc_single)) {
            Ok(v) => {
                *out = v;
                NvmStatus::Ok
            }
            Err(e) => predict_status(e),
        }
    })
}
