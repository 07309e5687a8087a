//! C ABI for the lpdot toolkit: opaque pipeline handles, status codes, and
//! a small query surface so other languages can drive the construction and
//! evaluate norms without linking Rust.
//!
//! Conventions: every function returns an [`LpdotStatus`]; out-parameters
//! are written only on `Ok`. String buffers are caller-allocated; the
//! required size can be discovered by passing a zero capacity. A
//! thread-local message describes the most recent error in detail.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use lpdot::construct::{run_pipeline, ExponentSpec, PipelineConfig, PipelineMode, PipelineResult};
use lpdot::maps::{DyadicBox, DyadicIv};
use lpdot::piecewise::Piecewise1D;
use lpdot::systems::{BiorthSystem, Which};
use lpdot::vexp::{self, BoxSum};

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Status codes returned by every ABI function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpdotStatus {
    Ok = 0,
    /// Null pointer, malformed UTF-8 or otherwise invalid argument.
    BadArgument = 1,
    /// Pipeline construction failed (see `lpdot_last_error`).
    ConstructFailed = 2,
    /// Norm computation failed (function not in the space, bad box, …).
    NormFailed = 3,
    /// The provided buffer is too small; the required size was written.
    BufferTooSmall = 4,
    /// A panic was caught at the boundary.
    Panicked = 5,
}

/// Opaque pipeline handle.
pub struct LpdotPipeline {
    result: PipelineResult,
    manifest_json: String,
}

fn guard<F: FnOnce() -> LpdotStatus>(f: F) -> LpdotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic caught at the C boundary");
            LpdotStatus::Panicked
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lpdot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the most recent error message for this thread into `buf`.
///
/// `cap` is the buffer capacity in bytes including the NUL terminator;
/// `written` (optional) receives the full required size.
#[no_mangle]
pub extern "C" fn lpdot_last_error(buf: *mut c_char, cap: usize, written: *mut usize) -> LpdotStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let needed = msg.len() + 1;
    if !written.is_null() {
        unsafe { *written = needed };
    }
    if buf.is_null() || cap < needed {
        return LpdotStatus::BufferTooSmall;
    }
    unsafe {
        ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
        *buf.add(msg.len()) = 0;
    }
    LpdotStatus::Ok
}

fn parse_exponent(spec: &str) -> Result<ExponentSpec, String> {
    if spec == "conj-log" {
        return Ok(ExponentSpec::ConjLog);
    }
    if spec == "log" {
        return Ok(ExponentSpec::Log);
    }
    if let Some(v) = spec.strip_prefix("const:") {
        return v.parse().map(ExponentSpec::Constant).map_err(|e| format!("{e}"));
    }
    if let Some(list) = spec.strip_prefix("step:") {
        let vals: Result<Vec<f64>, _> = list.split(',').map(|x| x.trim().parse()).collect();
        return vals.map(ExponentSpec::Step).map_err(|e| format!("{e}"));
    }
    if let Some(text) = spec.strip_prefix("profile:") {
        let p = Piecewise1D::from_text(text)?;
        return Ok(ExponentSpec::Profile(p));
    }
    Err(format!("unknown exponent spec `{spec}`"))
}

/// Run the exponent-construction pipeline.
///
/// `exponent_spec`: `conj-log`, `log`, `const:V`, `step:V1,V2,…` or
/// `profile:<text format>`. On success `*out` owns the handle; free it with
/// [`lpdot_pipeline_free`].
#[no_mangle]
pub extern "C" fn lpdot_pipeline_run(
    exponent_spec: *const c_char,
    dim: usize,
    levels: usize,
    seed: u64,
    out: *mut *mut LpdotPipeline,
) -> LpdotStatus {
    guard(|| {
        if exponent_spec.is_null() || out.is_null() {
            set_error("null pointer argument");
            return LpdotStatus::BadArgument;
        }
        let spec = match unsafe { CStr::from_ptr(exponent_spec) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("exponent spec is not valid UTF-8");
                return LpdotStatus::BadArgument;
            }
        };
        let exponent = match parse_exponent(spec) {
            Ok(e) => e,
            Err(why) => {
                set_error(why);
                return LpdotStatus::BadArgument;
            }
        };
        if dim == 0 || dim > 6 || levels == 0 || levels > 4000 {
            set_error("dim must be 1..=6 and levels 1..=4000");
            return LpdotStatus::BadArgument;
        }
        let config = PipelineConfig {
            exponent,
            mode: PipelineMode::Conjugate,
            dim,
            levels,
            params: None,
            dense_set: None,
            samples: 2000,
            seed,
            piece_cap: 400_000,
        };
        match run_pipeline(&config) {
            Ok(result) => {
                let manifest_json = serde_json::to_string_pretty(&result.manifest())
                    .unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"));
                let handle = Box::new(LpdotPipeline { result, manifest_json });
                unsafe { *out = Box::into_raw(handle) };
                LpdotStatus::Ok
            }
            Err(why) => {
                set_error(why.to_string());
                LpdotStatus::ConstructFailed
            }
        }
    })
}

/// Release a pipeline handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn lpdot_pipeline_free(pipeline: *mut LpdotPipeline) {
    if !pipeline.is_null() {
        drop(unsafe { Box::from_raw(pipeline) });
    }
}

/// Number of cut points (`K + 1`).
#[no_mangle]
pub extern "C" fn lpdot_pipeline_cut_count(
    pipeline: *const LpdotPipeline,
    out: *mut usize,
) -> LpdotStatus {
    guard(|| {
        if pipeline.is_null() || out.is_null() {
            set_error("null pointer argument");
            return LpdotStatus::BadArgument;
        }
        let p = unsafe { &*pipeline };
        unsafe { *out = p.result.cuts.points.len() };
        LpdotStatus::Ok
    })
}

/// Copy the cut points `t_1 > t_2 > …` into `buf` (capacity in doubles).
#[no_mangle]
pub extern "C" fn lpdot_pipeline_cut_points(
    pipeline: *const LpdotPipeline,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> LpdotStatus {
    guard(|| {
        if pipeline.is_null() {
            set_error("null pipeline");
            return LpdotStatus::BadArgument;
        }
        let p = unsafe { &*pipeline };
        let points = &p.result.cuts.points;
        if !written.is_null() {
            unsafe { *written = points.len() };
        }
        if buf.is_null() || cap < points.len() {
            return LpdotStatus::BufferTooSmall;
        }
        unsafe { ptr::copy_nonoverlapping(points.as_ptr(), buf, points.len()) };
        LpdotStatus::Ok
    })
}

/// Copy the run manifest (JSON, NUL-terminated) into `buf`.
#[no_mangle]
pub extern "C" fn lpdot_pipeline_manifest_json(
    pipeline: *const LpdotPipeline,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> LpdotStatus {
    guard(|| {
        if pipeline.is_null() {
            set_error("null pipeline");
            return LpdotStatus::BadArgument;
        }
        let p = unsafe { &*pipeline };
        let needed = p.manifest_json.len() + 1;
        if !written.is_null() {
            unsafe { *written = needed };
        }
        if buf.is_null() || cap < needed {
            return LpdotStatus::BufferTooSmall;
        }
        unsafe {
            ptr::copy_nonoverlapping(p.manifest_json.as_ptr(), buf as *mut u8, p.manifest_json.len());
            *buf.add(p.manifest_json.len()) = 0;
        }
        LpdotStatus::Ok
    })
}

/// Evaluate the constructed exponent `q̄` at a point of `Ω`.
#[no_mangle]
pub extern "C" fn lpdot_pipeline_exponent_at(
    pipeline: *const LpdotPipeline,
    coords: *const f64,
    dim: usize,
    out: *mut f64,
) -> LpdotStatus {
    eval_at(pipeline, coords, dim, out, false)
}

/// Evaluate the Hölder conjugate `p̄` at a point of `Ω`.
#[no_mangle]
pub extern "C" fn lpdot_pipeline_conjugate_at(
    pipeline: *const LpdotPipeline,
    coords: *const f64,
    dim: usize,
    out: *mut f64,
) -> LpdotStatus {
    eval_at(pipeline, coords, dim, out, true)
}

fn eval_at(
    pipeline: *const LpdotPipeline,
    coords: *const f64,
    dim: usize,
    out: *mut f64,
    conjugate: bool,
) -> LpdotStatus {
    guard(|| {
        if pipeline.is_null() || coords.is_null() || out.is_null() {
            set_error("null pointer argument");
            return LpdotStatus::BadArgument;
        }
        let p = unsafe { &*pipeline };
        if dim != p.result.config.dim {
            set_error(format!("expected {} coordinates", p.result.config.dim));
            return LpdotStatus::BadArgument;
        }
        let x = unsafe { slice::from_raw_parts(coords, dim) };
        let exp = if conjugate { &p.result.conj_exponent } else { &p.result.exponent };
        match exp.eval_point(x) {
            Ok(v) => {
                unsafe { *out = v };
                LpdotStatus::Ok
            }
            Err(why) => {
                set_error(why.to_string());
                LpdotStatus::BadArgument
            }
        }
    })
}

/// Luxemburg norm of a dyadic-box indicator under the constructed exponent
/// (`conjugate = 0`) or its Hölder conjugate (`conjugate != 0`).
///
/// The box is given per axis as `[nums[i]·2^{-depths[i]}, (nums[i]+1)·2^{-depths[i]})`.
#[no_mangle]
pub extern "C" fn lpdot_pipeline_box_norm(
    pipeline: *const LpdotPipeline,
    nums: *const u64,
    depths: *const u32,
    dim: usize,
    conjugate: i32,
    tol: f64,
    out: *mut f64,
) -> LpdotStatus {
    guard(|| {
        if pipeline.is_null() || nums.is_null() || depths.is_null() || out.is_null() {
            set_error("null pointer argument");
            return LpdotStatus::BadArgument;
        }
        let p = unsafe { &*pipeline };
        if dim != p.result.config.dim || !(tol > 0.0) {
            set_error("dimension mismatch or nonpositive tolerance");
            return LpdotStatus::BadArgument;
        }
        let nums = unsafe { slice::from_raw_parts(nums, dim) };
        let depths = unsafe { slice::from_raw_parts(depths, dim) };
        for i in 0..dim {
            if depths[i] > 62 || (depths[i] > 0 && nums[i] >= (1u64 << depths[i])) {
                set_error("box coordinates out of range");
                return LpdotStatus::BadArgument;
            }
        }
        let axes = nums
            .iter()
            .zip(depths)
            .map(|(&num, &depth)| DyadicIv { num, depth })
            .collect();
        let f = BoxSum::new(vec![(DyadicBox { axes }, 1.0)]);
        let exp = if conjugate != 0 { &p.result.conj_exponent } else { &p.result.exponent };
        match vexp::norm(&f, exp, tol) {
            Ok(n) => {
                unsafe { *out = n.value };
                LpdotStatus::Ok
            }
            Err(why) => {
                set_error(why.to_string());
                LpdotStatus::NormFailed
            }
        }
    })
}

/// Evaluate the `index`-th Walsh–Paley function (first nonconstant has
/// index 1) of the `dim`-dimensional product system at a point.
#[no_mangle]
pub extern "C" fn lpdot_walsh_eval(
    dim: usize,
    index: usize,
    coords: *const f64,
    out: *mut f64,
) -> LpdotStatus {
    guard(|| {
        if coords.is_null() || out.is_null() || dim == 0 || dim > 6 || index == 0 {
            set_error("bad walsh arguments");
            return LpdotStatus::BadArgument;
        }
        let x = unsafe { slice::from_raw_parts(coords, dim) };
        match BiorthSystem::walsh(dim).eval(index, Which::F, x) {
            Ok(v) => {
                unsafe { *out = v };
                LpdotStatus::Ok
            }
            Err(why) => {
                set_error(why.to_string());
                LpdotStatus::BadArgument
            }
        }
    })
}
