//! C ABI for the generator-learning library.
//!
//! Conventions:
//! - opaque handles (`KgModel`) own their Rust data; release with the
//!   matching `*_free` function, never with `free(3)`;
//! - every fallible call returns a [`KgStatus`]; on failure a thread-local
//!   message is retrievable via [`kg_last_error_message`];
//! - strings returned by the library are NUL-terminated UTF-8 owned by the
//!   caller and released with [`kg_string_free`];
//! - matrices are copied out row-major into caller-provided buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use koopgen::bench::{run_learn, LearnRunConfig};
use koopgen::rtm::LearnedGenerator;
use koopgen::sysid::{self, IdentifiedSystem};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KgStatus {
    /// Success.
    Ok = 0,
    /// A pointer or size argument was invalid.
    InvalidArgument = 1,
    /// A JSON payload failed to parse or validate.
    ParseError = 2,
    /// The learning pipeline failed numerically.
    NumericalError = 3,
    /// An internal panic was caught at the boundary.
    Panic = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> KgStatus>(f: F) -> KgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic caught at the FFI boundary");
            KgStatus::Panic
        }
    }
}

/// A learned generator model (opaque).
pub struct KgModel {
    generator: LearnedGenerator,
    identified: Option<IdentifiedSystem>,
}

impl KgModel {
    fn identified(&mut self) -> Result<&IdentifiedSystem, String> {
        if self.identified.is_none() {
            let sys = sysid::recover_field(&self.generator).map_err(|e| e.to_string())?;
            self.identified = Some(sys);
        }
        Ok(self.identified.as_ref().unwrap())
    }
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn kg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Returns the last error message of this thread as a caller-owned string,
/// or null when no error has been recorded. Free with `kg_string_free`.
#[no_mangle]
pub extern "C" fn kg_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be a pointer obtained from this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn kg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, KgStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(KgStatus::InvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        KgStatus::InvalidArgument
    })
}

/// Learns a generator from a JSON learn-config (same schema as the CLI
/// `learn` subcommand) and returns an owned model handle.
///
/// # Safety
/// `config_json` must point to a NUL-terminated string and `out_model` to a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn kg_learn_json(
    config_json: *const c_char,
    out_model: *mut *mut KgModel,
) -> KgStatus {
    guard(|| {
        if out_model.is_null() {
            set_error("null output slot");
            return KgStatus::InvalidArgument;
        }
        let json = match read_utf8(config_json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let cfg: LearnRunConfig = match serde_json::from_str(json) {
            Ok(c) => c,
            Err(e) => {
                set_error(format!("config parse error: {e}"));
                return KgStatus::ParseError;
            }
        };
        match run_learn(&cfg) {
            Ok(out) => {
                let model = Box::new(KgModel {
                    generator: out.generator,
                    identified: None,
                });
                *out_model = Box::into_raw(model);
                KgStatus::Ok
            }
            Err(e) => {
                set_error(format!("learning failed: {e}"));
                KgStatus::NumericalError
            }
        }
    })
}

/// Deserializes a model from its JSON form (as produced by
/// `kg_model_to_json` or the CLI).
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out_model` to a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn kg_model_from_json(
    json: *const c_char,
    out_model: *mut *mut KgModel,
) -> KgStatus {
    guard(|| {
        if out_model.is_null() {
            set_error("null output slot");
            return KgStatus::InvalidArgument;
        }
        let body = match read_utf8(json) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match LearnedGenerator::from_json(body) {
            Ok(generator) => {
                *out_model = Box::into_raw(Box::new(KgModel {
                    generator,
                    identified: None,
                }));
                KgStatus::Ok
            }
            Err(e) => {
                set_error(format!("model parse error: {e}"));
                KgStatus::ParseError
            }
        }
    })
}

/// Serializes the model to JSON; returns null on failure. Free with
/// `kg_string_free`.
///
/// # Safety
/// `model` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn kg_model_to_json(model: *const KgModel) -> *mut c_char {
    if model.is_null() {
        set_error("null model");
        return std::ptr::null_mut();
    }
    match (*model).generator.to_json() {
        Ok(json) => CString::new(json)
            .map(CString::into_raw)
            .unwrap_or(std::ptr::null_mut()),
        Err(e) => {
            set_error(format!("serialization failed: {e}"));
            std::ptr::null_mut()
        }
    }
}

/// Dictionary size N (the generator matrix is N x N).
///
/// # Safety
/// `model` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn kg_model_size(model: *const KgModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).generator.dictionary.size()
}

/// State dimension d of the underlying system.
///
/// # Safety
/// `model` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn kg_model_dim(model: *const KgModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).generator.dictionary.dim()
}

/// Copies the N x N generator matrix row-major into `out` (`len >= N*N`).
///
/// # Safety
/// `model` must be live; `out` must point to at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kg_model_matrix(
    model: *const KgModel,
    out: *mut f64,
    len: usize,
) -> KgStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            set_error("null argument");
            return KgStatus::InvalidArgument;
        }
        let m = &(*model).generator.matrix;
        let need = m.rows() * m.cols();
        if len < need {
            set_error(format!("buffer of {len} doubles is smaller than {need}"));
            return KgStatus::InvalidArgument;
        }
        std::ptr::copy_nonoverlapping(m.data().as_ptr(), out, need);
        KgStatus::Ok
    })
}

/// Copies the identified d x N field coefficients row-major into `out`
/// (`len >= d*N`). Row j holds the dictionary weights of component j.
///
/// # Safety
/// `model` must be live; `out` must point to at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kg_model_field_coefficients(
    model: *mut KgModel,
    out: *mut f64,
    len: usize,
) -> KgStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            set_error("null argument");
            return KgStatus::InvalidArgument;
        }
        let sys = match (*model).identified() {
            Ok(s) => s,
            Err(e) => {
                set_error(e);
                return KgStatus::NumericalError;
            }
        };
        let need = sys.coefficients.rows() * sys.coefficients.cols();
        if len < need {
            set_error(format!("buffer of {len} doubles is smaller than {need}"));
            return KgStatus::InvalidArgument;
        }
        std::ptr::copy_nonoverlapping(sys.coefficients.data().as_ptr(), out, need);
        KgStatus::Ok
    })
}

/// Evaluates the identified vector field at `x` (`x_len == d`), writing d
/// components to `out`.
///
/// # Safety
/// `model` must be live; `x` and `out` must point to `x_len`/`out_len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn kg_model_eval_field(
    model: *mut KgModel,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> KgStatus {
    guard(|| {
        if model.is_null() || x.is_null() || out.is_null() {
            set_error("null argument");
            return KgStatus::InvalidArgument;
        }
        let d = (*model).generator.dictionary.dim();
        if x_len != d || out_len < d {
            set_error(format!("expected x_len == {d} and out_len >= {d}"));
            return KgStatus::InvalidArgument;
        }
        let sys = match (*model).identified() {
            Ok(s) => s,
            Err(e) => {
                set_error(e);
                return KgStatus::NumericalError;
            }
        };
        let xs = std::slice::from_raw_parts(x, x_len);
        let outs = std::slice::from_raw_parts_mut(out, d);
        sys.eval_field(xs, outs);
        KgStatus::Ok
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn kg_model_free(model: *mut KgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
