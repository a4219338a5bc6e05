//! C ABI over the softq library.
//!
//! Objects are opaque handles created by `*_new`/`*_from_json` style
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`SoftqStatus`]; on failure the message is kept per thread and
//! can be read with [`softq_last_error_message`]. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use softq::alignment::{align, transfer_model, AlignConfig, AlignedCircuitSet, AlignedModel, AlignmentProblem};
use softq::circuit::{run_circuit, Circuit, StateVector};
use softq::encoding::{EncodingSpec, DEFAULT_BASE};
use softq::softu::{train_soft, SoftUnitaryModel, TrainConfig};
use softq::tasks::Sample;
use softq::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SoftqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    NonFinite = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Trained soft-unitary model.
pub struct SoftqSoftModel(SoftUnitaryModel);

/// Soft model with every block replaced by its compiled circuit.
pub struct SoftqAlignedModel {
    model: AlignedModel,
    set: AlignedCircuitSet,
}

/// Parameterized gate circuit.
pub struct SoftqCircuit(Circuit);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> SoftqStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::QubitOutOfRange { .. } | Error::MissingParameter { .. } => {
            SoftqStatus::DimensionMismatch
        }
        Error::Json(_) | Error::Csv(_) => SoftqStatus::Parse,
        Error::NonFiniteLoss { .. } => SoftqStatus::NonFinite,
        _ => SoftqStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (SoftqStatus, String)>) -> SoftqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SoftqStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SoftqStatus::Internal
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (SoftqStatus, String)>;
}

impl<T> IntoFfi<T> for softq::Result<T> {
    fn ffi(self) -> Result<T, (SoftqStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

impl<T> IntoFfi<T> for serde_json::Result<T> {
    fn ffi(self) -> Result<T, (SoftqStatus, String)> {
        self.map_err(|e| (SoftqStatus::Parse, e.to_string()))
    }
}

fn null(what: &str) -> (SoftqStatus, String) {
    (SoftqStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SoftqStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (SoftqStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SoftqStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (SoftqStatus::InvalidArgument, format!("{what} is not UTF-8: {e}")))
}

/// Copies `s` plus a terminating NUL into `buf` when it fits. Always stores
/// the required size (including the NUL) in `*needed` when `needed` is
/// non-null.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), (SoftqStatus, String)> {
    let need = s.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = need;
    }
    if buf.is_null() || len < need {
        return Err((SoftqStatus::BufferTooSmall, format!("need {need} bytes, have {len}")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (SoftqStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn softq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf`. Returns the
/// length the message needs including the NUL; nothing is written when
/// `len` is too small.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn softq_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let need = msg.len() + 1;
        if !buf.is_null() && len >= need {
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
            *buf.add(msg.len()) = 0;
        }
        need
    })
}

/// New model with Haar-random blocks and the exponential RZ encoding.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn softq_soft_model_random(
    n_qubits: usize,
    n_blocks: usize,
    seed: u64,
    out: *mut *mut SoftqSoftModel,
) -> SoftqStatus {
    guard(|| {
        let enc = EncodingSpec::exponential(n_qubits, DEFAULT_BASE).ffi()?;
        let m = SoftUnitaryModel::random(n_qubits, n_blocks, enc, seed).ffi()?;
        put(out, SoftqSoftModel(m))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn softq_soft_model_from_json(json: *const c_char, out: *mut *mut SoftqSoftModel) -> SoftqStatus {
    guard(|| {
        let m: SoftUnitaryModel = serde_json::from_str(c_str(json, "json")?).ffi()?;
        put(out, SoftqSoftModel(m))
    })
}

/// Writes the model's JSON and a NUL into `buf` when it fits; `needed`
/// receives the required size either way.
///
/// # Safety
/// `model` must be a live handle; `buf` null or valid for `len` bytes;
/// `needed` null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn softq_soft_model_to_json(
    model: *const SoftqSoftModel,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SoftqStatus {
    guard(|| {
        let m = get(model, "model")?;
        let s = serde_json::to_string(&m.0).ffi()?;
        write_str(&s, buf, len, needed)
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn softq_soft_model_forward(model: *const SoftqSoftModel, x: f64, out: *mut f64) -> SoftqStatus {
    guard(|| {
        let m = get(model, "model")?;
        let y = m.0.forward(x).ffi()?;
        *out.as_mut().ok_or_else(|| null("out"))? = y;
        Ok(())
    })
}

/// Largest `||U^dagger U - I||` over the blocks.
///
/// # Safety
/// `model` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn softq_soft_model_unitarity_deviation(model: *const SoftqSoftModel, out: *mut f64) -> SoftqStatus {
    guard(|| {
        let m = get(model, "model")?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.0.max_unitarity_deviation();
        Ok(())
    })
}

/// Trains a copy of `model` on `(xs[i], labels[i])` with the default
/// configuration except for the given epochs, learning rate, penalty
/// strength and seed; the result is a new handle.
///
/// # Safety
/// `model` must be a live handle, `xs` and `labels` valid for `n` elements,
/// and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn softq_soft_model_train(
    model: *const SoftqSoftModel,
    xs: *const f64,
    labels: *const u8,
    n: usize,
    epochs: usize,
    learning_rate: f64,
    lambda: f64,
    seed: u64,
    out: *mut *mut SoftqSoftModel,
) -> SoftqStatus {
    guard(|| {
        let m = get(model, "model")?;
        let xs = slice(xs, n, "xs")?;
        let labels = slice(labels, n, "labels")?;
        let data: Vec<Sample> = xs.iter().zip(labels).map(|(&x, &label)| Sample { x, label }).collect();
        let cfg = TrainConfig { epochs, learning_rate, lambda, seed, ..Default::default() };
        let (trained, _) = train_soft(&m.0, &data, &cfg).ffi()?;
        put(out, SoftqSoftModel(trained))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn softq_soft_model_free(model: *mut SoftqSoftModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Compiles every block of `model`; `layers_per_target == 0` selects the
/// default depth for the qubit count.
///
/// # Safety
/// `model` must be a live handle and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn softq_align(
    model: *const SoftqSoftModel,
    layers_per_target: usize,
    epochs: usize,
    seed: u64,
    out: *mut *mut SoftqAlignedModel,
) -> SoftqStatus {
    guard(|| {
        let m = get(model, "model")?;
        let n = m.0.n_qubits();
        let mut cfg = AlignConfig { epochs, seed, ..AlignConfig::for_qubits(n) };
        if layers_per_target > 0 {
            cfg.layers_per_target = layers_per_target;
        }
        let set = align(&AlignmentProblem::new(m.0.blocks().to_vec(), n, cfg).ffi()?).ffi()?;
        let model = transfer_model(&m.0, &set).ffi()?;
        put(out, SoftqAlignedModel { model, set })
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn softq_aligned_forward(model: *const SoftqAlignedModel, x: f64, out: *mut f64) -> SoftqStatus {
    guard(|| {
        let m = get(model, "aligned model")?;
        let y = m.model.forward(x).ffi()?;
        *out.as_mut().ok_or_else(|| null("out"))? = y;
        Ok(())
    })
}

/// Normalized alignment loss of the compiled circuits.
///
/// # Safety
/// `model` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn softq_aligned_loss(model: *const SoftqAlignedModel, out: *mut f64) -> SoftqStatus {
    guard(|| {
        let m = get(model, "aligned model")?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.set.loss();
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn softq_aligned_free(model: *mut SoftqAlignedModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn softq_circuit_from_json(json: *const c_char, out: *mut *mut SoftqCircuit) -> SoftqStatus {
    guard(|| {
        let c: Circuit = serde_json::from_str(c_str(json, "json")?).ffi()?;
        put(out, SoftqCircuit(c))
    })
}

/// # Safety
/// `circuit` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn softq_circuit_n_qubits(circuit: *const SoftqCircuit, out: *mut usize) -> SoftqStatus {
    guard(|| {
        *out.as_mut().ok_or_else(|| null("out"))? = get(circuit, "circuit")?.0.n_qubits();
        Ok(())
    })
}

/// Runs the circuit on `|0...0>` and writes the `2^n` amplitudes as
/// separate real and imaginary arrays.
///
/// # Safety
/// `circuit` must be a live handle, `params` valid for `n_params` values,
/// and `out_re`/`out_im` valid for `len` values each.
#[no_mangle]
pub unsafe extern "C" fn softq_circuit_run(
    circuit: *const SoftqCircuit,
    params: *const f64,
    n_params: usize,
    out_re: *mut f64,
    out_im: *mut f64,
    len: usize,
) -> SoftqStatus {
    guard(|| {
        let c = get(circuit, "circuit")?;
        let params = slice(params, n_params, "params")?;
        let dim = c.0.dim();
        if len < dim {
            return Err((SoftqStatus::BufferTooSmall, format!("need {dim} amplitudes, have {len}")));
        }
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output arrays"));
        }
        let zero = StateVector::zero(c.0.n_qubits()).ffi()?;
        let state = run_circuit(&c.0, params, &zero).ffi()?;
        for (k, a) in state.amplitudes().iter().enumerate() {
            *out_re.add(k) = a.re;
            *out_im.add(k) = a.im;
        }
        Ok(())
    })
}

/// # Safety
/// `circuit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn softq_circuit_free(circuit: *mut SoftqCircuit) {
    if !circuit.is_null() {
        drop(Box::from_raw(circuit));
    }
}
