//! C ABI over the spinlab library.
//!
//! Fallible calls return a [`SpinlabStatus`] and write results through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`spinlab_last_error`]. Models and measures are opaque handles released by
//! their `_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use spinlab::error::Error;
use spinlab::hj::{hopf_lax, psi1_path, psi1_scalar, HopfLaxOptions, StepPath};
use spinlab::mc::{enriched_free_energy, quenched_free_energy};
use spinlab::model::ModelSpec;
use spinlab::parisi::{optimize_parisi, parisi_functional, DiscreteMeasure, ParisiOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// Opaque model handle.
pub struct SpinlabModel(ModelSpec);

/// Opaque finitely-atomic measure on `[0, 1]`.
pub struct SpinlabMeasure(DiscreteMeasure);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpinlabStatus {
    match e {
        Error::Numerical(_) => SpinlabStatus::Numerical,
        Error::Io(_) => SpinlabStatus::Io,
        _ => SpinlabStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (SpinlabStatus, String)>>(f: F) -> SpinlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpinlabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SpinlabStatus::Panic
        }
    }
}

fn lib<T>(r: spinlab::error::Result<T>) -> Result<T, (SpinlabStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), (SpinlabStatus, String)> {
    if p.is_null() {
        Err((SpinlabStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `len` elements must be readable at `p` unless `len` is zero.
unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (SpinlabStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spinlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spinlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn spinlab_model_sk(out: *mut *mut SpinlabModel) -> SpinlabStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(SpinlabModel(ModelSpec::sk())));
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn spinlab_model_bipartite(lambda1: f64, lambda2: f64, out: *mut *mut SpinlabModel) -> SpinlabStatus {
    guard(|| {
        non_null(out, "out")?;
        let m = lib(ModelSpec::bipartite(lambda1, lambda2))?;
        *out = Box::into_raw(Box::new(SpinlabModel(m)));
        Ok(())
    })
}

/// Parses a model from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spinlab_model_from_toml(toml: *const c_char, out: *mut *mut SpinlabModel) -> SpinlabStatus {
    guard(|| {
        non_null(toml, "toml")?;
        non_null(out, "out")?;
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (SpinlabStatus::InvalidArgument, e.to_string()))?;
        let m = lib(ModelSpec::from_toml_str(text))?;
        *out = Box::into_raw(Box::new(SpinlabModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from a `spinlab_model_*` constructor and not be used
/// afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn spinlab_model_free(model: *mut SpinlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of species of a model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinlab_model_species(model: *const SpinlabModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.species())
}

/// Disorder-averaged `(1/N) log(2^{-N} Σ e^{βH})` with its standard error.
///
/// # Safety
/// `model` must be a live handle; `mean` and `std_error` writable.
#[no_mangle]
pub unsafe extern "C" fn spinlab_quenched_free_energy(
    model: *const SpinlabModel,
    n: usize,
    beta: f64,
    samples: usize,
    seed: u64,
    mean: *mut f64,
    std_error: *mut f64,
) -> SpinlabStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(mean, "mean")?;
        non_null(std_error, "std_error")?;
        let est = lib(quenched_free_energy(&(*model).0, n, beta, samples, seed))?;
        *mean = est.mean;
        *std_error = est.std_error;
        Ok(())
    })
}

/// Disorder-averaged enriched free energy at `(t, h)`; `h` holds one field
/// per species.
///
/// # Safety
/// `h` must point to `h_len` readable values; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn spinlab_enriched_free_energy(
    model: *const SpinlabModel,
    n: usize,
    t: f64,
    h: *const f64,
    h_len: usize,
    samples: usize,
    seed: u64,
    mean: *mut f64,
    std_error: *mut f64,
) -> SpinlabStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(mean, "mean")?;
        non_null(std_error, "std_error")?;
        let h = slice(h, h_len, "h")?;
        let est = lib(enriched_free_energy(&(*model).0, n, t, h, samples, seed))?;
        *mean = est.mean;
        *std_error = est.std_error;
        Ok(())
    })
}

/// # Safety
/// `atoms` and `weights` must each hold `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spinlab_measure_new(
    atoms: *const f64,
    weights: *const f64,
    len: usize,
    out: *mut *mut SpinlabMeasure,
) -> SpinlabStatus {
    guard(|| {
        non_null(out, "out")?;
        let a = slice(atoms, len, "atoms")?.to_vec();
        let w = slice(weights, len, "weights")?.to_vec();
        let m = lib(DiscreteMeasure::new(a, w))?;
        *out = Box::into_raw(Box::new(SpinlabMeasure(m)));
        Ok(())
    })
}

/// # Safety
/// `measure` must come from [`spinlab_measure_new`] and not be used
/// afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn spinlab_measure_free(measure: *mut SpinlabMeasure) {
    if !measure.is_null() {
        drop(Box::from_raw(measure));
    }
}

/// Parisi functional of `measure` at inverse temperature `beta`.
///
/// # Safety
/// `measure` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spinlab_parisi_functional(measure: *const SpinlabMeasure, beta: f64, out: *mut f64) -> SpinlabStatus {
    guard(|| {
        non_null(measure, "measure")?;
        non_null(out, "out")?;
        *out = lib(parisi_functional(&(*measure).0, beta))?;
        Ok(())
    })
}

/// Minimum of the Parisi functional over `k`-atomic measures.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spinlab_optimize_parisi(beta: f64, k: usize, seed: u64, out: *mut f64) -> SpinlabStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lib(optimize_parisi(beta, k, seed, &ParisiOptions::default()))?.value;
        Ok(())
    })
}

/// `h - E log cosh(√(2h) Z)`; NaN for negative `h`.
#[no_mangle]
pub extern "C" fn spinlab_psi1_scalar(h: f64) -> f64 {
    if h >= 0.0 {
        psi1_scalar(h)
    } else {
        f64::NAN
    }
}

/// `ψ₁` of the step path with `steps` values on the mesh
/// `0 = mesh[0] < … < mesh[steps] = 1`.
///
/// # Safety
/// `mesh` must hold `steps + 1` values, `values` `steps` values; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn spinlab_psi1_path(mesh: *const f64, values: *const f64, steps: usize, out: *mut f64) -> SpinlabStatus {
    guard(|| {
        non_null(out, "out")?;
        let m = slice(mesh, steps + 1, "mesh")?.to_vec();
        let v = slice(values, steps, "values")?.to_vec();
        let q = lib(StepPath::new(m, v))?;
        *out = lib(psi1_path(&q))?;
        Ok(())
    })
}

/// Hopf-Lax value at `(t, q = 0)` for a single-species model.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spinlab_hopf_lax_origin(
    model: *const SpinlabModel,
    t: f64,
    restarts: usize,
    seed: u64,
    out: *mut f64,
) -> SpinlabStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let opts = HopfLaxOptions {
            restarts,
            seed,
            ..Default::default()
        };
        let q = lib(StepPath::constant(0.0))?;
        *out = lib(hopf_lax(&(*model).0, t, &q, &opts))?.value;
        Ok(())
    })
}
