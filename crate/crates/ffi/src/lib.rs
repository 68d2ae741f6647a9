//! C interface to the spectral-flow library.
//!
//! Paths are opaque handles created from the same JSON specifications the
//! CLI accepts (or from preset names). Every function returns an [`SfStatus`]
//! code; on failure a description is available from
//! [`sf_last_error_message`]. Matrices cross the boundary as row-major
//! interleaved `[re, im]` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use specflow::error::Error;
use specflow::flow::{self, VerifyOptions};
use specflow::input::{PathKind, PathSpec, PresetSpec};
use specflow::invariant;
use specflow::linalg::{C64, CMat};
use specflow::path::OperatorPath;
use specflow::spectral;

/// Status code returned by every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    InvalidInput = 2,
    NumericalFailure = 3,
    IdentityViolation = 4,
    NullPointer = 5,
    InternalPanic = 6,
}

/// Opaque operator path handle.
pub struct SfPath {
    inner: OperatorPath,
}

/// Kernel/cokernel data of the discretised operator.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SfIndexReport {
    pub ker: i64,
    pub coker: i64,
    pub index: i64,
    pub gap_ratio: f64,
    pub reliable: u8,
}

/// Outcome of the full identity suite on one path.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SfIdentityReport {
    pub sf: i64,
    pub index: i64,
    pub ker: i64,
    pub coker: i64,
    pub pair_index: i64,
    pub relative_dimension: i64,
    pub identities_hold: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(text: String) {
    let c = CString::new(text).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SfStatus {
    match e.exit_code() {
        2 => SfStatus::InvalidInput,
        4 => SfStatus::IdentityViolation,
        _ => SfStatus::NumericalFailure,
    }
}

fn guarded(body: impl FnOnce() -> Result<(), (SfStatus, String)>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err((status, text))) => {
            set_error(text);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SfStatus::InternalPanic
        }
    }
}

fn err_of(e: Error) -> (SfStatus, String) {
    (status_of(&e), e.to_string())
}

/// Last error message of this thread, or NULL when no error occurred yet.
/// The caller owns the returned string and frees it with [`sf_string_free`].
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(c) => c.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a function of this library and not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn sf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Build a path from a JSON specification (the CLI schema).
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn sf_path_from_json(
    json: *const c_char,
    out: *mut *mut SfPath,
) -> SfStatus {
    guarded(|| {
        if json.is_null() || out.is_null() {
            return Err((SfStatus::NullPointer, "null pointer argument".into()));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (SfStatus::InvalidInput, "json is not valid UTF-8".into()))?;
        let path = PathSpec::from_json(text)
            .and_then(|s| s.build())
            .map_err(err_of)?;
        *out = Box::into_raw(Box::new(SfPath { inner: path }));
        Ok(())
    })
}

/// Build a named preset path ("scalar-tanh", "scalar-tanh-reversed",
/// "tanh-diag", "rotation").
///
/// # Safety
/// `name` must point to a NUL-terminated string and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn sf_path_preset(
    name: *const c_char,
    out: *mut *mut SfPath,
) -> SfStatus {
    guarded(|| {
        if name.is_null() || out.is_null() {
            return Err((SfStatus::NullPointer, "null pointer argument".into()));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| (SfStatus::InvalidInput, "name is not valid UTF-8".into()))?;
        let dim = match name {
            "scalar-tanh" | "scalar-tanh-reversed" => 1,
            _ => 2,
        };
        let spec = PathSpec {
            dim,
            kind: PathKind::Preset(PresetSpec {
                name: name.to_string(),
                seed: None,
                angle: None,
                count: None,
                subspace_x: None,
                subspace_y: None,
            }),
        };
        let path = spec.build().map_err(err_of)?;
        *out = Box::into_raw(Box::new(SfPath { inner: path }));
        Ok(())
    })
}

/// Release a path handle.
///
/// # Safety
/// `path` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sf_path_free(path: *mut SfPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Ambient dimension of the path, or 0 for a null handle.
///
/// # Safety
/// `path` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn sf_path_dim(path: *const SfPath) -> usize {
    if path.is_null() {
        0
    } else {
        (*path).inner.dim()
    }
}

/// Spectral flow of an asymptotically hyperbolic path, both methods.
///
/// # Safety
/// `path` must be a live handle; output pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn sf_spectral_flow(
    path: *const SfPath,
    out_sf: *mut i64,
    out_methods_agree: *mut u8,
) -> SfStatus {
    guarded(|| {
        if path.is_null() || out_sf.is_null() {
            return Err((SfStatus::NullPointer, "null pointer argument".into()));
        }
        let report = flow::spectral_flow_asymptotic(&(*path).inner).map_err(err_of)?;
        *out_sf = report.sf;
        if !out_methods_agree.is_null() {
            *out_methods_agree = report.methods_agree as u8;
        }
        Ok(())
    })
}

/// Kernel, cokernel and index of the discretised operator; pass
/// `rank_tol <= 0` for the default.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_numeric_index(
    path: *const SfPath,
    rank_tol: f64,
    out: *mut SfIndexReport,
) -> SfStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return Err((SfStatus::NullPointer, "null pointer argument".into()));
        }
        let p = &(*path).inner;
        let tol = if rank_tol > 0.0 { rank_tol } else { specflow::diffop::GRID_RANK_TOL };
        let window = specflow::diffop::choose_window(p, specflow::diffop::DEFAULT_TAIL_TOL)
            .map_err(err_of)?;
        let sup = p.sup_norm();
        let step = (0.1_f64).min(1.0 / (4.0 * sup));
        let op = specflow::diffop::assemble(p, window, step).map_err(err_of)?;
        let r = specflow::diffop::numeric_index_raw(&op, tol).map_err(err_of)?;
        *out = SfIndexReport {
            ker: r.ker_dim as i64,
            coker: r.coker_dim as i64,
            index: r.index,
            gap_ratio: r.gap_ratio,
            reliable: r.reliable as u8,
        };
        Ok(())
    })
}

/// The full identity suite `sf = -ind F_A = -dim(E^-(+inf), E^-(-inf))`,
/// `ind F_A = ind(W^s, W^u)`. Returns `SF_STATUS_IDENTITY_VIOLATION` when
/// the integers disagree (the report is still filled in).
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_verify_identity(
    path: *const SfPath,
    out: *mut SfIdentityReport,
) -> SfStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return Err((SfStatus::NullPointer, "null pointer argument".into()));
        }
        let report =
            flow::verify_identity(&(*path).inner, &VerifyOptions::default()).map_err(err_of)?;
        *out = SfIdentityReport {
            sf: report.sf.sf,
            index: report.index.index,
            ker: report.index.ker_dim as i64,
            coker: report.index.coker_dim as i64,
            pair_index: report.pair.index,
            relative_dimension: report.relative_dimension,
            identities_hold: report.identities_hold as u8,
        };
        if report.identities_hold {
            Ok(())
        } else {
            Err((SfStatus::IdentityViolation, "identity suite failed".into()))
        }
    })
}

/// Orthonormal basis of the stable space. `basis_out` must hold
/// `2 * dim * dim` doubles; the basis occupies the first `2 * dim * k`
/// entries row-major interleaved, with `k` written to `out_dim`.
///
/// # Safety
/// `path` must be a live handle; `basis_out` must point to at least
/// `2 dim^2` writable doubles and `out_dim` to a writable slot.
#[no_mangle]
pub unsafe extern "C" fn sf_stable_space(
    path: *const SfPath,
    horizon: f64,
    tol: f64,
    basis_out: *mut f64,
    out_dim: *mut usize,
) -> SfStatus {
    guarded(|| {
        if path.is_null() || basis_out.is_null() || out_dim.is_null() {
            return Err((SfStatus::NullPointer, "null pointer argument".into()));
        }
        let p = &(*path).inner;
        let horizon = if horizon > 0.0 { horizon } else { 30.0 };
        let tol = if tol > 0.0 { tol } else { 1e-7 };
        let stable = invariant::stable_space_limit(p, horizon, tol).map_err(err_of)?;
        let n = p.dim();
        let k = stable.dim();
        let basis = stable.basis();
        let slice = std::slice::from_raw_parts_mut(basis_out, 2 * n * n);
        for i in 0..n {
            for j in 0..k {
                slice[2 * (i * k + j)] = basis[(i, j)].re;
                slice[2 * (i * k + j) + 1] = basis[(i, j)].im;
            }
        }
        *out_dim = k;
        Ok(())
    })
}

/// Positive spectral projector of a hyperbolic matrix with row-major
/// interleaved input and output of `2 * dim * dim` doubles each.
///
/// # Safety
/// `a` and `out` must point to `2 dim^2` readable / writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_spectral_projector_plus(
    dim: usize,
    a: *const f64,
    out: *mut f64,
) -> SfStatus {
    guarded(|| {
        if a.is_null() || out.is_null() {
            return Err((SfStatus::NullPointer, "null pointer argument".into()));
        }
        if dim == 0 {
            return Err((SfStatus::InvalidInput, "dimension must be positive".into()));
        }
        let data = std::slice::from_raw_parts(a, 2 * dim * dim);
        let matrix = CMat::from_fn(dim, dim, |i, j| {
            C64::new(data[2 * (i * dim + j)], data[2 * (i * dim + j) + 1])
        });
        let split = spectral::spectral_projectors(&matrix).map_err(err_of)?;
        let p = split.p_plus.matrix();
        let slice = std::slice::from_raw_parts_mut(out, 2 * dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                slice[2 * (i * dim + j)] = p[(i, j)].re;
                slice[2 * (i * dim + j) + 1] = p[(i, j)].im;
            }
        }
        Ok(())
    })
}
