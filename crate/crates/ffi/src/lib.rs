//! C interface to `cartan_kak`.
//!
//! Objects cross the boundary as opaque handles released with their `*_free`
//! function. Every fallible call returns an `i32` status, `CK_OK` on success
//! or a negative code, and leaves a message readable through
//! [`ck_last_error_message`] on the calling thread. Strings returned through
//! out-parameters are owned by the caller and released with [`ck_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cartan_kak::cartan::default_sequence;
use cartan_kak::json::{factorization_to_json, qa_from_json, qa_to_json};
use cartan_kak::kak::{recursive_decompose, Factorization, Locality};
use cartan_kak::linalg::CMat;
use cartan_kak::partition::{intrinsic_quotient_algebra, verify_closure, QuotientAlgebra};
use cartan_kak::Error;
use num_complex::Complex64;

pub const CK_OK: i32 = 0;
pub const CK_ERR_NULL: i32 = -1;
pub const CK_ERR_INVALID_INPUT: i32 = -2;
pub const CK_ERR_DECOMPOSITION: i32 = -3;
pub const CK_ERR_VERIFICATION: i32 = -4;
pub const CK_ERR_PANIC: i32 = -5;

pub const CK_LOCAL: i32 = 0;
pub const CK_NONLOCAL: i32 = 1;

/// Opaque quotient algebra.
pub struct CkQuotientAlgebra(QuotientAlgebra);

/// Opaque factorization of a unitary.
pub struct CkFactorization(Factorization);

/// One factor `exp(i angle g)`; the generator label is fetched separately.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CkFactor {
    pub angle: f64,
    /// `CK_LOCAL` or `CK_NONLOCAL`.
    pub locality: i32,
    /// Tree level, 1 for the outermost center.
    pub level: u32,
    /// Position inside its abelian block.
    pub ordinal: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error message contained NUL").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(i32, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Decomposition { .. } | Error::CannotExtend(_) => CK_ERR_DECOMPOSITION,
            _ => CK_ERR_INVALID_INPUT,
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CK_ERR_NULL, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CK_OK,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CK_ERR_PANIC
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s).map(CString::into_raw).map_err(|e| Fail(CK_ERR_INVALID_INPUT, e.to_string()))
}

/// Message of the last failed call on this thread, or null if it succeeded.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ck_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ck_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Quotient algebra generated by the diagonal center of su(dim).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_quotient_algebra_intrinsic(dim: usize, out: *mut *mut CkQuotientAlgebra) -> i32 {
    guard(|| {
        let qa = intrinsic_quotient_algebra(dim)?;
        write(out, Box::into_raw(Box::new(CkQuotientAlgebra(qa))), "out")
    })
}

/// Parses a quotient algebra from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_quotient_algebra_from_json(json: *const c_char, out: *mut *mut CkQuotientAlgebra) -> i32 {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let s = CStr::from_ptr(json).to_str().map_err(|e| Fail(CK_ERR_INVALID_INPUT, e.to_string()))?;
        let qa = qa_from_json(s)?;
        write(out, Box::into_raw(Box::new(CkQuotientAlgebra(qa))), "out")
    })
}

/// Number of conjugate pairs.
///
/// # Safety
/// `qa` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_quotient_algebra_pair_count(qa: *const CkQuotientAlgebra, out: *mut usize) -> i32 {
    guard(|| write(out, deref(qa, "qa")?.0.pairs.len(), "out"))
}

/// # Safety
/// `qa` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_quotient_algebra_to_json(qa: *const CkQuotientAlgebra, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let s = qa_to_json(&deref(qa, "qa")?.0);
        write(out, into_c_string(s)?, "out")
    })
}

/// Checks every bracket between generators. Returns `CK_ERR_VERIFICATION`
/// when some bracket leaves its expected space; the largest residual is
/// written either way if `max_residual` is non-null.
///
/// # Safety
/// `qa` must be a live handle; `max_residual` may be null.
#[no_mangle]
pub unsafe extern "C" fn ck_quotient_algebra_verify(qa: *const CkQuotientAlgebra, max_residual: *mut f64) -> i32 {
    guard(|| {
        let rep = verify_closure(&deref(qa, "qa")?.0);
        if !max_residual.is_null() {
            max_residual.write(rep.max_residual);
        }
        match rep.violations.first() {
            None => Ok(()),
            Some(v) => Err(Fail(CK_ERR_VERIFICATION, format!("{} closure violations, first: {v:?}", rep.violations.len()))),
        }
    })
}

/// # Safety
/// `qa` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ck_quotient_algebra_free(qa: *mut CkQuotientAlgebra) {
    if !qa.is_null() {
        drop(Box::from_raw(qa));
    }
}

/// Factorizes a `dim`×`dim` unitary given as row-major real and imaginary
/// parts, using the default decomposition sequence.
///
/// # Safety
/// `re` and `im` must each point to `dim*dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ck_decompose(
    dim: usize,
    re: *const f64,
    im: *const f64,
    seed: u64,
    out: *mut *mut CkFactorization,
) -> i32 {
    guard(|| {
        if re.is_null() || im.is_null() {
            return Err(null("matrix"));
        }
        if dim < 2 {
            return Err(Fail(CK_ERR_INVALID_INPUT, format!("dimension {dim} must be at least 2")));
        }
        let len = dim.checked_mul(dim).ok_or_else(|| Fail(CK_ERR_INVALID_INPUT, "dimension overflow".into()))?;
        let (re, im) = (std::slice::from_raw_parts(re, len), std::slice::from_raw_parts(im, len));
        let u = CMat::from_fn(dim, dim, |i, j| Complex64::new(re[i * dim + j], im[i * dim + j]));
        let seq = default_sequence(dim)?;
        let f = recursive_decompose(&u, &seq, seed)?;
        write(out, Box::into_raw(Box::new(CkFactorization(f))), "out")
    })
}

/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_factorization_len(f: *const CkFactorization, out: *mut usize) -> i32 {
    guard(|| write(out, deref(f, "factorization")?.0.factors.len(), "out"))
}

/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_factorization_factor(f: *const CkFactorization, index: usize, out: *mut CkFactor) -> i32 {
    guard(|| {
        let fs = &deref(f, "factorization")?.0.factors;
        let g = fs
            .get(index)
            .ok_or_else(|| Fail(CK_ERR_INVALID_INPUT, format!("index {index} out of range for {} factors", fs.len())))?;
        let factor = CkFactor {
            angle: g.angle,
            locality: if g.locality == Locality::Local { CK_LOCAL } else { CK_NONLOCAL },
            level: g.level().unwrap_or(0) as u32,
            ordinal: g.ordinal as u32,
        };
        write(out, factor, "out")
    })
}

/// Generator label and tree index of one factor, as `label@index`.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_factorization_factor_label(
    f: *const CkFactorization,
    index: usize,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let fs = &deref(f, "factorization")?.0.factors;
        let g = fs
            .get(index)
            .ok_or_else(|| Fail(CK_ERR_INVALID_INPUT, format!("index {index} out of range for {} factors", fs.len())))?;
        write(out, into_c_string(format!("{}@{}", g.generator.label, g.tree_index))?, "out")
    })
}

/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_factorization_reconstruction_error(f: *const CkFactorization, out: *mut f64) -> i32 {
    guard(|| write(out, deref(f, "factorization")?.0.reconstruction_error, "out"))
}

/// # Safety
/// `f` must be a live handle; `re` and `im` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ck_factorization_global_phase(f: *const CkFactorization, re: *mut f64, im: *mut f64) -> i32 {
    guard(|| {
        let ph = deref(f, "factorization")?.0.global_phase;
        write(re, ph.re, "re")?;
        write(im, ph.im, "im")
    })
}

/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ck_factorization_to_json(f: *const CkFactorization, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let s = factorization_to_json(&deref(f, "factorization")?.0);
        write(out, into_c_string(s)?, "out")
    })
}

/// # Safety
/// `f` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ck_factorization_free(f: *mut CkFactorization) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
