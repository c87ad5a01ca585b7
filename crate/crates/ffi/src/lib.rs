//! C ABI over grasskit.
//!
//! Every entry point returns a [`GkStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and read back with
//! [`gk_last_error_message`]. Handles are opaque and released with their
//! matching `_free` function; strings returned by the library are released
//! with [`gk_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use grasskit::engine::family::admissible_p_max;
use grasskit::engine::{generate_sharp_example, lp_counting_norm, FamilyParams, PlaneFamily};
use grasskit::experiment::{self, ExperimentConfig};
use grasskit::grassmann::{distance, geodesic, principal_angles, project_to_sub_grassmannian};
use grasskit::{GkError, Subspace};
use libc::{c_char, size_t};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    Ok = 0,
    InvalidInput = 1,
    RankDeficient = 2,
    OutOfChart = 3,
    InvalidScale = 4,
    InvalidParams = 5,
    InvalidExponent = 6,
    SpacingViolation = 7,
    ResourceCap = 8,
    Io = 9,
    Json = 10,
    NullPointer = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&GkError> for GkStatus {
    fn from(e: &GkError) -> Self {
        match e {
            GkError::InvalidInput(_) => GkStatus::InvalidInput,
            GkError::RankDeficient { .. } => GkStatus::RankDeficient,
            GkError::OutOfChart(_) => GkStatus::OutOfChart,
            GkError::InvalidScale(_) => GkStatus::InvalidScale,
            GkError::InvalidParams(_) => GkStatus::InvalidParams,
            GkError::InvalidExponent { .. } => GkStatus::InvalidExponent,
            GkError::SpacingViolation { .. } => GkStatus::SpacingViolation,
            GkError::ResourceCap(_) => GkStatus::ResourceCap,
            GkError::Io(_) => GkStatus::Io,
            GkError::Json(_) => GkStatus::Json,
        }
    }
}

/// A linear subspace with an orthonormal basis.
pub struct GkSubspace(Subspace);

/// A family of chart m-planes at one scale.
pub struct GkFamily(PlaneFamily);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(GkStatus, String);

impl From<GkError> for Failure {
    fn from(e: GkError) -> Self {
        Failure(GkStatus::from(&e), e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(GkStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> FfiResult) -> GkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GkStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Failure(GkStatus::InvalidInput, format!("{what} is not UTF-8: {e}")))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(GkStatus::InvalidInput, "string holds a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn gk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Span of `count` vectors of length `ambient`, stored one after another.
///
/// # Safety
/// `data` must point to `ambient * count` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_subspace_new(data: *const f64, ambient: size_t, count: size_t, out: *mut *mut GkSubspace) -> GkStatus {
    guard(|| {
        if data.is_null() && ambient * count > 0 {
            return Err(null("data"));
        }
        let flat: &[f64] = if ambient * count == 0 { &[] } else { std::slice::from_raw_parts(data, ambient * count) };
        let s = if count == 0 {
            Subspace::zero(ambient)
        } else {
            let vectors: Vec<Vec<f64>> = flat.chunks(ambient).map(<[f64]>::to_vec).collect();
            Subspace::from_vectors(&vectors)?
        };
        write(out, Box::into_raw(Box::new(GkSubspace(s))), "out")
    })
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gk_subspace_free(s: *mut GkSubspace) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_subspace_dim(s: *const GkSubspace, dim: *mut size_t, ambient: *mut size_t) -> GkStatus {
    guard(|| {
        let s = &as_ref(s, "subspace")?.0;
        write(dim, s.dim(), "dim")?;
        write(ambient, s.ambient_dim(), "ambient")
    })
}

/// Copies the orthonormal basis, vector after vector, into `out`, which
/// must hold `dim * ambient` doubles.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_subspace_basis(s: *const GkSubspace, out: *mut f64, len: size_t) -> GkStatus {
    guard(|| {
        let s = &as_ref(s, "subspace")?.0;
        let flat: Vec<f64> = s.basis_vectors().concat();
        copy_out(&flat, out, len)
    })
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: size_t) -> FfiResult {
    if values.len() > len {
        return Err(Failure(GkStatus::BufferTooSmall, format!("need {} doubles, buffer holds {len}", values.len())));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_distance(a: *const GkSubspace, b: *const GkSubspace, out: *mut f64) -> GkStatus {
    guard(|| {
        let d = distance(&as_ref(a, "a")?.0, &as_ref(b, "b")?.0)?;
        write(out, d, "out")
    })
}

/// Principal angles in ascending order; `out` must hold `dim` doubles.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_principal_angles(a: *const GkSubspace, b: *const GkSubspace, out: *mut f64, len: size_t) -> GkStatus {
    guard(|| {
        let pa = principal_angles(&as_ref(a, "a")?.0, &as_ref(b, "b")?.0)?;
        copy_out(&pa.angles, out, len)
    })
}

/// Point at parameter `t ∈ [0, 1]` of the geodesic from `a` to `b`.
/// `unique` may be null.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_geodesic(
    a: *const GkSubspace,
    b: *const GkSubspace,
    t: f64,
    out: *mut *mut GkSubspace,
    unique: *mut bool,
) -> GkStatus {
    guard(|| {
        let g = geodesic(&as_ref(a, "a")?.0, &as_ref(b, "b")?.0, t)?;
        if !unique.is_null() {
            unique.write(g.unique);
        }
        write(out, Box::into_raw(Box::new(GkSubspace(g.subspace))), "out")
    })
}

/// Nearest point of G(dim v, pi) to `v`. `dist` and `unique` may be null.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_project(
    v: *const GkSubspace,
    pi: *const GkSubspace,
    out: *mut *mut GkSubspace,
    dist: *mut f64,
    unique: *mut bool,
) -> GkStatus {
    guard(|| {
        let p = project_to_sub_grassmannian(&as_ref(v, "v")?.0, &as_ref(pi, "pi")?.0)?;
        if !dist.is_null() {
            dist.write(p.distance);
        }
        if !unique.is_null() {
            unique.write(p.unique);
        }
        write(out, Box::into_raw(Box::new(GkSubspace(p.subspace))), "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_admissible_p_max(l: size_t, m: size_t, d: size_t, beta: f64, out: *mut f64) -> GkStatus {
    guard(|| write(out, admissible_p_max(l, m, d, beta)?, "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_family_generate(
    l: size_t,
    m: size_t,
    d: size_t,
    n: size_t,
    beta: f64,
    delta: f64,
    out: *mut *mut GkFamily,
) -> GkStatus {
    guard(|| {
        let params = FamilyParams::new(l, m, d, n, beta)?;
        let fam = generate_sharp_example(params, delta)?;
        write(out, Box::into_raw(Box::new(GkFamily(fam))), "out")
    })
}

/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_family_from_json(json: *const c_char, out: *mut *mut GkFamily) -> GkStatus {
    guard(|| {
        let fam = PlaneFamily::from_json(read_str(json, "json")?)?;
        write(out, Box::into_raw(Box::new(GkFamily(fam))), "out")
    })
}

/// Writes a newly allocated JSON string; free it with [`gk_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_family_to_json(f: *const GkFamily, out: *mut *mut c_char) -> GkStatus {
    guard(|| {
        let s = to_c_string(as_ref(f, "family")?.0.to_json())?;
        write(out, s, "out")
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_family_len(f: *const GkFamily, out: *mut size_t) -> GkStatus {
    guard(|| write(out, as_ref(f, "family")?.0.len(), "out"))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_family_lp_norm(f: *const GkFamily, p: f64, grid_delta: f64, out: *mut f64) -> GkStatus {
    guard(|| write(out, lp_counting_norm(&as_ref(f, "family")?.0, p, grid_delta)?.value, "out"))
}

/// # Safety
/// `f` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gk_family_free(f: *mut GkFamily) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Runs an experiment from a JSON config and writes the JSON report.
/// Output paths in the config are honoured.
///
/// # Safety
/// `config` must be a nul-terminated string; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_run_config_json(config: *const c_char, report: *mut *mut c_char) -> GkStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(read_str(config, "config")?)?;
        let r = experiment::run(&cfg)?;
        write(report, to_c_string(r.to_json())?, "report")
    })
}
