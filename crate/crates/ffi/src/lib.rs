//! C ABI for the `quadmap` library.
//!
//! Objects cross the boundary as opaque handles created by a `qm_*_new` or
//! `qm_*_decode` function and released by the matching `qm_*_free`. Every
//! fallible function returns a [`QmStatus`]; on failure a message describing
//! the error is kept per thread and read with [`qm_last_error_message`].
//! Strings are returned by copying into a caller buffer: the call reports the
//! required size (including the terminating NUL) and fails with
//! [`QmStatus::BufferTooSmall`] when the buffer cannot hold it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use quadmap::boltzmann::{Boltzmann, BoltzmannParams, UniformSampler};
use quadmap::census::shared_census;
use quadmap::decorated::SpinMeasure;
use quadmap::error::Error;
use quadmap::map::MapWithHoles;
use quadmap::metric::{bridge_mass, MetricChain, MetricParams, SkeletonClass};
use quadmap::peeling::{decode, encode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QmStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument is outside its valid range.
    InvalidArgument = 2,
    /// A codec string or other text input is malformed.
    Parse = 3,
    /// The caller buffer is too small; the required size was reported.
    BufferTooSmall = 4,
    /// A truncation or tolerance could not be met.
    Tolerance = 5,
    /// Any other library error.
    Failed = 6,
    /// The library panicked; this is a bug.
    Panic = 7,
}

/// Spin measure selector for metric chains.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QmSpinMeasure {
    /// Spins in {-1, +1} with equal weight.
    Ising = 0,
    /// Real spins.
    Gaussian = 1,
}

/// A rooted map with holes.
pub struct QmMap(MapWithHoles);

/// A seeded sampler of the truncated Boltzmann law at a fixed semi-perimeter.
pub struct QmSampler {
    law: Boltzmann,
    uniform: UniformSampler,
    ell: usize,
    rng: ChaCha8Rng,
}

/// A seeded Markov chain on metric maps.
pub struct QmMetricChain {
    chain: MetricChain,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> QmStatus {
    match e {
        Error::Parse(_) => QmStatus::Parse,
        Error::TailToleranceNotMet { .. } | Error::CapUnsatisfiable(_) | Error::BudgetExceeded { .. } => QmStatus::Tolerance,
        Error::InvalidArgument(_) | Error::MissingSpin(_) | Error::NonpositiveLength(_) | Error::OutOfBounds(_) | Error::CensusMissing(_) | Error::BadGrid(_) => {
            QmStatus::InvalidArgument
        }
        _ => QmStatus::Failed,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (QmStatus, String)>) -> QmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QmStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            QmStatus::Panic
        }
    }
}

fn lib<T>(r: quadmap::error::Result<T>) -> Result<T, (QmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (QmStatus, String) {
    (QmStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: &str) -> (QmStatus, String) {
    (QmStatus::InvalidArgument, msg.into())
}

/// Copies `s` with a terminating NUL into `buf` of size `len`, storing the
/// required size in `needed` when it is not null.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` must be null or valid.
unsafe fn write_string(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), (QmStatus, String)> {
    let n = s.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || len < n {
        return Err((QmStatus::BufferTooSmall, format!("buffer of {len} bytes cannot hold {n}")));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (QmStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|_| (QmStatus::Parse, "string is not UTF-8".into()))
}

/// Version string of the library, NUL-terminated and statically allocated.
#[no_mangle]
pub extern "C" fn qm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the message of the last failed call on this thread into `buf`.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn qm_last_error_message(buf: *mut c_char, len: usize, needed: *mut usize) -> QmStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match write_string(&msg, buf, len, needed) {
        Ok(()) => QmStatus::Ok,
        Err((s, _)) => s,
    }
}

/// Number of rooted quadrangulations with semi-perimeter `ell` and `f` internal
/// faces, as a decimal string.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn qm_census_count(ell: usize, f: usize, buf: *mut c_char, len: usize, needed: *mut usize) -> QmStatus {
    guard(|| {
        if ell == 0 {
            return Err(invalid("semi-perimeter must be positive"));
        }
        let t = shared_census(ell, f);
        let c = lib(t.count(ell, f))?.to_string();
        write_string(&c, buf, len, needed)
    })
}

/// Parses a codec string into a new map handle stored in `out`.
///
/// # Safety
/// `codec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qm_map_decode(codec: *const c_char, out: *mut *mut QmMap) -> QmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let m = lib(decode(read_str(codec)?))?;
        *out = Box::into_raw(Box::new(QmMap(m)));
        Ok(())
    })
}

/// Releases a map handle. Null is ignored.
///
/// # Safety
/// `map` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qm_map_free(map: *mut QmMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Writes the codec string of a hole-free map into `buf`.
///
/// # Safety
/// `map` must be a live handle; `buf` null or valid for `len` bytes; `needed`
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn qm_map_encode(map: *const QmMap, buf: *mut c_char, len: usize, needed: *mut usize) -> QmStatus {
    guard(|| {
        let m = map.as_ref().ok_or_else(null)?;
        let s = lib(encode(&m.0))?;
        write_string(&s, buf, len, needed)
    })
}

/// Semi-perimeter, internal face count and hole count of a map. Any output
/// pointer may be null.
///
/// # Safety
/// `map` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn qm_map_info(map: *const QmMap, semi_perimeter: *mut usize, faces: *mut usize, holes: *mut usize) -> QmStatus {
    guard(|| {
        let m = &map.as_ref().ok_or_else(null)?.0;
        if !semi_perimeter.is_null() {
            *semi_perimeter = m.semi_perimeter();
        }
        if !faces.is_null() {
            *faces = m.internal_face_count();
        }
        if !holes.is_null() {
            *holes = m.num_holes();
        }
        Ok(())
    })
}

/// Probability of a hole-free map under the truncated Boltzmann law with
/// weight `q` per face.
///
/// # Safety
/// `map` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qm_boltzmann_probability(map: *const QmMap, q: f64, out: *mut f64) -> QmStatus {
    guard(|| {
        let m = &map.as_ref().ok_or_else(null)?.0;
        let out = out.as_mut().ok_or_else(null)?;
        *out = lib(quadmap::boltzmann::prob_exact(m, &BoltzmannParams::with_q(q)))?;
        Ok(())
    })
}

/// Creates a seeded Boltzmann sampler for semi-perimeter `ell`, weight `q`
/// and largest face count `face_cap`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qm_sampler_new(ell: usize, q: f64, face_cap: usize, seed: u64, out: *mut *mut QmSampler) -> QmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        if ell == 0 {
            return Err(invalid("semi-perimeter must be positive"));
        }
        let params = BoltzmannParams { q, face_cap, ..BoltzmannParams::default() };
        let law = lib(Boltzmann::new(params, ell))?;
        let s = QmSampler { law, uniform: UniformSampler::new(ell, face_cap), ell, rng: ChaCha8Rng::seed_from_u64(seed) };
        *out = Box::into_raw(Box::new(s));
        Ok(())
    })
}

/// Draws the next map from a sampler into a new map handle.
///
/// # Safety
/// `sampler` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qm_sampler_next(sampler: *mut QmSampler, out: *mut *mut QmMap) -> QmStatus {
    guard(|| {
        let s = sampler.as_mut().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let m = lib(s.law.sample(s.ell, &s.uniform, &mut s.rng))?;
        *out = Box::into_raw(Box::new(QmMap(m)));
        Ok(())
    })
}

/// Releases a sampler. Null is ignored.
///
/// # Safety
/// `sampler` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qm_sampler_free(sampler: *mut QmSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Total mass of the Brownian bridge from `u` to `v` over time `w`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qm_bridge_mass(u: f64, v: f64, w: f64, out: *mut f64) -> QmStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        *out = lib(bridge_mass(u, v, w))?;
        Ok(())
    })
}

/// Creates a metric chain with semi-perimeter `ell`, boundary values
/// `boundary[0..2*ell]`, vertex weight `q`, length rate `lambda` and at most
/// `cap` internal vertices. The burn-in runs before this call returns.
///
/// # Safety
/// `boundary` must be valid for `boundary_len` reads and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qm_metric_chain_new(
    ell: usize,
    boundary: *const f64,
    boundary_len: usize,
    q: f64,
    lambda: f64,
    cap: usize,
    mu: QmSpinMeasure,
    seed: u64,
    out: *mut *mut QmMetricChain,
) -> QmStatus {
    guard(|| {
        if out.is_null() || boundary.is_null() {
            return Err(null());
        }
        let b = std::slice::from_raw_parts(boundary, boundary_len);
        let mu = match mu {
            QmSpinMeasure::Ising => SpinMeasure::Ising,
            QmSpinMeasure::Gaussian => SpinMeasure::Gaussian,
        };
        let params = MetricParams { q, lambda, mu, skeleton_cap: cap, ..MetricParams::default() };
        let class = Arc::new(lib(SkeletonClass::new(ell, b, &params))?);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = lib(MetricChain::new(class, &params, &mut rng))?;
        *out = Box::into_raw(Box::new(QmMetricChain { chain, rng }));
        Ok(())
    })
}

/// Advances a metric chain by one recorded sample and reports the root edge
/// length and the value at the far end of the root edge. Outputs may be null.
///
/// # Safety
/// `chain` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn qm_metric_chain_advance(chain: *mut QmMetricChain, root_length: *mut f64, far_value: *mut f64) -> QmStatus {
    guard(|| {
        let c = chain.as_mut().ok_or_else(null)?;
        c.chain.advance(&mut c.rng);
        if !root_length.is_null() {
            *root_length = c.chain.root_length();
        }
        if !far_value.is_null() {
            *far_value = c.chain.root_far_value();
        }
        Ok(())
    })
}

/// Releases a metric chain. Null is ignored.
///
/// # Safety
/// `chain` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qm_metric_chain_free(chain: *mut QmMetricChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}
