//! C ABI over `grassmann-binary`.
//!
//! Models live behind an opaque [`GbModel`] handle. Every fallible call
//! returns a [`GbStatus`]; on failure a message is kept per thread and can be
//! copied out with [`gb_last_error_message`]. Indices are 0-based, matrices
//! are row-major `p * p` arrays of `double`, and binary vectors are arrays of
//! `uint8_t` holding 0 or 1.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use grassmann_binary::estimation::{fit_map, FitConfig};
use grassmann_binary::sampler::{seeded_rng, Sampler};
use grassmann_binary::{
    BinaryVector, Dataset, Error, GrassmannBinary, IndexSet, Matrix, ModelOptions, Observation, SigmaMatrix, Validity,
};

/// Opaque model handle. Release with [`gb_model_free`].
pub struct GbModel {
    inner: GrassmannBinary,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IndexOutOfRange = 3,
    Singular = 4,
    InvalidModel = 5,
    DimensionTooLarge = 6,
    ZeroEvidence = 7,
    NonConvergence = 8,
    BufferTooSmall = 9,
    Panic = 10,
    Internal = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GbValidity {
    Valid = 0,
    Invalid = 1,
    Unchecked = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> GbStatus {
    match err {
        Error::IndexOutOfRange { .. } | Error::ObservedIndex(_) => GbStatus::IndexOutOfRange,
        Error::SingularMatrix | Error::SingularBlock | Error::SingularSigma => GbStatus::Singular,
        Error::InvalidModel { .. }
        | Error::NegativeProbability { .. }
        | Error::MeanOutOfRange { .. }
        | Error::InvalidConditionalMean { .. }
        | Error::NonPositiveProbability { .. } => GbStatus::InvalidModel,
        Error::DimensionTooLarge { .. } => GbStatus::DimensionTooLarge,
        Error::ZeroEvidence { .. } => GbStatus::ZeroEvidence,
        Error::NonConvergence { .. } => GbStatus::NonConvergence,
        Error::Io(_) => GbStatus::Internal,
        _ => GbStatus::InvalidArgument,
    }
}

struct Fail(GbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null() -> Fail {
    Fail(GbStatus::NullPointer, "null pointer argument".into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> GbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GbStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            GbStatus::Panic
        }
    }
}

unsafe fn handle<'a>(m: *const GbModel) -> Result<&'a GrassmannBinary, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(null)
}

unsafe fn input<'a, T>(data: *const T, len: usize) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn output<'a, T>(data: *mut T, len: usize, needed: usize) -> Result<&'a mut [T], Fail> {
    if len < needed {
        return Err(Fail(
            GbStatus::BufferTooSmall,
            format!("buffer holds {len} values, {needed} needed"),
        ));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts_mut(data, needed))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

fn bits(values: &[u8]) -> Result<BinaryVector, Fail> {
    Ok(BinaryVector::from_bits(values)?)
}

fn options(strict: bool) -> ModelOptions {
    if strict {
        ModelOptions::strict()
    } else {
        ModelOptions::default()
    }
}

fn boxed(inner: GrassmannBinary) -> *mut GbModel {
    Box::into_raw(Box::new(GbModel { inner }))
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a model from a row-major `p * p` Σ matrix. With `strict` set an
/// invalid model is rejected with `GB_STATUS_INVALID_MODEL`; otherwise it is
/// returned and flagged (see [`gb_model_validity`]).
///
/// # Safety
/// `sigma` must point to `p * p` doubles and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn gb_model_from_sigma(
    sigma: *const f64,
    p: usize,
    strict: bool,
    out: *mut *mut GbModel,
) -> GbStatus {
    guard(|| {
        let data = input(sigma, p * p)?.to_vec();
        let m = Matrix::from_row_major(p, p, data)?;
        let inner = GrassmannBinary::from_sigma(SigmaMatrix::new(m)?, &options(strict))?;
        write(out, boxed(inner))
    })
}

/// Builds a model from a row-major `p * p` Λ = Σ⁻¹ matrix.
///
/// # Safety
/// As for [`gb_model_from_sigma`].
#[no_mangle]
pub unsafe extern "C" fn gb_model_from_lambda(
    lambda: *const f64,
    p: usize,
    strict: bool,
    out: *mut *mut GbModel,
) -> GbStatus {
    guard(|| {
        let data = input(lambda, p * p)?.to_vec();
        let m = Matrix::from_row_major(p, p, data)?;
        let inner = GrassmannBinary::from_lambda(m, &options(strict))?;
        write(out, boxed(inner))
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gb_model_free(model: *mut GbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of variables, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gb_model_dim(model: *const GbModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// Validity verdict. When invalid and `witness_mask` is non-null, receives a
/// bitmask of the zero positions of a state with negative probability.
///
/// # Safety
/// Pointers must be null or valid for writes; `model` must be live.
#[no_mangle]
pub unsafe extern "C" fn gb_model_validity(
    model: *const GbModel,
    out: *mut GbValidity,
    witness_mask: *mut u64,
) -> GbStatus {
    guard(|| {
        let (v, w) = match handle(model)?.validity() {
            Validity::Valid => (GbValidity::Valid, 0),
            Validity::Invalid { witness } => (GbValidity::Invalid, witness.mask()),
            Validity::Unchecked => (GbValidity::Unchecked, 0),
        };
        if !witness_mask.is_null() {
            witness_mask.write(w);
        }
        write(out, v)
    })
}

/// Copies Σ into `buf` (row-major, `p * p` values).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gb_model_sigma(model: *const GbModel, buf: *mut f64, len: usize) -> GbStatus {
    guard(|| {
        let s = handle(model)?.sigma().as_slice();
        output(buf, len, s.len())?.copy_from_slice(s);
        Ok(())
    })
}

/// Probability of the state `x` (`p` bytes, each 0 or 1).
///
/// # Safety
/// `x` must point to `p` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_model_joint_prob(model: *const GbModel, x: *const u8, p: usize, out: *mut f64) -> GbStatus {
    guard(|| {
        let v = handle(model)?.joint_prob(&bits(input(x, p)?)?)?;
        write(out, v)
    })
}

/// Writes all `2^p` probabilities. Entry `k` is the state whose bit `i` is
/// variable `i`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gb_model_joint_table(model: *const GbModel, buf: *mut f64, len: usize) -> GbStatus {
    guard(|| {
        let t = handle(model)?.joint_table()?;
        output(buf, len, t.len())?.copy_from_slice(&t);
        Ok(())
    })
}

/// Marginal over the `k` variables in `keep`, renumbered in increasing order.
///
/// # Safety
/// `keep` must point to `k` indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_model_marginal(
    model: *const GbModel,
    keep: *const usize,
    k: usize,
    out: *mut *mut GbModel,
) -> GbStatus {
    guard(|| {
        let d = handle(model)?;
        let keep = IndexSet::new(input(keep, k)?.iter().copied(), d.dim())?;
        write(out, boxed(d.marginal(&keep)?))
    })
}

/// Distribution of the unobserved variables given `k` observations
/// (`indices[j]` took value `values[j]`). `evidence` receives the marginal
/// probability of the observation when non-null.
///
/// # Safety
/// `indices` and `values` must point to `k` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_model_conditional(
    model: *const GbModel,
    indices: *const usize,
    values: *const u8,
    k: usize,
    out: *mut *mut GbModel,
    evidence: *mut f64,
) -> GbStatus {
    guard(|| {
        let d = handle(model)?;
        let idx = input(indices, k)?;
        let vals = input(values, k)?;
        let mut pairs = Vec::with_capacity(k);
        for (&i, &v) in idx.iter().zip(vals) {
            if v > 1 {
                return Err(Fail(GbStatus::InvalidArgument, format!("value {v} is not 0 or 1")));
            }
            pairs.push((i, v == 1));
        }
        let c = d.conditional(&Observation::new(pairs, d.dim())?)?;
        if !evidence.is_null() {
            evidence.write(c.evidence);
        }
        write(out, boxed(c.model))
    })
}

/// `E[x_i]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_model_mean(model: *const GbModel, i: usize, out: *mut f64) -> GbStatus {
    guard(|| write(out, handle(model)?.mean(i)?))
}

/// `Cov[x_i, x_j]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_model_covariance(model: *const GbModel, i: usize, j: usize, out: *mut f64) -> GbStatus {
    guard(|| write(out, handle(model)?.covariance(i, j)?))
}

/// Pearson correlation of `x_i` and `x_j`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_model_pearson(model: *const GbModel, i: usize, j: usize, out: *mut f64) -> GbStatus {
    guard(|| write(out, handle(model)?.pearson(i, j)?))
}

/// Shannon entropy in nats.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_model_entropy(model: *const GbModel, out: *mut f64) -> GbStatus {
    guard(|| write(out, handle(model)?.entropy()?))
}

/// Draws `n` samples with a ChaCha20 stream seeded by `seed`. Row `r` is
/// written to `buf[r * p .. (r + 1) * p]`.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gb_model_sample(
    model: *const GbModel,
    n: usize,
    seed: u64,
    buf: *mut u8,
    len: usize,
) -> GbStatus {
    guard(|| {
        let d = handle(model)?;
        let p = d.dim();
        let out = output(buf, len, n * p)?;
        let sampler = Sampler::new(d)?;
        let mut rng = seeded_rng(seed);
        for row in out.chunks_exact_mut(p.max(1)).take(n) {
            let x = sampler.sample_one(&mut rng)?;
            for (o, &b) in row.iter_mut().zip(x.bits()) {
                *o = b as u8;
            }
        }
        Ok(())
    })
}

/// MAP fit with pseudo-count `gamma` to `n` rows of `p` bytes each. On
/// `GB_STATUS_NON_CONVERGENCE` the best iterate is still stored in `out`.
/// `converged` receives the convergence flag when non-null.
///
/// # Safety
/// `rows` must point to `n * p` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_fit_map(
    rows: *const u8,
    n: usize,
    p: usize,
    gamma: f64,
    out: *mut *mut GbModel,
    converged: *mut bool,
) -> GbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let raw = input(rows, n * p)?;
        let mut data = Dataset::new(p);
        for row in raw.chunks_exact(p.max(1)).take(n) {
            data.push(bits(row)?)?;
        }
        let cfg = FitConfig {
            gamma,
            ..FitConfig::default()
        };
        let (report, failure) = match fit_map(&data, &cfg) {
            Ok(r) => (r, None),
            Err(Error::NonConvergence { iterations, report }) => (
                *report,
                Some(Fail(
                    GbStatus::NonConvergence,
                    format!("optimizer did not converge after {iterations} iterations"),
                )),
            ),
            Err(e) => return Err(e.into()),
        };
        if !converged.is_null() {
            converged.write(report.converged);
        }
        let inner = report.model(&ModelOptions::default())?;
        out.write(boxed(inner));
        failure.map_or(Ok(()), Err)
    })
}
