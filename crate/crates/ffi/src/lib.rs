//! C interface to `kjmix`.
//!
//! Mixtures are passed around as opaque [`KjMixture`] handles created by the library and
//! released with [`kj_mixture_free`]. Every function returns a [`KjStatus`]; on failure a
//! human-readable message is kept per thread and can be fetched with
//! [`kj_last_error_message`]. Angles are radians throughout.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use kjmix::{
    em_fit, fit_mmm_sample, recover_original, Angle, EmConfig, Error, EtmConfig, ReparamMixture,
};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KjStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad sizes, weights, or configuration values.
    InvalidArgument = 2,
    /// A parameter lies outside its admissible range.
    Domain = 3,
    /// All mass sits on the uniform component.
    Degenerate = 4,
    EmptySample = 5,
    /// The optimizer or EM could not produce an estimate.
    FitFailed = 6,
    /// An output buffer is shorter than required.
    BufferTooSmall = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// Opaque handle to a mixture in the reparametrized form.
pub struct KjMixture {
    inner: ReparamMixture,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> KjStatus {
    match e {
        Error::Domain(_) | Error::NoUniqueMode => KjStatus::Domain,
        Error::Degenerate(_) => KjStatus::Degenerate,
        Error::EmptySample => KjStatus::EmptySample,
        Error::InvalidWeights(_)
        | Error::DimensionMismatch { .. }
        | Error::Config(_)
        | Error::Parse { .. }
        | Error::Io(_) => KjStatus::InvalidArgument,
        Error::EnvelopeFailure { .. }
        | Error::NonFinite { .. }
        | Error::DeadComponent { .. }
        | Error::UnboundedConcentration(_)
        | Error::DivisionByZero(_)
        | Error::AllStartsFailed(_) => KjStatus::FitFailed,
    }
}

struct Failure(KjStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: KjStatus, msg: &str) -> Failure {
    Failure(status, msg.to_string())
}

/// Runs `body`, converting errors and panics into a status and recording the message.
fn guard<F: FnOnce() -> Result<(), Failure>>(body: F) -> KjStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            KjStatus::Ok
        }
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
            KjStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(KjStatus::NullPointer, &format!("{name} is null")));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut()
        .ok_or_else(|| fail(KjStatus::NullPointer, &format!("{name} is null")))
}

unsafe fn handle<'a>(ptr: *const KjMixture) -> Result<&'a ReparamMixture, Failure> {
    ptr.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| fail(KjStatus::NullPointer, "mixture handle is null"))
}

fn boxed(inner: ReparamMixture) -> *mut KjMixture {
    Box::into_raw(Box::new(KjMixture { inner }))
}

fn angles(xs: &[f64]) -> Vec<Angle> {
    xs.iter().map(|&x| Angle::new(x)).collect()
}

/// Builds a mixture from `m` components and `m + 1` weights (the last one uniform).
///
/// # Safety
/// `mu`, `rho`, `lambda` must point to `m` doubles, `weights` to `m + 1` doubles, and `out`
/// to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn kj_mixture_new(
    m: usize,
    mu: *const f64,
    rho: *const f64,
    lambda: *const f64,
    weights: *const f64,
    out: *mut *mut KjMixture,
) -> KjStatus {
    guard(|| {
        let out = output(out, "out")?;
        let mixture = ReparamMixture::from_parts(
            input(mu, m, "mu")?,
            input(rho, m, "rho")?,
            input(lambda, m, "lambda")?,
            input(weights, m + 1, "weights")?,
        )?;
        *out = boxed(mixture);
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `mixture` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kj_mixture_free(mixture: *mut KjMixture) {
    if !mixture.is_null() {
        drop(Box::from_raw(mixture));
    }
}

/// Number of Kato-Jones components (excluding the uniform one).
///
/// # Safety
/// `mixture` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kj_mixture_components(
    mixture: *const KjMixture,
    out: *mut usize,
) -> KjStatus {
    guard(|| {
        *output(out, "out")? = handle(mixture)?.m();
        Ok(())
    })
}

/// Copies parameters into caller buffers: `m` entries each for `mu`, `rho`, `lambda` and
/// `m + 1` for `weights`. `capacity` is the length of the smallest buffer.
///
/// # Safety
/// Each non-null pointer must be writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn kj_mixture_params(
    mixture: *const KjMixture,
    mu: *mut f64,
    rho: *mut f64,
    lambda: *mut f64,
    weights: *mut f64,
    capacity: usize,
) -> KjStatus {
    guard(|| {
        let mix = handle(mixture)?;
        let m = mix.m();
        if capacity < m + 1 {
            return Err(fail(
                KjStatus::BufferTooSmall,
                &format!("need capacity {}, got {capacity}", m + 1),
            ));
        }
        for ptr in [mu, rho, lambda, weights] {
            output(ptr, "parameter buffer")?;
        }
        for (k, c) in mix.components().iter().enumerate() {
            *mu.add(k) = c.mu.radians();
            *rho.add(k) = c.rho;
            *lambda.add(k) = c.lambda.radians();
        }
        slice::from_raw_parts_mut(weights, m + 1).copy_from_slice(mix.weights());
        Ok(())
    })
}

/// Mixture density at `theta`.
///
/// # Safety
/// `mixture` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kj_mixture_density(
    mixture: *const KjMixture,
    theta: f64,
    out: *mut f64,
) -> KjStatus {
    guard(|| {
        let mix = handle(mixture)?;
        let out = output(out, "out")?;
        if !theta.is_finite() {
            return Err(fail(KjStatus::Domain, "theta is not finite"));
        }
        *out = mix.density(Angle::new(theta));
        Ok(())
    })
}

/// Trigonometric moment `E[exp(i p Θ)]` of order `p ≥ 1`.
///
/// # Safety
/// `mixture` must be a live handle and `re`, `im` writable.
#[no_mangle]
pub unsafe extern "C" fn kj_mixture_trig_moment(
    mixture: *const KjMixture,
    p: u32,
    re: *mut f64,
    im: *mut f64,
) -> KjStatus {
    guard(|| {
        let mix = handle(mixture)?;
        let (re, im) = (output(re, "re")?, output(im, "im")?);
        if p == 0 {
            return Err(fail(
                KjStatus::InvalidArgument,
                "moment order must be at least 1",
            ));
        }
        let z = kjmix::mixture::mixture_trig_moment(p, mix);
        *re = z.re;
        *im = z.im;
        Ok(())
    })
}

/// Draws `n` angles in `[0, 2π)` into `out`, deterministically in `seed`.
///
/// # Safety
/// `mixture` must be a live handle and `out` writable for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn kj_mixture_sample(
    mixture: *const KjMixture,
    n: usize,
    seed: u64,
    out: *mut f64,
) -> KjStatus {
    guard(|| {
        let mix = handle(mixture)?;
        output(out, "out")?;
        let draws = kjmix::sample(mix, n, seed)?;
        let dst = slice::from_raw_parts_mut(out, n);
        for (d, a) in dst.iter_mut().zip(draws) {
            *d = a.radians();
        }
        Ok(())
    })
}

/// Moment estimate with `m` components from `starts` random starts. `q = 2m`, `c = 0.9`.
///
/// # Safety
/// `data` must point to `n` doubles; `out` and `etm` (if non-null) must be writable.
#[no_mangle]
pub unsafe extern "C" fn kj_fit_mmm(
    data: *const f64,
    n: usize,
    m: usize,
    starts: usize,
    seed: u64,
    out: *mut *mut KjMixture,
    etm: *mut f64,
) -> KjStatus {
    guard(|| {
        let out = output(out, "out")?;
        let sample = angles(input(data, n, "data")?);
        let cfg = EtmConfig {
            starts,
            seed,
            ..Default::default()
        };
        let fit = fit_mmm_sample(&sample, m, &cfg)?;
        if let Some(e) = etm.as_mut() {
            *e = fit.etm;
        }
        *out = boxed(fit.mixture);
        Ok(())
    })
}

/// Maximum likelihood by EM from `init` with default tolerances.
///
/// # Safety
/// `data` must point to `n` doubles, `init` must be a live handle, and `out` and
/// `loglik` (if non-null) must be writable.
#[no_mangle]
pub unsafe extern "C" fn kj_em_fit(
    data: *const f64,
    n: usize,
    init: *const KjMixture,
    out: *mut *mut KjMixture,
    loglik: *mut f64,
) -> KjStatus {
    guard(|| {
        let start = handle(init)?;
        let out = output(out, "out")?;
        let sample = angles(input(data, n, "data")?);
        let fit = em_fit(&sample, start, &EmConfig::default())?;
        if let Some(l) = loglik.as_mut() {
            *l = fit.loglik();
        }
        *out = boxed(fit.mixture);
        Ok(())
    })
}

/// Original-form weights `π_k` and concentrations `γ_k`; `μ`, `ρ`, `λ` are unchanged.
///
/// # Safety
/// `mixture` must be a live handle; `pi` and `gamma` must be writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn kj_recover_original(
    mixture: *const KjMixture,
    pi: *mut f64,
    gamma: *mut f64,
    capacity: usize,
) -> KjStatus {
    guard(|| {
        let mix = handle(mixture)?;
        output(pi, "pi")?;
        output(gamma, "gamma")?;
        if capacity < mix.m() {
            return Err(fail(
                KjStatus::BufferTooSmall,
                &format!("need capacity {}, got {capacity}", mix.m()),
            ));
        }
        let original = recover_original(mix)?;
        for (k, (c, w)) in original
            .components()
            .iter()
            .zip(original.weights())
            .enumerate()
        {
            *pi.add(k) = *w;
            *gamma.add(k) = c.gamma;
        }
        Ok(())
    })
}

/// Upper bound `γ̄(ρ, λ) = (1 − ρ²) / (2(1 − ρ cos λ))` on the concentration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kj_gamma_bar(rho: f64, lambda: f64, out: *mut f64) -> KjStatus {
    guard(|| {
        let out = output(out, "out")?;
        if !lambda.is_finite() {
            return Err(fail(KjStatus::Domain, "lambda is not finite"));
        }
        *out = kjmix::gamma_bar(rho, Angle::new(lambda))?;
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated and truncated to fit.
/// Returns the full message length in bytes (without the terminator), so a return value
/// `>= len` signals truncation. Passing a null buffer just queries the length.
///
/// # Safety
/// `buf` must be null or writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn kj_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
