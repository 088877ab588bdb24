// SPDX-License-Identifier: Apache-2.0

//! C ABI over `cdd_sense`.
//!
//! Every function returns a [`CddStatus`]; on failure the message is kept per
//! thread and can be fetched with [`cdd_last_error_message`]. Objects are
//! opaque handles created by `*_new` / `cdd_simulate_strobe` and released by
//! the matching `*_free`. No function unwinds into C: panics are caught and
//! reported as [`CddStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cdd_sense::analysis::{self, FitModel, FitOptions, RabiFit};
use cdd_sense::experiment::{self, EnsembleSettings, SampleGrid};
use cdd_sense::model::{self, DriveConfig, Frame};
use cdd_sense::noise::{NoiseConfig, OuProcess};
use cdd_sense::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CddStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    StepTooLarge = 3,
    FitFailed = 4,
    Internal = 5,
    Panic = 6,
}

pub const CDD_FRAME_LAB: u32 = 0;
pub const CDD_FRAME_IP1: u32 = 1;

pub const CDD_MODEL_DAMPED_COSINE: i32 = 0;
pub const CDD_MODEL_DECAY_ONLY: i32 = 1;
pub const CDD_MODEL_FLAT: i32 = 2;

/// Opaque drive configuration.
pub struct CddDriveConfig {
    inner: DriveConfig,
}

/// Opaque simulated strobe record.
pub struct CddTrace {
    times: Vec<f64>,
    signal: Vec<f64>,
    stderr: Vec<f64>,
}

/// Noise parameters; `t1 <= 0` means no relaxation. Strengths of zero
/// switch a channel off.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CddNoiseParams {
    pub sigma_b: f64,
    pub tau_b: f64,
    pub sigma_omega1: f64,
    pub tau_omega1: f64,
    pub sigma_omega2: f64,
    pub tau_omega2: f64,
    pub t1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CddFitResult {
    /// One of the `CDD_MODEL_*` constants.
    pub model: i32,
    pub amplitude: f64,
    pub offset: f64,
    /// Cycles per time unit.
    pub frequency: f64,
    pub phase: f64,
    pub t2: f64,
    pub p: f64,
    pub amplitude_err: f64,
    pub offset_err: f64,
    pub frequency_err: f64,
    pub phase_err: f64,
    pub t2_err: f64,
    pub p_err: f64,
    pub residual_norm: f64,
    pub iterations: u32,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> CddStatus {
    match e {
        Error::InvalidInput(_) | Error::FrameUnavailable { .. } | Error::NotBracketed { .. } => {
            CddStatus::InvalidArgument
        }
        Error::StepTooLarge { .. } => CddStatus::StepTooLarge,
        Error::FitNonConvergence { .. } => CddStatus::FitFailed,
        _ => CddStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (CddStatus, String)>) -> CddStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CddStatus::Ok,
        Ok(Err((status, msg))) => {
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
            CddStatus::Panic
        }
    }
}

fn fail(e: Error) -> (CddStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CddStatus, String) {
    (CddStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (CddStatus, String) {
    (CddStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], (CddStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Creates a configuration with the signal on the `(+,+)` resonance and the
/// second drive shifted by π/2. Angular frequencies in rad per time unit.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cdd_drive_config_new(
    omega0: f64,
    omega1: f64,
    omega2: f64,
    g: f64,
    phi: f64,
    out: *mut *mut CddDriveConfig,
) -> CddStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let inner = DriveConfig::on_resonance(omega0, omega1, omega2, g, phi);
        inner.validate().map_err(fail)?;
        *out = Box::into_raw(Box::new(CddDriveConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`cdd_drive_config_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdd_drive_config_free(cfg: *mut CddDriveConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Moves the signal carrier to `omega_s`.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdd_drive_config_set_signal_frequency(cfg: *mut CddDriveConfig, omega_s: f64) -> CddStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let next = DriveConfig { omega_s, ..c.inner };
        next.validate().map_err(fail)?;
        c.inner = next;
        Ok(())
    })
}

/// Sets the modulation offset of the second drive.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdd_drive_config_set_drive2_phase(cfg: *mut CddDriveConfig, phase: f64) -> CddStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        if !phase.is_finite() {
            return Err(invalid("phase must be finite"));
        }
        c.inner.drive2_phase = phase;
        Ok(())
    })
}

/// Writes the four resonances `ω₀ ± Ω₁ ± Ω₂/2`, ascending, to `out[0..4]`.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for four writes.
#[no_mangle]
pub unsafe extern "C" fn cdd_resonances(cfg: *const CddDriveConfig, out: *mut f64) -> CddStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = model::resonances(&c.inner);
        ptr::copy_nonoverlapping(r.as_ptr(), out, 4);
        Ok(())
    })
}

/// Sets `*pass` to whether every adjacent scale ratio reaches `min_ratio`.
///
/// # Safety
/// `cfg` must be a live handle and `pass` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_validate_hierarchy(
    cfg: *const CddDriveConfig,
    min_ratio: f64,
    pass: *mut bool,
) -> CddStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if pass.is_null() {
            return Err(null("pass"));
        }
        if !(min_ratio > 0.0) {
            return Err(invalid("min_ratio must be > 0"));
        }
        *pass = model::validate_hierarchy(&c.inner, min_ratio).pass();
        Ok(())
    })
}

fn noise_from(p: Option<&CddNoiseParams>) -> Result<NoiseConfig, (CddStatus, String)> {
    let Some(p) = p else {
        return Ok(NoiseConfig::quiet());
    };
    let ou = |sigma: f64, tau: f64| {
        if sigma > 0.0 {
            OuProcess::new(sigma, tau)
        } else {
            OuProcess::off()
        }
    };
    let mut n = NoiseConfig {
        delta_b: ou(p.sigma_b, p.tau_b),
        delta_omega1: ou(p.sigma_omega1, p.tau_omega1),
        delta_omega2: ou(p.sigma_omega2, p.tau_omega2),
        t1: (p.t1 > 0.0).then_some(p.t1),
        grid_dt: 0.0,
    };
    n.grid_dt = n.default_grid_dt();
    n.validate().map_err(fail)?;
    Ok(n)
}

/// Simulates the Rabi protocol on every `stride`-th strobe time up to
/// `t_final` and returns the population record in `*out`. `noise` may be
/// null for a noiseless run; `frame` is `CDD_FRAME_LAB` or `CDD_FRAME_IP1`.
///
/// # Safety
/// `cfg` must be a live handle, `noise` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_simulate_strobe(
    cfg: *const CddDriveConfig,
    noise: *const CddNoiseParams,
    frame: u32,
    t_final: f64,
    stride: u32,
    trajectories: u32,
    seed: u64,
    out: *mut *mut CddTrace,
) -> CddStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let frame = match frame {
            CDD_FRAME_LAB => Frame::Lab,
            CDD_FRAME_IP1 => Frame::Ip1,
            other => return Err(invalid(format!("unknown frame {other}"))),
        };
        let noise = noise_from(noise.as_ref())?;
        let grid = SampleGrid::strobe(&c.inner, t_final, stride.max(1) as usize).map_err(fail)?;
        let settings = EnsembleSettings {
            trajectories: trajectories as usize,
            seed,
            frame,
        };
        let ens = experiment::run_rabi(&c.inner, &noise, &grid, &settings).map_err(fail)?;
        *out = Box::into_raw(Box::new(CddTrace {
            times: ens.times,
            signal: ens.mean,
            stderr: ens.stderr,
        }));
        Ok(())
    })
}

/// Number of samples in a trace; 0 for null.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdd_trace_len(trace: *const CddTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.times.len())
}

unsafe fn copy_column(trace: *const CddTrace, buf: *mut f64, len: usize, pick: fn(&CddTrace) -> &[f64]) -> CddStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let src = pick(t);
        if len < src.len() {
            return Err(invalid(format!("buffer holds {len} values, {} needed", src.len())));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        Ok(())
    })
}

/// Copies the sample times into `buf`, which must hold `cdd_trace_len` values.
///
/// # Safety
/// `trace` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cdd_trace_times(trace: *const CddTrace, buf: *mut f64, len: usize) -> CddStatus {
    copy_column(trace, buf, len, |t| &t.times)
}

/// Copies the ensemble-mean population `P(−a)`.
///
/// # Safety
/// As [`cdd_trace_times`].
#[no_mangle]
pub unsafe extern "C" fn cdd_trace_signal(trace: *const CddTrace, buf: *mut f64, len: usize) -> CddStatus {
    copy_column(trace, buf, len, |t| &t.signal)
}

/// Copies the standard error of the mean (zeros for one trajectory).
///
/// # Safety
/// As [`cdd_trace_times`].
#[no_mangle]
pub unsafe extern "C" fn cdd_trace_stderr(trace: *const CddTrace, buf: *mut f64, len: usize) -> CddStatus {
    copy_column(trace, buf, len, |t| &t.stderr)
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdd_trace_free(trace: *mut CddTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

fn fill(out: &mut CddFitResult, fit: &RabiFit, converged: bool) {
    *out = CddFitResult {
        model: match fit.model {
            FitModel::DampedCosine => CDD_MODEL_DAMPED_COSINE,
            FitModel::DecayOnly => CDD_MODEL_DECAY_ONLY,
            FitModel::Flat => CDD_MODEL_FLAT,
        },
        amplitude: fit.amplitude,
        offset: fit.offset,
        frequency: fit.frequency,
        phase: fit.phase,
        t2: fit.t2,
        p: fit.p,
        amplitude_err: fit.errors.amplitude,
        offset_err: fit.errors.offset,
        frequency_err: fit.errors.frequency,
        phase_err: fit.errors.phase,
        t2_err: fit.errors.t2,
        p_err: fit.errors.p,
        residual_norm: fit.residual_norm,
        iterations: fit.iterations as u32,
        converged,
    };
}

/// Fits `A·exp(−(t/T₂)^p)·cos(2πft + φ) + B` to `n` samples. `stderr` may
/// be null. On `FitFailed` the best parameters found are still written.
///
/// # Safety
/// `t` and `y` valid for `n` reads, `stderr` null or valid for `n` reads,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_fit_damped_rabi(
    t: *const f64,
    y: *const f64,
    stderr: *const f64,
    n: usize,
    out: *mut CddFitResult,
) -> CddStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = CddFitResult::default();
        let t = slice(t, n, "t")?;
        let y = slice(y, n, "y")?;
        let se = if stderr.is_null() {
            None
        } else {
            Some(slice(stderr, n, "stderr")?)
        };
        match analysis::fit_signal(t, y, se, &FitOptions::default()) {
            Ok(fit) => {
                fill(out, &fit, true);
                Ok(())
            }
            Err(Error::FitNonConvergence { best, iterations, residual }) => {
                fill(out, &best, false);
                Err((
                    CddStatus::FitFailed,
                    format!("fit did not converge after {iterations} iterations (residual norm {residual})"),
                ))
            }
            Err(e) => Err(fail(e)),
        }
    })
}

fn scalar(out: *mut f64, f: impl FnOnce() -> cdd_sense::Result<f64>) -> CddStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = f().map_err(fail)?;
        // SAFETY: checked non-null; caller guarantees writability.
        unsafe { *out = v };
        Ok(())
    })
}

/// `σ/(γ α τ C)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_min_field(
    sigma: f64,
    tau: f64,
    alpha: f64,
    contrast: f64,
    gamma: f64,
    out: *mut f64,
) -> CddStatus {
    scalar(out, || analysis::min_field(sigma, tau, alpha, contrast, gamma))
}

/// `η = δB_min·√t`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_sensitivity(
    sigma: f64,
    tau: f64,
    alpha: f64,
    contrast: f64,
    gamma: f64,
    t: f64,
    out: *mut f64,
) -> CddStatus {
    scalar(out, || analysis::sensitivity(sigma, tau, alpha, contrast, gamma, t))
}

/// `1/T₂`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_bandwidth(t2: f64, out: *mut f64) -> CddStatus {
    scalar(out, || analysis::bandwidth(t2))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`) and returns the full length including
/// the terminator; 0 when there is none. `buf` may be null to query the
/// length.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cdd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, k);
            *buf.add(k - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
