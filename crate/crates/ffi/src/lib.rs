//! C interface to the `ramanchd` engine.
//!
//! Every fallible function returns a [`RamanStatus`]. On failure a message is
//! kept per thread and can be copied out with [`raman_last_error_message`].
//! Objects are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ramanchd::chd::{noise_summary, raw_traces, FieldState};
use ramanchd::config::{self, ScenarioConfig};
use ramanchd::error::Error;
use ramanchd::fock::ModeSpace;
use ramanchd::model::{thermal_occupation, CavityFrame, Superoperator, SystemModel, SystemParams};
use ramanchd::runner::{run_scenario, RunOptions};
use ramanchd::solver::{linear_grid, steady_state, PropagationOptions, SteadyState};

/// Result codes shared by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RamanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Convergence = 4,
    Numerical = 5,
    Io = 6,
    /// The steady state has not been computed yet.
    NotReady = 7,
    Panic = 8,
}

/// Physical parameters in eV. Set `temperature` or `n_th` to NaN to leave it
/// unspecified; at least one must be given.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RamanParams {
    pub omega_m: f64,
    pub delta: f64,
    pub g: f64,
    pub omega_pump: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    pub temperature: f64,
    pub n_th: f64,
    pub omega_c: f64,
    pub phi: f64,
}

/// Steady-state expectation values.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RamanMoments {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub cavity_photons: f64,
    pub phonons: f64,
    pub residual: f64,
    pub min_eigenvalue: f64,
}

/// Zero-delay noise terms at one quadrature phase.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RamanNoise {
    pub variance: f64,
    pub h2: f64,
    pub h3: f64,
    pub hn: f64,
}

/// A truncated cavity-vibration model with its generator and, once
/// computed, its steady state.
pub struct RamanModel {
    model: SystemModel,
    liouvillian: Superoperator,
    steady: Option<SteadyState>,
}

/// A parsed scenario configuration.
pub struct RamanConfig {
    config: ScenarioConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> RamanStatus {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::SensorRejected { .. } => RamanStatus::Config,
        Error::InvalidDimension { .. } | Error::SlotOutOfRange { .. } | Error::DimensionMismatch { .. } | Error::InvalidGrid(_) => {
            RamanStatus::InvalidArgument
        }
        Error::Convergence { .. } => RamanStatus::Convergence,
        Error::SweepPoint { source, .. } => status_of(source),
        Error::Io { .. } | Error::Json(_) => RamanStatus::Io,
        _ => RamanStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (RamanStatus, String)>) -> RamanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RamanStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RamanStatus::Panic
        }
    }
}

fn lift(e: Error) -> (RamanStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RamanStatus, String) {
    (RamanStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn c_path(p: *const c_char, what: &str) -> Result<PathBuf, (RamanStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (RamanStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

fn opt(x: f64) -> Option<f64> {
    if x.is_nan() {
        None
    } else {
        Some(x)
    }
}

fn to_params(p: &RamanParams) -> SystemParams {
    SystemParams {
        omega_m: p.omega_m,
        delta: p.delta,
        g: p.g,
        omega_pump: p.omega_pump,
        kappa: p.kappa,
        gamma_m: p.gamma_m,
        temperature: opt(p.temperature),
        n_th: opt(p.n_th),
        omega_c: p.omega_c,
        phi: p.phi,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn raman_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn raman_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Fills `out` with the stock parameter set.
///
/// # Safety
/// `out` must be null or point to a writable `RamanParams`.
#[no_mangle]
pub unsafe extern "C" fn raman_params_default(out: *mut RamanParams) -> RamanStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = SystemParams::default();
        *out = RamanParams {
            omega_m: d.omega_m,
            delta: d.delta,
            g: d.g,
            omega_pump: d.omega_pump,
            kappa: d.kappa,
            gamma_m: d.gamma_m,
            temperature: d.temperature.unwrap_or(f64::NAN),
            n_th: d.n_th.unwrap_or(f64::NAN),
            omega_c: d.omega_c,
            phi: d.phi,
        };
        Ok(())
    })
}

/// Bose-Einstein occupation at frequency `omega` (eV) and `temperature` (K).
///
/// # Safety
/// `out` must be null or point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn raman_thermal_occupation(omega: f64, temperature: f64, out: *mut f64) -> RamanStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = thermal_occupation(omega, temperature).map_err(lift)?;
        Ok(())
    })
}

/// Builds a model. `displaced` selects the frame displaced by the bare cavity
/// mean field instead of the plain Fock basis.
///
/// # Safety
/// `params` must point to a valid `RamanParams`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn raman_model_new(
    params: *const RamanParams,
    n_cavity: usize,
    n_vibration: usize,
    displaced: bool,
    out: *mut *mut RamanModel,
) -> RamanStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let params = to_params(params.as_ref().ok_or_else(|| null("params"))?);
        let frame = if displaced { CavityFrame::mean_field(&params) } else { CavityFrame::Fock };
        let space = ModeSpace::new(vec![n_cavity, n_vibration]).map_err(lift)?;
        let model = SystemModel::new(params, space, vec![], frame).map_err(lift)?;
        let liouvillian = model.liouvillian();
        *out = Box::into_raw(Box::new(RamanModel {
            model,
            liouvillian,
            steady: None,
        }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a pointer returned by `raman_model_new` that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn raman_model_free(model: *mut RamanModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Hilbert-space dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn raman_model_dim(model: *const RamanModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.dim())
}

/// Solves for the steady state and caches it on the handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn raman_model_solve(model: *mut RamanModel) -> RamanStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        m.steady = Some(steady_state(&m.liouvillian).map_err(lift)?);
        Ok(())
    })
}

fn solved(m: &RamanModel) -> Result<&SteadyState, (RamanStatus, String)> {
    m.steady
        .as_ref()
        .ok_or_else(|| (RamanStatus::NotReady, "call raman_model_solve first".to_string()))
}

/// Steady-state moments of a solved model.
///
/// # Safety
/// `model` must be null or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn raman_model_moments(model: *const RamanModel, out: *mut RamanMoments) -> RamanStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let ss = solved(m)?;
        let alpha = ss.expect(m.model.cavity_op());
        *out = RamanMoments {
            alpha_re: alpha.re,
            alpha_im: alpha.im,
            cavity_photons: ss.expect(&m.model.cavity_number()).re,
            phonons: ss.expect(&m.model.vibration_number()).re,
            residual: ss.residual,
            min_eigenvalue: ss.min_eigenvalue,
        };
        Ok(())
    })
}

/// Zero-delay noise terms of a solved model at phase `phi`.
///
/// # Safety
/// `model` must be null or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn raman_model_noise(model: *const RamanModel, phi: f64, out: *mut RamanNoise) -> RamanStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let ss = solved(m)?;
        let n = noise_summary(&ss.rho, m.model.cavity_op(), phi).map_err(lift)?;
        *out = RamanNoise {
            variance: n.variance_phi,
            h2: n.h2,
            h3: n.h3,
            hn: n.hn,
        };
        Ok(())
    })
}

/// Both CHD branches on the uniform grid τ_k = k·tau_max/(count−1).
/// `positive[k]` and `negative[k]` receive h at +τ_k and −τ_k.
///
/// # Safety
/// `model` must be null or a live handle; `positive` and `negative` must each
/// hold `count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn raman_model_chd(
    model: *const RamanModel,
    phi: f64,
    tau_max: f64,
    count: usize,
    positive: *mut f64,
    negative: *mut f64,
) -> RamanStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if positive.is_null() {
            return Err(null("positive"));
        }
        if negative.is_null() {
            return Err(null("negative"));
        }
        let ss = solved(m)?;
        let grid = linear_grid(tau_max, count).map_err(lift)?;
        let state = FieldState::new(&m.liouvillian, &ss.rho, m.model.cavity_op()).map_err(lift)?;
        let traces = raw_traces(&state, &grid, false, &PropagationOptions::default())
            .and_then(|raw| raw.evaluate(&state, phi))
            .map_err(lift)?;
        std::slice::from_raw_parts_mut(positive, count).copy_from_slice(&traces.positive.values);
        std::slice::from_raw_parts_mut(negative, count).copy_from_slice(&traces.negative.values);
        Ok(())
    })
}

/// Loads a scenario configuration. `scenario` may be null to take the name
/// from the file.
///
/// # Safety
/// `path` must be a NUL-terminated string, `scenario` null or one, and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn raman_config_load(
    path: *const c_char,
    scenario: *const c_char,
    out: *mut *mut RamanConfig,
) -> RamanStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let path = c_path(path, "path")?;
        let scenario = if scenario.is_null() {
            None
        } else {
            let name = c_path(scenario, "scenario")?;
            Some(name.to_string_lossy().parse().map_err(lift)?)
        };
        let config = config::load(&path, scenario).map_err(lift)?;
        *out = Box::into_raw(Box::new(RamanConfig { config }));
        Ok(())
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `config` must be null or a pointer from `raman_config_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn raman_config_free(config: *mut RamanConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the scenario and writes its output files. `out_dir` may be null to
/// use the environment override or the configured directory; `threads` of 0
/// uses the default pool.
///
/// # Safety
/// `config` must be a live handle and `out_dir` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn raman_run_scenario(config: *const RamanConfig, out_dir: *const c_char, threads: usize) -> RamanStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let out_dir = if out_dir.is_null() { None } else { Some(c_path(out_dir, "out_dir")?) };
        let opts = RunOptions {
            out_dir,
            threads: (threads > 0).then_some(threads),
            ..Default::default()
        };
        run_scenario(&c.config, &opts).map_err(lift)?;
        Ok(())
    })
}
