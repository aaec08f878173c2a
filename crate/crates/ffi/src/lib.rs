//! C ABI over the `esmc2` engine.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free`. Every entry point returns an [`Esmc2Status`]; on failure the
//! message is kept per thread and read with [`esmc2_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use esmc2::cli::{effective_config, fit_products, simulate_config, FitResult};
use esmc2::io::ExperimentConfig;
use esmc2::model::Param;
use esmc2::products::{forecast, ForecastOptions};
use esmc2::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Esmc2Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    Numerical = 6,
    /// Weights or particles degenerated during a run.
    Degenerate = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Experiment configuration.
pub struct Esmc2Config {
    inner: ExperimentConfig,
}

/// Completed fit: posterior particles, filtered state bands and metrics.
pub struct Esmc2Fit {
    cfg: ExperimentConfig,
    result: FitResult,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct Esmc2ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct Esmc2Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Fraction of observations inside the 95% band of filtered incidence.
    pub coverage95: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> Esmc2Status {
    match e {
        Error::Config(_) | Error::Precondition(_) | Error::Domain(_) | Error::InvalidState(_) => {
            Esmc2Status::Config
        }
        Error::Parse { .. } => Esmc2Status::Parse,
        Error::Io { .. } => Esmc2Status::Io,
        Error::Numerical(_) | Error::SingularProposal(_) => Esmc2Status::Numerical,
        Error::DegenerateWeights(_)
        | Error::ParticleCollapse { .. }
        | Error::DegeneratePopulation { .. } => Esmc2Status::Degenerate,
    }
}

struct Fail(Esmc2Status, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: Esmc2Status, msg: &str) -> Fail {
    Fail(status, msg.to_string())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> Esmc2Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            Esmc2Status::Ok
        }
        Ok(Err(Fail(status, msg))) => {
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
            Esmc2Status::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(Esmc2Status::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(Esmc2Status::InvalidArgument, &format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| fail(Esmc2Status::NullPointer, &format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| fail(Esmc2Status::NullPointer, &format!("{what} is null")))
}

/// Copies `values` into `buf` when it fits; `len` always receives the
/// required length.
unsafe fn fill(values: &[f64], buf: *mut f64, cap: usize, len: *mut usize) -> Result<(), Fail> {
    *out(len, "len")? = values.len();
    if values.len() > cap {
        return Err(fail(
            Esmc2Status::BufferTooSmall,
            &format!("buffer holds {cap} values, {} needed", values.len()),
        ));
    }
    if !values.is_empty() {
        if buf.is_null() {
            return Err(fail(Esmc2Status::NullPointer, "buffer is null"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn esmc2_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn esmc2_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Default configuration for a named example ("example1" or "example2").
///
/// # Safety
/// `example` must be a NUL-terminated string; `out_cfg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn esmc2_config_new(example: *const c_char, out_cfg: *mut *mut Esmc2Config) -> Esmc2Status {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        *slot = ptr::null_mut();
        let inner = ExperimentConfig::for_example(str_arg(example, "example")?)?;
        *slot = Box::into_raw(Box::new(Esmc2Config { inner }));
        Ok(())
    })
}

/// Loads a `key = value` configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_cfg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn esmc2_config_load(path: *const c_char, out_cfg: *mut *mut Esmc2Config) -> Esmc2Status {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        *slot = ptr::null_mut();
        let inner = ExperimentConfig::load(Path::new(str_arg(path, "path")?))?;
        *slot = Box::into_raw(Box::new(Esmc2Config { inner }));
        Ok(())
    })
}

/// Sets one configuration key, with the same keys and syntax as the config file.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn esmc2_config_set(
    cfg: *mut Esmc2Config,
    key: *const c_char,
    value: *const c_char,
) -> Esmc2Status {
    guard(|| {
        let cfg = out(cfg, "cfg")?;
        let (key, value) = (str_arg(key, "key")?, str_arg(value, "value")?);
        let mut next = cfg.inner.clone();
        next.set(key, value)?;
        next.validate()?;
        cfg.inner = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from `esmc2_config_new`/`esmc2_config_load`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn esmc2_config_free(cfg: *mut Esmc2Config) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Simulates the configured example and writes its observations.
/// `len` receives the series length even when `buf` is too small.
///
/// # Safety
/// `cfg` must be a live handle, `buf` null or `cap` writable doubles, `len` writable.
#[no_mangle]
pub unsafe extern "C" fn esmc2_simulate(
    cfg: *const Esmc2Config,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> Esmc2Status {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let sim = simulate_config(&cfg.inner, None)?;
        fill(&sim.observations, buf, cap, len)
    })
}

/// Fits the configured model to `n` observations.
///
/// # Safety
/// `cfg` must be a live handle, `obs` must point to `n` doubles, `out_fit` writable.
#[no_mangle]
pub unsafe extern "C" fn esmc2_fit(
    cfg: *const Esmc2Config,
    obs: *const f64,
    n: usize,
    out_fit: *mut *mut Esmc2Fit,
) -> Esmc2Status {
    guard(|| {
        let slot = out(out_fit, "out_fit")?;
        *slot = ptr::null_mut();
        let cfg = handle(cfg, "cfg")?;
        if obs.is_null() || n == 0 {
            return Err(fail(Esmc2Status::InvalidArgument, "no observations"));
        }
        let obs = slice::from_raw_parts(obs, n);
        let run_cfg = effective_config(&cfg.inner);
        let result = run_in_pool(&run_cfg, || fit_products(&run_cfg, obs))?
            .map_err(|abort| Fail(status_of(&abort.error), abort.to_string()))?;
        *slot = Box::into_raw(Box::new(Esmc2Fit { cfg: run_cfg, result }));
        Ok(())
    })
}

fn run_in_pool<T: Send>(cfg: &ExperimentConfig, f: impl FnOnce() -> T + Send) -> Result<T, Fail> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| fail(Esmc2Status::Config, &format!("cannot start worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// # Safety
/// `fit` must be null or a handle from `esmc2_fit` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn esmc2_fit_free(fit: *mut Esmc2Fit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Final posterior summary of one parameter ("alpha", "gamma", "nu_beta",
/// "phi" or "beta0"). Fixed parameters are an `INVALID_ARGUMENT`.
///
/// # Safety
/// `fit` must be a live handle, `name` NUL-terminated, `out_summary` writable.
#[no_mangle]
pub unsafe extern "C" fn esmc2_fit_param(
    fit: *const Esmc2Fit,
    name: *const c_char,
    out_summary: *mut Esmc2ParamSummary,
) -> Esmc2Status {
    guard(|| {
        let fit = handle(fit, "fit")?;
        let name = str_arg(name, "name")?;
        let dst = out(out_summary, "out_summary")?;
        let param: Param = name.parse()?;
        let last = fit
            .result
            .output
            .history
            .last()
            .ok_or_else(|| fail(Esmc2Status::InvalidArgument, "empty history"))?;
        let s = last
            .params
            .iter()
            .find(|s| s.param == param)
            .ok_or_else(|| fail(Esmc2Status::InvalidArgument, &format!("{name} is not a free parameter")))?;
        *dst = Esmc2ParamSummary {
            mean: s.mean,
            sd: s.sd,
            q025: s.quantiles[0],
            q500: s.quantiles[2],
            q975: s.quantiles[4],
        };
        Ok(())
    })
}

/// Fit quality of the pooled filtered incidence against the observations.
///
/// # Safety
/// `fit` must be a live handle and `out_metrics` writable.
#[no_mangle]
pub unsafe extern "C" fn esmc2_fit_metrics(fit: *const Esmc2Fit, out_metrics: *mut Esmc2Metrics) -> Esmc2Status {
    guard(|| {
        let fit = handle(fit, "fit")?;
        *out(out_metrics, "out_metrics")? = Esmc2Metrics {
            mae: fit.result.mae,
            rmse: fit.result.rmse,
            coverage95: fit.result.coverage95,
        };
        Ok(())
    })
}

/// Number of parameter particles in the final population.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn esmc2_fit_num_particles(fit: *const Esmc2Fit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.output.particles.len())
}

/// Writes the final population as rows of (alpha, gamma, nu_beta, phi, beta0,
/// normalized weight). `len` receives the required number of doubles.
///
/// # Safety
/// `fit` must be a live handle, `buf` null or `cap` writable doubles, `len` writable.
#[no_mangle]
pub unsafe extern "C" fn esmc2_fit_samples(
    fit: *const Esmc2Fit,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> Esmc2Status {
    guard(|| {
        let fit = handle(fit, "fit")?;
        let particles = &fit.result.output.particles;
        let log_w: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
        let w = esmc2::stochastic::normalize_log_weights(&log_w)?;
        let rows: Vec<f64> = particles
            .iter()
            .zip(w.as_slice())
            .flat_map(|(p, &w)| {
                let t = p.theta;
                [t.alpha, t.gamma, t.nu_beta, t.phi, t.beta0, w]
            })
            .collect();
        fill(&rows, buf, cap, len)
    })
}

/// Forecasts `horizon` intervals past the data with beta frozen and writes
/// the observation median and 95% band per horizon. Each buffer needs
/// `horizon` slots.
///
/// # Safety
/// `fit` must be a live handle; `median`, `lo95` and `hi95` must each point to
/// `horizon` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn esmc2_fit_forecast(
    fit: *const Esmc2Fit,
    horizon: usize,
    seed: u64,
    median: *mut f64,
    lo95: *mut f64,
    hi95: *mut f64,
) -> Esmc2Status {
    guard(|| {
        let fit = handle(fit, "fit")?;
        if median.is_null() || lo95.is_null() || hi95.is_null() {
            return Err(fail(Esmc2Status::NullPointer, "output buffer is null"));
        }
        let opts = ForecastOptions {
            horizon,
            diffusive_beta: false,
        };
        let fan = run_in_pool(&fit.cfg, || {
            forecast(&fit.result.posterior.final_states, &fit.cfg.problem.cfg, &opts, seed)
        })??;
        let (median, lo95, hi95) = (
            slice::from_raw_parts_mut(median, horizon),
            slice::from_raw_parts_mut(lo95, horizon),
            slice::from_raw_parts_mut(hi95, horizon),
        );
        for (h, b) in fan.observations.iter().enumerate() {
            median[h] = b.median;
            lo95[h] = b.lower[3];
            hi95[h] = b.upper[3];
        }
        Ok(())
    })
}
