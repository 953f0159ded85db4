//! C ABI over the abcnet toolkit: opaque handles, integer status codes, and
//! a thread-local last-error message.
//!
//! Every fallible call returns an [`AbcnetStatus`]; on failure the detailed
//! message is available from `abcnet_last_error_message` until the next
//! failing call on the same thread. Handles are created and released in
//! matched pairs (`abcnet_config_load`/`abcnet_config_free`,
//! `abcnet_run`/`abcnet_run_free`); passing a null handle is reported as
//! `ABCNET_STATUS_NULL_POINTER`, never dereferenced.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use abcnet::config::{config_from_text, LoadedConfig};
use abcnet::error::AbcError;
use abcnet::inference::RunRecord;
use abcnet::persistence::write_run_artifact;
use abcnet::posterior::{
    credible_interval, weighted_mean, weighted_variance, PosteriorSample,
};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbcnetStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Stall = 3,
    Io = 4,
    InvalidArgument = 5,
    Utf8 = 6,
}

/// Opaque handle to a loaded, validated experiment configuration.
pub struct AbcnetConfig {
    loaded: LoadedConfig,
    base_dir: PathBuf,
}

/// Opaque handle to a completed inference run.
pub struct AbcnetRun {
    config: LoadedConfig,
    record: RunRecord,
    posterior: PosteriorSample,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: AbcnetStatus, message: &str) -> AbcnetStatus {
    let sanitized: Vec<u8> = message.bytes().filter(|b| *b != 0).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
    status
}

fn fail_error(e: &AbcError) -> AbcnetStatus {
    let status = match e {
        AbcError::UnknownName(_) | AbcError::Domain(_) | AbcError::BudgetExceeded { .. } => {
            AbcnetStatus::InvalidArgument
        }
        _ => match e.exit_code() {
            3 => AbcnetStatus::Stall,
            4 => AbcnetStatus::Io,
            _ => AbcnetStatus::Config,
        },
    };
    fail(status, &e.to_string())
}

fn guard(f: impl FnOnce() -> AbcnetStatus) -> AbcnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(AbcnetStatus::Config, "internal error: unexpected panic"),
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, AbcnetStatus> {
    if ptr.is_null() {
        return Err(fail(AbcnetStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(AbcnetStatus::Utf8, "string argument is not valid UTF-8"))
}

fn out_slot<'a, T>(ptr: *mut T) -> Result<&'a mut T, AbcnetStatus> {
    if ptr.is_null() {
        return Err(fail(AbcnetStatus::NullPointer, "output pointer is null"));
    }
    Ok(unsafe { &mut *ptr })
}

unsafe fn run_ref<'a>(run: *const AbcnetRun) -> Result<&'a AbcnetRun, AbcnetStatus> {
    if run.is_null() {
        return Err(fail(AbcnetStatus::NullPointer, "run handle is null"));
    }
    Ok(&*run)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn abcnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn abcnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load and validate a config file; on success stores a new handle in
/// `out_config`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out_config` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn abcnet_config_load(
    path: *const c_char,
    out_config: *mut *mut AbcnetConfig,
) -> AbcnetStatus {
    guard(|| {
        let path = match utf8_arg(path) {
            Ok(p) => PathBuf::from(p),
            Err(s) => return s,
        };
        let out = match out_slot(out_config) {
            Ok(o) => o,
            Err(s) => return s,
        };
        match abcnet::config::load_config(&path, &[], None, None) {
            Ok(loaded) => {
                let base_dir = path
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."));
                *out = Box::into_raw(Box::new(AbcnetConfig { loaded, base_dir }));
                AbcnetStatus::Ok
            }
            Err(e) => fail_error(&e),
        }
    })
}

/// Apply one `section.key=value` override, revalidating the configuration.
///
/// # Safety
/// `config` must be a live handle from `abcnet_config_load` and `assignment`
/// a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn abcnet_config_override(
    config: *mut AbcnetConfig,
    assignment: *const c_char,
) -> AbcnetStatus {
    guard(|| {
        if config.is_null() {
            return fail(AbcnetStatus::NullPointer, "config handle is null");
        }
        let assignment = match utf8_arg(assignment) {
            Ok(a) => a.to_string(),
            Err(s) => return s,
        };
        let handle = &mut *config;
        match config_from_text(
            &handle.loaded.echo,
            &handle.base_dir,
            &[assignment],
            None,
            None,
        ) {
            Ok(loaded) => {
                handle.loaded = loaded;
                AbcnetStatus::Ok
            }
            Err(e) => fail_error(&e),
        }
    })
}

/// Release a config handle (null is a no-op).
///
/// # Safety
/// `config` must be null or a live handle, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn abcnet_config_free(config: *mut AbcnetConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Execute the configured engine; on success stores a new run handle in
/// `out_run`.
///
/// # Safety
/// `config` must be a live config handle and `out_run` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abcnet_run(
    config: *const AbcnetConfig,
    out_run: *mut *mut AbcnetRun,
) -> AbcnetStatus {
    guard(|| {
        if config.is_null() {
            return fail(AbcnetStatus::NullPointer, "config handle is null");
        }
        let out = match out_slot(out_run) {
            Ok(o) => o,
            Err(s) => return s,
        };
        let loaded = (*config).loaded.clone();
        let record = match abcnet::inference::run(&loaded.experiment) {
            Ok(r) => r,
            Err(e) => return fail_error(&e),
        };
        let posterior = match PosteriorSample::from_record(&record, &loaded.experiment.inferred) {
            Ok(p) => p,
            Err(e) => return fail_error(&e),
        };
        *out = Box::into_raw(Box::new(AbcnetRun {
            config: loaded,
            record,
            posterior,
        }));
        AbcnetStatus::Ok
    })
}

/// Release a run handle (null is a no-op).
///
/// # Safety
/// `run` must be null or a live handle, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn abcnet_run_free(run: *mut AbcnetRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of stored populations.
///
/// # Safety
/// `run` must be a live run handle and `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abcnet_run_population_count(
    run: *const AbcnetRun,
    out_count: *mut usize,
) -> AbcnetStatus {
    guard(|| {
        let run = match run_ref(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        match out_slot(out_count) {
            Ok(o) => {
                *o = run.record.populations.len();
                AbcnetStatus::Ok
            }
            Err(s) => s,
        }
    })
}

unsafe fn population_field(
    run: *const AbcnetRun,
    index: usize,
    out_value: *mut f64,
    field: impl Fn(&abcnet::kernels::Population) -> f64,
) -> AbcnetStatus {
    let run = match run_ref(run) {
        Ok(r) => r,
        Err(s) => return s,
    };
    let out = match out_slot(out_value) {
        Ok(o) => o,
        Err(s) => return s,
    };
    match run.record.populations.get(index) {
        Some(pop) => {
            *out = field(pop);
            AbcnetStatus::Ok
        }
        None => fail(
            AbcnetStatus::InvalidArgument,
            &format!(
                "population index {index} out of range ({} populations)",
                run.record.populations.len()
            ),
        ),
    }
}

/// Acceptance threshold of population `index` (0-based).
///
/// # Safety
/// `run` must be a live run handle and `out_epsilon` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abcnet_run_epsilon(
    run: *const AbcnetRun,
    index: usize,
    out_epsilon: *mut f64,
) -> AbcnetStatus {
    guard(|| population_field(run, index, out_epsilon, |p| p.epsilon))
}

/// Acceptance rate of population `index` (0-based).
///
/// # Safety
/// `run` must be a live run handle and `out_rate` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abcnet_run_acceptance_rate(
    run: *const AbcnetRun,
    index: usize,
    out_rate: *mut f64,
) -> AbcnetStatus {
    guard(|| population_field(run, index, out_rate, |p| p.diagnostics.acceptance_rate))
}

/// Weighted posterior mean of a parameter column in the final population.
///
/// # Safety
/// `run` must be a live run handle, `name` a valid NUL-terminated string,
/// and `out_mean` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abcnet_posterior_mean(
    run: *const AbcnetRun,
    name: *const c_char,
    out_mean: *mut f64,
) -> AbcnetStatus {
    guard(|| {
        let run = match run_ref(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let name = match utf8_arg(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let out = match out_slot(out_mean) {
            Ok(o) => o,
            Err(s) => return s,
        };
        match weighted_mean(&run.posterior, name) {
            Ok(v) => {
                *out = v;
                AbcnetStatus::Ok
            }
            Err(e) => fail_error(&e),
        }
    })
}

/// Weighted posterior variance of a parameter column in the final population.
///
/// # Safety
/// `run` must be a live run handle, `name` a valid NUL-terminated string,
/// and `out_variance` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abcnet_posterior_variance(
    run: *const AbcnetRun,
    name: *const c_char,
    out_variance: *mut f64,
) -> AbcnetStatus {
    guard(|| {
        let run = match run_ref(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let name = match utf8_arg(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let out = match out_slot(out_variance) {
            Ok(o) => o,
            Err(s) => return s,
        };
        match weighted_variance(&run.posterior, name) {
            Ok(v) => {
                *out = v;
                AbcnetStatus::Ok
            }
            Err(e) => fail_error(&e),
        }
    })
}

/// Equal-tailed credible interval of a parameter at the given mass.
///
/// # Safety
/// `run` must be a live run handle, `name` a valid NUL-terminated string,
/// and `out_lo`/`out_hi` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn abcnet_credible_interval(
    run: *const AbcnetRun,
    name: *const c_char,
    mass: f64,
    out_lo: *mut f64,
    out_hi: *mut f64,
) -> AbcnetStatus {
    guard(|| {
        let run = match run_ref(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let name = match utf8_arg(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let (lo_slot, hi_slot) = match (out_slot(out_lo), out_slot(out_hi)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match credible_interval(&run.posterior, name, mass) {
            Ok((lo, hi)) => {
                *lo_slot = lo;
                *hi_slot = hi;
                AbcnetStatus::Ok
            }
            Err(e) => fail_error(&e),
        }
    })
}

/// Write the complete run artifact (config echo, metadata, population
/// tables, posterior summary, plot data) under `out_dir`.
///
/// # Safety
/// `run` must be a live run handle and `out_dir` a valid NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn abcnet_write_artifact(
    run: *const AbcnetRun,
    out_dir: *const c_char,
) -> AbcnetStatus {
    guard(|| {
        let run = match run_ref(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let dir = match utf8_arg(out_dir) {
            Ok(d) => PathBuf::from(d),
            Err(s) => return s,
        };
        match write_run_artifact(&dir, &run.config, &run.record) {
            Ok(()) => AbcnetStatus::Ok,
            Err(e) => fail_error(&e),
        }
    })
}
