//! C ABI over `iiclab`.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns an [`IiclabStatus`]; on failure the message
//! is available from [`iiclab_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use iiclab::cli::{self, Command};
use iiclab::config::Config;
use iiclab::engine::PercolationConfig;
use iiclab::estimators::{self, Estimate};
use iiclab::kernels::{self, Kernel};
use iiclab::lattice::{LatticeSpec, Region, Site};
use iiclab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IiclabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    TooLarge = 3,
    Unsupported = 4,
    Config = 5,
    Io = 6,
    Panic = 7,
}

/// A Monte Carlo estimate with its sample provenance.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IiclabEstimate {
    pub value: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_samples: u64,
    pub n_truncated: u64,
    pub seed: u64,
    pub sample_start: u64,
    pub sample_end: u64,
}

impl From<&Estimate> for IiclabEstimate {
    fn from(e: &Estimate) -> Self {
        IiclabEstimate {
            value: e.value,
            stderr: e.stderr,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            n_samples: e.n_samples,
            n_truncated: e.n_truncated,
            seed: e.seed,
            sample_start: e.sample_start,
            sample_end: e.sample_end,
        }
    }
}

/// Lattice, edge probability and seed.
pub struct IiclabConfig(PercolationConfig);

/// A strictly positive kernel.
pub struct IiclabKernel(Kernel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IiclabStatus {
    match e {
        Error::TooLarge(_) => IiclabStatus::TooLarge,
        Error::Unsupported(_) => IiclabStatus::Unsupported,
        Error::Config(_) | Error::Parse(_) => IiclabStatus::Config,
        Error::Io(_) => IiclabStatus::Io,
        _ => IiclabStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IiclabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IiclabStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            IiclabStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            IiclabStatus::Panic
        }
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Lib(Error::Parse(format!("{what} is not UTF-8"))))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn iiclab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn iiclab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Nearest-neighbor lattice in dimension `d` (or spread-out with range
/// `lambda > 0`) at edge probability `p`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iiclab_config_new(d: u32, lambda: u32, p: f64, seed: u64, out: *mut *mut IiclabConfig) -> IiclabStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let spec = if lambda == 0 { LatticeSpec::nearest_neighbor(d as usize)? } else { LatticeSpec::spread_out(d as usize, lambda)? };
        let cfg = PercolationConfig::new(spec, p, seed)?;
        *out = Box::into_raw(Box::new(IiclabConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`iiclab_config_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iiclab_config_free(cfg: *mut IiclabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn iiclab_config_set_p(cfg: *mut IiclabConfig, p: f64) -> IiclabStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or(Fail::Null("cfg"))?;
        c.0 = PercolationConfig::new(c.0.spec, p, c.0.seed)?;
        Ok(())
    })
}

/// `P(0 <-> dB(radius))` from `n` samples.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iiclab_one_arm(
    cfg: *const IiclabConfig,
    radius: i64,
    n: u64,
    cap: u64,
    out: *mut IiclabEstimate,
) -> IiclabStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let o = out.as_mut().ok_or(Fail::Null("out"))?;
        let prof = estimators::one_arm_profile(&c.0, &[radius], n, cap as usize)?;
        *o = (&prof[0].1).into();
        Ok(())
    })
}

/// `P(0 <-> x)` with `x` given by `d` coordinates, inside `B(restriction)`
/// when `restriction >= 0`.
///
/// # Safety
/// `coords` must point to `d` integers; `cfg` must be live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn iiclab_two_point(
    cfg: *const IiclabConfig,
    coords: *const i32,
    d: u32,
    restriction: i64,
    n: u64,
    cap: u64,
    out: *mut IiclabEstimate,
) -> IiclabStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let x = Site::new(slice(coords, d as usize, "coords")?);
        let o = out.as_mut().ok_or(Fail::Null("out"))?;
        let region = if restriction >= 0 { Some(Region::ball(Site::origin(c.0.spec.d), restriction)?) } else { None };
        let prof = estimators::two_point_profile(&c.0, &[x], region.as_ref(), n, cap as usize)?;
        *o = (&prof[0].1).into();
        Ok(())
    })
}

/// Kernel from `rows * cols` row-major positive entries.
///
/// # Safety
/// `entries` must point to `rows * cols` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iiclab_kernel_new(rows: usize, cols: usize, entries: *const f64, out: *mut *mut IiclabKernel) -> IiclabStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidKernel("empty kernel".into()).into());
        }
        let flat = slice(entries, rows.checked_mul(cols).ok_or(Fail::Lib(Error::TooLarge("kernel size".into())))?, "entries")?;
        let m: Vec<Vec<f64>> = flat.chunks(cols).map(<[f64]>::to_vec).collect();
        *out = Box::into_raw(Box::new(IiclabKernel(Kernel::from_matrix(&m)?)));
        Ok(())
    })
}

/// # Safety
/// `k` must come from [`iiclab_kernel_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iiclab_kernel_free(k: *mut IiclabKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Hopf's `kappa` and the contraction factor `(kappa-1)/(kappa+1)`.
///
/// # Safety
/// `k` must be live; `kappa` and `contraction` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn iiclab_kernel_kappa(k: *const IiclabKernel, kappa: *mut f64, contraction: *mut f64) -> IiclabStatus {
    guard(|| {
        let k = deref(k, "kernel")?;
        *kappa.as_mut().ok_or(Fail::Null("kappa"))? = k.0.kappa();
        *contraction.as_mut().ok_or(Fail::Null("contraction"))? = k.0.contraction();
        Ok(())
    })
}

/// `(Tf)(i)` for each row `i`; `f` has `n_cols` entries, `out` `n_rows`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn iiclab_kernel_apply(k: *const IiclabKernel, f: *const f64, n_f: usize, out: *mut f64, n_out: usize) -> IiclabStatus {
    guard(|| {
        let k = deref(k, "kernel")?;
        if n_out != k.0.n_rows() {
            return Err(Error::DimensionMismatch { expected: k.0.n_rows(), got: n_out }.into());
        }
        let v = k.0.apply(slice(f, n_f, "f")?)?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        std::slice::from_raw_parts_mut(out, n_out).copy_from_slice(&v);
        Ok(())
    })
}

/// Relative oscillation of `f/g`.
///
/// # Safety
/// `f` and `g` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iiclab_oscillation(f: *const f64, g: *const f64, n: usize, out: *mut f64) -> IiclabStatus {
    guard(|| {
        let v = kernels::oscillation(slice(f, n, "f")?, slice(g, n, "g")?)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = v;
        Ok(())
    })
}

/// Runs a CLI subcommand (e.g. `"hopf-demo"`) with a TOML configuration
/// and returns its JSON report in `json_out`, to be released with
/// [`iiclab_string_free`]. `exit_code` receives the command's exit code.
///
/// # Safety
/// `command` and `config_toml` must be NUL-terminated strings; output
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn iiclab_run_command(
    command: *const c_char,
    config_toml: *const c_char,
    seed: u64,
    json_out: *mut *mut c_char,
    exit_code: *mut i32,
) -> IiclabStatus {
    guard(|| {
        let name = text(command, "command")?;
        let cfg = Config::from_toml(text(config_toml, "config_toml")?)?;
        if json_out.is_null() || exit_code.is_null() {
            return Err(Fail::Null("output"));
        }
        let cmd = command_by_name(name).ok_or_else(|| Fail::Lib(Error::Config(format!("unknown command {name:?}"))))?;
        let rep = cli::run_command(cmd, &cfg, seed)?;
        let s = serde_json::to_string_pretty(&rep.json).map_err(|e| Fail::Lib(Error::Parse(e.to_string())))?;
        *json_out = CString::new(s).map_err(|e| Fail::Lib(Error::Parse(e.to_string())))?.into_raw();
        *exit_code = rep.status;
        Ok(())
    })
}

fn command_by_name(name: &str) -> Option<Command> {
    use Command::*;
    [
        EstimateTwoPoint,
        EstimateOneArm,
        FindPc,
        ScanGoodClusters,
        ExtractKernels,
        ReconstructArm,
        HopfDemo,
        IicConverge,
        SupercriticalSweep,
        OracleBattery,
    ]
    .into_iter()
    .find(|c| c.name() == name)
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iiclab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
