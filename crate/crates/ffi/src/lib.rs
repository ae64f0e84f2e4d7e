//! C ABI over `ionsqz`.
//!
//! Every call returns an [`IonsqzStatus`]; on failure the message is kept per
//! thread and read with [`ionsqz_last_error_message`]. States are opaque
//! handles owned by the caller and released with [`ionsqz_state_free`].
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ionsqz::fock::{self, MotionalState, SqueezeParam, XBranch};
use ionsqz::lattice::{derive_params, DriveConfig, TrapConfig};
use ionsqz::phase_space::{self, PhaseAxis, XStateSpec, ZeroSearch};
use ionsqz::protocol::{self, GateMode, Qubit};
use ionsqz::scenario::{self, RunOptions};
use ionsqz::{ErrorKind, C64};
use libc::size_t;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IonsqzStatus {
    Ok = 0,
    InvalidInput = 1,
    Numerical = 2,
    Io = 3,
    NullPointer = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Motional state handle.
pub struct IonsqzState(MotionalState);

/// Harmonic approximation of the dressed trap.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IonsqzDerived {
    pub omega_e: f64,
    pub eta_e: f64,
    pub g_rate: f64,
    pub sigma_ratio: f64,
    pub frame_squeeze: f64,
}

/// Heralded X-state preparation result.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IonsqzOutcome {
    /// 0 for `g`, 1 for `e`.
    pub branch: i32,
    /// 0 for the even state `X+`, 1 for the odd state `X-`.
    pub parity: i32,
    pub probability: f64,
    pub fidelity: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(err: ionsqz::Error) -> IonsqzStatus {
    let status = match err.kind() {
        ErrorKind::Input => IonsqzStatus::InvalidInput,
        ErrorKind::Numerical => IonsqzStatus::Numerical,
        ErrorKind::Io => IonsqzStatus::Io,
    };
    set_error(err.to_string());
    status
}

fn null(what: &str) -> IonsqzStatus {
    set_error(format!("null pointer: {what}"));
    IonsqzStatus::NullPointer
}

fn guard<F: FnOnce() -> IonsqzStatus>(f: F) -> IonsqzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == IonsqzStatus::Ok {
                set_error(String::new());
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            IonsqzStatus::Panic
        }
    }
}

fn branch(parity: i32) -> Result<XBranch, IonsqzStatus> {
    match parity {
        0 => Ok(XBranch::Even),
        1 => Ok(XBranch::Odd),
        other => {
            set_error(format!("parity must be 0 (even) or 1 (odd), got {other}"));
            Err(IonsqzStatus::InvalidInput)
        }
    }
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return fail(e),
        }
    };
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, IonsqzStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error(format!("{what} is not valid UTF-8"));
            Err(IonsqzStatus::InvalidInput)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ionsqz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Byte length of the last error message on this thread, without the NUL.
#[no_mangle]
pub extern "C" fn ionsqz_last_error_length() -> size_t {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_last_error_message(buf: *mut c_char, len: size_t) -> size_t {
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

/// Dressed-trap frequency, Lamb-Dicke parameter and squeezing rate.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_derive_params(
    omega_t: f64,
    eta_g: f64,
    phi: f64,
    epsilon: f64,
    out: *mut IonsqzDerived,
) -> IonsqzStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let trap = try_ffi!(TrapConfig::new(omega_t, eta_g, phi));
        let drive = try_ffi!(DriveConfig::resonant(&trap, epsilon, 0.0));
        let d = derive_params(&trap, &drive);
        *out = IonsqzDerived {
            omega_e: d.omega_e,
            eta_e: d.eta_e,
            g_rate: d.g_rate,
            sigma_ratio: d.sigma_ratio,
            frame_squeeze: d.frame_squeeze(&trap),
        };
        IonsqzStatus::Ok
    })
}

unsafe fn emit(state: MotionalState, out: *mut *mut IonsqzState) -> IonsqzStatus {
    *out = Box::into_raw(Box::new(IonsqzState(state)));
    IonsqzStatus::Ok
}

/// Normalized state from amplitude arrays of length `dim`.
///
/// # Safety
/// `re` and `im` must point to `dim` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_state_from_amplitudes(
    re: *const f64,
    im: *const f64,
    dim: size_t,
    out: *mut *mut IonsqzState,
) -> IonsqzStatus {
    guard(|| {
        if re.is_null() || im.is_null() || out.is_null() {
            return null("re/im/out");
        }
        let re = std::slice::from_raw_parts(re, dim);
        let im = std::slice::from_raw_parts(im, dim);
        let amps = re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect();
        emit(try_ffi!(MotionalState::from_amplitudes(amps)), out)
    })
}

/// Squeezed vacuum `S(r e^{iθ})|0⟩` on `dim` Fock states.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_state_squeezed(
    r: f64,
    theta: f64,
    dim: size_t,
    out: *mut *mut IonsqzState,
) -> IonsqzStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let xi = try_ffi!(SqueezeParam::new(r, theta));
        emit(try_ffi!(fock::squeezed_state_analytic(xi, dim)), out)
    })
}

/// `|X±(r)⟩`; `parity` is 0 for even, 1 for odd.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_state_xstate(
    parity: i32,
    r: f64,
    dim: size_t,
    out: *mut *mut IonsqzState,
) -> IonsqzStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let b = try_status!(branch(parity));
        emit(try_ffi!(MotionalState::x_state(b, r, dim)), out)
    })
}

/// Release a state; null is ignored.
///
/// # Safety
/// `state` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_state_free(state: *mut IonsqzState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of Fock states, or 0 for null.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_state_dim(state: *const IonsqzState) -> size_t {
    state.as_ref().map_or(0, |s| s.0.dim())
}

/// Copy amplitudes out; `len` must be at least the state dimension.
///
/// # Safety
/// `re`, `im` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_state_amplitudes(
    state: *const IonsqzState,
    re: *mut f64,
    im: *mut f64,
    len: size_t,
) -> IonsqzStatus {
    guard(|| {
        let Some(s) = state.as_ref() else { return null("state") };
        if re.is_null() || im.is_null() {
            return null("re/im");
        }
        let dim = s.0.dim();
        if len < dim {
            set_error(format!("buffer of {len} entries, need {dim}"));
            return IonsqzStatus::BufferTooSmall;
        }
        for (k, c) in s.0.amplitudes().iter().enumerate() {
            *re.add(k) = c.re;
            *im.add(k) = c.im;
        }
        IonsqzStatus::Ok
    })
}

/// `⟨a|b⟩`.
///
/// # Safety
/// Handles must be live; `re`, `im` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_state_inner(
    a: *const IonsqzState,
    b: *const IonsqzState,
    re: *mut f64,
    im: *mut f64,
) -> IonsqzStatus {
    guard(|| {
        let (Some(a), Some(b)) = (a.as_ref(), b.as_ref()) else { return null("state") };
        if re.is_null() || im.is_null() {
            return null("re/im");
        }
        let z = try_ffi!(a.0.inner(&b.0));
        *re = z.re;
        *im = z.im;
        IonsqzStatus::Ok
    })
}

/// Closed-form characteristic function `C±(x, p)` of `|X±(r)⟩`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_charfun_closed(parity: i32, r: f64, x: f64, p: f64, out: *mut f64) -> IonsqzStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let spec = try_ffi!(XStateSpec::new(try_status!(branch(parity)), r));
        *out = phase_space::char_function_closed_form_point(&spec, x, p);
        IonsqzStatus::Ok
    })
}

/// `⟨ψ|D(x + ip)|ψ⟩` on a uniform grid, row-major with `x` slow.
///
/// # Safety
/// `re`, `im` must point to `nx * np` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_charfun_numeric(
    state: *const IonsqzState,
    x_start: f64,
    x_stop: f64,
    nx: size_t,
    p_start: f64,
    p_stop: f64,
    np: size_t,
    re: *mut f64,
    im: *mut f64,
) -> IonsqzStatus {
    guard(|| {
        let Some(s) = state.as_ref() else { return null("state") };
        if re.is_null() || im.is_null() {
            return null("re/im");
        }
        let xs = try_ffi!(PhaseAxis::new(x_start, x_stop, nx));
        let ps = try_ffi!(PhaseAxis::new(p_start, p_stop, np));
        let g = try_ffi!(phase_space::char_function_numeric(&s.0, &xs, &ps));
        for (k, c) in g.values.iter().enumerate() {
            *re.add(k) = c.re;
            *im.add(k) = c.im;
        }
        IonsqzStatus::Ok
    })
}

/// Diagonal zeros `x > 0` of `C±`. `count` receives the number found; when it
/// exceeds `cap`, nothing is written and `BufferTooSmall` is returned.
///
/// # Safety
/// `out` must point to `cap` writable doubles; `count` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_diagonal_zeros(
    parity: i32,
    r: f64,
    u_max: f64,
    du: f64,
    out: *mut f64,
    cap: size_t,
    count: *mut size_t,
) -> IonsqzStatus {
    guard(|| {
        if count.is_null() || (out.is_null() && cap > 0) {
            return null("out/count");
        }
        let spec = try_ffi!(XStateSpec::new(try_status!(branch(parity)), r));
        let search = ZeroSearch { u_max, du, ..ZeroSearch::default() };
        let zs = try_ffi!(phase_space::diagonal_zeros(&spec, &search));
        *count = zs.len();
        if zs.len() > cap {
            set_error(format!("{} zeros found, buffer holds {cap}", zs.len()));
            return IonsqzStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(zs.as_ptr(), out, zs.len());
        IonsqzStatus::Ok
    })
}

/// Run the ideal X-state protocol and measure the qubit with `seed`.
/// `out_state` (optional) receives the heralded motional state.
///
/// # Safety
/// `out` must be valid; `out_state` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_prepare_xstate(
    r: f64,
    dim: size_t,
    seed: u64,
    out: *mut IonsqzOutcome,
    out_state: *mut *mut IonsqzState,
) -> IonsqzStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let o = try_ffi!(protocol::prepare_xstate(r, dim, &GateMode::Ideal, seed));
        let (fidelity, _) = try_ffi!(protocol::xstate_fidelity(&o, r));
        *out = IonsqzOutcome {
            branch: if o.branch == Qubit::G { 0 } else { 1 },
            parity: if protocol::heralded(o.branch) == XBranch::Even { 0 } else { 1 },
            probability: o.probability,
            fidelity,
        };
        if !out_state.is_null() {
            return emit(o.post_state, out_state);
        }
        IonsqzStatus::Ok
    })
}

/// Run a TOML scenario config into `out_dir`, as `ionsqz run` does.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ionsqz_run_scenario(config_path: *const c_char, out_dir: *const c_char) -> IonsqzStatus {
    guard(|| {
        let cfg = try_status!(path_arg(config_path, "config_path"));
        let out = try_status!(path_arg(out_dir, "out_dir"));
        try_ffi!(scenario::run_path(cfg, out, &RunOptions::default()));
        IonsqzStatus::Ok
    })
}
