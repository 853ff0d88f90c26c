//! C ABI for the ritzkit core: opaque handles, integer error codes, and a
//! thread-local last-error message. See `include/ritzkit.h` for the
//! matching declarations.
//!
//! Conventions:
//! - All functions return `RITZKIT_OK` (0) on success or a negative code.
//! - Handles are opaque pointers owned by the library; free them with the
//!   matching `*_free` function. Passing NULL where a handle is required
//!   returns `RITZKIT_ERR_NULL`.
//! - String inputs are NUL-terminated UTF-8.

use ritzkit::config::ExperimentConfig;
use ritzkit::error::RitzError;
use ritzkit::net::NetworkParams;
use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::ptr;

pub const RITZKIT_OK: c_int = 0;
pub const RITZKIT_ERR_NULL: c_int = -1;
pub const RITZKIT_ERR_UTF8: c_int = -2;
pub const RITZKIT_ERR_CONFIG: c_int = -3;
pub const RITZKIT_ERR_NUMERIC: c_int = -4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn code_for(err: &RitzError) -> c_int {
    match err {
        RitzError::Config(_) | RitzError::UnknownFunction(_) => RITZKIT_ERR_CONFIG,
        _ => RITZKIT_ERR_NUMERIC,
    }
}

fn fail(err: RitzError) -> c_int {
    let code = code_for(&err);
    set_error(&err.to_string());
    code
}

/// Opaque experiment configuration.
pub struct RitzkitConfig(ExperimentConfig);

/// Opaque trained/loaded network.
pub struct RitzkitNetwork(NetworkParams);

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ritzkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message for the calling thread into `buf`
/// (truncating to `len` bytes including the NUL). Returns the full message
/// length excluding the NUL.
#[no_mangle]
pub extern "C" fn ritzkit_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                // always NUL-terminate
                *buf.add(n - 1) = 0;
            }
        }
        bytes.len() - 1
    })
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        set_error("null string pointer");
        return Err(RITZKIT_ERR_NULL);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        RITZKIT_ERR_UTF8
    })
}

/// Parses and validates a JSON experiment config. On success stores a new
/// handle in `*out`; the caller owns it and must call ritzkit_config_free.
#[no_mangle]
pub unsafe extern "C" fn ritzkit_config_parse(
    json: *const c_char,
    out: *mut *mut RitzkitConfig,
) -> c_int {
    if out.is_null() {
        set_error("null output pointer");
        return RITZKIT_ERR_NULL;
    }
    let text = match read_str(json) {
        Ok(t) => t,
        Err(c) => return c,
    };
    match ExperimentConfig::from_json(text) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(RitzkitConfig(cfg)));
            RITZKIT_OK
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn ritzkit_config_free(cfg: *mut RitzkitConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Overrides the config's RNG seed.
#[no_mangle]
pub unsafe extern "C" fn ritzkit_config_set_seed(cfg: *mut RitzkitConfig, seed: u64) -> c_int {
    if cfg.is_null() {
        set_error("null config handle");
        return RITZKIT_ERR_NULL;
    }
    (*cfg).0.seed = seed;
    RITZKIT_OK
}

/// Runs the experiment, writing artifact files to the config's output
/// directory. Blocks until the run finishes.
#[no_mangle]
pub unsafe extern "C" fn ritzkit_run(cfg: *const RitzkitConfig) -> c_int {
    if cfg.is_null() {
        set_error("null config handle");
        return RITZKIT_ERR_NULL;
    }
    match ritzkit::runner::run_experiment(&(*cfg).0) {
        Ok(_) => RITZKIT_OK,
        Err(e) => fail(e),
    }
}

/// Loads a network from the JSON produced in params_final.json.
#[no_mangle]
pub unsafe extern "C" fn ritzkit_network_load(
    json: *const c_char,
    out: *mut *mut RitzkitNetwork,
) -> c_int {
    if out.is_null() {
        set_error("null output pointer");
        return RITZKIT_ERR_NULL;
    }
    let text = match read_str(json) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            set_error(&e.to_string());
            return RITZKIT_ERR_CONFIG;
        }
    };
    match NetworkParams::from_json(&value) {
        Ok(p) => {
            *out = Box::into_raw(Box::new(RitzkitNetwork(p)));
            RITZKIT_OK
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn ritzkit_network_free(net: *mut RitzkitNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input dimension of a loaded network.
#[no_mangle]
pub unsafe extern "C" fn ritzkit_network_dim(net: *const RitzkitNetwork, out: *mut usize) -> c_int {
    if net.is_null() || out.is_null() {
        set_error("null handle or output pointer");
        return RITZKIT_ERR_NULL;
    }
    *out = (*net).0.d();
    RITZKIT_OK
}

/// Evaluates the network at a point `x` of length `dim`.
#[no_mangle]
pub unsafe extern "C" fn ritzkit_network_eval(
    net: *const RitzkitNetwork,
    x: *const c_double,
    dim: usize,
    out: *mut c_double,
) -> c_int {
    if net.is_null() || x.is_null() || out.is_null() {
        set_error("null handle or pointer");
        return RITZKIT_ERR_NULL;
    }
    let point = std::slice::from_raw_parts(x, dim);
    match (*net).0.eval(point) {
        Ok(v) => {
            *out = v;
            RITZKIT_OK
        }
        Err(e) => fail(e),
    }
}

/// Cole–Hopf reference solution of the Burgers problem with initial
/// condition u(0,x) = −sin(πx) on [−1,1]; requires t > 0.
#[no_mangle]
pub unsafe extern "C" fn ritzkit_burgers_reference(
    t: c_double,
    x: c_double,
    nu: c_double,
    out: *mut c_double,
) -> c_int {
    if out.is_null() {
        set_error("null output pointer");
        return RITZKIT_ERR_NULL;
    }
    match ritzkit::reference::burgers_reference(t, x, nu) {
        Ok(v) => {
            *out = v;
            RITZKIT_OK
        }
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(ritzkit_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn config_roundtrip_and_run() {
        let dir = std::env::temp_dir().join(format!("ritzkit_ffi_{}", std::process::id()));
        let json = format!(
            r#"{{
            "name": "ffi",
            "seed": 1,
            "domain": {{"kind": "time_slab", "t_range": [0.0, 1.0], "space": [[-1.0, 1.0]]}},
            "network": {{"m": 4, "init": "random_feature"}},
            "problem": {{"kind": "burgers", "nu": 0.0031830988618379067, "g": "neg_sin_pi_x"}},
            "collocation": {{"n_interior": 12, "n_boundary": 6}},
            "dynamics": {{"scheme": "igd", "eta": 0.5, "steps": 2}},
            "output_dir": "{}"
        }}"#,
            dir.display()
        );
        let cjson = CString::new(json).unwrap();
        let mut handle: *mut RitzkitConfig = std::ptr::null_mut();
        assert_eq!(unsafe { ritzkit_config_parse(cjson.as_ptr(), &mut handle) }, RITZKIT_OK);
        assert_eq!(unsafe { ritzkit_config_set_seed(handle, 9) }, RITZKIT_OK);
        assert_eq!(unsafe { ritzkit_run(handle) }, RITZKIT_OK);
        unsafe { ritzkit_config_free(handle) };

        let params = std::fs::read_to_string(dir.join("params_final.json")).unwrap();
        let cparams = CString::new(params).unwrap();
        let mut net: *mut RitzkitNetwork = std::ptr::null_mut();
        assert_eq!(unsafe { ritzkit_network_load(cparams.as_ptr(), &mut net) }, RITZKIT_OK);
        let mut d = 0usize;
        assert_eq!(unsafe { ritzkit_network_dim(net, &mut d) }, RITZKIT_OK);
        assert_eq!(d, 2);
        let x = [0.5, 0.25];
        let mut v = 0.0;
        assert_eq!(unsafe { ritzkit_network_eval(net, x.as_ptr(), 2, &mut v) }, RITZKIT_OK);
        assert!(v.is_finite());
        unsafe { ritzkit_network_free(net) };
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn error_paths_set_message() {
        let bad = CString::new("{not json").unwrap();
        let mut handle: *mut RitzkitConfig = std::ptr::null_mut();
        let code = unsafe { ritzkit_config_parse(bad.as_ptr(), &mut handle) };
        assert_eq!(code, RITZKIT_ERR_CONFIG);
        let mut buf = vec![0i8; 256];
        let n = ritzkit_last_error(buf.as_mut_ptr() as *mut c_char, buf.len());
        assert!(n > 0);

        let mut out = 0.0;
        let code = unsafe { ritzkit_burgers_reference(-1.0, 0.0, 0.01, &mut out) };
        assert_eq!(code, RITZKIT_ERR_NUMERIC);
    }

    #[test]
    fn null_handles_rejected() {
        assert_eq!(
            unsafe { ritzkit_config_parse(std::ptr::null(), std::ptr::null_mut()) },
            RITZKIT_ERR_NULL
        );
        assert_eq!(unsafe { ritzkit_run(std::ptr::null()) }, RITZKIT_ERR_NULL);
        let mut out = 0.0;
        assert_eq!(
            unsafe { ritzkit_network_eval(std::ptr::null(), std::ptr::null(), 0, &mut out) },
            RITZKIT_ERR_NULL
        );
    }
}
