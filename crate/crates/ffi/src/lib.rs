//! C interface to `fermiwit`.
//!
//! Objects cross the boundary as opaque handles released with the matching
//! `*_free` function. Every fallible call returns an [`FwStatus`]; on failure
//! [`fw_last_error`] describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fermiwit::discord::{geometric_discord, DiscordConfig};
use fermiwit::files::{StateFile, WitnessFile};
use fermiwit::hubbard::{build_hamiltonian, ground_state, EhmParams};
use fermiwit::schliemann::concurrence;
use fermiwit::states::DensityState;
use fermiwit::witness::{optimal_witness, WitnessConfig, WitnessResult};
use fermiwit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    SolverFailure = 3,
    Panic = 4,
}

/// A density matrix on a fixed-particle-number sector.
pub struct FwState(DensityState);

/// An optimized witness with its robustness and validation report.
pub struct FwWitness(WitnessResult);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FwWitnessOptions {
    pub samples: usize,
    pub rounds: usize,
    pub restarts: usize,
    pub validation_samples: usize,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FwStatus {
    match e {
        Error::Solver(_) | Error::Numerical(_) => FwStatus::SolverFailure,
        _ => FwStatus::InvalidInput,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (FwStatus, String)>) -> FwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            FwStatus::Panic
        }
    }
}

fn lib(e: Error) -> (FwStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FwStatus, String) {
    (FwStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or a valid handle from this library.
unsafe fn state_ref<'a>(p: *const FwState) -> Result<&'a DensityState, (FwStatus, String)> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null("state"))
}

fn out<T>(p: *mut T, v: T) -> Result<(), (FwStatus, String)> {
    if p.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: checked non-null; the caller provides writable storage.
    unsafe { p.write(v) };
    Ok(())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a state file (JSON, row-major `[re, im]` pairs).
///
/// # Safety
/// `json` is a nul-terminated string and `out_state` is writable.
#[no_mangle]
pub unsafe extern "C" fn fw_state_from_json(json: *const c_char, out_state: *mut *mut FwState) -> FwStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| (FwStatus::InvalidInput, e.to_string()))?;
        let rho = StateFile::parse(text).and_then(|f| f.to_state()).map_err(lib)?;
        out(out_state, Box::into_raw(Box::new(FwState(rho))))
    })
}

/// Serializes a state; free the string with [`fw_string_free`].
///
/// # Safety
/// `state` is a valid handle and `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn fw_state_to_json(state: *const FwState, out_json: *mut *mut c_char) -> FwStatus {
    guard(|| {
        let rho = state_ref(state)?;
        let text = StateFile::from_state(rho).to_json().map_err(lib)?;
        out(out_json, to_c_string(text))
    })
}

/// Mixed ground state of the half-filled extended Hubbard ring.
///
/// # Safety
/// `out_state` is writable.
#[no_mangle]
pub unsafe extern "C" fn fw_hubbard_ground_state(
    sites: usize,
    u: f64,
    v: f64,
    out_energy: *mut f64,
    out_state: *mut *mut FwState,
) -> FwStatus {
    guard(|| {
        let h = build_hamiltonian(&EhmParams::half_filled(sites, u, v)).map_err(lib)?;
        let g = ground_state(&h, None).map_err(lib)?;
        if !out_energy.is_null() {
            out(out_energy, g.energy)?;
        }
        out(out_state, Box::into_raw(Box::new(FwState(g.state))))
    })
}

/// # Safety
/// `state` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fw_state_free(state: *mut FwState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Mode count, particle count and sector dimension.
///
/// # Safety
/// `state` is a valid handle; output pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn fw_state_shape(
    state: *const FwState,
    out_modes: *mut usize,
    out_particles: *mut usize,
    out_dim: *mut usize,
) -> FwStatus {
    guard(|| {
        let s = state_ref(state)?.sector();
        out(out_modes, s.modes)?;
        out(out_particles, s.particles)?;
        out(out_dim, s.dim())
    })
}

/// Schliemann concurrence (two fermions in four modes).
///
/// # Safety
/// `state` is a valid handle and `out_value` is writable.
#[no_mangle]
pub unsafe extern "C" fn fw_concurrence(state: *const FwState, out_value: *mut f64) -> FwStatus {
    guard(|| {
        let c = concurrence(state_ref(state)?).map_err(lib)?;
        out(out_value, c)
    })
}

/// Geometric discord (two fermions in four modes).
///
/// # Safety
/// `state` is a valid handle and `out_value` is writable.
#[no_mangle]
pub unsafe extern "C" fn fw_discord(state: *const FwState, restarts: usize, seed: u64, out_value: *mut f64) -> FwStatus {
    guard(|| {
        let cfg = DiscordConfig { restarts, seed, ..DiscordConfig::default() };
        let r = geometric_discord(state_ref(state)?, &cfg).map_err(lib)?;
        out(out_value, r.value)
    })
}

/// Default witness options for a sector.
///
/// # Safety
/// `out_options` is writable.
#[no_mangle]
pub unsafe extern "C" fn fw_witness_options_default(
    modes: usize,
    particles: usize,
    out_options: *mut FwWitnessOptions,
) -> FwStatus {
    guard(|| {
        let sector = fermiwit::fock::Sector::new(modes, particles).map_err(lib)?;
        let c = WitnessConfig::for_sector(sector);
        out(
            out_options,
            FwWitnessOptions {
                samples: c.samples,
                rounds: c.rounds,
                restarts: c.restarts,
                validation_samples: c.validation_samples,
                seed: c.seed,
            },
        )
    })
}

/// Optimal witness for `state`; `options` may be null for the defaults.
///
/// # Safety
/// `state` is a valid handle, `options` is null or readable, `out_witness`
/// is writable.
#[no_mangle]
pub unsafe extern "C" fn fw_optimal_witness(
    state: *const FwState,
    options: *const FwWitnessOptions,
    out_witness: *mut *mut FwWitness,
) -> FwStatus {
    guard(|| {
        let rho = state_ref(state)?;
        let mut cfg = WitnessConfig::for_sector(rho.sector());
        if let Some(o) = options.as_ref() {
            cfg.samples = o.samples;
            cfg.rounds = o.rounds;
            cfg.restarts = o.restarts;
            cfg.validation_samples = o.validation_samples;
            cfg.seed = o.seed;
        }
        let r = optimal_witness(rho, &cfg).map_err(lib)?;
        out(out_witness, Box::into_raw(Box::new(FwWitness(r))))
    })
}

/// Robustness, certified upper bound, and the smallest expectation over the
/// validation Slater determinants.
///
/// # Safety
/// `witness` is a valid handle; output pointers are writable or null.
#[no_mangle]
pub unsafe extern "C" fn fw_witness_values(
    witness: *const FwWitness,
    out_robustness: *mut f64,
    out_dual_bound: *mut f64,
    out_validation_min: *mut f64,
) -> FwStatus {
    guard(|| {
        let r = &witness.as_ref().ok_or_else(|| null("witness"))?.0;
        for (p, v) in [
            (out_robustness, r.robustness),
            (out_dual_bound, r.dual_bound),
            (out_validation_min, r.validation.min_validation_value),
        ] {
            if !p.is_null() {
                out(p, v)?;
            }
        }
        Ok(())
    })
}

/// Serializes the witness with its report; free with [`fw_string_free`].
///
/// # Safety
/// `witness` is a valid handle and `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn fw_witness_to_json(witness: *const FwWitness, out_json: *mut *mut c_char) -> FwStatus {
    guard(|| {
        let r = &witness.as_ref().ok_or_else(|| null("witness"))?.0;
        let text = WitnessFile::from_result(r).to_json().map_err(lib)?;
        out(out_json, to_c_string(text))
    })
}

/// # Safety
/// `witness` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fw_witness_free(witness: *mut FwWitness) {
    if !witness.is_null() {
        drop(Box::from_raw(witness));
    }
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
