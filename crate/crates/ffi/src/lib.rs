//! C ABI over the vitalrl engine.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a [`VrlStatus`];
//! on failure, [`vrl_last_error_message`] describes what went wrong on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vitalrl::env::{EpisodeConfig, MonitoringEnv, SubEnv};
use vitalrl::mews::{canonical_table, MewsScore, VitalKind};
use vitalrl::neural::{self, QNetwork};
use vitalrl::reward::{ActionId, RewardMatrix};
use vitalrl::Error;

pub const VRL_VITAL_HEART_RATE: u32 = 0;
pub const VRL_VITAL_RESP_RATE: u32 = 1;
pub const VRL_VITAL_SPO2: u32 = 2;
pub const VRL_VITAL_TEMPERATURE: u32 = 3;
pub const VRL_VITAL_SEDATION: u32 = 4;
pub const VRL_NUM_ACTIONS: usize = 5;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Config = 4,
    Numerical = 5,
    EpisodeComplete = 6,
    Io = 7,
    Panic = 8,
}

/// A loaded Q-network and the vital it was trained on.
pub struct VrlModel {
    net: QNetwork,
    vital: VitalKind,
}

/// A single-vital monitoring environment over a caller-supplied stream.
pub struct VrlEnv {
    sub: SubEnv,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(e: &Error) -> VrlStatus {
    match e {
        _ if e.is_numerical() => VrlStatus::Numerical,
        Error::Parse { .. } | Error::UnsupportedVersion { .. } => VrlStatus::Parse,
        Error::EpisodeComplete { .. } => VrlStatus::EpisodeComplete,
        Error::Io { .. } => VrlStatus::Io,
        Error::InvalidMeasurement { .. }
        | Error::InvalidCategory { .. }
        | Error::Domain(_)
        | Error::Shape { .. } => VrlStatus::InvalidArgument,
        _ => VrlStatus::Config,
    }
}

fn fail(status: VrlStatus, msg: &str) -> VrlStatus {
    set_last_error(msg);
    status
}

/// Run `body`, converting engine errors and panics into status codes.
fn guard<F>(body: F) -> VrlStatus
where
    F: FnOnce() -> Result<(), (VrlStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VrlStatus::Ok,
        Ok(Err((status, msg))) => fail(status, &msg),
        Err(_) => fail(VrlStatus::Panic, "internal panic"),
    }
}

fn engine(e: Error) -> (VrlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (VrlStatus, String) {
    (VrlStatus::NullPointer, format!("{what} is null"))
}

fn vital_from_code(code: u32) -> Result<VitalKind, (VrlStatus, String)> {
    match code {
        VRL_VITAL_HEART_RATE => Ok(VitalKind::HeartRate),
        VRL_VITAL_RESP_RATE => Ok(VitalKind::RespiratoryRate),
        VRL_VITAL_SPO2 => Ok(VitalKind::OxygenSaturation),
        VRL_VITAL_TEMPERATURE => Ok(VitalKind::Temperature),
        VRL_VITAL_SEDATION => Ok(VitalKind::SedationScore),
        other => Err((
            VrlStatus::InvalidArgument,
            format!("unknown vital code {other}"),
        )),
    }
}

fn vital_code(vital: VitalKind) -> u32 {
    match vital {
        VitalKind::HeartRate => VRL_VITAL_HEART_RATE,
        VitalKind::RespiratoryRate => VRL_VITAL_RESP_RATE,
        VitalKind::OxygenSaturation => VRL_VITAL_SPO2,
        VitalKind::Temperature => VRL_VITAL_TEMPERATURE,
        VitalKind::SedationScore => VRL_VITAL_SEDATION,
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize) -> Result<&'a [f64], (VrlStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn write_features(
    features: &[f64],
    out: *mut f64,
    cap: usize,
) -> Result<(), (VrlStatus, String)> {
    if out.is_null() {
        return Ok(());
    }
    if cap < features.len() {
        return Err((
            VrlStatus::InvalidArgument,
            format!("feature buffer holds {cap}, need {}", features.len()),
        ));
    }
    ptr::copy_nonoverlapping(features.as_ptr(), out, features.len());
    Ok(())
}

/// Message for the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vrl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vrl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Early warning score (0..=4) of a reading. Sedation readings are codes 0..=3.
///
/// # Safety
/// `out_score` must be null or point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_classify(vital: u32, value: f64, out_score: *mut u8) -> VrlStatus {
    guard(|| {
        if out_score.is_null() {
            return Err(null("out_score"));
        }
        let score = canonical_table()
            .classify(vital_from_code(vital)?, value)
            .map_err(engine)?;
        *out_score = score.value();
        Ok(())
    })
}

/// Reward for taking `action` when the true score is `score`.
///
/// # Safety
/// `out_reward` must be null or point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_reward(score: u8, action: u8, out_reward: *mut i32) -> VrlStatus {
    guard(|| {
        if out_reward.is_null() {
            return Err(null("out_reward"));
        }
        let s = MewsScore::new(score).map_err(engine)?;
        let a = ActionId::new(action).map_err(engine)?;
        *out_reward = RewardMatrix::default().reward(s, a);
        Ok(())
    })
}

/// Parse a model document (NUL-terminated JSON text).
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out_model` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_model_load(
    json: *const c_char,
    out_model: *mut *mut VrlModel,
) -> VrlStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        *out_model = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (VrlStatus::Parse, "model text is not UTF-8".to_string()))?;
        let (net, meta) = neural::load(text).map_err(engine)?;
        *out_model = Box::into_raw(Box::new(VrlModel {
            net,
            vital: meta.vital,
        }));
        Ok(())
    })
}

/// Read and parse a model document from a file path.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out_model` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_model_load_file(
    path: *const c_char,
    out_model: *mut *mut VrlModel,
) -> VrlStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        *out_model = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (VrlStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let text =
            std::fs::read_to_string(path).map_err(|e| (VrlStatus::Io, format!("{path}: {e}")))?;
        let (net, meta) = neural::load(&text).map_err(engine)?;
        *out_model = Box::into_raw(Box::new(VrlModel {
            net,
            vital: meta.vital,
        }));
        Ok(())
    })
}

/// Number of inputs the model expects.
///
/// # Safety
/// `model` must come from `vrl_model_load*`; `out_dim` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_model_input_dim(
    model: *const VrlModel,
    out_dim: *mut usize,
) -> VrlStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_dim.is_null() {
            return Err(null("out_dim"));
        }
        *out_dim = model.net.input_dim();
        Ok(())
    })
}

/// Vital code the model was trained on.
///
/// # Safety
/// `model` must come from `vrl_model_load*`; `out_vital` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_model_vital(model: *const VrlModel, out_vital: *mut u32) -> VrlStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_vital.is_null() {
            return Err(null("out_vital"));
        }
        *out_vital = vital_code(model.vital);
        Ok(())
    })
}

/// Q-values for one state; writes `VRL_NUM_ACTIONS` values to `out_q`.
///
/// # Safety
/// `state` must hold `len` doubles; `out_q` must hold `VRL_NUM_ACTIONS` doubles.
#[no_mangle]
pub unsafe extern "C" fn vrl_model_forward(
    model: *const VrlModel,
    state: *const f64,
    len: usize,
    out_q: *mut f64,
) -> VrlStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_q.is_null() {
            return Err(null("out_q"));
        }
        let q = model.net.forward(slice(state, len)?).map_err(engine)?;
        ptr::copy_nonoverlapping(q.as_ptr(), out_q, VRL_NUM_ACTIONS);
        Ok(())
    })
}

/// Greedy action (lowest index on ties) for one state.
///
/// # Safety
/// `state` must hold `len` doubles; `out_action` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_model_greedy_action(
    model: *const VrlModel,
    state: *const f64,
    len: usize,
    out_action: *mut u8,
) -> VrlStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_action.is_null() {
            return Err(null("out_action"));
        }
        let q = model.net.forward(slice(state, len)?).map_err(engine)?;
        *out_action = vitalrl::agents::argmax(&q) as u8;
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or come from `vrl_model_load*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vrl_model_free(model: *mut VrlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Environment over `len` readings of one vital. Episodes last `monitor_length`
/// steps, so `len` must be at least `monitor_length + 1`. Observations carry the
/// last `window` normalized readings.
///
/// # Safety
/// `values` must hold `len` doubles; `out_env` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_env_new(
    vital: u32,
    values: *const f64,
    len: usize,
    monitor_length: usize,
    window: usize,
    out_env: *mut *mut VrlEnv,
) -> VrlStatus {
    guard(|| {
        if out_env.is_null() {
            return Err(null("out_env"));
        }
        *out_env = ptr::null_mut();
        let vital = vital_from_code(vital)?;
        let values = slice(values, len)?;
        let config = EpisodeConfig {
            monitor_length,
            episodes: 1,
            gamma: 0.0,
            seed: 0,
            window,
        };
        let env = MonitoringEnv::new(
            &[(vital, values)],
            &config,
            canonical_table(),
            RewardMatrix::default(),
        )
        .map_err(engine)?;
        let sub = env.into_agents().pop().expect("one stream");
        *out_env = Box::into_raw(Box::new(VrlEnv { sub }));
        Ok(())
    })
}

/// Start a new episode. Writes the first observation's features (window
/// length) to `out_features` unless it is null.
///
/// # Safety
/// `env` must come from `vrl_env_new`; `out_features` must be null or hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn vrl_env_reset(
    env: *mut VrlEnv,
    out_features: *mut f64,
    cap: usize,
) -> VrlStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let obs = env.sub.reset();
        write_features(&obs.features, out_features, cap)
    })
}

/// Take one step. Writes the reward, the done flag (0 or 1) and the next
/// observation's features.
///
/// # Safety
/// `env` must come from `vrl_env_new`; out pointers must be null or writable
/// (`out_features` holding `cap` doubles).
#[no_mangle]
pub unsafe extern "C" fn vrl_env_step(
    env: *mut VrlEnv,
    action: u8,
    out_reward: *mut i32,
    out_done: *mut u8,
    out_features: *mut f64,
    cap: usize,
) -> VrlStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let action = ActionId::new(action).map_err(engine)?;
        let out = env.sub.step(action).map_err(engine)?;
        if !out_reward.is_null() {
            *out_reward = out.reward;
        }
        if !out_done.is_null() {
            *out_done = u8::from(out.done);
        }
        write_features(&out.next.features, out_features, cap)
    })
}

/// Sum of rewards in the current episode.
///
/// # Safety
/// `env` must come from `vrl_env_new`; `out_score` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn vrl_env_episode_score(
    env: *const VrlEnv,
    out_score: *mut i64,
) -> VrlStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if out_score.is_null() {
            return Err(null("out_score"));
        }
        *out_score = env.sub.episode_score();
        Ok(())
    })
}

/// Release an environment. Null is ignored.
///
/// # Safety
/// `env` must be null or come from `vrl_env_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vrl_env_free(env: *mut VrlEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}
