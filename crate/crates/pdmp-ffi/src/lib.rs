//! C ABI for pdmp-core: build a sampler from the same INI configuration the
//! CLI reads, simulate trajectories, and read events back through opaque
//! handles. All functions return a `PdmpStatus` code; on error a thread-local
//! message is available via `pdmp_last_error`.
//!
//! Memory contract: every `*_new`/`*_simulate` output must be released with
//! the matching `*_free`. Handles are not thread-safe; share them read-only
//! or guard them externally.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::ptr;

use pdmp_core::config::{RunConfig, SamplerConfig};
use pdmp_core::engine::{simulate, Characteristics, Trajectory, TrajectoryStatus};
use pdmp_core::rng::RngStreams;
use pdmp_core::samplers::{build_bps, build_zigzag, initial_state};
use pdmp_core::state_space::VelocitySpace;

/// Result code of every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdmpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// The configuration text was rejected (bad UTF-8, syntax, or values).
    InvalidConfig = 2,
    /// An index or time argument was out of range.
    OutOfRange = 3,
    /// The trajectory hit its event cap before reaching t_end.
    ExplosionSuspected = 4,
    /// A thinned kernel observed a rate above its certified bound.
    RateBoundViolated = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: impl AsRef<str>) {
    LAST_ERROR.with(|e| {
        let mut buf = e.borrow_mut();
        buf.clear();
        buf.extend_from_slice(msg.as_ref().as_bytes());
        buf.push(0);
    });
}

/// Sampler handle: parsed configuration plus the built jump mechanisms.
pub struct PdmpSampler {
    config: RunConfig,
    characteristics: Characteristics,
    space: VelocitySpace,
}

/// Trajectory handle returned by `pdmp_simulate`.
pub struct PdmpTrajectory {
    traj: Trajectory,
    flow: pdmp_core::state_space::Flow,
    dim: usize,
}

/// Copy the last error message for the calling thread into `buf` (always
/// NUL-terminated, truncated to `cap` bytes). Returns the full message
/// length in bytes excluding the terminator; 0 means no error is recorded.
/// `buf` may be null to query the length.
#[no_mangle]
pub extern "C" fn pdmp_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let len = msg.len().saturating_sub(1);
        if !buf.is_null() && cap > 0 {
            let n = len.min(cap - 1);
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        len
    })
}

/// Parse an INI configuration (same format as `pdmp-kit --config` files) and
/// build the sampler it describes. On success `*out` owns a new handle.
///
/// # Safety
/// `config_text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdmp_sampler_new(
    config_text: *const c_char,
    out: *mut *mut PdmpSampler,
) -> PdmpStatus {
    if config_text.is_null() || out.is_null() {
        set_error("null pointer argument");
        return PdmpStatus::NullPointer;
    }
    let text = match CStr::from_ptr(config_text).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("configuration text is not valid UTF-8");
            return PdmpStatus::InvalidConfig;
        }
    };
    let config = match RunConfig::parse(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return PdmpStatus::InvalidConfig;
        }
    };
    let characteristics = match &config.sampler {
        SamplerConfig::Bps(spec) => build_bps(spec),
        SamplerConfig::ZigZag(spec) => build_zigzag(spec),
    };
    let space = config.sampler.velocity_space();
    *out = Box::into_raw(Box::new(PdmpSampler {
        config,
        characteristics,
        space,
    }));
    PdmpStatus::Ok
}

/// Release a sampler handle. Null is a no-op.
///
/// # Safety
/// `sampler` must come from `pdmp_sampler_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pdmp_sampler_free(sampler: *mut PdmpSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Position/velocity dimension of the sampler's state space.
///
/// # Safety
/// `sampler` must be a live handle from `pdmp_sampler_new`.
#[no_mangle]
pub unsafe extern "C" fn pdmp_sampler_dim(sampler: *const PdmpSampler) -> usize {
    if sampler.is_null() {
        return 0;
    }
    (*sampler).space.dim()
}

/// Simulate one trajectory to the configured `t_end`, overriding the config
/// seed with `seed`. A trajectory handle is produced even on non-Ok status
/// (explosion / rate-bound violation) so the partial path can be inspected;
/// `*out` is null only when the sampler handle itself is unusable.
///
/// # Safety
/// `sampler` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdmp_simulate(
    sampler: *const PdmpSampler,
    seed: u64,
    out: *mut *mut PdmpTrajectory,
) -> PdmpStatus {
    if sampler.is_null() || out.is_null() {
        set_error("null pointer argument");
        return PdmpStatus::NullPointer;
    }
    let s = &*sampler;
    let mut cfg = s.config.engine.clone();
    cfg.seed = seed;
    let mut init_rng = RngStreams::new(seed).stream(u64::MAX);
    let init = initial_state(&s.space, &mut init_rng);
    let traj = simulate(&s.characteristics, &init, &cfg);
    let status = match traj.status {
        TrajectoryStatus::Completed => PdmpStatus::Ok,
        TrajectoryStatus::ExplosionSuspected => {
            set_error("event cap reached before t_end");
            PdmpStatus::ExplosionSuspected
        }
        TrajectoryStatus::RateBoundViolated => {
            set_error("rate exceeded its thinning bound");
            PdmpStatus::RateBoundViolated
        }
    };
    *out = Box::into_raw(Box::new(PdmpTrajectory {
        traj,
        flow: s.characteristics.flow,
        dim: s.space.dim(),
    }));
    status
}

/// Release a trajectory handle. Null is a no-op.
///
/// # Safety
/// `traj` must come from `pdmp_simulate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pdmp_trajectory_free(traj: *mut PdmpTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded jump events.
///
/// # Safety
/// `traj` must be a live handle from `pdmp_simulate`.
#[no_mangle]
pub unsafe extern "C" fn pdmp_trajectory_len(traj: *const PdmpTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    (*traj).traj.events.len()
}

/// Read event `k` (0-based). `x` and `y` must point to `dim` doubles each;
/// any output pointer may be null to skip that field. `phantom` is 1 when
/// the jump left the state unchanged.
///
/// # Safety
/// `traj` must be a live handle; non-null output buffers must be large enough.
#[no_mangle]
pub unsafe extern "C" fn pdmp_trajectory_event(
    traj: *const PdmpTrajectory,
    k: usize,
    time: *mut f64,
    mech: *mut usize,
    phantom: *mut i32,
    x: *mut f64,
    y: *mut f64,
) -> PdmpStatus {
    if traj.is_null() {
        set_error("null trajectory handle");
        return PdmpStatus::NullPointer;
    }
    let t = &*traj;
    let Some(e) = t.traj.events.get(k) else {
        set_error(format!("event index {k} out of range"));
        return PdmpStatus::OutOfRange;
    };
    if !time.is_null() {
        *time = e.time;
    }
    if !mech.is_null() {
        *mech = e.mech;
    }
    if !phantom.is_null() {
        *phantom = e.phantom as i32;
    }
    if !x.is_null() {
        ptr::copy_nonoverlapping(e.state_after.x.as_ptr(), x, t.dim);
    }
    if !y.is_null() {
        ptr::copy_nonoverlapping(e.state_after.y.as_ptr(), y, t.dim);
    }
    PdmpStatus::Ok
}

/// State at time `t` in [0, t_end], following the deterministic flow from
/// the last jump before `t`. `x` and `y` must hold `dim` doubles each.
///
/// # Safety
/// `traj` must be a live handle; `x`/`y` (when non-null) must be large enough.
#[no_mangle]
pub unsafe extern "C" fn pdmp_trajectory_state_at(
    traj: *const PdmpTrajectory,
    t: f64,
    x: *mut f64,
    y: *mut f64,
) -> PdmpStatus {
    if traj.is_null() {
        set_error("null trajectory handle");
        return PdmpStatus::NullPointer;
    }
    let h = &*traj;
    if !(0.0..=h.traj.t_end).contains(&t) {
        set_error(format!("time {t} outside [0, {}]", h.traj.t_end));
        return PdmpStatus::OutOfRange;
    }
    let s = h.traj.state_at(h.flow, t);
    if !x.is_null() {
        ptr::copy_nonoverlapping(s.x.as_ptr(), x, h.dim);
    }
    if !y.is_null() {
        ptr::copy_nonoverlapping(s.y.as_ptr(), y, h.dim);
    }
    PdmpStatus::Ok
}
