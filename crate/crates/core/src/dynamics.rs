//! Enhanced joint drive: position-dependent stiffness, latch-release
//! targets, three-regime friction and a fixed-step integrator.
//!
//! Sign conventions:
//! - The drive is restoring, `τ = K(q)·(q_target − q) + D·(q̇_target − q̇)`.
//! - Kinetic friction is `−D·q̇`, which always opposes motion.
//! - Static friction resists the total applied effort `τ + F_ext` up to the
//!   breakaway threshold `B = μs·|τ| + coulomb_floor`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{Bounds, JointSpec, StiffnessProfile, TargetPolicy};

/// Largest step accepted by [`step`].
pub const MAX_DT: f64 = 0.01;
/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Static,
    Kinetic,
}

/// Dynamic state of one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: f64,
    pub q_dot: f64,
    pub s_open: bool,
    pub regime: Regime,
    /// Target the latch policy holds when neither latch branch applies.
    pub held_target: f64,
    /// Target pinned by a behavior effect; replaces the policy target.
    pub target_override: Option<f64>,
}

impl JointState {
    /// A joint at rest at `q`. The held target starts at whatever the policy
    /// resolves to, falling back to `q` itself so an undisturbed joint stays put.
    pub fn at_rest(spec: &JointSpec, q: f64, s_open: bool) -> Self {
        let held_target = target_at(&spec.target_policy, q, s_open, q, spec.bounds());
        Self {
            q,
            q_dot: 0.0,
            s_open,
            regime: Regime::Static,
            held_target,
            target_override: None,
        }
    }

    /// A joint at `q` moving with `q_dot`.
    pub fn moving(spec: &JointSpec, q: f64, q_dot: f64, s_open: bool) -> Self {
        let mut s = Self::at_rest(spec, q, s_open);
        s.q_dot = q_dot;
        s.regime = if q_dot == 0.0 { Regime::Static } else { Regime::Kinetic };
        s
    }
}

/// Generalized efforts acting on a joint during one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffortBreakdown {
    pub tau_drive: f64,
    pub f_ext: f64,
    pub f_friction: f64,
    pub net: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("time step must be positive and finite, got {0}")]
    NonPositiveDt(f64),
    #[error("time step {0} exceeds the stability limit of {MAX_DT} s")]
    DtTooLarge(f64),
    #[error("duration must be positive and finite, got {0}")]
    NonPositiveDuration(f64),
}

/// Drive stiffness at `q`.
///
/// For a schedule, `q` at (or below) the lower bound gives `k_high`; on
/// `(lower, threshold]` the opening branch decays linearly in `q − lower` and
/// the closing branch surges as `k_low + k_max·e^{−λ(q − lower)}`; above the
/// threshold the stiffness is `k_low`. The result never goes below zero.
pub fn stiffness_at(p: &StiffnessProfile, q: f64, s_open: bool, bounds: Bounds) -> f64 {
    let k = match *p {
        StiffnessProfile::Constant { k } => k,
        StiffnessProfile::Schedule {
            k_high,
            k_low,
            k_max,
            alpha,
            lambda,
            q_threshold,
        } => {
            if q <= bounds.lower {
                k_high
            } else if q <= q_threshold {
                let travel = q - bounds.lower;
                if s_open {
                    k_high - alpha * travel
                } else {
                    k_low + k_max * (-lambda * travel).exp()
                }
            } else {
                k_low
            }
        }
    };
    k.max(0.0)
}

/// Drive target position. The latch policy goes to the upper bound when open
/// above the threshold, to the lower bound when closed below it, and
/// otherwise holds `prev_target`.
pub fn target_at(p: &TargetPolicy, q: f64, s_open: bool, prev_target: f64, bounds: Bounds) -> f64 {
    match *p {
        TargetPolicy::Fixed { q_target } => q_target,
        TargetPolicy::Latch { q_threshold } => {
            if q > q_threshold && s_open {
                bounds.upper
            } else if q < q_threshold && !s_open {
                bounds.lower
            } else {
                prev_target
            }
        }
    }
}

/// Target currently in force for `state`, honoring a pinned override.
pub fn active_target(state: &JointState, spec: &JointSpec) -> f64 {
    match state.target_override {
        Some(t) => t,
        None => target_at(&spec.target_policy, state.q, state.s_open, state.held_target, spec.bounds()),
    }
}

/// Drive effort `K(q)·(q_target − q) + D·(q̇_target − q̇)`.
pub fn drive_effort(state: &JointState, spec: &JointSpec) -> f64 {
    let k = stiffness_at(&spec.stiffness, state.q, state.s_open, spec.bounds());
    let target = active_target(state, spec);
    k * (target - state.q) + spec.damping * (spec.target_velocity - state.q_dot)
}

/// Breakaway threshold `μs·|τ| + coulomb_floor`.
pub fn breakaway_threshold(spec: &JointSpec, tau_drive: f64) -> f64 {
    spec.mu_s * tau_drive.abs() + spec.coulomb_floor
}

/// Friction effort and resulting regime.
///
/// At rest, friction cancels the applied effort `τ + F_ext` exactly while it
/// stays within the breakaway threshold (static), and is capped at the
/// threshold against it once exceeded (breakaway). In motion it is viscous,
/// `−D·q̇`.
pub fn friction_effort(state: &JointState, spec: &JointSpec, tau_drive: f64, f_ext: f64) -> (f64, Regime) {
    if state.q_dot == 0.0 {
        let applied = tau_drive + f_ext;
        let threshold = breakaway_threshold(spec, tau_drive);
        if applied.abs() <= threshold {
            (-applied, Regime::Static)
        } else {
            (-threshold * applied.signum(), Regime::Kinetic)
        }
    } else {
        (-spec.damping * state.q_dot, Regime::Kinetic)
    }
}

/// Efforts acting on the joint in `state` under external effort `f_ext`.
pub fn effort_breakdown(state: &JointState, spec: &JointSpec, f_ext: f64) -> (EffortBreakdown, Regime) {
    let tau_drive = drive_effort(state, spec);
    let (f_friction, regime) = friction_effort(state, spec, tau_drive, f_ext);
    let net = tau_drive + f_ext + f_friction;
    (
        EffortBreakdown {
            tau_drive,
            f_ext,
            f_friction,
            net,
        },
        regime,
    )
}

fn check_dt(dt: f64) -> Result<(), DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::NonPositiveDt(dt));
    }
    if dt > MAX_DT {
        return Err(DynamicsError::DtTooLarge(dt));
    }
    Ok(())
}

/// One semi-implicit Euler step.
///
/// A static joint keeps its position and zero velocity. A moving joint whose
/// velocity would change sign during the step is stopped at zero velocity so
/// the next step re-evaluates stiction. Positions are clamped to the joint
/// limits and velocity is zeroed on contact with a limit.
pub fn step(state: &JointState, spec: &JointSpec, f_ext: f64, dt: f64) -> Result<JointState, DynamicsError> {
    check_dt(dt)?;
    let bounds = spec.bounds();
    let mut next = *state;
    next.held_target = target_at(&spec.target_policy, state.q, state.s_open, state.held_target, bounds);

    let (efforts, regime) = effort_breakdown(state, spec, f_ext);
    if regime == Regime::Static {
        next.q_dot = 0.0;
        next.regime = Regime::Static;
        return Ok(next);
    }

    let mut v = state.q_dot + efforts.net / spec.effective_inertia * dt;
    if state.q_dot != 0.0 && v * state.q_dot < 0.0 {
        v = 0.0;
    }
    let mut q = state.q + v * dt;
    if q >= bounds.upper && v >= 0.0 {
        q = bounds.upper;
        v = 0.0;
    } else if q <= bounds.lower && v <= 0.0 {
        q = bounds.lower;
        v = 0.0;
    }
    next.q = q;
    next.q_dot = v;
    next.regime = Regime::Kinetic;
    Ok(next)
}

/// Number of steps needed to cover `duration` at `dt`, i.e. `⌈duration/dt⌉`,
/// treating ratios within rounding noise of an integer as that integer.
pub fn step_count(duration: f64, dt: f64) -> usize {
    let ratio = duration / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Integrates one joint under `force(t)` for `duration`; returns
/// `⌈duration/dt⌉ + 1` states starting with `state0` at `t = 0`.
pub fn simulate_joint(
    state0: &JointState,
    spec: &JointSpec,
    force: impl Fn(f64) -> f64,
    duration: f64,
    dt: f64,
) -> Result<Vec<JointState>, DynamicsError> {
    check_dt(dt)?;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(DynamicsError::NonPositiveDuration(duration));
    }
    let n = step_count(duration, dt);
    let mut series = Vec::with_capacity(n + 1);
    series.push(*state0);
    let mut state = *state0;
    for i in 0..n {
        state = step(&state, spec, force(i as f64 * dt), dt)?;
        series.push(state);
    }
    Ok(series)
}
