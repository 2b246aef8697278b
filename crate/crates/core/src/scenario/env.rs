//! Environment facade with a point-mass effector and the closure reward.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Scenario, ScenarioError, World};
use crate::asset::{Bounds, JointKind};
use crate::behavior::JointKey;
use crate::dynamics::step_count;

/// Weights and references for the multi-objective closing reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    #[serde(default = "RewardParams::default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "RewardParams::default_lambda2")]
    pub lambda2: f64,
    #[serde(default = "RewardParams::default_lambda3")]
    pub lambda3: f64,
    #[serde(default = "RewardParams::default_lambda4")]
    pub lambda4: f64,
    /// `<alias>/<joint>` whose closure is rewarded.
    pub goal_joint: String,
    /// `<alias>/<marker>` the effector should approach.
    pub handle_marker: String,
}

impl RewardParams {
    pub const DEFAULT_WEIGHTS: [f64; 4] = [0.5, 0.125, 10.0, -0.01];

    fn default_lambda1() -> f64 {
        Self::DEFAULT_WEIGHTS[0]
    }
    fn default_lambda2() -> f64 {
        Self::DEFAULT_WEIGHTS[1]
    }
    fn default_lambda3() -> f64 {
        Self::DEFAULT_WEIGHTS[2]
    }
    fn default_lambda4() -> f64 {
        Self::DEFAULT_WEIGHTS[3]
    }

    pub fn new(goal_joint: impl Into<String>, handle_marker: impl Into<String>) -> Self {
        let [lambda1, lambda2, lambda3, lambda4] = Self::DEFAULT_WEIGHTS;
        Self {
            lambda1,
            lambda2,
            lambda3,
            lambda4,
            goal_joint: goal_joint.into(),
            handle_marker: handle_marker.into(),
        }
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }
}

/// Everything the reward looks at besides the action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardState {
    pub effector_position: [f64; 3],
    pub effector_velocity: [f64; 3],
    pub handle_position: [f64; 3],
    pub goal_q: f64,
    pub goal_bounds: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardTerms {
    /// `e^{-d}` with `d` the effector-to-handle distance.
    pub r_dst: f64,
    /// `max(0, cos θ)` between effector velocity and the handle direction.
    pub r_dir: f64,
    /// Closure fraction in `[0, 1]`; 1 at the lower bound.
    pub r_cls: f64,
    /// `‖action‖²`
    pub r_smth: f64,
}

pub fn reward_terms(state: &RewardState, action: [f64; 3]) -> RewardTerms {
    let p = Vector3::from(state.effector_position);
    let v = Vector3::from(state.effector_velocity);
    let to_handle = Vector3::from(state.handle_position) - p;
    let d = to_handle.norm();
    let r_dir = if d == 0.0 {
        1.0
    } else {
        let speed = v.norm();
        if speed == 0.0 {
            0.0
        } else {
            (v.dot(&to_handle) / (speed * d)).max(0.0)
        }
    };
    let b = state.goal_bounds;
    RewardTerms {
        r_dst: (-d).exp(),
        r_dir,
        r_cls: ((b.upper - state.goal_q) / (b.upper - b.lower)).clamp(0.0, 1.0),
        r_smth: Vector3::from(action).norm_squared(),
    }
}

/// `λ1·r_dst + λ2·r_dir + λ3·r_cls + λ4·r_smth`
pub fn reward(state: &RewardState, action: [f64; 3], p: &RewardParams) -> f64 {
    let t = reward_terms(state, action);
    p.lambda1 * t.r_dst + p.lambda2 * t.r_dir + p.lambda3 * t.r_cls + p.lambda4 * t.r_smth
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub t: f64,
    pub effector_position: [f64; 3],
    pub effector_velocity: [f64; 3],
    pub goal_q: f64,
    pub goal_q_dot: f64,
    pub handle_position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("scenario has no `{0}` section")]
    MissingSection(&'static str),
    #[error("action norm {norm} exceeds the limit {limit}")]
    ActionOutOfBounds { norm: f64, limit: f64 },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Point-agent environment over a scenario with one goal joint.
///
/// The effector is a unit point mass driven directly by the action force.
/// While it is within the contact radius of a marker, the action is also
/// applied to the joint that moves that marker's module, projected onto the
/// joint's direction of motion at the marker.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: Scenario,
    params: RewardParams,
    goal: JointKey,
    handle: (usize, usize),
    world: World,
    position: Point3<f64>,
    velocity: Vector3<f64>,
    horizon: usize,
    done: bool,
}

impl Env {
    pub fn new(scenario: Scenario) -> Result<(Self, Observation), EnvError> {
        let params = scenario.file.reward.clone().ok_or(EnvError::MissingSection("reward"))?;
        let agent = scenario.file.agent.ok_or(EnvError::MissingSection("agent"))?;
        let goal = scenario.joint_key(&params.goal_joint)?;
        let handle = scenario.marker_index(&params.handle_marker)?;
        let world = World::new(&scenario)?;
        let horizon = step_count(scenario.file.duration, scenario.file.dt);
        let mut env = Self {
            scenario,
            params,
            goal,
            handle,
            world,
            position: Point3::from(agent.start),
            velocity: Vector3::zeros(),
            horizon,
            done: false,
        };
        let obs = env.reset()?;
        Ok((env, obs))
    }

    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let agent = self.scenario.file.agent.expect("checked at construction");
        self.world = World::new(&self.scenario)?;
        self.position = Point3::from(agent.start);
        self.velocity = Vector3::zeros();
        self.done = false;
        Ok(self.observe())
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn params(&self) -> &RewardParams {
        &self.params
    }

    pub fn observe(&self) -> Observation {
        let goal = self.world.state(self.goal);
        let h = self.world.marker_position(self.handle.0, self.handle.1);
        Observation {
            t: self.world.time(),
            effector_position: self.position.into(),
            effector_velocity: self.velocity.into(),
            goal_q: goal.q,
            goal_q_dot: goal.q_dot,
            handle_position: h.into(),
        }
    }

    fn reward_state(&self, obs: &Observation) -> RewardState {
        let spec = &self.world.assembly(self.goal.assembly).joints[self.goal.joint];
        RewardState {
            effector_position: obs.effector_position,
            effector_velocity: obs.effector_velocity,
            handle_position: obs.handle_position,
            goal_q: obs.goal_q,
            goal_bounds: spec.bounds(),
        }
    }

    /// Generalized efforts the effector exerts on joints it touches.
    fn contact_efforts(&self, action: &Vector3<f64>) -> Vec<(JointKey, f64)> {
        let radius = self.scenario.file.agent.expect("checked at construction").contact_radius;
        let mut out = Vec::new();
        for ai in 0..self.scenario.assemblies.len() {
            let a = self.world.assembly(ai);
            let cfg = self.world.configuration(ai);
            for (ji, j) in a.joints.iter().enumerate() {
                let Some(child) = a.modules.iter().position(|m| m.id == j.child_module) else {
                    continue;
                };
                let Some(pose) = cfg.module_poses[child] else { continue };
                let nearest = a
                    .markers_of(&j.child_module)
                    .map(|m| pose * Point3::from(m.local_point))
                    .map(|p| ((p - self.position).norm(), p))
                    .filter(|(d, _)| *d <= radius)
                    .min_by(|x, y| x.0.total_cmp(&y.0));
                let (Some((_, contact)), Some((anchor, axis))) = (nearest, cfg.joint_axes[ji]) else {
                    continue;
                };
                let direction = match j.kind {
                    JointKind::Prismatic => axis.into_inner(),
                    JointKind::Revolute => axis.cross(&(contact - anchor)),
                };
                out.push((JointKey { assembly: ai, joint: ji }, action.dot(&direction)));
            }
        }
        out
    }

    pub fn step(&mut self, action: [f64; 3]) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let limit = self.scenario.file.agent.expect("checked at construction").max_action;
        let force = Vector3::from(action);
        let norm = force.norm();
        if !(norm <= limit) {
            return Err(EnvError::ActionOutOfBounds { norm, limit });
        }
        let contacts = self.contact_efforts(&force);
        self.world.advance(&contacts)?;
        let dt = self.world.dt();
        self.velocity += force * dt;
        self.position += self.velocity * dt;

        let observation = self.observe();
        let state = self.reward_state(&observation);
        let terms = reward_terms(&state, action);
        let reward = reward(&state, action, &self.params);
        self.done = terms.r_cls >= 1.0 || self.world.tick() >= self.horizon;
        Ok(StepOutcome {
            observation,
            reward,
            done: self.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_weights_exact() {
        let p = RewardParams::new("a/j", "a/m");
        assert_eq!(p.weights(), [0.5, 0.125, 10.0, -0.01]);
        let parsed: RewardParams = serde_json::from_str(r#"{"goal_joint": "a/j", "handle_marker": "a/m"}"#).unwrap();
        assert_eq!(parsed, p);
    }

    #[test]
    fn goal_state_reward() {
        let p = RewardParams::new("a/j", "a/m");
        let s = RewardState {
            effector_position: [0.3, 0.1, 0.9],
            effector_velocity: [0.0, 0.0, -0.2],
            handle_position: [0.3, 0.1, 0.9],
            goal_q: 0.0,
            goal_bounds: Bounds::new(0.0, 1.2),
        };
        assert_eq!(reward(&s, [0.0; 3], &p), 10.625);
    }

    #[test]
    fn far_open_limit_is_action_penalty() {
        let p = RewardParams::new("a/j", "a/m");
        let s = RewardState {
            effector_position: [1e6, 0.0, 0.0],
            effector_velocity: [0.0; 3],
            handle_position: [0.0; 3],
            goal_q: 1.2,
            goal_bounds: Bounds::new(0.0, 1.2),
        };
        let a = [1.0, -2.0, 0.5];
        assert_eq!(reward(&s, a, &p), -0.01 * 5.25);
    }

    #[test]
    fn direction_term() {
        let base = RewardState {
            effector_position: [0.0; 3],
            effector_velocity: [1.0, 0.0, 0.0],
            handle_position: [2.0, 2.0, 0.0],
            goal_q: 0.5,
            goal_bounds: Bounds::new(0.0, 1.0),
        };
        let t = reward_terms(&base, [0.0; 3]);
        assert!((t.r_dir - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(t.r_cls, 0.5);
        let away = RewardState {
            effector_velocity: [-1.0, 0.0, 0.0],
            ..base
        };
        assert_eq!(reward_terms(&away, [0.0; 3]).r_dir, 0.0);
    }

    proptest! {
        #[test]
        fn closure_fraction_in_unit_interval(q in -10.0..10.0f64, lo in -2.0..0.0f64, span in 1e-3..3.0f64,
            p in prop::array::uniform3(-5.0..5.0f64), v in prop::array::uniform3(-5.0..5.0f64)) {
            let s = RewardState {
                effector_position: p,
                effector_velocity: v,
                handle_position: [0.0; 3],
                goal_q: q,
                goal_bounds: Bounds::new(lo, lo + span),
            };
            let t = reward_terms(&s, [0.0; 3]);
            prop_assert!((0.0..=1.0).contains(&t.r_cls));
            let mut params = RewardParams::new("a/j", "a/m");
            params.lambda4 = 0.0;
            prop_assert!(reward(&s, [1.0, 2.0, 3.0], &params) >= 0.0);
        }
    }
}
