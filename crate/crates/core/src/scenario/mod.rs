//! Scenarios: assemblies placed in the world, force schedules, behaviors and
//! recording plans, run by a fixed-step loop.

mod env;
mod trajectory;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{parse_asset, Assembly, AssetError, KinematicTree, Pose, TargetPolicy};
use crate::behavior::{
    apply, bind_assemblies, evaluate, BehaviorError, BehaviorGraph, BehaviorRule, BindError, BoundAssembly, EventLog,
    JointKey, PropertyStore,
};
use crate::dynamics::{step, step_count, DynamicsError, JointState, DEFAULT_DT, MAX_DT};

pub use env::{reward, reward_terms, Env, EnvError, Observation, RewardParams, RewardState, RewardTerms, StepOutcome};
pub use trajectory::{
    compare, export_csv, from_csv_str, import_csv, to_csv_string, Channel, ChannelStats, CompareError, Comparison,
    CsvError, Trajectory,
};

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// External effort applied to one joint over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSchedule {
    /// `<alias>/<joint>`
    pub joint: String,
    pub profile: ForceProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceProfile {
    /// `value` on `[t_start, t_end)`, zero elsewhere.
    Constant { value: f64, t_start: f64, t_end: f64 },
    /// Zero-order hold through `(t, value)` steps; zero before the first.
    Piecewise { steps: Vec<[f64; 2]> },
    /// Linear interpolation through `(t, value)` points, holding the end
    /// values outside them.
    Linear { points: Vec<[f64; 2]> },
}

impl ForceProfile {
    pub fn constant(value: f64, t_start: f64, t_end: f64) -> Self {
        Self::Constant { value, t_start, t_end }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::Constant { value, t_start, t_end } => {
                if t >= *t_start && t < *t_end {
                    *value
                } else {
                    0.0
                }
            }
            Self::Piecewise { steps } => {
                let i = steps.partition_point(|s| s[0] <= t);
                if i == 0 {
                    0.0
                } else {
                    steps[i - 1][1]
                }
            }
            Self::Linear { points } => {
                let i = points.partition_point(|p| p[0] <= t);
                if i == 0 {
                    points[0][1]
                } else if i == points.len() {
                    points[i - 1][1]
                } else {
                    let ([t0, v0], [t1, v1]) = (points[i - 1], points[i]);
                    v0 + (t - t0) / (t1 - t0) * (v1 - v0)
                }
            }
        }
    }

    pub fn check(&self) -> Result<(), String> {
        match self {
            Self::Constant { value, t_start, t_end } => {
                if !(value.is_finite() && t_start.is_finite() && t_end.is_finite()) {
                    return Err("non-finite constant profile".into());
                }
                if t_start >= t_end {
                    return Err("t_start must be before t_end".into());
                }
            }
            Self::Piecewise { steps: pts } | Self::Linear { points: pts } => {
                if pts.is_empty() {
                    return Err("profile has no points".into());
                }
                if pts.iter().flatten().any(|v| !v.is_finite()) {
                    return Err("non-finite profile point".into());
                }
                if pts.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err("profile times must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }
}

/// Initial condition of one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialJoint {
    pub q: f64,
    #[serde(default)]
    pub q_dot: f64,
    #[serde(default)]
    pub s_open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyEntry {
    /// Name used for this assembly in references and channel names.
    pub alias: String,
    /// Asset file, relative to the scenario file.
    pub asset: String,
    #[serde(default)]
    pub pose: Pose,
    /// Per-joint initial state; unlisted joints start at rest at their
    /// fixed target (or lower bound for latch joints), closed.
    #[serde(default)]
    pub initial: BTreeMap<String, InitialJoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Recording {
    /// `<alias>/<joint>`: records `.q` and `.q_dot`.
    Joint(String),
    /// `<alias>/<marker>`: records `.x`, `.y`, `.z` in world frame.
    Marker(String),
}

/// Point-agent settings for the env facade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub start: [f64; 3],
    #[serde(default = "AgentConfig::default_max_action")]
    pub max_action: f64,
    #[serde(default = "AgentConfig::default_contact_radius")]
    pub contact_radius: f64,
}

impl AgentConfig {
    fn default_max_action() -> f64 {
        5.0
    }

    fn default_contact_radius() -> f64 {
        0.05
    }
}

/// `.scenario.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub assemblies: Vec<AssemblyEntry>,
    #[serde(default)]
    pub forces: Vec<ForceSchedule>,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub recordings: Vec<Recording>,
    /// Scenario-level rules; joint references are `<alias>/<joint>`.
    #[serde(default)]
    pub behaviors: Vec<BehaviorRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentConfig>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario syntax error: {0}")]
    Syntax(String),
    #[error("asset `{name}`: {source}")]
    Asset {
        name: String,
        #[source]
        source: AssetError,
    },
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("dt must be in (0, {MAX_DT}], got {0}")]
    InvalidDt(f64),
    #[error("duplicate assembly alias `{0}`")]
    DuplicateAlias(String),
    #[error("unresolved reference `{0}`")]
    UnresolvedReference(String),
    #[error("marker reference `{0}` is ambiguous")]
    AmbiguousMarker(String),
    #[error("force on `{joint}`: {message}")]
    InvalidForce { joint: String, message: String },
    #[error("initial state of `{0}` is outside its limits")]
    InitialOutOfRange(String),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// A scenario document together with the assemblies it references.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// Parsed assets, one per `file.assemblies` entry.
    pub assemblies: Vec<Assembly>,
}

impl Scenario {
    /// Parses a scenario document; `load_asset` returns the text of an asset
    /// referenced by the document.
    pub fn from_str_with(
        text: &str,
        mut load_asset: impl FnMut(&str) -> Result<String, ScenarioError>,
    ) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        let assemblies = file
            .assemblies
            .iter()
            .map(|entry| {
                let text = load_asset(&entry.asset)?;
                parse_asset(&text).map_err(|source| ScenarioError::Asset {
                    name: entry.asset.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let s = Self { file, assemblies };
        s.check()?;
        Ok(s)
    }

    /// Loads a scenario file; asset paths resolve relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = read(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::from_str_with(&text, |asset| read(&dir.join(asset)))
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.file.dt = dt;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.file.duration = duration;
        self
    }

    pub fn alias_index(&self, alias: &str) -> Option<usize> {
        self.file.assemblies.iter().position(|e| e.alias == alias)
    }

    /// Resolves `<alias>/<joint>`.
    pub fn joint_key(&self, reference: &str) -> Result<JointKey, ScenarioError> {
        let unresolved = || ScenarioError::UnresolvedReference(reference.to_owned());
        let (alias, joint) = reference.split_once('/').ok_or_else(unresolved)?;
        let a = self.alias_index(alias).ok_or_else(unresolved)?;
        let j = self.assemblies[a].joint_index(joint).ok_or_else(unresolved)?;
        Ok(JointKey { assembly: a, joint: j })
    }

    /// Resolves `<alias>/<marker>` (or `<alias>/<module>/<marker>` when a
    /// marker name is shared between modules) to (assembly, marker index).
    pub fn marker_index(&self, reference: &str) -> Result<(usize, usize), ScenarioError> {
        let unresolved = || ScenarioError::UnresolvedReference(reference.to_owned());
        let (alias, rest) = reference.split_once('/').ok_or_else(unresolved)?;
        let a = self.alias_index(alias).ok_or_else(unresolved)?;
        let markers = &self.assemblies[a].markers;
        let hits: Vec<usize> = match rest.split_once('/') {
            Some((module, name)) => markers
                .iter()
                .enumerate()
                .filter(|(_, m)| m.module_id == module && m.name == name)
                .map(|(i, _)| i)
                .collect(),
            None => markers
                .iter()
                .enumerate()
                .filter(|(_, m)| m.name == rest)
                .map(|(i, _)| i)
                .collect(),
        };
        match hits.as_slice() {
            [i] => Ok((a, *i)),
            [] => Err(unresolved()),
            _ => Err(ScenarioError::AmbiguousMarker(reference.to_owned())),
        }
    }

    /// Checks every invariant not already enforced by the asset parser.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let f = &self.file;
        if !(f.duration > 0.0) || !f.duration.is_finite() {
            return Err(ScenarioError::InvalidDuration(f.duration));
        }
        if !(f.dt > 0.0) || f.dt > MAX_DT {
            return Err(ScenarioError::InvalidDt(f.dt));
        }
        for (i, e) in f.assemblies.iter().enumerate() {
            if f.assemblies[..i].iter().any(|o| o.alias == e.alias) {
                return Err(ScenarioError::DuplicateAlias(e.alias.clone()));
            }
            for (joint, init) in &e.initial {
                let reference = format!("{}/{joint}", e.alias);
                let spec = self.assemblies[i]
                    .joint(joint)
                    .ok_or_else(|| ScenarioError::UnresolvedReference(reference.clone()))?;
                if !spec.bounds().contains(init.q) || !init.q_dot.is_finite() {
                    return Err(ScenarioError::InitialOutOfRange(reference));
                }
            }
        }
        for force in &f.forces {
            self.joint_key(&force.joint)?;
            force.profile.check().map_err(|message| ScenarioError::InvalidForce {
                joint: force.joint.clone(),
                message,
            })?;
        }
        for r in &f.recordings {
            match r {
                Recording::Joint(j) => {
                    self.joint_key(j)?;
                }
                Recording::Marker(m) => {
                    self.marker_index(m)?;
                }
            }
        }
        self.graph()?;
        Ok(())
    }

    fn bound(&self) -> Vec<BoundAssembly<'_>> {
        self.file
            .assemblies
            .iter()
            .zip(&self.assemblies)
            .map(|(e, a)| BoundAssembly {
                alias: &e.alias,
                assembly: a,
            })
            .collect()
    }

    pub fn graph(&self) -> Result<BehaviorGraph, BindError> {
        bind_assemblies(&self.bound(), &self.file.behaviors)
    }

    /// Initial joint states, indexed `[assembly][joint]`.
    pub fn initial_states(&self) -> Vec<Vec<JointState>> {
        self.file
            .assemblies
            .iter()
            .zip(&self.assemblies)
            .map(|(e, a)| {
                a.joints
                    .iter()
                    .map(|j| match e.initial.get(&j.id) {
                        Some(init) => JointState::moving(j, init.q, init.q_dot, init.s_open),
                        None => {
                            let q = match j.target_policy {
                                TargetPolicy::Fixed { q_target } => q_target,
                                TargetPolicy::Latch { .. } => j.q_lower_bound,
                            };
                            JointState::at_rest(j, q, false)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Names of the recorded channels, in recording order.
    pub fn channel_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for r in &self.file.recordings {
            match r {
                Recording::Joint(j) => {
                    names.push(format!("{j}.q"));
                    names.push(format!("{j}.q_dot"));
                }
                Recording::Marker(m) => {
                    for axis in ["x", "y", "z"] {
                        names.push(format!("{m}.{axis}"));
                    }
                }
            }
        }
        names
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

enum Probe {
    Joint(JointKey),
    Marker(usize, usize),
}

/// Mutable simulation state of a running scenario.
#[derive(Debug, Clone)]
pub struct World {
    assemblies: Vec<Assembly>,
    placements: Vec<Isometry3<f64>>,
    trees: Vec<KinematicTree>,
    states: Vec<Vec<JointState>>,
    graph: BehaviorGraph,
    properties: PropertyStore,
    forces: Vec<(JointKey, ForceProfile)>,
    dt: f64,
    tick: usize,
    log: EventLog,
}

impl World {
    pub fn new(s: &Scenario) -> Result<Self, ScenarioError> {
        s.check()?;
        let forces = s
            .file
            .forces
            .iter()
            .map(|f| Ok((s.joint_key(&f.joint)?, f.profile.clone())))
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        Ok(Self {
            placements: s.file.assemblies.iter().map(|e| e.pose.to_isometry()).collect(),
            trees: s.assemblies.iter().map(KinematicTree::new).collect(),
            assemblies: s.assemblies.clone(),
            states: s.initial_states(),
            graph: s.graph()?,
            properties: PropertyStore::new(),
            forces,
            dt: s.file.dt,
            tick: 0,
            log: EventLog::default(),
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn states(&self) -> &[Vec<JointState>] {
        &self.states
    }

    pub fn state(&self, key: JointKey) -> &JointState {
        &self.states[key.assembly][key.joint]
    }

    pub fn assembly(&self, index: usize) -> &Assembly {
        &self.assemblies[index]
    }

    pub fn properties(&self) -> &PropertyStore {
        &self.properties
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Scheduled external effort on `key` at time `t`.
    pub fn scheduled_force(&self, key: JointKey, t: f64) -> f64 {
        self.forces
            .iter()
            .filter(|(k, _)| *k == key)
            .fold(0.0, |acc, (_, p)| acc + p.at(t))
    }

    /// World-frame kinematic solution of assembly `index`.
    pub fn configuration(&self, index: usize) -> crate::asset::Configuration {
        let values: Vec<f64> = self.states[index].iter().map(|s| s.q).collect();
        let mut clamped = Vec::new();
        self.trees[index].solve(&self.assemblies[index], &self.placements[index], &values, &mut clamped)
    }

    pub fn marker_position(&self, assembly: usize, marker: usize) -> Point3<f64> {
        let a = &self.assemblies[assembly];
        let m = &a.markers[marker];
        let module = a.modules.iter().position(|x| x.id == m.module_id).expect("validated marker");
        let cfg = self.configuration(assembly);
        cfg.module_poses[module].expect("validated tree") * Point3::from(m.local_point)
    }

    /// Advances one tick: steps every joint under scheduled plus `extra`
    /// efforts, then evaluates and applies behaviors.
    pub fn advance(&mut self, extra: &[(JointKey, f64)]) -> Result<(), ScenarioError> {
        let t = self.time();
        let prev = self.states.clone();
        for (ai, assembly) in self.assemblies.iter().enumerate() {
            for (ji, spec) in assembly.joints.iter().enumerate() {
                let key = JointKey { assembly: ai, joint: ji };
                let mut f = self.scheduled_force(key, t);
                for (k, e) in extra {
                    if *k == key {
                        f += e;
                    }
                }
                self.states[ai][ji] = step(&prev[ai][ji], spec, f, self.dt)?;
            }
        }
        self.tick += 1;
        let ev = evaluate(&self.graph, &prev, &self.states, self.time())?;
        apply(&ev.effects, &mut self.states, &mut self.properties);
        self.log.extend(ev.log);
        Ok(())
    }
}

/// Runs a scenario to completion, recording `⌈duration/dt⌉ + 1` samples.
pub fn run(s: &Scenario) -> Result<(Trajectory, EventLog), ScenarioError> {
    let mut world = World::new(s)?;
    let probes: Vec<Probe> = s
        .file
        .recordings
        .iter()
        .map(|r| match r {
            Recording::Joint(j) => s.joint_key(j).map(Probe::Joint),
            Recording::Marker(m) => s.marker_index(m).map(|(a, i)| Probe::Marker(a, i)),
        })
        .collect::<Result<_, _>>()?;
    let mut traj = Trajectory::new(s.channel_names());
    let mut row = Vec::new();
    let mut record = |world: &World, traj: &mut Trajectory| {
        row.clear();
        for p in &probes {
            match *p {
                Probe::Joint(k) => {
                    let st = world.state(k);
                    row.push(st.q);
                    row.push(st.q_dot);
                }
                Probe::Marker(a, m) => {
                    let p = world.marker_position(a, m);
                    row.extend_from_slice(&[p.x, p.y, p.z]);
                }
            }
        }
        traj.push(world.time(), &row);
    };
    record(&world, &mut traj);
    for _ in 0..step_count(s.file.duration, s.file.dt) {
        world.advance(&[])?;
        record(&world, &mut traj);
    }
    Ok((traj, world.log))
}
