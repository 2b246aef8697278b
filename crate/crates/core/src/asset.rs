//! Hierarchical asset model: assembly → module → joint/marker.
//!
//! Assets are stored as `.artjoint.json` documents. Parsing always validates;
//! an [`Assembly`] returned by [`parse_asset`] is simulation-ready.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{BehaviorRule, Effect, Trigger};

/// Tolerance on `‖axis‖ = 1` for joint axes.
pub const AXIS_NORM_TOLERANCE: f64 = 1e-9;
/// Tolerance on `‖q‖ = 1` for pose orientations.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-9;

/// Rigid pose. Orientation is a unit quaternion stored as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        position: [0.0; 3],
        orientation: [1.0, 0.0, 0.0, 0.0],
    };

    pub fn from_position(position: [f64; 3]) -> Self {
        Self {
            position,
            ..Self::IDENTITY
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [w, x, y, z] = self.orientation;
        let rotation = UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z));
        Isometry3::from_parts(Translation3::from(Vector3::from(self.position)), rotation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let t = iso.translation.vector;
        let q = iso.rotation.quaternion();
        Self {
            position: [t.x, t.y, t.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Prismatic,
    Revolute,
}

/// Position-dependent stiffness `K(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StiffnessProfile {
    Constant {
        k: f64,
    },
    /// Door-closer / magnetic-latch schedule: high holding stiffness at the
    /// lower bound, linear decay while opening, exponential surge while
    /// closing below the threshold, and `k_low` above it.
    Schedule {
        k_high: f64,
        k_low: f64,
        k_max: f64,
        alpha: f64,
        lambda: f64,
        q_threshold: f64,
    },
}

/// How the drive target position is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetPolicy {
    Fixed { q_target: f64 },
    /// Latch release: target snaps to a joint bound depending on which side
    /// of `q_threshold` the joint is on and on the open-state flag.
    Latch { q_threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidModule {
    pub id: String,
    /// Pose relative to the parent module frame (the base frame for the root).
    pub rest_pose: Pose,
    /// kg
    pub mass: f64,
    pub affordance_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub id: String,
    pub kind: JointKind,
    pub parent_module: String,
    pub child_module: String,
    /// Unit axis in the parent frame.
    pub axis: [f64; 3],
    /// Point on the axis, parent frame, meters.
    pub anchor: [f64; 3],
    pub q_lower_bound: f64,
    pub q_upper_bound: f64,
    #[serde(rename = "damping_D")]
    pub damping: f64,
    pub mu_s: f64,
    /// Constant breakaway effort added to the drive-proportional threshold.
    #[serde(default)]
    pub coulomb_floor: f64,
    /// Inertia seen along the joint coordinate (kg or kg·m²).
    pub effective_inertia: f64,
    pub stiffness: StiffnessProfile,
    pub target_policy: TargetPolicy,
    #[serde(default)]
    pub target_velocity: f64,
}

impl JointSpec {
    pub fn bounds(&self) -> Bounds {
        Bounds {
            lower: self.q_lower_bound,
            upper: self.q_upper_bound,
        }
    }
}

/// Closed joint-space interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lower && q <= self.upper
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marker {
    pub module_id: String,
    pub name: String,
    pub local_point: [f64; 3],
}

/// Marker address inside one assembly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MarkerRef {
    pub module_id: String,
    pub name: String,
}

impl MarkerRef {
    pub fn new(module_id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            module_id: module_id.into(),
            name: name.into(),
        }
    }
}

/// An articulated object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assembly {
    pub id: String,
    pub category: String,
    /// Origin at the geometric center of the object's bottom surface.
    pub base_frame: Pose,
    pub root_module: String,
    pub modules: Vec<RigidModule>,
    pub joints: Vec<JointSpec>,
    pub behaviors: Vec<BehaviorRule>,
    pub markers: Vec<Marker>,
}

impl Assembly {
    pub fn module(&self, id: &str) -> Option<&RigidModule> {
        self.modules.iter().find(|m| m.id == id)
    }

    pub fn joint(&self, id: &str) -> Option<&JointSpec> {
        self.joints.iter().find(|j| j.id == id)
    }

    pub fn joint_index(&self, id: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.id == id)
    }

    pub fn marker(&self, r: &MarkerRef) -> Option<&Marker> {
        self.markers
            .iter()
            .find(|m| m.module_id == r.module_id && m.name == r.name)
    }

    /// Markers attached to `module_id`, in document order.
    pub fn markers_of<'a>(&'a self, module_id: &'a str) -> impl Iterator<Item = &'a Marker> + 'a {
        self.markers.iter().filter(move |m| m.module_id == module_id)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AssetError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("joint `{joint}` references missing module `{module}`")]
    MissingModule { joint: String, module: String },
    #[error("joint `{joint}` has q_lower_bound >= q_upper_bound")]
    InvalidLimits { joint: String },
    #[error("module graph is not a tree (cycle or multiple parents)")]
    CyclicStructure,
    #[error("joint `{joint}` axis is not unit length")]
    NonUnitAxis { joint: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    DuplicateModuleId,
    DuplicateJointId,
    DuplicateMarker,
    DuplicateRuleId,
    MissingRootModule,
    MissingModule,
    InvalidLimits,
    NonUnitAxis,
    NonUnitQuaternion,
    NonFinite,
    CyclicStructure,
    UnreachableModule,
    NonPositiveMass,
    NonPositiveInertia,
    NegativeParameter,
    StiffnessOrder,
    ThresholdOutOfRange,
    TargetOutOfRange,
    UnknownJointReference,
    EmptyEffects,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub path: String,
    pub kind: IssueKind,
    pub message: String,
    /// Joint or module the issue is about, when there is one.
    #[serde(skip)]
    subject: Option<(String, String)>,
}

impl ValidationIssue {
    fn new(path: impl Into<String>, kind: IssueKind, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            kind,
            message: message.into(),
            subject: None,
        }
    }

    fn about(mut self, a: &str, b: &str) -> Self {
        self.subject = Some((a.to_owned(), b.to_owned()));
        self
    }

    fn into_error(self) -> AssetError {
        let (a, b) = self.subject.clone().unwrap_or_default();
        match self.kind {
            IssueKind::MissingModule => AssetError::MissingModule { joint: a, module: b },
            IssueKind::InvalidLimits => AssetError::InvalidLimits { joint: a },
            IssueKind::NonUnitAxis => AssetError::NonUnitAxis { joint: a },
            IssueKind::CyclicStructure => AssetError::CyclicStructure,
            _ => AssetError::Invalid {
                path: self.path,
                message: self.message,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    fn push(&mut self, issue: ValidationIssue) {
        self.issues.push(issue);
    }
}

/// Parses and validates an asset document.
pub fn parse_asset(text: &str) -> Result<Assembly, AssetError> {
    let assembly: Assembly = serde_json::from_str(text).map_err(|e| AssetError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let report = validate(&assembly);
    match report.issues.into_iter().next() {
        None => Ok(assembly),
        Some(issue) => Err(issue.into_error()),
    }
}

/// Pretty-printed JSON; floats use the shortest representation that
/// round-trips exactly.
pub fn serialize_asset(a: &Assembly) -> String {
    let mut text = serde_json::to_string_pretty(a).expect("assembly serialization is infallible");
    text.push('\n');
    text
}

fn finite(report: &mut ValidationReport, path: String, values: &[f64]) -> bool {
    if values.iter().all(|v| v.is_finite()) {
        true
    } else {
        report.push(ValidationIssue::new(path, IssueKind::NonFinite, "non-finite number"));
        false
    }
}

/// Checks every invariant; an empty report means the asset is simulation-ready.
pub fn validate(a: &Assembly) -> ValidationReport {
    let mut report = ValidationReport::default();

    let base = [a.base_frame.position.as_slice(), a.base_frame.orientation.as_slice()].concat();
    if finite(&mut report, "base_frame".into(), &base) {
        check_quaternion(&mut report, "base_frame", &a.base_frame);
    }

    let mut module_ids = BTreeSet::new();
    for (i, m) in a.modules.iter().enumerate() {
        let path = format!("modules[{i}]");
        if !module_ids.insert(m.id.as_str()) {
            report.push(ValidationIssue::new(
                &path,
                IssueKind::DuplicateModuleId,
                format!("duplicate module id `{}`", m.id),
            ));
        }
        let o = m.rest_pose.orientation;
        let nums = [m.rest_pose.position.as_slice(), o.as_slice(), &[m.mass]].concat();
        if finite(&mut report, path.clone(), &nums) {
            check_quaternion(&mut report, &format!("{path}.rest_pose"), &m.rest_pose);
            if m.mass <= 0.0 {
                report.push(ValidationIssue::new(
                    format!("{path}.mass"),
                    IssueKind::NonPositiveMass,
                    "mass must be positive",
                ));
            }
        }
    }
    if !module_ids.contains(a.root_module.as_str()) {
        report.push(ValidationIssue::new(
            "root_module",
            IssueKind::MissingRootModule,
            format!("root module `{}` does not exist", a.root_module),
        ));
    }

    let mut joint_ids = BTreeSet::new();
    let mut references_ok = true;
    for (i, j) in a.joints.iter().enumerate() {
        let path = format!("joints[{i}]");
        if !joint_ids.insert(j.id.as_str()) {
            report.push(ValidationIssue::new(
                &path,
                IssueKind::DuplicateJointId,
                format!("duplicate joint id `{}`", j.id),
            ));
        }
        for (field, module) in [("parent_module", &j.parent_module), ("child_module", &j.child_module)] {
            if !module_ids.contains(module.as_str()) {
                references_ok = false;
                report.push(
                    ValidationIssue::new(
                        format!("{path}.{field}"),
                        IssueKind::MissingModule,
                        format!("joint `{}` references missing module `{module}`", j.id),
                    )
                    .about(&j.id, module),
                );
            }
        }
        check_joint(&mut report, &path, j);
    }

    if references_ok && module_ids.contains(a.root_module.as_str()) {
        check_tree(&mut report, a);
    }

    let mut marker_keys = BTreeSet::new();
    for (i, m) in a.markers.iter().enumerate() {
        let path = format!("markers[{i}]");
        if !module_ids.contains(m.module_id.as_str()) {
            report.push(ValidationIssue::new(
                format!("{path}.module_id"),
                IssueKind::MissingModule,
                format!("marker `{}` references missing module `{}`", m.name, m.module_id),
            ));
        }
        if !marker_keys.insert((m.module_id.as_str(), m.name.as_str())) {
            report.push(ValidationIssue::new(
                &path,
                IssueKind::DuplicateMarker,
                format!("duplicate marker `{}` on module `{}`", m.name, m.module_id),
            ));
        }
        finite(&mut report, format!("{path}.local_point"), &m.local_point);
    }

    check_behaviors(&mut report, a);
    report
}

fn check_quaternion(report: &mut ValidationReport, path: &str, pose: &Pose) {
    let n = pose.orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (n - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
        report.push(ValidationIssue::new(
            format!("{path}.orientation"),
            IssueKind::NonUnitQuaternion,
            "orientation is not a unit quaternion",
        ));
    }
}

fn check_joint(report: &mut ValidationReport, path: &str, j: &JointSpec) {
    let mut nums = vec![
        j.q_lower_bound,
        j.q_upper_bound,
        j.damping,
        j.mu_s,
        j.coulomb_floor,
        j.effective_inertia,
        j.target_velocity,
    ];
    nums.extend_from_slice(&j.axis);
    nums.extend_from_slice(&j.anchor);
    match j.stiffness {
        StiffnessProfile::Constant { k } => nums.push(k),
        StiffnessProfile::Schedule {
            k_high,
            k_low,
            k_max,
            alpha,
            lambda,
            q_threshold,
        } => nums.extend_from_slice(&[k_high, k_low, k_max, alpha, lambda, q_threshold]),
    }
    match j.target_policy {
        TargetPolicy::Fixed { q_target } => nums.push(q_target),
        TargetPolicy::Latch { q_threshold } => nums.push(q_threshold),
    }
    if !finite(report, path.to_owned(), &nums) {
        return;
    }

    let limits_ok = j.q_lower_bound < j.q_upper_bound;
    if !limits_ok {
        report.push(
            ValidationIssue::new(
                path,
                IssueKind::InvalidLimits,
                "q_lower_bound must be below q_upper_bound",
            )
            .about(&j.id, ""),
        );
    }
    let norm = j.axis.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > AXIS_NORM_TOLERANCE {
        report.push(
            ValidationIssue::new(format!("{path}.axis"), IssueKind::NonUnitAxis, "axis is not unit length")
                .about(&j.id, ""),
        );
    }
    if j.effective_inertia <= 0.0 {
        report.push(ValidationIssue::new(
            format!("{path}.effective_inertia"),
            IssueKind::NonPositiveInertia,
            "effective_inertia must be positive",
        ));
    }
    for (field, v) in [("damping_D", j.damping), ("mu_s", j.mu_s), ("coulomb_floor", j.coulomb_floor)] {
        if v < 0.0 {
            report.push(ValidationIssue::new(
                format!("{path}.{field}"),
                IssueKind::NegativeParameter,
                format!("{field} must be non-negative"),
            ));
        }
    }

    let bounds = j.bounds();
    match j.stiffness {
        StiffnessProfile::Constant { k } => {
            if k < 0.0 {
                report.push(ValidationIssue::new(
                    format!("{path}.stiffness.k"),
                    IssueKind::NegativeParameter,
                    "stiffness must be non-negative",
                ));
            }
        }
        StiffnessProfile::Schedule {
            k_high,
            k_low,
            k_max,
            q_threshold,
            ..
        } => {
            for (field, v) in [("k_high", k_high), ("k_low", k_low), ("k_max", k_max)] {
                if v < 0.0 {
                    report.push(ValidationIssue::new(
                        format!("{path}.stiffness.{field}"),
                        IssueKind::NegativeParameter,
                        "stiffness must be non-negative",
                    ));
                }
            }
            if k_low > k_high {
                report.push(ValidationIssue::new(
                    format!("{path}.stiffness"),
                    IssueKind::StiffnessOrder,
                    "k_low must not exceed k_high",
                ));
            }
            if limits_ok && !bounds.contains(q_threshold) {
                report.push(ValidationIssue::new(
                    format!("{path}.stiffness.q_threshold"),
                    IssueKind::ThresholdOutOfRange,
                    "threshold out of range",
                ));
            }
        }
    }
    match j.target_policy {
        TargetPolicy::Fixed { q_target } => {
            if limits_ok && !bounds.contains(q_target) {
                report.push(ValidationIssue::new(
                    format!("{path}.target_policy.q_target"),
                    IssueKind::TargetOutOfRange,
                    "target out of range",
                ));
            }
        }
        TargetPolicy::Latch { q_threshold } => {
            if limits_ok && !bounds.contains(q_threshold) {
                report.push(ValidationIssue::new(
                    format!("{path}.target_policy.q_threshold"),
                    IssueKind::ThresholdOutOfRange,
                    "threshold out of range",
                ));
            }
        }
    }
}

fn check_tree(report: &mut ValidationReport, a: &Assembly) {
    let mut parent_of: HashMap<&str, &str> = HashMap::new();
    let mut cyclic = false;
    for j in &a.joints {
        if j.child_module == a.root_module
            || j.parent_module == j.child_module
            || parent_of.insert(&j.child_module, &j.parent_module).is_some()
        {
            cyclic = true;
        }
    }
    if cyclic {
        report.push(ValidationIssue::new("joints", IssueKind::CyclicStructure, "cyclic structure"));
        return;
    }
    // With at most one parent per module, every module either chains up to
    // the root, to an orphan, or around a cycle.
    for m in &a.modules {
        let mut seen = BTreeSet::new();
        let mut cur = m.id.as_str();
        loop {
            if cur == a.root_module {
                break;
            }
            if !seen.insert(cur) {
                report.push(ValidationIssue::new("joints", IssueKind::CyclicStructure, "cyclic structure"));
                return;
            }
            match parent_of.get(cur) {
                Some(p) => cur = p,
                None => {
                    report.push(ValidationIssue::new(
                        format!("modules.{}", m.id),
                        IssueKind::UnreachableModule,
                        format!("module `{}` is unreachable from the root", m.id),
                    ));
                    break;
                }
            }
        }
    }
}

fn check_behaviors(report: &mut ValidationReport, a: &Assembly) {
    let mut ids = BTreeSet::new();
    for (i, rule) in a.behaviors.iter().enumerate() {
        let path = format!("behaviors[{i}]");
        if !ids.insert(rule.id.as_str()) {
            report.push(ValidationIssue::new(
                &path,
                IssueKind::DuplicateRuleId,
                format!("duplicate rule id `{}`", rule.id),
            ));
        }
        if let Trigger::ThresholdCrossed { joint, value, .. } = &rule.trigger {
            if a.joint(joint).is_none() {
                report.push(ValidationIssue::new(
                    format!("{path}.trigger.joint"),
                    IssueKind::UnknownJointReference,
                    format!("unknown joint `{joint}`"),
                ));
            }
            finite(report, format!("{path}.trigger.value"), &[*value]);
        }
        if rule.effects.is_empty() {
            report.push(ValidationIssue::new(
                format!("{path}.effects"),
                IssueKind::EmptyEffects,
                "effect list is empty",
            ));
        }
        for (k, effect) in rule.effects.iter().enumerate() {
            let epath = format!("{path}.effects[{k}]");
            match effect {
                Effect::SetOpenState { joint, .. } => {
                    if a.joint(joint).is_none() {
                        report.push(ValidationIssue::new(
                            format!("{epath}.joint"),
                            IssueKind::UnknownJointReference,
                            format!("unknown joint `{joint}`"),
                        ));
                    }
                }
                Effect::SetFixedTarget { joint, q_target } => match a.joint(joint) {
                    None => report.push(ValidationIssue::new(
                        format!("{epath}.joint"),
                        IssueKind::UnknownJointReference,
                        format!("unknown joint `{joint}`"),
                    )),
                    Some(spec) => {
                        if !spec.bounds().contains(*q_target) {
                            report.push(ValidationIssue::new(
                                format!("{epath}.q_target"),
                                IssueKind::TargetOutOfRange,
                                "target out of range",
                            ));
                        }
                    }
                },
                Effect::EmitSignal { .. } => {}
                Effect::SetProperty { scalar, .. } => {
                    finite(report, format!("{epath}.scalar"), &[*scalar]);
                }
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("no value given for joint `{0}`")]
    MissingJointValue(String),
    #[error("unknown marker `{module_id}/{name}`")]
    UnknownMarker { module_id: String, name: String },
}

/// Joint traversal order for an assembly, computed once and reused.
#[derive(Debug, Clone)]
pub struct KinematicTree {
    root: usize,
    /// (joint index, parent module index, child module index) in parent-first order.
    order: Vec<(usize, usize, usize)>,
    module_count: usize,
}

/// World-frame solution of a configuration.
#[derive(Debug, Clone)]
pub struct Configuration {
    /// Indexed like `Assembly::modules`; `None` for modules not reachable from the root.
    pub module_poses: Vec<Option<Isometry3<f64>>>,
    /// World (anchor, unit axis) per joint, indexed like `Assembly::joints`.
    pub joint_axes: Vec<Option<(Point3<f64>, Unit<Vector3<f64>>)>>,
}

impl KinematicTree {
    pub fn new(a: &Assembly) -> Self {
        let index: HashMap<&str, usize> = a.modules.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
        let root = index.get(a.root_module.as_str()).copied().unwrap_or(0);
        let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); a.modules.len()];
        for (ji, j) in a.joints.iter().enumerate() {
            if let (Some(&p), Some(&c)) = (index.get(j.parent_module.as_str()), index.get(j.child_module.as_str())) {
                children[p].push((ji, c));
            }
        }
        let mut order = Vec::new();
        let mut visited = vec![false; a.modules.len()];
        let mut queue = VecDeque::new();
        if !a.modules.is_empty() {
            visited[root] = true;
            queue.push_back(root);
        }
        while let Some(p) = queue.pop_front() {
            for &(ji, c) in &children[p] {
                if !visited[c] {
                    visited[c] = true;
                    order.push((ji, p, c));
                    queue.push_back(c);
                }
            }
        }
        Self {
            root,
            order,
            module_count: a.modules.len(),
        }
    }

    /// Solves world poses with joint values given by index. Values are
    /// clamped to joint limits; indices of clamped joints are appended to
    /// `clamped`.
    pub fn solve(
        &self,
        a: &Assembly,
        placement: &Isometry3<f64>,
        values: &[f64],
        clamped: &mut Vec<usize>,
    ) -> Configuration {
        let mut module_poses = vec![None; self.module_count];
        let mut joint_axes = vec![None; a.joints.len()];
        if self.module_count == 0 {
            return Configuration {
                module_poses,
                joint_axes,
            };
        }
        module_poses[self.root] = Some(placement * a.base_frame.to_isometry() * a.modules[self.root].rest_pose.to_isometry());
        for &(ji, p, c) in &self.order {
            let j = &a.joints[ji];
            let parent = module_poses[p].expect("parent solved before child");
            let raw = values[ji];
            let q = j.bounds().clamp(raw);
            if q != raw {
                clamped.push(ji);
            }
            let axis = Unit::new_normalize(Vector3::from(j.axis));
            let anchor = Point3::from(j.anchor);
            joint_axes[ji] = Some((parent * anchor, parent.rotation * axis));
            let motion = joint_motion(j.kind, &axis, &anchor, q);
            module_poses[c] = Some(parent * motion * a.modules[c].rest_pose.to_isometry());
        }
        Configuration {
            module_poses,
            joint_axes,
        }
    }
}

/// Relative transform a joint applies between parent frame and child rest frame.
fn joint_motion(kind: JointKind, axis: &Unit<Vector3<f64>>, anchor: &Point3<f64>, q: f64) -> Isometry3<f64> {
    match kind {
        JointKind::Prismatic => Isometry3::translation(q * axis.x, q * axis.y, q * axis.z),
        JointKind::Revolute => {
            let rot = Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(axis, q));
            Translation3::from(anchor.coords) * rot * Translation3::from(-anchor.coords)
        }
    }
}

/// World poses of every module plus the ids of joints whose values were clamped.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub poses: BTreeMap<String, Isometry3<f64>>,
    pub clamped: Vec<String>,
}

fn indexed_values(a: &Assembly, q: &BTreeMap<String, f64>) -> Result<Vec<f64>, KinematicsError> {
    if let Some(unknown) = q.keys().find(|k| a.joint(k).is_none()) {
        return Err(KinematicsError::UnknownJoint(unknown.clone()));
    }
    a.joints
        .iter()
        .map(|j| q.get(&j.id).copied().ok_or_else(|| KinematicsError::MissingJointValue(j.id.clone())))
        .collect()
}

/// World pose of every module for the given joint values. Out-of-limit values
/// are clamped and reported in [`FkResult::clamped`].
pub fn forward_kinematics(a: &Assembly, q: &BTreeMap<String, f64>) -> Result<FkResult, KinematicsError> {
    let values = indexed_values(a, q)?;
    let tree = KinematicTree::new(a);
    let mut clamped = Vec::new();
    let cfg = tree.solve(a, &Isometry3::identity(), &values, &mut clamped);
    let poses = a
        .modules
        .iter()
        .zip(cfg.module_poses)
        .filter_map(|(m, p)| p.map(|p| (m.id.clone(), p)))
        .collect();
    Ok(FkResult {
        poses,
        clamped: clamped.into_iter().map(|i| a.joints[i].id.clone()).collect(),
    })
}

/// World position of a marker.
pub fn marker_world(a: &Assembly, q: &BTreeMap<String, f64>, m: &MarkerRef) -> Result<Point3<f64>, KinematicsError> {
    let marker = a.marker(m).ok_or_else(|| KinematicsError::UnknownMarker {
        module_id: m.module_id.clone(),
        name: m.name.clone(),
    })?;
    let fk = forward_kinematics(a, q)?;
    let pose = fk.poses.get(&marker.module_id).ok_or_else(|| KinematicsError::UnknownMarker {
        module_id: m.module_id.clone(),
        name: m.name.clone(),
    })?;
    Ok(pose * Point3::from(marker.local_point))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn module(id: &str) -> RigidModule {
        RigidModule {
            id: id.into(),
            rest_pose: Pose::IDENTITY,
            mass: 1.0,
            affordance_label: "none".into(),
        }
    }

    fn joint(id: &str, kind: JointKind, parent: &str, child: &str, axis: [f64; 3]) -> JointSpec {
        JointSpec {
            id: id.into(),
            kind,
            parent_module: parent.into(),
            child_module: child.into(),
            axis,
            anchor: [0.0; 3],
            q_lower_bound: -4.0,
            q_upper_bound: 4.0,
            damping: 1.0,
            mu_s: 0.0,
            coulomb_floor: 0.0,
            effective_inertia: 1.0,
            stiffness: StiffnessProfile::Constant { k: 0.0 },
            target_policy: TargetPolicy::Fixed { q_target: 0.0 },
            target_velocity: 0.0,
        }
    }

    fn assembly(modules: &[&str], joints: Vec<JointSpec>) -> Assembly {
        Assembly {
            id: "test".into(),
            category: "test".into(),
            base_frame: Pose::IDENTITY,
            root_module: modules[0].into(),
            modules: modules.iter().map(|m| module(m)).collect(),
            joints,
            behaviors: vec![],
            markers: vec![],
        }
    }

    const MINIMAL: &str = r#"{
        "id": "block", "category": "static",
        "base_frame": {"position": [0,0,0], "orientation": [1,0,0,0]},
        "root_module": "base",
        "modules": [{"id": "base", "rest_pose": {"position": [0,0,0], "orientation": [1,0,0,0]}, "mass": 2.0, "affordance_label": "none"}],
        "joints": [], "behaviors": [], "markers": []
    }"#;

    fn with_joint(joint_json: &str) -> String {
        MINIMAL.replace(
            r#""joints": []"#,
            &format!(r#""joints": [{joint_json}]"#),
        )
    }

    const HINGE: &str = r#"{"id": "hinge", "kind": "revolute", "parent_module": "base", "child_module": "door",
        "axis": [0,0,1], "anchor": [0,0,0], "q_lower_bound": LO, "q_upper_bound": HI, "damping_D": 0.1,
        "mu_s": 0.0, "effective_inertia": 0.1, "stiffness": {"type": "constant", "k": 0},
        "target_policy": {"type": "fixed", "q_target": 0.1}}"#;

    #[test]
    fn parses_minimal_document() {
        let a = parse_asset(MINIMAL).unwrap();
        assert_eq!(a.modules.len(), 1);
        assert!(a.joints.is_empty());
    }

    #[test]
    fn missing_child_module() {
        let doc = with_joint(&HINGE.replace("LO", "0").replace("HI", "1"));
        assert_eq!(
            parse_asset(&doc),
            Err(AssetError::MissingModule {
                joint: "hinge".into(),
                module: "door".into()
            })
        );
    }

    #[test]
    fn inverted_limits() {
        let doc = with_joint(&HINGE.replace("LO", "0.5").replace("HI", "0.1"));
        let doc = doc.replace(
            r#""mass": 2.0, "affordance_label": "none"}]"#,
            r#""mass": 2.0, "affordance_label": "none"}, {"id": "door", "rest_pose": {"position": [0,0,0], "orientation": [1,0,0,0]}, "mass": 1.0, "affordance_label": "pull"}]"#,
        );
        assert_eq!(parse_asset(&doc), Err(AssetError::InvalidLimits { joint: "hinge".into() }));
    }

    #[test]
    fn syntax_error_has_location() {
        match parse_asset("{\n  \"id\": ") {
            Err(AssetError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let doc = MINIMAL.replace(r#""category": "static","#, r#""category": "static", "colour": "red","#);
        assert!(matches!(parse_asset(&doc), Err(AssetError::Syntax { .. })));
    }

    #[test]
    fn non_unit_axis_rejected() {
        let mut a = assembly(&["base", "door"], vec![joint("hinge", JointKind::Revolute, "base", "door", [0.0, 0.0, 1.1])]);
        assert!(validate(&a).has(IssueKind::NonUnitAxis));
        a.joints[0].axis = [0.0, 0.0, 1.0];
        assert_eq!(
            parse_asset(&serialize_asset(&a)).map(|_| ()),
            Ok(())
        );
        a.joints[0].axis = [0.0, 0.6, 0.8 + 1e-6];
        assert_eq!(
            parse_asset(&serialize_asset(&a)),
            Err(AssetError::NonUnitAxis { joint: "hinge".into() })
        );
    }

    #[test]
    fn threshold_out_of_range_reported_once() {
        let mut a = assembly(&["base", "door"], vec![joint("hinge", JointKind::Revolute, "base", "door", [0.0, 0.0, 1.0])]);
        a.joints[0].q_lower_bound = 0.0;
        a.joints[0].q_upper_bound = 1.0;
        a.joints[0].stiffness = StiffnessProfile::Schedule {
            k_high: 10.0,
            k_low: 1.0,
            k_max: 5.0,
            alpha: 1.0,
            lambda: 1.0,
            q_threshold: 1.5,
        };
        let report = validate(&a);
        assert_eq!(report.len(), 1);
        assert_eq!(report.issues[0].message, "threshold out of range");
    }

    #[test]
    fn duplicate_module_reported_once() {
        let a = assembly(&["base", "base"], vec![]);
        let report = validate(&a);
        assert_eq!(report.len(), 1, "{report:?}");
        assert_eq!(report.issues[0].message, "duplicate module id `base`");
        assert!(report.issues[0].message.starts_with("duplicate module id"));
    }

    #[test]
    fn cycles_and_orphans() {
        let a = assembly(
            &["base", "a", "b"],
            vec![
                joint("j1", JointKind::Revolute, "a", "b", [0.0, 0.0, 1.0]),
                joint("j2", JointKind::Revolute, "b", "a", [0.0, 0.0, 1.0]),
            ],
        );
        assert_eq!(parse_asset(&serialize_asset(&a)), Err(AssetError::CyclicStructure));

        let a = assembly(&["base", "a"], vec![]);
        assert!(validate(&a).has(IssueKind::UnreachableModule));
    }

    #[test]
    fn schedule_scalars_survive_round_trip() {
        let mut a = assembly(&["base", "door"], vec![joint("hinge", JointKind::Revolute, "base", "door", [0.0, 0.0, 1.0])]);
        a.joints[0].q_lower_bound = 0.0;
        a.joints[0].q_upper_bound = 1.0;
        a.joints[0].stiffness = StiffnessProfile::Schedule {
            k_high: 1.1 + 0.2,
            k_low: 1.0 / 3.0,
            k_max: 1e-300,
            alpha: std::f64::consts::PI,
            lambda: 123456.789e-7,
            q_threshold: 0.7000000000000001,
        };
        let back = parse_asset(&serialize_asset(&a)).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn empty_behaviors_serialized() {
        let a = parse_asset(MINIMAL).unwrap();
        let text = serialize_asset(&a);
        assert!(text.contains("\"behaviors\": []"));
    }

    #[test]
    fn fk_identity_at_zero() {
        let mut a = assembly(&["base", "door"], vec![joint("hinge", JointKind::Revolute, "base", "door", [0.0, 0.0, 1.0])]);
        a.modules[1].rest_pose = Pose {
            position: [0.3, -0.2, 0.5],
            orientation: [0.0, 0.0, 0.0, 1.0],
        };
        let fk = forward_kinematics(&a, &BTreeMap::from([("hinge".to_string(), 0.0)])).unwrap();
        assert_eq!(fk.poses["door"], a.modules[1].rest_pose.to_isometry());
        assert!(fk.clamped.is_empty());
    }

    #[test]
    fn fk_prismatic_shift() {
        let mut a = assembly(&["base", "tray"], vec![joint("slide", JointKind::Prismatic, "base", "tray", [1.0, 0.0, 0.0])]);
        a.markers.push(Marker {
            module_id: "tray".into(),
            name: "origin".into(),
            local_point: [0.0; 3],
        });
        let q = BTreeMap::from([("slide".to_string(), 0.2)]);
        let p = marker_world(&a, &q, &MarkerRef::new("tray", "origin")).unwrap();
        assert!((p - Point3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn fk_quarter_turn() {
        let mut a = assembly(&["base", "door"], vec![joint("hinge", JointKind::Revolute, "base", "door", [0.0, 0.0, 1.0])]);
        a.joints[0].anchor = [0.5, 0.5, 0.0];
        a.markers.push(Marker {
            module_id: "door".into(),
            name: "edge".into(),
            local_point: [1.5, 0.5, 0.0],
        });
        let q = BTreeMap::from([("hinge".to_string(), FRAC_PI_2)]);
        let p = marker_world(&a, &q, &MarkerRef::new("door", "edge")).unwrap();
        let offset = p - Point3::new(0.5, 0.5, 0.0);
        assert!((offset - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12, "{offset}");
    }

    #[test]
    fn fk_clamps_and_flags() {
        let a = assembly(&["base", "tray"], vec![joint("slide", JointKind::Prismatic, "base", "tray", [1.0, 0.0, 0.0])]);
        let fk = forward_kinematics(&a, &BTreeMap::from([("slide".to_string(), 9.0)])).unwrap();
        assert_eq!(fk.clamped, vec!["slide".to_string()]);
        assert!((fk.poses["tray"].translation.vector.x - 4.0).abs() < 1e-15);
    }

    #[test]
    fn fk_errors() {
        let a = assembly(&["base", "tray"], vec![joint("slide", JointKind::Prismatic, "base", "tray", [1.0, 0.0, 0.0])]);
        let q = BTreeMap::from([("slide".to_string(), 0.0), ("ghost".to_string(), 0.0)]);
        assert_eq!(
            forward_kinematics(&a, &q).unwrap_err(),
            KinematicsError::UnknownJoint("ghost".into())
        );
        let q = BTreeMap::from([("slide".to_string(), 0.0)]);
        assert!(matches!(
            marker_world(&a, &q, &MarkerRef::new("tray", "nope")),
            Err(KinematicsError::UnknownMarker { .. })
        ));
    }

    #[test]
    fn fk_two_joint_chain_composes() {
        let mut a = assembly(
            &["base", "arm", "tip"],
            vec![
                joint("shoulder", JointKind::Revolute, "base", "arm", [0.0, 0.0, 1.0]),
                joint("elbow", JointKind::Revolute, "arm", "tip", [0.0, 1.0, 0.0]),
            ],
        );
        a.joints[1].anchor = [1.0, 0.0, 0.2];
        a.modules[2].rest_pose = Pose::from_position([1.0, 0.0, 0.0]);
        let q = |a1: f64, a2: f64| BTreeMap::from([("shoulder".to_string(), a1), ("elbow".to_string(), a2)]);
        let (q1, q2) = (0.7, -1.1);
        let full = forward_kinematics(&a, &q(q1, q2)).unwrap().poses["tip"];
        let first = forward_kinematics(&a, &q(q1, 0.0)).unwrap().poses["tip"];
        let rest = forward_kinematics(&a, &q(0.0, 0.0)).unwrap().poses["tip"];
        let second = forward_kinematics(&a, &q(0.0, q2)).unwrap().poses["tip"];
        // pose(q1, q2) = pose(q1, 0) · [pose(0,0)⁻¹ · pose(0, q2)]
        let composed = first * (rest.inverse() * second);
        assert!((composed.translation.vector - full.translation.vector).norm() < 1e-9);
        assert!(composed.rotation.angle_to(&full.rotation) < 1e-9);
    }
}
