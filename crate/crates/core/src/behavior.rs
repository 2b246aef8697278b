//! Declarative trigger → effect rules embedded in assets.
//!
//! Rules are bound once against the assemblies of a scenario into an
//! immutable [`BehaviorGraph`]. Each tick, [`evaluate`] compares joint
//! positions before and after the physics step, fires edge-triggered
//! threshold rules, resolves signal chains within the same tick and returns
//! the effects to [`apply`].

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::Assembly;
use crate::dynamics::JointState;

/// Maximum signal chain depth resolved within one tick.
pub const MAX_SIGNAL_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorRule {
    pub id: String,
    pub trigger: Trigger,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Rising,
    Falling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    ThresholdCrossed { joint: String, value: f64, direction: Direction },
    SignalReceived { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    SetOpenState { joint: String, value: bool },
    SetFixedTarget { joint: String, q_target: f64 },
    EmitSignal { name: String },
    /// Sets a scalar property on an assembly or module, addressed as
    /// `self`, `<alias>` or `<alias>/<module>`.
    SetProperty { target: String, key: String, scalar: f64 },
}

/// Index of a joint within the bound assemblies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointKey {
    pub assembly: usize,
    pub joint: usize,
}

/// A resolved joint reference; serializes as its qualified name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct JointHandle {
    #[serde(skip)]
    pub key: JointKey,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResolvedEffect {
    SetOpenState { joint: JointHandle, value: bool },
    SetFixedTarget { joint: JointHandle, q_target: f64 },
    EmitSignal { name: String },
    SetProperty { target: String, key: String, scalar: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompiledTrigger {
    Threshold {
        joint: JointHandle,
        value: f64,
        direction: Direction,
    },
    Signal(String),
}

/// One rule after reference resolution; each is an edge from its trigger to
/// its effects.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRule {
    pub id: String,
    /// Alias of the owning assembly, or `scenario` for scenario-level rules.
    pub owner: String,
    pub trigger: CompiledTrigger,
    pub effects: Vec<ResolvedEffect>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BehaviorGraph {
    rules: Vec<CompiledRule>,
    /// Joint count per assembly, used to check state tables.
    shape: Vec<usize>,
}

impl BehaviorGraph {
    pub fn edges(&self) -> &[CompiledRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Rules and the assembly (if any) whose local names they use.
pub struct RuleSource<'a> {
    pub owner: Option<usize>,
    pub rules: &'a [BehaviorRule],
}

/// An assembly participating in a scenario under `alias`.
pub struct BoundAssembly<'a> {
    pub alias: &'a str,
    pub assembly: &'a Assembly,
}

#[derive(Debug, Error, PartialEq)]
pub enum BindError {
    #[error("rule `{rule}`: unresolved reference `{reference}`")]
    UnresolvedReference { rule: String, reference: String },
    #[error("rule `{rule}`: effect list is empty")]
    EmptyEffects { rule: String },
    #[error("rule `{rule}`: target {q_target} outside the limits of `{joint}`")]
    TargetOutOfRange { rule: String, joint: String, q_target: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum BehaviorError {
    #[error("signal chain exceeded depth {MAX_SIGNAL_DEPTH} at `{signal}`")]
    SignalLoopDetected { signal: String },
    #[error("state table does not match the bound assemblies")]
    StateShapeMismatch,
}

struct Resolver<'a> {
    assemblies: &'a [BoundAssembly<'a>],
}

impl Resolver<'_> {
    fn joint(&self, owner: Option<usize>, reference: &str) -> Option<JointHandle> {
        let (a, joint_id) = match reference.split_once('/') {
            Some((alias, joint)) => (self.assemblies.iter().position(|b| b.alias == alias)?, joint),
            None => (owner?, reference),
        };
        let j = self.assemblies[a].assembly.joint_index(joint_id)?;
        Some(JointHandle {
            key: JointKey { assembly: a, joint: j },
            name: format!("{}/{}", self.assemblies[a].alias, joint_id),
        })
    }

    fn property_target(&self, owner: Option<usize>, target: &str) -> Option<String> {
        let (head, module) = match target.split_once('/') {
            Some((h, m)) => (h, Some(m)),
            None => (target, None),
        };
        let a = if head == "self" {
            owner?
        } else {
            self.assemblies.iter().position(|b| b.alias == head)?
        };
        let bound = &self.assemblies[a];
        match module {
            Some(m) => bound.assembly.module(m).map(|_| format!("{}/{m}", bound.alias)),
            None => Some(bound.alias.to_owned()),
        }
    }
}

/// Resolves every rule's references into a graph. Joint names in rules owned
/// by an assembly may be local (`hinge`) or qualified (`oven/hinge`);
/// scenario-level rules must use qualified names.
pub fn bind(sources: &[RuleSource<'_>], assemblies: &[BoundAssembly<'_>]) -> Result<BehaviorGraph, BindError> {
    let resolver = Resolver { assemblies };
    let unresolved = |rule: &BehaviorRule, reference: &str| BindError::UnresolvedReference {
        rule: rule.id.clone(),
        reference: reference.to_owned(),
    };
    let mut rules = Vec::new();
    for source in sources {
        let owner = match source.owner {
            Some(i) => assemblies.get(i).map(|b| b.alias.to_owned()).unwrap_or_default(),
            None => "scenario".to_owned(),
        };
        for rule in source.rules {
            if rule.effects.is_empty() {
                return Err(BindError::EmptyEffects { rule: rule.id.clone() });
            }
            let trigger = match &rule.trigger {
                Trigger::ThresholdCrossed { joint, value, direction } => CompiledTrigger::Threshold {
                    joint: resolver.joint(source.owner, joint).ok_or_else(|| unresolved(rule, joint))?,
                    value: *value,
                    direction: *direction,
                },
                Trigger::SignalReceived { name } => CompiledTrigger::Signal(name.clone()),
            };
            let mut effects = Vec::with_capacity(rule.effects.len());
            for effect in &rule.effects {
                effects.push(match effect {
                    Effect::SetOpenState { joint, value } => ResolvedEffect::SetOpenState {
                        joint: resolver.joint(source.owner, joint).ok_or_else(|| unresolved(rule, joint))?,
                        value: *value,
                    },
                    Effect::SetFixedTarget { joint, q_target } => {
                        let handle = resolver.joint(source.owner, joint).ok_or_else(|| unresolved(rule, joint))?;
                        let spec = &assemblies[handle.key.assembly].assembly.joints[handle.key.joint];
                        if !spec.bounds().contains(*q_target) {
                            return Err(BindError::TargetOutOfRange {
                                rule: rule.id.clone(),
                                joint: handle.name,
                                q_target: *q_target,
                            });
                        }
                        ResolvedEffect::SetFixedTarget {
                            joint: handle,
                            q_target: *q_target,
                        }
                    }
                    Effect::EmitSignal { name } => ResolvedEffect::EmitSignal { name: name.clone() },
                    Effect::SetProperty { target, key, scalar } => ResolvedEffect::SetProperty {
                        target: resolver
                            .property_target(source.owner, target)
                            .ok_or_else(|| unresolved(rule, target))?,
                        key: key.clone(),
                        scalar: *scalar,
                    },
                });
            }
            rules.push(CompiledRule {
                id: rule.id.clone(),
                owner: owner.clone(),
                trigger,
                effects,
            });
        }
    }
    Ok(BehaviorGraph {
        rules,
        shape: assemblies.iter().map(|b| b.assembly.joints.len()).collect(),
    })
}

/// Binds the rules embedded in each assembly (plus optional scenario-level rules).
pub fn bind_assemblies(
    assemblies: &[BoundAssembly<'_>],
    scenario_rules: &[BehaviorRule],
) -> Result<BehaviorGraph, BindError> {
    let mut sources: Vec<RuleSource<'_>> = assemblies
        .iter()
        .enumerate()
        .map(|(i, b)| RuleSource {
            owner: Some(i),
            rules: &b.assembly.behaviors,
        })
        .collect();
    sources.push(RuleSource {
        owner: None,
        rules: scenario_rules,
    });
    bind(&sources, assemblies)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    RuleFired { rule: String, owner: String },
    EffectApplied { rule: String, effect: ResolvedEffect },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

/// Time-ordered record of fired rules and applied effects.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EventLog {
    pub entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn extend(&mut self, entries: impl IntoIterator<Item = LogEntry>) {
        self.entries.extend(entries);
    }

    pub fn fired_rules(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter_map(|e| match &e.event {
            Event::RuleFired { rule, .. } => Some(rule.as_str()),
            _ => None,
        })
    }

    pub fn applied_effects(&self) -> impl Iterator<Item = &ResolvedEffect> {
        self.entries.iter().filter_map(|e| match &e.event {
            Event::EffectApplied { effect, .. } => Some(effect),
            _ => None,
        })
    }

    pub fn count_open_state_changes(&self) -> usize {
        self.applied_effects()
            .filter(|e| matches!(e, ResolvedEffect::SetOpenState { .. }))
            .count()
    }
}

/// Output of one evaluation tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub effects: Vec<ResolvedEffect>,
    pub log: Vec<LogEntry>,
}

fn crossed(direction: Direction, value: f64, prev: f64, new: f64) -> bool {
    match direction {
        Direction::Rising => prev < value && new >= value,
        Direction::Falling => prev > value && new <= value,
    }
}

fn check_shape(graph: &BehaviorGraph, states: &[Vec<JointState>]) -> Result<(), BehaviorError> {
    let ok = states.len() == graph.shape.len() && states.iter().zip(&graph.shape).all(|(s, &n)| s.len() == n);
    if ok {
        Ok(())
    } else {
        Err(BehaviorError::StateShapeMismatch)
    }
}

/// Fires rules whose trigger occurred between `prev` and `new` and resolves
/// the signal chains they start. Effects come back in firing order.
pub fn evaluate(
    graph: &BehaviorGraph,
    prev: &[Vec<JointState>],
    new: &[Vec<JointState>],
    t: f64,
) -> Result<Evaluation, BehaviorError> {
    check_shape(graph, prev)?;
    check_shape(graph, new)?;
    let mut out = Evaluation::default();
    let mut signals: VecDeque<(String, usize)> = VecDeque::new();

    let fire = |rule: &CompiledRule, depth: usize, out: &mut Evaluation, signals: &mut VecDeque<(String, usize)>| {
        out.log.push(LogEntry {
            t,
            event: Event::RuleFired {
                rule: rule.id.clone(),
                owner: rule.owner.clone(),
            },
        });
        for effect in &rule.effects {
            if let ResolvedEffect::EmitSignal { name } = effect {
                signals.push_back((name.clone(), depth + 1));
            }
            out.log.push(LogEntry {
                t,
                event: Event::EffectApplied {
                    rule: rule.id.clone(),
                    effect: effect.clone(),
                },
            });
            out.effects.push(effect.clone());
        }
    };

    for rule in &graph.rules {
        if let CompiledTrigger::Threshold { joint, value, direction } = &rule.trigger {
            let k = joint.key;
            if crossed(*direction, *value, prev[k.assembly][k.joint].q, new[k.assembly][k.joint].q) {
                fire(rule, 0, &mut out, &mut signals);
            }
        }
    }
    while let Some((signal, depth)) = signals.pop_front() {
        if depth > MAX_SIGNAL_DEPTH {
            return Err(BehaviorError::SignalLoopDetected { signal });
        }
        for rule in &graph.rules {
            if matches!(&rule.trigger, CompiledTrigger::Signal(name) if *name == signal) {
                fire(rule, depth, &mut out, &mut signals);
            }
        }
    }
    Ok(out)
}

/// Scalar properties set by behaviors, keyed by target path then key.
pub type PropertyStore = BTreeMap<String, BTreeMap<String, f64>>;

/// Applies effects in order. Re-applying the same effects is a no-op.
pub fn apply(effects: &[ResolvedEffect], states: &mut [Vec<JointState>], properties: &mut PropertyStore) {
    for effect in effects {
        match effect {
            ResolvedEffect::SetOpenState { joint, value } => {
                states[joint.key.assembly][joint.key.joint].s_open = *value;
            }
            ResolvedEffect::SetFixedTarget { joint, q_target } => {
                states[joint.key.assembly][joint.key.joint].target_override = Some(*q_target);
            }
            ResolvedEffect::EmitSignal { .. } => {}
            ResolvedEffect::SetProperty { target, key, scalar } => {
                properties.entry(target.clone()).or_default().insert(key.clone(), *scalar);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::{JointKind, JointSpec, Pose, RigidModule, StiffnessProfile, TargetPolicy};
    use crate::dynamics::Regime;

    fn joint(id: &str, child: &str, upper: f64) -> JointSpec {
        JointSpec {
            id: id.into(),
            kind: JointKind::Prismatic,
            parent_module: "base".into(),
            child_module: child.into(),
            axis: [0.0, 0.0, 1.0],
            anchor: [0.0; 3],
            q_lower_bound: 0.0,
            q_upper_bound: upper,
            damping: 0.0,
            mu_s: 0.0,
            coulomb_floor: 0.0,
            effective_inertia: 1.0,
            stiffness: StiffnessProfile::Constant { k: 0.0 },
            target_policy: TargetPolicy::Fixed { q_target: 0.0 },
            target_velocity: 0.0,
        }
    }

    fn module(id: &str) -> RigidModule {
        RigidModule {
            id: id.into(),
            rest_pose: Pose::IDENTITY,
            mass: 1.0,
            affordance_label: "none".into(),
        }
    }

    fn assembly(id: &str, joints: Vec<JointSpec>, behaviors: Vec<BehaviorRule>) -> Assembly {
        let mut modules = vec![module("base")];
        modules.extend(joints.iter().map(|j| module(&j.child_module)));
        Assembly {
            id: id.into(),
            category: id.into(),
            base_frame: Pose::IDENTITY,
            root_module: "base".into(),
            modules,
            joints,
            behaviors,
            markers: vec![],
        }
    }

    fn microwave() -> Assembly {
        assembly(
            "microwave",
            vec![joint("button", "button_cap", 0.01), joint("door", "door_panel", 1.6)],
            vec![BehaviorRule {
                id: "press_opens".into(),
                trigger: Trigger::ThresholdCrossed {
                    joint: "button".into(),
                    value: 0.005,
                    direction: Direction::Rising,
                },
                effects: vec![Effect::SetOpenState {
                    joint: "door".into(),
                    value: true,
                }],
            }],
        )
    }

    fn states_for(a: &[&Assembly]) -> Vec<Vec<JointState>> {
        a.iter()
            .map(|a| a.joints.iter().map(|j| JointState::at_rest(j, 0.0, false)).collect())
            .collect()
    }

    fn graph_for(a: &[(&str, &Assembly)], scenario_rules: &[BehaviorRule]) -> Result<BehaviorGraph, BindError> {
        let bound: Vec<_> = a.iter().map(|(alias, a)| BoundAssembly { alias, assembly: a }).collect();
        bind_assemblies(&bound, scenario_rules)
    }

    #[test]
    fn microwave_rule_binds_one_edge() {
        let m = microwave();
        let g = graph_for(&[("microwave", &m)], &[]).unwrap();
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn absent_joint_is_unresolved() {
        let mut m = microwave();
        m.behaviors[0].effects = vec![Effect::SetOpenState {
            joint: "hatch".into(),
            value: true,
        }];
        assert_eq!(
            graph_for(&[("microwave", &m)], &[]),
            Err(BindError::UnresolvedReference {
                rule: "press_opens".into(),
                reference: "hatch".into()
            })
        );
    }

    fn switch_and_lamp() -> (Assembly, Assembly) {
        let switch = assembly(
            "switch",
            vec![joint("toggle", "rocker", 0.01)],
            vec![BehaviorRule {
                id: "flip".into(),
                trigger: Trigger::ThresholdCrossed {
                    joint: "toggle".into(),
                    value: 0.005,
                    direction: Direction::Rising,
                },
                effects: vec![Effect::EmitSignal { name: "light_on".into() }],
            }],
        );
        let lamp = assembly(
            "lamp",
            vec![],
            vec![BehaviorRule {
                id: "illuminate".into(),
                trigger: Trigger::SignalReceived { name: "light_on".into() },
                effects: vec![Effect::SetProperty {
                    target: "self/base".into(),
                    key: "emissive".into(),
                    scalar: 1.0,
                }],
            }],
        );
        (switch, lamp)
    }

    #[test]
    fn cross_assembly_chain() {
        let (switch, lamp) = switch_and_lamp();
        let g = graph_for(&[("switch", &switch), ("lamp", &lamp)], &[]).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.edges()[1].owner, "lamp");

        let prev = states_for(&[&switch, &lamp]);
        let mut new = prev.clone();
        new[0][0].q = 0.008;
        let ev = evaluate(&g, &prev, &new, 0.25).unwrap();
        let mut props = PropertyStore::new();
        apply(&ev.effects, &mut new, &mut props);
        assert_eq!(props["lamp/base"]["emissive"], 1.0);
    }

    #[test]
    fn button_crossing_fires() {
        let m = microwave();
        let g = graph_for(&[("microwave", &m)], &[]).unwrap();
        let mut prev = states_for(&[&m]);
        prev[0][0].q = 0.004;
        let mut new = prev.clone();
        new[0][0].q = 0.006;
        let ev = evaluate(&g, &prev, &new, 1.0).unwrap();
        assert_eq!(ev.effects.len(), 1);
        assert!(matches!(&ev.effects[0], ResolvedEffect::SetOpenState { joint, value: true } if joint.name == "microwave/door"));
        assert_eq!(ev.log.len(), 2);

        apply(&ev.effects, &mut new, &mut PropertyStore::new());
        assert!(new[0][1].s_open);
        // idempotent
        let once = new.clone();
        apply(&ev.effects, &mut new, &mut PropertyStore::new());
        assert_eq!(once, new);
    }

    #[test]
    fn no_crossing_no_effects() {
        let m = microwave();
        let g = graph_for(&[("microwave", &m)], &[]).unwrap();
        let mut prev = states_for(&[&m]);
        prev[0][0].q = 0.001;
        let mut new = prev.clone();
        new[0][0].q = 0.004;
        assert_eq!(evaluate(&g, &prev, &new, 0.0).unwrap(), Evaluation::default());
    }

    #[test]
    fn edge_triggered_once_while_held() {
        let m = microwave();
        let g = graph_for(&[("microwave", &m)], &[]).unwrap();
        let trace = [0.0, 0.004, 0.006, 0.007, 0.008, 0.008, 0.004, 0.002, 0.0052, 0.009];
        let mut fired = Vec::new();
        for w in trace.windows(2) {
            let mut prev = states_for(&[&m]);
            prev[0][0].q = w[0];
            let mut new = prev.clone();
            new[0][0].q = w[1];
            fired.push(!evaluate(&g, &prev, &new, 0.0).unwrap().effects.is_empty());
        }
        assert_eq!(fired, vec![false, true, false, false, false, false, false, true, false]);
    }

    fn relay(id: &str, on: &str, emit: Effect) -> BehaviorRule {
        BehaviorRule {
            id: id.into(),
            trigger: Trigger::SignalReceived { name: on.into() },
            effects: vec![emit],
        }
    }

    #[test]
    fn chain_resolves_in_one_tick() {
        let a = assembly("rig", vec![joint("lever", "arm", 1.0), joint("gate", "panel", 1.0)], vec![]);
        let rules = vec![
            relay("C", "s2", Effect::SetFixedTarget { joint: "rig/gate".into(), q_target: 0.5 }),
            BehaviorRule {
                id: "A".into(),
                trigger: Trigger::ThresholdCrossed {
                    joint: "rig/lever".into(),
                    value: 0.5,
                    direction: Direction::Falling,
                },
                effects: vec![Effect::EmitSignal { name: "s1".into() }],
            },
            relay("B", "s1", Effect::EmitSignal { name: "s2".into() }),
        ];
        let g = graph_for(&[("rig", &a)], &rules).unwrap();
        let mut prev = states_for(&[&a]);
        prev[0][0].q = 0.7;
        let mut new = prev.clone();
        new[0][0].q = 0.3;
        let ev = evaluate(&g, &prev, &new, 2.0).unwrap();
        let log = EventLog { entries: ev.log };
        assert_eq!(log.fired_rules().collect::<Vec<_>>(), vec!["A", "B", "C"]);
        apply(&ev.effects, &mut new, &mut PropertyStore::new());
        assert_eq!(new[0][1].target_override, Some(0.5));
        assert_eq!(new[0][1].regime, Regime::Static);
    }

    #[test]
    fn signal_loop_detected() {
        let a = assembly("rig", vec![joint("lever", "arm", 1.0)], vec![]);
        let rules = vec![
            BehaviorRule {
                id: "start".into(),
                trigger: Trigger::ThresholdCrossed {
                    joint: "rig/lever".into(),
                    value: 0.5,
                    direction: Direction::Rising,
                },
                effects: vec![Effect::EmitSignal { name: "ping".into() }],
            },
            relay("echo", "ping", Effect::EmitSignal { name: "ping".into() }),
        ];
        let g = graph_for(&[("rig", &a)], &rules).unwrap();
        let prev = states_for(&[&a]);
        let mut new = prev.clone();
        new[0][0].q = 0.6;
        assert_eq!(
            evaluate(&g, &prev, &new, 0.0),
            Err(BehaviorError::SignalLoopDetected { signal: "ping".into() })
        );
    }

    #[test]
    fn deep_chain_within_limit() {
        let a = assembly("rig", vec![joint("lever", "arm", 1.0)], vec![]);
        let mut rules = vec![BehaviorRule {
            id: "start".into(),
            trigger: Trigger::ThresholdCrossed {
                joint: "rig/lever".into(),
                value: 0.5,
                direction: Direction::Rising,
            },
            effects: vec![Effect::EmitSignal { name: "s1".into() }],
        }];
        for d in 1..MAX_SIGNAL_DEPTH {
            rules.push(relay(&format!("r{d}"), &format!("s{d}"), Effect::EmitSignal { name: format!("s{}", d + 1) }));
        }
        let g = graph_for(&[("rig", &a)], &rules).unwrap();
        let prev = states_for(&[&a]);
        let mut new = prev.clone();
        new[0][0].q = 0.6;
        let ev = evaluate(&g, &prev, &new, 0.0).unwrap();
        assert_eq!(ev.effects.len(), MAX_SIGNAL_DEPTH);
    }

    #[test]
    fn fixed_target_outside_limits_rejected() {
        let a = assembly("rig", vec![joint("gate", "panel", 1.0)], vec![]);
        let rules = vec![relay("r", "go", Effect::SetFixedTarget { joint: "rig/gate".into(), q_target: 2.0 })];
        assert!(matches!(graph_for(&[("rig", &a)], &rules), Err(BindError::TargetOutOfRange { .. })));
    }

    #[test]
    fn scenario_rules_need_qualified_names() {
        let a = assembly("rig", vec![joint("gate", "panel", 1.0)], vec![]);
        let rules = vec![relay("r", "go", Effect::SetOpenState { joint: "gate".into(), value: true })];
        assert!(matches!(graph_for(&[("rig", &a)], &rules), Err(BindError::UnresolvedReference { .. })));
    }

    #[test]
    fn rules_round_trip_through_json() {
        let m = microwave();
        let text = serde_json::to_string(&m.behaviors).unwrap();
        let back: Vec<BehaviorRule> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m.behaviors);
        assert!(text.contains(r#""type":"threshold_crossed""#));
    }
}
