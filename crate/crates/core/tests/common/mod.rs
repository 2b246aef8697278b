#![allow(dead_code)]

use artjoint::asset::{Assembly, JointKind, Marker, Pose, RigidModule, StiffnessProfile, TargetPolicy};
use artjoint::behavior::{BehaviorRule, Direction, Effect, Trigger};
use artjoint::JointSpec;
use rand::Rng;

fn unit3(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn pose(rng: &mut impl Rng) -> Pose {
    let axis = unit3(rng);
    let half: f64 = rng.random_range(-1.5..1.5);
    let (s, c) = half.sin_cos();
    Pose {
        position: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        orientation: [c, s * axis[0], s * axis[1], s * axis[2]],
    }
}

fn joint(rng: &mut impl Rng, id: String, parent: String, child: String) -> JointSpec {
    let lower: f64 = rng.random_range(-1.0..0.5);
    let upper = lower + rng.random_range(0.1..2.0);
    let inside = |rng: &mut dyn rand::RngCore| lower + (upper - lower) * rng.random_range(0.05..0.95);
    let stiffness = if rng.random_bool(0.5) {
        StiffnessProfile::Constant { k: rng.random_range(0.0..50.0) }
    } else {
        let k_low = rng.random_range(0.0..5.0);
        StiffnessProfile::Schedule {
            k_high: k_low + rng.random_range(0.0..30.0),
            k_low,
            k_max: rng.random_range(0.0..30.0),
            alpha: rng.random_range(0.0..10.0),
            lambda: rng.random_range(0.0..20.0),
            q_threshold: inside(rng),
        }
    };
    let target_policy = if rng.random_bool(0.5) {
        TargetPolicy::Fixed { q_target: inside(rng) }
    } else {
        TargetPolicy::Latch { q_threshold: inside(rng) }
    };
    JointSpec {
        id,
        kind: if rng.random_bool(0.5) { JointKind::Revolute } else { JointKind::Prismatic },
        parent_module: parent,
        child_module: child,
        axis: unit3(rng),
        anchor: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        q_lower_bound: lower,
        q_upper_bound: upper,
        damping: rng.random_range(0.0..5.0),
        mu_s: rng.random_range(0.0..1.0),
        coulomb_floor: rng.random_range(0.0..2.0),
        effective_inertia: rng.random_range(0.01..5.0),
        stiffness,
        target_policy,
        target_velocity: if rng.random_bool(0.2) { rng.random_range(-1.0..1.0) } else { 0.0 },
    }
}

/// A valid assembly: a random tree of 1 to 6 modules with markers and rules.
pub fn random_assembly(rng: &mut impl Rng, index: usize) -> Assembly {
    let n = rng.random_range(1..=6);
    let modules: Vec<RigidModule> = (0..n)
        .map(|i| RigidModule {
            id: format!("m{i}"),
            rest_pose: pose(rng),
            mass: rng.random_range(0.01..20.0),
            affordance_label: ["none", "pull", "press", "lift"][rng.random_range(0..4)].to_owned(),
        })
        .collect();
    let joints: Vec<JointSpec> = (1..n)
        .map(|i| {
            let parent = rng.random_range(0..i);
            joint(rng, format!("j{i}"), format!("m{parent}"), format!("m{i}"))
        })
        .collect();
    let markers = (0..rng.random_range(0..4))
        .map(|k| Marker {
            module_id: format!("m{}", rng.random_range(0..n)),
            name: format!("k{k}"),
            local_point: [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
        })
        .collect();
    let mut behaviors = Vec::new();
    for (r, j) in joints.iter().enumerate() {
        if rng.random_bool(0.5) {
            continue;
        }
        let b = j.bounds();
        let mut effects = vec![Effect::SetOpenState {
            joint: j.id.clone(),
            value: rng.random_bool(0.5),
        }];
        if rng.random_bool(0.5) {
            effects.push(Effect::SetFixedTarget {
                joint: j.id.clone(),
                q_target: b.lower + (b.upper - b.lower) * rng.random_range(0.0..1.0),
            });
        }
        if rng.random_bool(0.3) {
            effects.push(Effect::EmitSignal { name: format!("s{r}") });
            behaviors.push(BehaviorRule {
                id: format!("listen{r}"),
                trigger: Trigger::SignalReceived { name: format!("s{r}") },
                effects: vec![Effect::SetProperty {
                    target: "self".into(),
                    key: "light".into(),
                    scalar: rng.random_range(0.0..1.0),
                }],
            });
        }
        behaviors.push(BehaviorRule {
            id: format!("rule{r}"),
            trigger: Trigger::ThresholdCrossed {
                joint: j.id.clone(),
                value: b.lower + (b.upper - b.lower) * rng.random_range(0.0..1.0),
                direction: if rng.random_bool(0.5) { Direction::Rising } else { Direction::Falling },
            },
            effects,
        });
    }
    Assembly {
        id: format!("asset{index}"),
        category: "random".into(),
        base_frame: pose(rng),
        root_module: "m0".into(),
        modules,
        joints,
        behaviors,
        markers,
    }
}
