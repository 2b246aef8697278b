use artjoint::fixtures;
use artjoint::scenario::{ForceProfile, InitialJoint};
use artjoint::sysid::{fit, generate_synthetic, load_fitspec, FitProblem, FreeParam, Param};
use artjoint::JointSpec;

struct Case {
    fixture: &'static str,
    joint: &'static str,
    initial: InitialJoint,
    forces: ForceProfile,
    duration: f64,
    free: &'static [Param],
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            fixture: "drawer",
            joint: "slide",
            initial: InitialJoint { q: 0.3, q_dot: 0.0, s_open: false },
            forces: ForceProfile::Linear {
                points: vec![[0.0, 2.4], [4.0, 0.0], [4.5, -0.5], [5.5, -0.5], [7.0, 1.0], [8.0, 1.0]],
            },
            duration: 8.0,
            free: &[Param::Damping, Param::MuS, Param::CoulombFloor],
        },
        Case {
            fixture: "microwave",
            joint: "door",
            initial: InitialJoint { q: 0.005, q_dot: 0.0, s_open: true },
            forces: ForceProfile::constant(0.0, 0.0, 1.0),
            duration: 2.0,
            free: &[Param::Damping, Param::StiffnessK],
        },
        Case {
            fixture: "oven",
            joint: "door",
            initial: InitialJoint { q: 0.55, q_dot: -0.2, s_open: false },
            forces: ForceProfile::constant(0.0, 0.0, 1.0),
            duration: 2.0,
            free: &[Param::Damping, Param::KMax, Param::Lambda],
        },
        Case {
            fixture: "trashcan",
            joint: "lid",
            initial: InitialJoint { q: 1.2, q_dot: 0.0, s_open: true },
            forces: ForceProfile::Linear {
                points: vec![[0.0, 0.0], [0.5, -1.5], [1.5, -1.5], [1.6, 0.0]],
            },
            duration: 3.0,
            free: &[Param::Damping, Param::StiffnessK, Param::EffectiveInertia],
        },
    ]
}

fn truth(c: &Case) -> JointSpec {
    fixtures::get(c.fixture).unwrap().assembly().unwrap().joint(c.joint).unwrap().clone()
}

fn problem(c: &Case, signs: &[f64], noise_sd: f64, seed: u64) -> FitProblem {
    let spec = truth(c);
    let obs = generate_synthetic(&spec, c.initial, &c.forces, c.duration, 1e-3, noise_sd, seed, "q").unwrap();
    let free = c
        .free
        .iter()
        .zip(signs)
        .map(|(&param, s)| {
            let v = param.get(&spec).unwrap();
            FreeParam { param, lo: 0.2 * v, hi: 3.0 * v, init: v * (1.0 + 0.3 * s) }
        })
        .collect();
    FitProblem::from_trajectory(&obs, "q", c.forces.clone(), spec, free, Some(c.initial), 1e-3).unwrap()
}

#[test]
fn recovers_fixture_parameters_from_perturbed_start() {
    for c in cases() {
        let spec = truth(&c);
        for signs in [[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, -1.0]] {
            let p = problem(&c, &signs, 0.0, 0);
            let r = fit(&p).unwrap();
            assert!(r.evaluations <= 5000);
            assert!(r.residual_sse <= p.objective(&p.init()).unwrap());
            for (f, v) in p.free().iter().zip(&r.values) {
                let want = f.param.get(&spec).unwrap();
                assert!(
                    ((v - want) / want).abs() <= 0.05,
                    "{} {}: got {v}, want {want} ({r:?})",
                    c.fixture,
                    f.param.name()
                );
                assert!(*v >= f.lo && *v <= f.hi);
            }
        }
    }
}

#[test]
fn doubled_damping_fits_worse() {
    for c in cases() {
        let spec = truth(&c);
        let p = problem(&c, &[0.0; 3], 0.0, 0);
        let at_truth: Vec<f64> = p.free().iter().map(|f| f.param.get(&spec).unwrap()).collect();
        let mut doubled = at_truth.clone();
        doubled[0] *= 2.0;
        let base = p.objective(&at_truth).unwrap();
        assert!(base <= 1e-12);
        assert!(p.objective(&doubled).unwrap() > base, "{}", c.fixture);
    }
}

#[test]
fn noise_stays_within_chi_square_bound() {
    let c = &cases()[0];
    let spec = truth(c);
    let sd = 1e-3;
    let mut inside = 0;
    for seed in 0..100 {
        let p = problem(c, &[0.0; 3], sd, seed);
        let at_truth: Vec<f64> = p.free().iter().map(|f| f.param.get(&spec).unwrap()).collect();
        let sse = p.objective(&at_truth).unwrap();
        assert!(sse > 0.0);
        if sse < 2.0 * p.samples() as f64 * sd * sd {
            inside += 1;
        }
    }
    assert!(inside >= 99, "{inside}/100 within bound");
}

#[test]
fn fits_are_deterministic() {
    let c = &cases()[2];
    let p = problem(c, &[1.0, -1.0, 1.0], 1e-4, 3);
    assert_eq!(fit(&p).unwrap(), fit(&p).unwrap());
}

#[test]
fn bundled_fit_spec_recovers_drawer_friction() {
    let p = load_fitspec(fixtures::source_dir().join("drawer.fitspec.json")).unwrap();
    let r = fit(&p).unwrap();
    assert!(r.converged, "{r:?}");
    let spec = truth(&cases()[0]);
    for (name, v) in &r.params {
        let want = match name.as_str() {
            "damping_D" => spec.damping,
            "mu_s" => spec.mu_s,
            "coulomb_floor" => spec.coulomb_floor,
            other => panic!("unexpected parameter {other}"),
        };
        assert!(((v - want) / want).abs() <= 0.05, "{name}: {v} vs {want}");
    }
}
