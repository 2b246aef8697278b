//! Rewrites each fixture's reference trajectory (the canonical scenario run at
//! a tenth of its step, sampled every `REFERENCE_INTERVAL` seconds) and the
//! drawer's synthetic system-identification observation.
//!
//! cargo run --release -p artjoint --example regenerate_references

use artjoint::fixtures::{self, REFERENCE_INTERVAL};
use artjoint::scenario::{export_csv, run, InitialJoint, Trajectory};
use artjoint::sysid::{generate_synthetic, FitSpecFile};

/// Position noise of the synthetic observation, in metres.
const OBSERVATION_NOISE: f64 = 1e-4;
const OBSERVATION_SEED: u64 = 7;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = fixtures::source_dir();
    for f in fixtures::all() {
        let s = f.scenario()?;
        let fine_dt = s.file.dt / 10.0;
        let (fine, _) = run(&s.with_dt(fine_dt))?;
        let every = (REFERENCE_INTERVAL / fine_dt).round() as usize;
        let mut reference = Trajectory::new(fine.channel_names().map(str::to_owned));
        for i in (0..fine.len()).step_by(every) {
            let row: Vec<f64> = fine.channels.iter().map(|c| c.values[i]).collect();
            reference.push(fine.times[i], &row);
        }
        let path = dir.join(f.reference_file());
        export_csv(&reference, &path)?;
        println!("{}: {} samples -> {}", f.name, reference.len(), path.display());
    }

    let spec: FitSpecFile = serde_json::from_str(&std::fs::read_to_string(dir.join("drawer.fitspec.json"))?)?;
    let truth = fixtures::get("drawer").unwrap().assembly()?;
    let joint = truth.joint(&spec.joint).ok_or("fit spec joint missing")?;
    let initial = spec.initial.unwrap_or(InitialJoint { q: 0.0, q_dot: 0.0, s_open: false });
    let observed = generate_synthetic(
        joint,
        initial,
        &spec.forces,
        8.0,
        spec.sim_dt,
        OBSERVATION_NOISE,
        OBSERVATION_SEED,
        &spec.channel,
    )?;
    let path = dir.join(&spec.observed);
    export_csv(&observed, &path)?;
    println!("drawer observation: {} samples -> {}", observed.len(), path.display());
    Ok(())
}
