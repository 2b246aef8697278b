use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use artjoint::behavior::{Event, EventLog};
use artjoint::fixtures;
use artjoint::scenario::{compare as compare_runs, export_csv, import_csv, run, CsvError, Scenario, ScenarioError, Trajectory};
use artjoint::sysid::{self, load_fitspec, FitStatus, SysidError};
use artjoint::Assembly;
use serde_json::{json, Value};

use crate::{Failure, Report};

/// Bare file names that do not exist in the working directory are looked up
/// in the fixture directory.
fn locate(path: &Path) -> PathBuf {
    if path.exists() || path.components().count() != 1 {
        return path.to_path_buf();
    }
    let candidate = fixtures::override_dir().unwrap_or_else(fixtures::source_dir).join(path);
    if candidate.exists() {
        candidate
    } else {
        path.to_path_buf()
    }
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn scenario_failure(e: ScenarioError) -> Failure {
    match e {
        ScenarioError::Io { .. } => Failure::usage(e),
        _ => Failure::domain(e),
    }
}

fn csv_failure(e: CsvError) -> Failure {
    match e {
        CsvError::Io { .. } => Failure::usage(e),
        _ => Failure::domain(e),
    }
}

fn write_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::internal(format!("cannot write {}: {e}", show(path)))
}

pub fn validate(paths: &[PathBuf]) -> Result<Report, Failure> {
    let mut results = Vec::new();
    let mut text = String::new();
    let mut invalid = 0;
    for p in paths {
        let source = fs::read_to_string(locate(p)).map_err(|e| Failure::usage(format!("{}: {e}", show(p))))?;
        let issues: Vec<Value> = match serde_json::from_str::<Assembly>(&source) {
            Ok(a) => artjoint::validate(&a)
                .issues
                .iter()
                .map(|i| json!({ "path": i.path, "kind": i.kind, "message": i.message }))
                .collect(),
            Err(e) => vec![json!({
                "path": format!("line {}, column {}", e.line(), e.column()),
                "kind": "syntax",
                "message": e.to_string(),
            })],
        };
        if issues.is_empty() {
            writeln!(text, "{}: ok", show(p)).unwrap();
        } else {
            invalid += 1;
            writeln!(text, "{}: {} issue(s)", show(p), issues.len()).unwrap();
            for i in &issues {
                writeln!(text, "  {} [{}] {}", i["path"].as_str().unwrap(), i["kind"].as_str().unwrap(), i["message"].as_str().unwrap()).unwrap();
            }
        }
        results.push(json!({ "asset": show(p), "valid": issues.is_empty(), "issues": issues }));
    }
    Ok(Report {
        code: if invalid == 0 { 0 } else { 1 },
        text,
        json: json!({ "command": "validate", "results": results }),
    })
}

fn event_summary(log: &EventLog) -> Value {
    json!({
        "rules_fired": log.fired_rules().collect::<Vec<_>>(),
        "open_state_changes": log.count_open_state_changes(),
    })
}

pub fn simulate(paths: &[PathBuf], out: &Path, dt: Option<f64>, duration: Option<f64>) -> Result<Report, Failure> {
    let mut scenarios = Vec::with_capacity(paths.len());
    for p in paths {
        let mut s = Scenario::load(locate(p)).map_err(scenario_failure)?;
        if let Some(dt) = dt {
            s = s.with_dt(dt);
        }
        if let Some(d) = duration {
            s = s.with_duration(d);
        }
        s.check().map_err(Failure::usage)?;
        scenarios.push(s);
    }

    let targets: Vec<PathBuf> = if scenarios.len() == 1 {
        vec![out.to_path_buf()]
    } else {
        let mut names: Vec<&str> = scenarios.iter().map(|s| s.file.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Failure::usage(format!("two scenarios are named `{}`", w[0])));
        }
        fs::create_dir_all(out).map_err(|e| write_failure(out, e))?;
        scenarios.iter().map(|s| out.join(format!("{}.csv", s.file.name))).collect()
    };

    let outcomes: Vec<_> = thread::scope(|scope| {
        let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    let mut runs = Vec::new();
    let mut text = String::new();
    for (((p, s), target), outcome) in paths.iter().zip(&scenarios).zip(&targets).zip(outcomes) {
        let (traj, log) = outcome.map_err(scenario_failure)?;
        export_csv(&traj, target).map_err(|e| write_failure(target, e))?;
        writeln!(
            text,
            "{}: {} samples over {} s at dt {} -> {} ({} rule firings)",
            s.file.name,
            traj.len(),
            s.file.duration,
            s.file.dt,
            show(target),
            log.fired_rules().count()
        )
        .unwrap();
        runs.push(json!({
            "scenario": show(p),
            "name": s.file.name,
            "out": show(target),
            "dt": s.file.dt,
            "duration": s.file.duration,
            "samples": traj.len(),
            "channels": traj.channel_names().collect::<Vec<_>>(),
            "events": event_summary(&log),
        }));
    }
    Ok(Report::ok(text, json!({ "command": "simulate", "runs": runs })))
}

pub fn compare(a: &Path, b: &Path, tolerance: f64) -> Result<Report, Failure> {
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(Failure::usage(format!("tolerance must be a finite non-negative number, got {tolerance}")));
    }
    let ta = import_csv(locate(a)).map_err(csv_failure)?;
    let tb = import_csv(locate(b)).map_err(csv_failure)?;
    let c = compare_runs(&ta, &tb).map_err(Failure::domain)?;
    let within = c.rmse <= tolerance;

    let mut text = String::new();
    for ch in &c.per_channel {
        writeln!(text, "{:<32} rmse {:.6e}  max {:.6e}", ch.name, ch.rmse, ch.max_abs).unwrap();
    }
    writeln!(
        text,
        "pooled rmse {:.6e} {} tolerance {:e}: {}",
        c.rmse,
        if within { "<=" } else { ">" },
        tolerance,
        if within { "match" } else { "MISMATCH" }
    )
    .unwrap();
    Ok(Report {
        code: if within { 0 } else { 1 },
        text,
        json: json!({
            "command": "compare",
            "a": show(a),
            "b": show(b),
            "tolerance": tolerance,
            "rmse": c.rmse,
            "max_abs": c.max_abs,
            "within_tolerance": within,
            "per_channel": c.per_channel,
        }),
    })
}

pub fn fit(fitspec: &Path, out: Option<&Path>) -> Result<Report, Failure> {
    let problem = load_fitspec(locate(fitspec)).map_err(|e| match e {
        SysidError::Io { .. } | SysidError::Csv(CsvError::Io { .. }) => Failure::usage(e),
        _ => Failure::domain(e),
    })?;
    let result = sysid::fit(&problem).map_err(Failure::domain)?;
    if let Some(out) = out {
        let mut doc = serde_json::to_string_pretty(&result).expect("fit result serializes");
        doc.push('\n');
        fs::write(out, doc).map_err(|e| write_failure(out, e))?;
    }

    let mut text = String::new();
    for (name, value) in &result.params {
        writeln!(text, "{name:<20} {value:.6}").unwrap();
    }
    writeln!(
        text,
        "residual SSE {:.6e} after {} sweeps, {} evaluations: {}",
        result.residual_sse,
        result.iterations,
        result.evaluations,
        match result.status {
            FitStatus::Converged => "converged",
            FitStatus::BudgetExhausted => "evaluation budget exhausted",
        }
    )
    .unwrap();
    Ok(Report {
        code: if result.converged { 0 } else { 1 },
        text,
        json: json!({
            "command": "fit",
            "fitspec": show(fitspec),
            "out": out.map(show),
            "result": result,
        }),
    })
}

struct JointRun {
    name: String,
    q: Vec<f64>,
    q_dot: Vec<f64>,
    lower: f64,
    upper: f64,
}

const BOUND_EPS: f64 = 1e-6;

impl JointRun {
    fn first_time(&self, times: &[f64], bound: f64) -> Option<f64> {
        self.q.iter().position(|q| (q - bound).abs() <= BOUND_EPS).map(|i| times[i])
    }

    fn release_speed(&self) -> f64 {
        self.q_dot[0].abs()
    }

    fn peak_speed(&self) -> f64 {
        self.q_dot.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn initial(&self) -> f64 {
        self.q[0]
    }

    fn last(&self) -> f64 {
        *self.q.last().unwrap()
    }
}

fn joint_runs(s: &Scenario, t: &Trajectory) -> Vec<JointRun> {
    let mut out = Vec::new();
    for (entry, assembly) in s.file.assemblies.iter().zip(&s.assemblies) {
        for j in &assembly.joints {
            let name = format!("{}/{}", entry.alias, j.id);
            if let (Some(q), Some(q_dot)) = (t.channel(&format!("{name}.q")), t.channel(&format!("{name}.q_dot"))) {
                out.push(JointRun {
                    name,
                    q: q.to_vec(),
                    q_dot: q_dot.to_vec(),
                    lower: j.q_lower_bound,
                    upper: j.q_upper_bound,
                });
            }
        }
    }
    out
}

/// What the fixture is expected to show, as report lines and a verdict.
fn findings(fixture: &str, joints: &[JointRun], times: &[f64], log: &EventLog) -> (Vec<String>, bool) {
    let find = |name: &str| joints.iter().find(|j| j.name == name);
    let missing = |name: &str| (vec![format!("channel for {name} was not recorded")], false);
    match fixture {
        "drawer" => {
            let Some(j) = find("drawer/slide") else { return missing("drawer/slide") };
            let moved = j.last() - j.initial();
            let monotone = j.q.windows(2).all(|w| w[1] >= w[0]);
            (
                vec![
                    format!("drawer opened {moved:.4} m under the scheduled pull"),
                    format!("opening was {}", if monotone { "monotone" } else { "not monotone" }),
                ],
                moved >= 1e-3 && monotone,
            )
        }
        "microwave" => {
            let Some(j) = find("microwave/door") else { return missing("microwave/door") };
            let released = log.entries.iter().find(|e| matches!(e.event, Event::RuleFired { .. })).map(|e| e.t);
            let opens = log.count_open_state_changes();
            let reached = j.first_time(times, j.upper);
            let mut lines = vec![match released {
                Some(t) => format!("button released the latch at t = {t:.3} s ({opens} open-state change)"),
                None => "latch was never released".into(),
            }];
            lines.push(match reached {
                Some(t) => format!("door reached q_upper_bound {} at t = {t:.3} s", j.upper),
                None => format!("door stopped at {:.4}, short of q_upper_bound {}", j.last(), j.upper),
            });
            (lines, opens == 1 && reached.is_some())
        }
        "oven" => {
            let Some(j) = find("oven/door") else { return missing("oven/door") };
            let reached = j.first_time(times, j.lower);
            let (peak, release) = (j.peak_speed(), j.release_speed());
            let mut lines = vec![match reached {
                Some(t) => format!("door reached q_lower_bound {} at t = {t:.3} s", j.lower),
                None => format!("door stopped at {:.4}, short of q_lower_bound {}", j.last(), j.lower),
            }];
            lines.push(format!(
                "peak closing speed {peak:.4} rad/s {} release speed {release:.4} rad/s",
                if peak > release { "exceeded" } else { "did not exceed" }
            ));
            (lines, reached.is_some() && peak > release)
        }
        "trashcan" => {
            let Some(j) = find("trashcan/lid") else { return missing("trashcan/lid") };
            let still = (j.last() - j.initial()).abs() <= 1e-9;
            (
                vec![format!(
                    "lid {} at q = {:.4} rad without a button press",
                    if still { "held open" } else { "drifted" },
                    j.last()
                )],
                still,
            )
        }
        _ => (Vec::new(), true),
    }
}

pub fn demo(name: Option<&str>) -> Result<Report, Failure> {
    let Some(name) = name else {
        let mut text = String::new();
        for f in fixtures::all() {
            writeln!(text, "{:<10} {}", f.name, f.summary).unwrap();
        }
        let list: Vec<Value> = fixtures::all()
            .iter()
            .map(|f| json!({ "name": f.name, "summary": f.summary }))
            .collect();
        return Ok(Report::ok(text, json!({ "command": "demo", "fixtures": list })));
    };
    let fixture = fixtures::get(name).ok_or_else(|| {
        Failure::usage(format!(
            "unknown fixture `{name}` (expected one of: {})",
            fixtures::names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let s = fixture.scenario().map_err(scenario_failure)?;
    let (t, log) = run(&s).map_err(scenario_failure)?;
    let joints = joint_runs(&s, &t);
    let (lines, observed) = findings(fixture.name, &joints, &t.times, &log);

    let mut text = String::new();
    writeln!(text, "{}: {}", fixture.name, fixture.summary).unwrap();
    writeln!(text, "scenario `{}`: {} s at dt {}, {} samples", s.file.name, s.file.duration, s.file.dt, t.len()).unwrap();
    for j in &joints {
        writeln!(
            text,
            "  {:<18} q {:.4} -> {:.4}  range [{}, {}]  peak |q_dot| {:.4}",
            j.name,
            j.initial(),
            j.last(),
            j.lower,
            j.upper,
            j.peak_speed()
        )
        .unwrap();
    }
    for l in &lines {
        writeln!(text, "  {l}").unwrap();
    }
    writeln!(text, "{}", if observed { "behaves as expected" } else { "UNEXPECTED behavior" }).unwrap();

    let joint_docs: Vec<Value> = joints
        .iter()
        .map(|j| {
            json!({
                "joint": j.name,
                "initial_q": j.initial(),
                "final_q": j.last(),
                "min_q": j.q.iter().copied().fold(f64::INFINITY, f64::min),
                "max_q": j.q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "release_speed": j.release_speed(),
                "peak_speed": j.peak_speed(),
                "reached_lower_at": j.first_time(&t.times, j.lower),
                "reached_upper_at": j.first_time(&t.times, j.upper),
            })
        })
        .collect();
    Ok(Report {
        code: if observed { 0 } else { 1 },
        text,
        json: json!({
            "command": "demo",
            "fixture": fixture.name,
            "summary": fixture.summary,
            "scenario": s.file.name,
            "duration": s.file.duration,
            "dt": s.file.dt,
            "samples": t.len(),
            "joints": joint_docs,
            "events": event_summary(&log),
            "findings": lines,
            "expected_behavior": observed,
        }),
    })
}

pub fn average(paths: &[PathBuf], out: &Path) -> Result<Report, Failure> {
    let runs = paths
        .iter()
        .map(|p| import_csv(locate(p)).map_err(csv_failure))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = Trajectory::average(&runs).map_err(Failure::domain)?;
    export_csv(&mean, out).map_err(|e| write_failure(out, e))?;
    let text = format!("averaged {} runs ({} samples each) -> {}\n", runs.len(), mean.len(), show(out));
    Ok(Report::ok(
        text,
        json!({
            "command": "average",
            "inputs": paths.iter().map(|p| show(p)).collect::<Vec<_>>(),
            "out": show(out),
            "samples": mean.len(),
            "channels": mean.channel_names().collect::<Vec<_>>(),
        }),
    ))
}
