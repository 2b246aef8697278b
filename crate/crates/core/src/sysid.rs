//! Joint parameter identification from observed position trajectories.
//!
//! The objective is the sum of squared position errors between a forward
//! simulation and the observation. It is non-smooth wherever friction
//! switches regime, so the minimizer is derivative-free: coordinate-wise
//! golden-section line searches inside an adaptive bracket, followed by a
//! line search along each sweep's net displacement, with a full-range restart
//! before declaring convergence.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{parse_asset, AssetError, JointSpec, StiffnessProfile};
use crate::dynamics::{simulate_joint, step_count, DynamicsError, JointState, MAX_DT};
use crate::scenario::{import_csv, CsvError, ForceProfile, InitialJoint, Trajectory};

/// Hard cap on objective evaluations per fit.
pub const DEFAULT_BUDGET: usize = 5000;
/// A sweep improving the SSE by less than this fraction ends the search.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-8;
/// Minimum number of observed samples.
pub const MIN_SAMPLES: usize = 10;

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const LINE_SEARCH_ITERS: usize = 24;
const SCAN_POINTS: usize = 9;
const MAX_RESTARTS: usize = 2;

/// A scalar of [`JointSpec`] that can be fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "damping_D")]
    Damping,
    #[serde(rename = "mu_s")]
    MuS,
    #[serde(rename = "coulomb_floor")]
    CoulombFloor,
    #[serde(rename = "effective_inertia")]
    EffectiveInertia,
    #[serde(rename = "stiffness.k")]
    StiffnessK,
    #[serde(rename = "stiffness.k_high")]
    KHigh,
    #[serde(rename = "stiffness.k_low")]
    KLow,
    #[serde(rename = "stiffness.k_max")]
    KMax,
    #[serde(rename = "stiffness.alpha")]
    Alpha,
    #[serde(rename = "stiffness.lambda")]
    Lambda,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Damping => "damping_D",
            Param::MuS => "mu_s",
            Param::CoulombFloor => "coulomb_floor",
            Param::EffectiveInertia => "effective_inertia",
            Param::StiffnessK => "stiffness.k",
            Param::KHigh => "stiffness.k_high",
            Param::KLow => "stiffness.k_low",
            Param::KMax => "stiffness.k_max",
            Param::Alpha => "stiffness.alpha",
            Param::Lambda => "stiffness.lambda",
        }
    }

    fn slot(self, spec: &mut JointSpec) -> Option<&mut f64> {
        match (self, &mut spec.stiffness) {
            (Param::Damping, _) => Some(&mut spec.damping),
            (Param::MuS, _) => Some(&mut spec.mu_s),
            (Param::CoulombFloor, _) => Some(&mut spec.coulomb_floor),
            (Param::EffectiveInertia, _) => Some(&mut spec.effective_inertia),
            (Param::StiffnessK, StiffnessProfile::Constant { k }) => Some(k),
            (Param::KHigh, StiffnessProfile::Schedule { k_high, .. }) => Some(k_high),
            (Param::KLow, StiffnessProfile::Schedule { k_low, .. }) => Some(k_low),
            (Param::KMax, StiffnessProfile::Schedule { k_max, .. }) => Some(k_max),
            (Param::Alpha, StiffnessProfile::Schedule { alpha, .. }) => Some(alpha),
            (Param::Lambda, StiffnessProfile::Schedule { lambda, .. }) => Some(lambda),
            _ => None,
        }
    }

    pub fn get(self, spec: &JointSpec) -> Option<f64> {
        let mut copy = spec.clone();
        self.slot(&mut copy).map(|v| *v)
    }
}

/// A free parameter with its box bounds and starting value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub param: Param,
    pub lo: f64,
    pub hi: f64,
    pub init: f64,
}

#[derive(Debug, Error)]
pub enum SysidError {
    #[error("no free parameters")]
    EmptyFreeSet,
    #[error("need at least {MIN_SAMPLES} observed samples, got {0}")]
    InsufficientData(usize),
    #[error("observed samples must have strictly increasing times")]
    UnorderedSamples,
    #[error("parameter `{0}` does not apply to this joint's stiffness profile")]
    InapplicableParam(&'static str),
    #[error("parameter `{0}` listed twice")]
    DuplicateParam(&'static str),
    #[error("parameter `{param}`: invalid bounds or init outside [{lo}, {hi}]")]
    InvalidBounds { param: &'static str, lo: f64, hi: f64 },
    #[error("candidate has {got} values, expected {expected}")]
    CandidateShape { got: usize, expected: usize },
    #[error("candidate value for `{0}` is outside its bounds")]
    CandidateOutOfBounds(&'static str),
    #[error("simulation step must be in (0, {MAX_DT}]")]
    InvalidStep,
    #[error("channel `{0}` not found in observed trajectory")]
    MissingChannel(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("fit spec syntax error: {0}")]
    Syntax(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

/// Observed single-joint trajectory, known forcing, and the parameters to fit.
#[derive(Debug, Clone)]
pub struct FitProblem {
    times: Vec<f64>,
    observed: Vec<f64>,
    forces: ForceProfile,
    template: JointSpec,
    free: Vec<FreeParam>,
    initial: InitialJoint,
    sim_dt: f64,
    budget: usize,
}

impl FitProblem {
    /// `observed` holds sample times (starting the simulation clock) and joint
    /// positions. `initial` defaults to rest at the first observed position.
    pub fn new(
        times: Vec<f64>,
        observed: Vec<f64>,
        forces: ForceProfile,
        template: JointSpec,
        free: Vec<FreeParam>,
        initial: Option<InitialJoint>,
        sim_dt: f64,
    ) -> Result<Self, SysidError> {
        if free.is_empty() {
            return Err(SysidError::EmptyFreeSet);
        }
        if times.len() != observed.len() || times.len() < MIN_SAMPLES {
            return Err(SysidError::InsufficientData(times.len().min(observed.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SysidError::UnorderedSamples);
        }
        if !(sim_dt > 0.0 && sim_dt <= MAX_DT) {
            return Err(SysidError::InvalidStep);
        }
        for (i, f) in free.iter().enumerate() {
            if f.param.get(&template).is_none() {
                return Err(SysidError::InapplicableParam(f.param.name()));
            }
            if free[..i].iter().any(|g| g.param == f.param) {
                return Err(SysidError::DuplicateParam(f.param.name()));
            }
            if !(f.lo < f.hi && f.init >= f.lo && f.init <= f.hi) || !f.lo.is_finite() || !f.hi.is_finite() {
                return Err(SysidError::InvalidBounds {
                    param: f.param.name(),
                    lo: f.lo,
                    hi: f.hi,
                });
            }
        }
        let initial = initial.unwrap_or(InitialJoint {
            q: observed[0],
            q_dot: 0.0,
            s_open: false,
        });
        Ok(Self {
            times,
            observed,
            forces,
            template,
            free,
            initial,
            sim_dt,
            budget: DEFAULT_BUDGET,
        })
    }

    /// Builds a problem from one channel of a recorded trajectory.
    pub fn from_trajectory(
        observed: &Trajectory,
        channel: &str,
        forces: ForceProfile,
        template: JointSpec,
        free: Vec<FreeParam>,
        initial: Option<InitialJoint>,
        sim_dt: f64,
    ) -> Result<Self, SysidError> {
        let q = observed
            .channel(channel)
            .ok_or_else(|| SysidError::MissingChannel(channel.to_owned()))?;
        Self::new(observed.times.clone(), q.to_vec(), forces, template, free, initial, sim_dt)
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn free(&self) -> &[FreeParam] {
        &self.free
    }

    pub fn init(&self) -> Vec<f64> {
        self.free.iter().map(|f| f.init).collect()
    }

    pub fn samples(&self) -> usize {
        self.times.len()
    }

    /// Template with the candidate values written in.
    pub fn spec_for(&self, candidate: &[f64]) -> Result<JointSpec, SysidError> {
        if candidate.len() != self.free.len() {
            return Err(SysidError::CandidateShape {
                got: candidate.len(),
                expected: self.free.len(),
            });
        }
        let mut spec = self.template.clone();
        for (f, &v) in self.free.iter().zip(candidate) {
            if !(v >= f.lo && v <= f.hi) {
                return Err(SysidError::CandidateOutOfBounds(f.param.name()));
            }
            *f.param.slot(&mut spec).expect("checked at construction") = v;
        }
        Ok(spec)
    }

    /// Simulated positions at the observed sample times.
    pub fn simulate(&self, candidate: &[f64]) -> Result<Vec<f64>, SysidError> {
        let spec = self.spec_for(candidate)?;
        let t0 = self.times[0];
        let span = self.times[self.times.len() - 1] - t0;
        let state0 = JointState::moving(&spec, self.initial.q, self.initial.q_dot, self.initial.s_open);
        let dt = self.sim_dt;
        let series = if span > 0.0 {
            simulate_joint(&state0, &spec, |t| self.forces.at(t0 + t), span, dt)?
        } else {
            vec![state0]
        };
        debug_assert_eq!(series.len(), step_count(span, dt) + 1);
        Ok(self
            .times
            .iter()
            .map(|&t| {
                let s = (t - t0) / dt;
                let i = s.floor() as usize;
                if i + 1 >= series.len() {
                    series[series.len() - 1].q
                } else {
                    let w = s - i as f64;
                    if w == 0.0 {
                        series[i].q
                    } else {
                        series[i].q + w * (series[i + 1].q - series[i].q)
                    }
                }
            })
            .collect())
    }

    /// Sum of squared position errors for `candidate`.
    pub fn objective(&self, candidate: &[f64]) -> Result<f64, SysidError> {
        let sim = self.simulate(candidate)?;
        Ok(sim
            .iter()
            .zip(&self.observed)
            .map(|(s, o)| (s - o) * (s - o))
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    /// Fitted value per parameter name.
    pub params: BTreeMap<String, f64>,
    /// Values in the order of the problem's free parameters.
    #[serde(skip)]
    pub values: Vec<f64>,
    pub residual_sse: f64,
    /// Completed sweeps.
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub status: FitStatus,
}

struct Search<'a> {
    problem: &'a FitProblem,
    lo: Vec<f64>,
    hi: Vec<f64>,
    best: Vec<f64>,
    best_sse: f64,
    evaluations: usize,
}

/// Raised inside the search when the evaluation budget is spent.
struct OutOfBudget;

enum Stop {
    Budget,
    Failed(SysidError),
}

impl From<SysidError> for Stop {
    fn from(e: SysidError) -> Self {
        Stop::Failed(e)
    }
}

impl From<OutOfBudget> for Stop {
    fn from(_: OutOfBudget) -> Self {
        Stop::Budget
    }
}

impl Search<'_> {
    fn eval(&mut self, x: &[f64]) -> Result<f64, Stop> {
        if self.evaluations >= self.problem.budget {
            return Err(OutOfBudget.into());
        }
        self.evaluations += 1;
        let f = self.problem.objective(x)?;
        // Ties go to the lexicographically smaller point so the result does
        // not depend on evaluation order.
        if f < self.best_sse || (f == self.best_sse && f > 0.0 && lexicographic_less(x, &self.best)) {
            self.best_sse = f;
            self.best = x.to_vec();
        }
        Ok(f)
    }

    /// Minimizes along `dir` through the current best point. `h` is the first
    /// trial step, in units of `dir`; the bracket grows from there until the
    /// objective rises or a bound is reached, then golden-section narrows it.
    fn line_min(&mut self, dir: &[f64], h: f64) -> Result<(), Stop> {
        let x0 = self.best.clone();
        let f0 = self.best_sse;
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for ((x, d), (l, u)) in x0.iter().zip(dir).zip(self.lo.iter().zip(&self.hi)) {
            if *d > 0.0 {
                t_lo = t_lo.max((l - x) / d);
                t_hi = t_hi.min((u - x) / d);
            } else if *d < 0.0 {
                t_lo = t_lo.max((u - x) / d);
                t_hi = t_hi.min((l - x) / d);
            }
        }
        if !(t_hi > t_lo) {
            return Ok(());
        }
        let (lo, hi) = (self.lo.clone(), self.hi.clone());
        let point = |t: f64| -> Vec<f64> {
            x0.iter()
                .zip(dir)
                .zip(lo.iter().zip(&hi))
                .map(|((x, d), (l, u))| (x + t * d).clamp(*l, *u))
                .collect()
        };

        // Bracket a minimum: a < m < b with f(m) no worse than either end.
        let mut bracket = None;
        for sign in [1.0, -1.0] {
            let limit = if sign > 0.0 { t_hi } else { t_lo };
            if limit * sign <= 0.0 {
                continue;
            }
            let mut m = sign * h.min(limit.abs());
            let mut fm = self.eval(&point(m))?;
            if fm >= f0 {
                continue;
            }
            let mut a = 0.0;
            loop {
                if m == limit {
                    bracket = Some((a, m));
                    break;
                }
                let next = m + (1.0 + GOLDEN) * (m - a);
                let b = if (next - limit) * sign > 0.0 { limit } else { next };
                let fb = self.eval(&point(b))?;
                if fb >= fm {
                    bracket = Some((a, b));
                    break;
                }
                (a, m, fm) = (m, b, fb);
            }
            break;
        }
        let (a, b) = bracket.unwrap_or((-h.min(-t_lo), h.min(t_hi)));
        let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };

        let mut c = b - GOLDEN * (b - a);
        let mut d = a + GOLDEN * (b - a);
        let mut fc = self.eval(&point(c))?;
        let mut fd = self.eval(&point(d))?;
        for _ in 0..LINE_SEARCH_ITERS {
            if fc <= fd {
                (b, d, fd) = (d, c, fc);
                c = b - GOLDEN * (b - a);
                fc = self.eval(&point(c))?;
            } else {
                (a, c, fc) = (c, d, fd);
                d = a + GOLDEN * (b - a);
                fd = self.eval(&point(d))?;
            }
        }
        Ok(())
    }

    /// Evaluates an even grid over the whole range of coordinate `i`, to move
    /// into a better basin when the objective is multimodal along it.
    fn scan(&mut self, i: usize) -> Result<(), Stop> {
        let base = self.best.clone();
        for k in 0..SCAN_POINTS {
            let mut x = base.clone();
            let span = self.hi[i] - self.lo[i];
            x[i] = (self.lo[i] + span * k as f64 / (SCAN_POINTS - 1) as f64).min(self.hi[i]);
            self.eval(&x)?;
        }
        Ok(())
    }

    /// One pass of coordinate line searches, then searches along the recent
    /// sweep displacements in `history` and along this pass's own.
    fn sweep(&mut self, steps: &mut [f64], history: &mut Vec<Vec<f64>>, scan: bool) -> Result<(), Stop> {
        let n = self.best.len();
        let start = self.best.clone();
        for i in 0..n {
            if scan {
                self.scan(i)?;
            }
            let mut dir = vec![0.0; n];
            dir[i] = 1.0;
            let before = self.best[i];
            self.line_min(&dir, steps[i])?;
            let moved = (self.best[i] - before).abs();
            let range = self.hi[i] - self.lo[i];
            steps[i] = if moved > 0.0 { moved } else { steps[i] * 0.5 }.clamp(range * 1e-12, range);
        }
        for dir in history.iter() {
            self.line_min(dir, 1.0)?;
        }
        let delta: Vec<f64> = self.best.iter().zip(&start).map(|(x, s)| x - s).collect();
        if delta.iter().any(|d| *d != 0.0) {
            self.line_min(&delta, 1.0)?;
            if history.len() == n {
                history.remove(0);
            }
            history.push(delta);
        }
        Ok(())
    }
}

fn lexicographic_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Minimizes the objective within the parameter bounds.
///
/// Each sweep line-searches every coordinate (expanding bracket, then
/// golden-section), then the net displacements of the last few sweeps, which
/// carry the search along valleys where parameters trade off against each
/// other. When a
/// sweep improves the SSE by less than [`CONVERGENCE_TOLERANCE`] relative, a
/// restart sweep first grid-scans each coordinate over its full range; the fit
/// has converged once a restart also fails to improve. Runs within the
/// problem's evaluation budget; when the budget runs out the best point so far
/// comes back with `converged = false`.
pub fn fit(p: &FitProblem) -> Result<FitResult, SysidError> {
    if p.samples() < MIN_SAMPLES {
        return Err(SysidError::InsufficientData(p.samples()));
    }
    let lo: Vec<f64> = p.free.iter().map(|f| f.lo).collect();
    let hi: Vec<f64> = p.free.iter().map(|f| f.hi).collect();
    let mut steps: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.1 * (h - l)).collect();
    let mut history = Vec::new();
    let init = p.init();
    let mut search = Search {
        problem: p,
        lo,
        hi,
        best: init.clone(),
        best_sse: f64::INFINITY,
        evaluations: 0,
    };
    let mut sweeps = 0;
    let mut restarts = 0;
    let mut restarting = false;
    let outcome = (|| -> Result<(), Stop> {
        search.eval(&init)?;
        loop {
            sweeps += 1;
            let start_sse = search.best_sse;
            if start_sse == 0.0 {
                return Ok(());
            }
            search.sweep(&mut steps, &mut history, restarting)?;
            let improvement = (start_sse - search.best_sse) / start_sse;
            if improvement >= CONVERGENCE_TOLERANCE && search.best_sse > 0.0 {
                restarting = false;
            } else if restarting || restarts == MAX_RESTARTS || search.best_sse == 0.0 {
                return Ok(());
            } else {
                restarts += 1;
                restarting = true;
            }
        }
    })();
    let status = match outcome {
        Ok(()) => FitStatus::Converged,
        Err(Stop::Budget) => FitStatus::BudgetExhausted,
        Err(Stop::Failed(e)) => return Err(e),
    };

    let mut params = BTreeMap::new();
    for (f, v) in p.free.iter().zip(&search.best) {
        params.insert(f.param.name().to_owned(), *v);
    }
    Ok(FitResult {
        params,
        values: search.best,
        residual_sse: search.best_sse,
        iterations: sweeps,
        evaluations: search.evaluations,
        converged: status == FitStatus::Converged,
        status,
    })
}

/// Forward simulation plus seeded Gaussian noise of standard deviation
/// `noise_sd`, sampled every `dt`, as a single channel named `channel`.
#[allow(clippy::too_many_arguments)]
pub fn generate_synthetic(
    spec: &JointSpec,
    initial: InitialJoint,
    forces: &ForceProfile,
    duration: f64,
    dt: f64,
    noise_sd: f64,
    seed: u64,
    channel: &str,
) -> Result<Trajectory, SysidError> {
    let state0 = JointState::moving(spec, initial.q, initial.q_dot, initial.s_open);
    let series = simulate_joint(&state0, spec, |t| forces.at(t), duration, dt)?;
    let mut traj = Trajectory::new([channel.to_owned()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("finite standard deviation");
    for (i, s) in series.iter().enumerate() {
        let q = if noise_sd > 0.0 { s.q + noise.sample(&mut rng) } else { s.q };
        traj.push(i as f64 * dt, &[q]);
    }
    Ok(traj)
}

/// `.fitspec.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpecFile {
    /// Template asset, relative to the fit spec.
    pub asset: String,
    /// Joint id inside the asset.
    pub joint: String,
    /// Observed trajectory CSV, relative to the fit spec.
    pub observed: String,
    /// Column holding the joint position.
    pub channel: String,
    pub forces: ForceProfile,
    pub free: Vec<FreeParam>,
    #[serde(default)]
    pub initial: Option<InitialJoint>,
    #[serde(default = "default_sim_dt")]
    pub sim_dt: f64,
    #[serde(default)]
    pub budget: Option<usize>,
}

fn default_sim_dt() -> f64 {
    crate::dynamics::DEFAULT_DT
}

fn read(path: &Path) -> Result<String, SysidError> {
    fs::read_to_string(path).map_err(|e| SysidError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Loads a fit spec and everything it references.
pub fn load_fitspec(path: impl AsRef<Path>) -> Result<FitProblem, SysidError> {
    let path = path.as_ref();
    let spec: FitSpecFile = serde_json::from_str(&read(path)?).map_err(|e| SysidError::Syntax(e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let assembly = parse_asset(&read(&dir.join(&spec.asset))?)?;
    let template = assembly
        .joint(&spec.joint)
        .cloned()
        .ok_or_else(|| SysidError::MissingChannel(spec.joint.clone()))?;
    let observed = import_csv(dir.join(&spec.observed))?;
    let problem = FitProblem::from_trajectory(
        &observed,
        &spec.channel,
        spec.forces,
        template,
        spec.free,
        spec.initial,
        spec.sim_dt,
    )?;
    Ok(match spec.budget {
        Some(b) => problem.with_budget(b),
        None => problem,
    })
}
