//! The anytime loop: seed candidate trajectories from random IK solutions at
//! sub-sampled poses, refine them, and keep the best feasible one.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::kinematics::{fk, pose_residual, random_config, solve_ik, Chain, JointVector};
use crate::objective::{build_smoothness, f_smooth_direct, Objective, PathSpec, SmoothnessForm, Trajectory};
use crate::optimizer::{check_constraints, manipulability_threshold, refine, Bound, Candidate, ClockKind, ConstraintGate, FeasibilityReport, TormParams, Variant};
use crate::scene::Scene;

/// Simulated seconds per unit of counted work (one IK iteration or seeding
/// evaluation, per joint). Calibrated against an optimised build.
pub const WORK_SECONDS_PER_UNIT: f64 = 1.4e-7;

/// Units charged per waypoint evaluation during refinement, which also pays
/// for the gradients and linear solves around it.
pub const REFINE_UNITS: u64 = 2;

/// RNG stream reserved for the singularity threshold so it does not depend on the worker count.
const THRESHOLD_STREAM: u64 = 0x7468_7265_7368;

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub chain: Chain,
    pub scene: Scene,
    pub path: PathSpec,
    /// Fixed start configuration; its pose must match the first path pose.
    pub start: Option<JointVector>,
    pub params: TormParams,
}

impl Problem {
    pub fn new(chain: Chain, scene: Scene, path: PathSpec, start: Option<JointVector>, params: TormParams) -> Result<Self> {
        params.validate()?;
        if path.len() < 2 {
            return Err(Error::InvalidArgument("path needs at least two poses".into()));
        }
        if let Some(q0) = &start {
            chain.check_config(q0)?;
            if !chain.within_limits(q0) {
                return Err(Error::InvalidArgument("start configuration is outside the joint limits".into()));
            }
            let err = pose_residual(&path.poses[0], &fk(&chain, q0)?, params.w_rot).norm();
            if err > params.ik.tolerance {
                return Err(Error::InvalidArgument(format!("start configuration is {err:.3e} away from the first path pose")));
            }
        }
        Ok(Self {
            chain,
            scene,
            path,
            start,
            params,
        })
    }

    pub fn objective(&self) -> Objective<'_> {
        Objective {
            chain: &self.chain,
            scene: &self.scene,
            path: &self.path,
            weights: self.params.weights(self.path.len()),
            w_rot: self.params.w_rot,
            fixed_start: self.start.is_some(),
        }
    }

    pub fn smoothness(&self) -> Result<SmoothnessForm> {
        build_smoothness(self.path.n(), self.chain.dof(), self.params.dt, self.start.as_ref())
    }

    /// Singularity threshold: the absolute override, or one sampled with the problem seed.
    pub fn gate(&self) -> Result<ConstraintGate> {
        let threshold = match self.params.manipulability_threshold {
            Some(t) => t,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
                rng.set_stream(THRESHOLD_STREAM);
                manipulability_threshold(&self.chain, &mut rng, self.params.manipulability_samples)?
            }
        };
        Ok(ConstraintGate {
            velocity_check: self.params.velocity_check,
            manipulability_threshold: threshold,
        })
    }
}

/// Indices `0, m, 2m, ...` plus the last index.
pub fn subsample(path: &PathSpec, m: usize) -> Result<Vec<usize>> {
    if path.is_empty() {
        return Err(Error::InvalidArgument("path is empty".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("sub-sampling interval must be at least 1".into()));
    }
    let n = path.n();
    let mut out: Vec<usize> = (0..=n).step_by(m).collect();
    if *out.last().unwrap() != n {
        out.push(n);
    }
    Ok(out)
}

/// Piecewise-linear joint interpolation through `configs` placed at `indices`.
pub fn interpolate(configs: &[JointVector], indices: &[usize], n: usize, dt: f64) -> Result<Trajectory> {
    if configs.len() != indices.len() || indices.len() < 2 {
        return Err(Error::InvalidArgument("need one configuration per index and at least two indices".into()));
    }
    if indices[0] != 0 || *indices.last().unwrap() != n || indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("indices must increase strictly from 0 to n".into()));
    }
    let d = configs[0].len();
    for q in configs {
        check_dim(d, q.len())?;
    }
    let mut out = Vec::with_capacity(n + 1);
    for r in 0..indices.len() - 1 {
        let (a, b) = (indices[r], indices[r + 1]);
        out.push(configs[r].clone());
        for j in a + 1..b {
            let t = (j - a) as f64 / (b - a) as f64;
            out.push(configs[r].lerp(&configs[r + 1], t));
        }
    }
    out.push(configs.last().unwrap().clone());
    Trajectory::new(out, dt)
}

#[derive(Debug, Clone)]
pub struct SeedAttempt {
    pub trajectory: Option<Trajectory>,
    /// Chosen configurations at the sub-sampled indices (partial on failure).
    pub anchors: Vec<JointVector>,
    /// Sub-sampled path index for which no IK solution was found.
    pub failed_index: Option<usize>,
    /// Counted work, see [`WORK_SECONDS_PER_UNIT`].
    pub work: u64,
}

fn random_ik<R: Rng + ?Sized>(problem: &Problem, index: usize, rng: &mut R, work: &mut u64) -> Result<Option<JointVector>> {
    let seed = random_config(&problem.chain, rng);
    let report = solve_ik(&problem.chain, &problem.path.poses[index], &seed, &problem.params.ik, problem.params.w_rot)?;
    *work += (report.iterations as u64 + 1) * problem.chain.dof() as u64;
    Ok(report.solution())
}

/// Builds one candidate trajectory by greedily chaining random IK solutions at
/// the sub-sampled poses.
pub fn seed_trajectory<R: Rng + ?Sized>(problem: &Problem, rng: &mut R) -> Result<SeedAttempt> {
    let params = &problem.params;
    let indices = subsample(&problem.path, params.m)?;
    let obj = problem.objective();
    let mut work = 0;
    let mut anchors = Vec::with_capacity(indices.len());
    let first = match &problem.start {
        Some(q0) => Some(q0.clone()),
        None => {
            let mut found = None;
            for _ in 0..params.k {
                if let Some(q) = random_ik(problem, 0, rng, &mut work)? {
                    found = Some(q);
                    break;
                }
            }
            found
        }
    };
    let Some(first) = first else {
        return Ok(SeedAttempt {
            trajectory: None,
            anchors,
            failed_index: Some(0),
            work,
        });
    };
    anchors.push(first);

    for r in 1..indices.len() {
        let (a, b) = (indices[r - 1], indices[r]);
        let segment_path = PathSpec {
            poses: problem.path.poses[a..=b].to_vec(),
        };
        let seg_obj = Objective { path: &segment_path, ..obj };
        let prev = anchors.last().unwrap().clone();
        let mut best: Option<(f64, JointVector)> = None;
        for _ in 0..params.k {
            let Some(q) = random_ik(problem, b, rng, &mut work)? else {
                continue;
            };
            let seg = interpolate(&[prev.clone(), q.clone()], &[0, b - a], b - a, params.dt)?;
            let states = seg_obj.states(&seg)?;
            work += (states.len() * problem.chain.dof()) as u64;
            let cost = seg_obj.f_pose_from(&states) + obj.weights.lambda1 * seg_obj.f_obs_from(&states) + obj.weights.lambda2 * f_smooth_direct(&seg);
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, q));
            }
        }
        match best {
            Some((_, q)) => anchors.push(q),
            None => {
                return Ok(SeedAttempt {
                    trajectory: None,
                    anchors,
                    failed_index: Some(b),
                    work,
                })
            }
        }
    }
    let trajectory = interpolate(&anchors, &indices, problem.path.n(), params.dt)?;
    Ok(SeedAttempt {
        trajectory: Some(trajectory),
        anchors,
        failed_index: None,
        work,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    /// Seconds since the solve started, on the configured clock.
    pub time: f64,
    pub cost: f64,
    pub pose_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    NoSolution,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Incumbent; always passes every constraint.
    pub best: Option<Candidate>,
    pub report: Option<FeasibilityReport>,
    /// Lowest-cost iterate seen when nothing feasible was found.
    pub best_infeasible: Option<(Candidate, FeasibilityReport)>,
    pub history: Vec<HistoryEntry>,
    pub initial_solution_time: Option<f64>,
    /// Time used, on the configured clock.
    pub elapsed: f64,
    pub rounds: usize,
    pub failed_seeds: usize,
    pub manipulability_threshold: f64,
}

/// Elapsed time on either the wall clock or the counted-work clock.
#[derive(Debug)]
pub struct Meter {
    kind: ClockKind,
    start: Instant,
    work: AtomicU64,
}

impl Meter {
    pub fn new(kind: ClockKind) -> Self {
        Self {
            kind,
            start: Instant::now(),
            work: AtomicU64::new(0),
        }
    }

    pub fn charge(&self, units: u64) {
        self.work.fetch_add(units, Ordering::Relaxed);
    }

    pub fn elapsed(&self) -> f64 {
        match self.kind {
            ClockKind::Wall => self.start.elapsed().as_secs_f64(),
            ClockKind::Work => self.work.load(Ordering::Relaxed) as f64 * WORK_SECONDS_PER_UNIT,
        }
    }
}

#[derive(Debug)]
struct Shared {
    bound: Bound,
    best: Option<(Candidate, FeasibilityReport)>,
    lowest: Option<Candidate>,
    history: Vec<HistoryEntry>,
    rounds: usize,
    failed_seeds: usize,
}

pub type Progress<'a> = &'a (dyn Fn(&HistoryEntry) + Sync);

pub fn torm_solve(problem: &Problem) -> Result<SolveResult> {
    torm_solve_with(problem, None)
}

/// Runs until the budget is spent; `progress` sees every new incumbent.
pub fn torm_solve_with(problem: &Problem, progress: Option<Progress>) -> Result<SolveResult> {
    let params = &problem.params;
    params.validate()?;
    let gate = problem.gate()?;
    let form = problem.smoothness()?;
    let meter = Meter::new(params.clock);
    let shared = Mutex::new(Shared {
        bound: Bound::NONE,
        best: None,
        lowest: None,
        history: Vec::new(),
        rounds: 0,
        failed_seeds: 0,
    });
    let workers = if params.variant == Variant::NoIe { 1 } else { params.threads };
    if workers == 1 {
        worker(problem, &form, &gate, &meter, &shared, progress, 0)?;
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let (form, gate, meter, shared) = (&form, &gate, &meter, &shared);
                    s.spawn(move || worker(problem, form, gate, meter, shared, progress, w as u64))
                })
                .collect();
            handles.into_iter().try_for_each(|h| h.join().expect("solver worker panicked"))
        })?;
    }
    let elapsed = meter.elapsed();
    let shared = shared.into_inner().expect("solver state poisoned");
    let best_infeasible = match (&shared.best, shared.lowest) {
        (None, Some(c)) => {
            let report = check_constraints(&c.traj, &problem.chain, &problem.scene, &gate)?;
            Some((c, report))
        }
        _ => None,
    };
    let (best, report) = match shared.best {
        Some((c, r)) => (Some(c), Some(r)),
        None => (None, None),
    };
    info!(
        "solve finished after {:.3}s: {} rounds, {} failed seeds, {}",
        elapsed,
        shared.rounds,
        shared.failed_seeds,
        best.as_ref().map_or("no feasible trajectory".to_string(), |c| format!("pose error {:.3e}", c.pose_error))
    );
    Ok(SolveResult {
        status: if best.is_some() { SolveStatus::Solved } else { SolveStatus::NoSolution },
        initial_solution_time: shared.history.first().map(|h| h.time),
        best,
        report,
        best_infeasible,
        history: shared.history,
        elapsed,
        rounds: shared.rounds,
        failed_seeds: shared.failed_seeds,
        manipulability_threshold: gate.manipulability_threshold,
    })
}

fn worker(problem: &Problem, form: &SmoothnessForm, gate: &ConstraintGate, meter: &Meter, shared: &Mutex<Shared>, progress: Option<Progress>, stream: u64) -> Result<()> {
    let params = &problem.params;
    let obj = problem.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let mut working: Option<Trajectory> = None;
    while meter.elapsed() < params.budget {
        let start = match (&working, params.variant) {
            (Some(traj), Variant::NoIe) => traj.clone(),
            _ => {
                let attempt = seed_trajectory(problem, &mut rng)?;
                meter.charge(attempt.work);
                match attempt.trajectory {
                    Some(t) => t,
                    None => {
                        debug!("seed failed at path index {:?}", attempt.failed_index);
                        shared.lock().expect("solver state poisoned").failed_seeds += 1;
                        continue;
                    }
                }
            }
        };
        if meter.elapsed() >= params.budget {
            break;
        }
        let bound = shared.lock().expect("solver state poisoned").bound;
        let outcome = refine(&obj, form, &start, params, gate, bound)?;
        meter.charge(outcome.evaluations * problem.chain.dof() as u64 * REFINE_UNITS);
        if params.variant == Variant::NoIe {
            working = Some(outcome.last);
        }
        let time = meter.elapsed();
        let mut st = shared.lock().expect("solver state poisoned");
        st.rounds += 1;
        if st.lowest.as_ref().is_none_or(|l| outcome.lowest.cost.total < l.cost.total) {
            st.lowest = Some(outcome.lowest);
        }
        if let Some((cand, report)) = outcome.best {
            if st.bound.admits(cand.cost.total, cand.pose_error) {
                st.bound = Bound {
                    cost: cand.cost.total,
                    pose_error: cand.pose_error,
                };
                let entry = HistoryEntry {
                    time,
                    cost: cand.cost.total,
                    pose_error: cand.pose_error,
                };
                debug!("new incumbent at {:.3}s: cost {:.6e}, pose error {:.3e}", time, entry.cost, entry.pose_error);
                st.history.push(entry);
                st.best = Some((cand, report));
                if let Some(cb) = progress {
                    cb(&entry);
                }
            }
        }
    }
    Ok(())
}
