//! Two-stage gradient descent, smooth joint-limit projection and the
//! feasibility gate.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::{manipulability_of, pose_residual, random_config, Chain, ChainState, IkParams, DEFAULT_ROTATION_WEIGHT};
use crate::objective::{CostBreakdown, Objective, ObjectiveWeights, SmoothnessForm, Trajectory};
use crate::scene::{check_trajectory_collision, ClearanceReport, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Exploration plus alternating refinement.
    #[default]
    Full,
    /// Exploration with a single combined gradient per iteration.
    NoTsgd,
    /// One seed, refined until the budget runs out.
    NoIe,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoTsgd, Variant::NoIe];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTsgd => "no-tsgd",
            Variant::NoIe => "no-ie",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}` (expected full, no-tsgd or no-ie)")))
    }
}

/// How the pose stage turns per-waypoint residuals into joint updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PoseStep {
    /// `(J^T J + mu^2 I)^-1 J^T r` per waypoint.
    #[default]
    GaussNewton,
    /// `J^T r` per waypoint.
    Gradient,
}

/// What the planning budget is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClockKind {
    #[default]
    Wall,
    /// Deterministic clock advanced by counted kinematics evaluations.
    Work,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TormParams {
    pub eta1: f64,
    pub eta2: f64,
    pub lambda1: f64,
    /// `5 / (n + 1)` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    pub tsgd_iterations: usize,
    /// Seconds per waypoint step; scales both smoothness and velocity checks.
    pub dt: f64,
    pub w_rot: f64,
    pub velocity_check: bool,
    /// Absolute singularity threshold; sampled from the chain when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manipulability_threshold: Option<f64>,
    pub manipulability_samples: usize,
    pub seed: u64,
    /// Planning budget in seconds.
    pub budget: f64,
    /// Sub-sampling interval.
    pub m: usize,
    /// IK candidates per sub-sampled pose.
    pub k: usize,
    pub alpha: f64,
    pub projection_rounds: usize,
    pub variant: Variant,
    pub pose_step: PoseStep,
    pub pose_damping: f64,
    pub clock: ClockKind,
    pub threads: usize,
    pub ik: IkParams,
}

impl Default for TormParams {
    fn default() -> Self {
        Self {
            eta1: 0.03,
            eta2: 1.0,
            lambda1: ObjectiveWeights::DEFAULT_LAMBDA1,
            lambda2: None,
            tsgd_iterations: 60,
            dt: 1.0,
            w_rot: DEFAULT_ROTATION_WEIGHT,
            velocity_check: true,
            manipulability_threshold: None,
            manipulability_samples: 1000,
            seed: 0,
            budget: 10.0,
            m: 10,
            k: 150,
            alpha: 1.0,
            projection_rounds: 10,
            variant: Variant::Full,
            pose_step: PoseStep::GaussNewton,
            pose_damping: 0.01,
            clock: ClockKind::Wall,
            threads: 1,
            ik: IkParams::default(),
        }
    }
}

impl TormParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("dt", self.dt),
            ("alpha", self.alpha),
            ("budget", self.budget),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2.unwrap_or(0.0)),
            ("w_rot", self.w_rot),
            ("pose_damping", self.pose_damping),
            ("manipulability_threshold", self.manipulability_threshold.unwrap_or(0.0)),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.tsgd_iterations < 2 {
            return Err(Error::InvalidArgument("tsgd_iterations must be at least 2".into()));
        }
        if self.m == 0 || self.k == 0 || self.threads == 0 {
            return Err(Error::InvalidArgument("m, k and threads must be at least 1".into()));
        }
        if self.manipulability_threshold.is_none() && self.manipulability_samples < 100 {
            return Err(Error::InvalidArgument("manipulability_samples must be at least 100".into()));
        }
        Ok(())
    }

    pub fn weights(&self, waypoints: usize) -> ObjectiveWeights {
        let mut w = ObjectiveWeights::defaults_for(waypoints);
        w.lambda1 = self.lambda1;
        if let Some(l2) = self.lambda2 {
            w.lambda2 = l2;
        }
        w
    }
}

/// Resolved constraint thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintGate {
    pub velocity_check: bool,
    pub manipulability_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityViolation {
    /// Second waypoint of the offending step.
    pub waypoint: usize,
    pub joint: usize,
    pub speed: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub collision_free: bool,
    pub clearance: ClearanceReport,
    pub velocity_ok: bool,
    /// Step with the highest speed-to-limit ratio.
    pub worst_velocity: Option<VelocityViolation>,
    pub singularity_ok: bool,
    pub min_manipulability: f64,
    pub min_manipulability_waypoint: usize,
    pub limits_ok: bool,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.collision_free && self.velocity_ok && self.singularity_ok && self.limits_ok
    }
}

pub fn check_constraints(traj: &Trajectory, chain: &Chain, scene: &Scene, gate: &ConstraintGate) -> Result<FeasibilityReport> {
    check_dim(chain.dof(), traj.dof())?;
    let clearance = check_trajectory_collision(scene, chain, &traj.configs)?;
    let limits_ok = traj.configs.iter().all(|q| chain.within_limits(q));

    let mut worst_velocity: Option<VelocityViolation> = None;
    let mut worst_ratio = f64::NEG_INFINITY;
    for i in 1..traj.len() {
        for (j, joint) in chain.joints().iter().enumerate() {
            let speed = (traj.configs[i][j] - traj.configs[i - 1][j]).abs() / traj.dt;
            let ratio = speed / joint.velocity_limit;
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_velocity = Some(VelocityViolation {
                    waypoint: i,
                    joint: j,
                    speed,
                    limit: joint.velocity_limit,
                });
            }
        }
    }
    let velocity_ok = !gate.velocity_check || worst_ratio <= 1.0;

    let mut min_manipulability = f64::INFINITY;
    let mut min_manipulability_waypoint = 0;
    for (i, q) in traj.configs.iter().enumerate() {
        let w = manipulability_of(chain, &chain.state(q)?);
        if w < min_manipulability {
            min_manipulability = w;
            min_manipulability_waypoint = i;
        }
    }
    Ok(FeasibilityReport {
        collision_free: clearance.collision_free(),
        clearance,
        velocity_ok,
        worst_velocity,
        singularity_ok: min_manipulability >= gate.manipulability_threshold,
        min_manipulability,
        min_manipulability_waypoint,
        limits_ok,
    })
}

/// Half the 5th percentile of manipulability over uniform random configurations.
pub fn manipulability_threshold<R: Rng + ?Sized>(chain: &Chain, rng: &mut R, samples: usize) -> Result<f64> {
    if samples < 100 {
        return Err(Error::InvalidArgument("at least 100 samples are needed".into()));
    }
    let mut values: Vec<f64> = (0..samples)
        .map(|_| manipulability_of(chain, &chain.state_unchecked(&random_config(chain, rng))))
        .collect();
    values.sort_by(f64::total_cmp);
    let idx = ((samples as f64 * 0.05).ceil() as usize).saturating_sub(1);
    Ok(0.5 * values[idx])
}

/// Pulls violating joints back inside their limits along the inverse metric,
/// so the correction is spread smoothly over neighbouring waypoints. After
/// `max_rounds` any residual violation is clamped.
pub fn smooth_projection(traj: &Trajectory, chain: &Chain, form: &SmoothnessForm, alpha: f64, max_rounds: usize) -> Result<Trajectory> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    check_dim(chain.dof(), traj.dof())?;
    let mut out = traj.clone();
    let first = form.first_free();
    let mut xi = form.free_block(traj)?;
    let inv = form.inverse();
    for _ in 0..max_rounds {
        let mut violated = false;
        for (j, joint) in chain.joints().iter().enumerate() {
            let rows: Vec<usize> = (0..xi.nrows()).filter(|&r| xi[(r, j)] < joint.lower || xi[(r, j)] > joint.upper).collect();
            if rows.is_empty() {
                continue;
            }
            violated = true;
            let v = DVector::from_iterator(rows.len(), rows.iter().map(|&r| xi[(r, j)].clamp(joint.lower, joint.upper) - xi[(r, j)]));
            // Smallest metric-norm correction that moves every violating entry onto its limit.
            let sub = DMatrix::from_fn(rows.len(), rows.len(), |a, b| inv[(rows[a], rows[b])]);
            let w = match Cholesky::new(sub) {
                Some(ch) => ch.solve(&v),
                None => continue,
            };
            for r in 0..xi.nrows() {
                let delta: f64 = rows.iter().zip(w.iter()).map(|(&s, &ws)| inv[(r, s)] * ws).sum();
                xi[(r, j)] += alpha * delta;
            }
        }
        if !violated {
            break;
        }
    }
    for r in 0..xi.nrows() {
        let mut q = xi.row(r).transpose();
        chain.clamp(&mut q);
        out.configs[r + first] = q;
    }
    Ok(out)
}

/// Per-waypoint pose update rows (descent on `F_pose`), zero at a fixed start.
pub(crate) fn pose_update(obj: &Objective, states: &[ChainState], params: &TormParams) -> DMatrix<f64> {
    match params.pose_step {
        PoseStep::Gradient => obj.grad_pose_from(states),
        PoseStep::GaussNewton => {
            let d = obj.chain.dof();
            let mut out = DMatrix::zeros(states.len(), d);
            let damping2 = params.pose_damping * params.pose_damping;
            for (i, (s, x)) in states.iter().zip(&obj.path.poses).enumerate() {
                if i == 0 && obj.fixed_start {
                    continue;
                }
                let r = pose_residual(x, &s.end_effector(), obj.w_rot);
                if r.iter().all(|&e| e == 0.0) {
                    continue;
                }
                let jac = s.weighted_jacobian(obj.w_rot);
                let mut normal = jac.tr_mul(&jac);
                for k in 0..d {
                    normal[(k, k)] += damping2;
                }
                let rhs = jac.tr_mul(&r);
                let Some(step) = Cholesky::new(normal).map(|ch| ch.solve(&rhs)) else {
                    continue;
                };
                let scale = (params.ik.step_clamp / step.amax()).min(1.0);
                out.row_mut(i).copy_from(&(step * scale).transpose());
            }
            out
        }
    }
}

/// `-eta1 M^-1 (lambda1 grad_obs + lambda2 grad_smooth)` over the free rows,
/// with `M^-1` scaled to unit largest entry.
pub(crate) fn feasibility_update(obj: &Objective, form: &SmoothnessForm, traj: &Trajectory, states: &[ChainState], params: &TormParams) -> Result<DMatrix<f64>> {
    let first = form.first_free();
    let mut g = crate::objective::grad_smooth(traj, form)? * obj.weights.lambda2;
    if obj.weights.lambda1 != 0.0 && !obj.scene.is_empty() && traj.n() >= 2 {
        let obs = obj.grad_obs_from(states);
        g += obs.rows(first, g.nrows()) * obj.weights.lambda1;
    }
    Ok(form.precondition(&g) * -params.eta1)
}

/// One update of the two-stage scheme. Odd `iteration` takes the
/// obstacle/smoothness step, even takes the pose step.
pub fn tsgd_step(obj: &Objective, form: &SmoothnessForm, traj: &Trajectory, iteration: usize, params: &TormParams) -> Result<Trajectory> {
    let states = obj.states(traj)?;
    step_from(obj, form, traj, &states, iteration, params)
}

fn step_from(obj: &Objective, form: &SmoothnessForm, traj: &Trajectory, states: &[ChainState], iteration: usize, params: &TormParams) -> Result<Trajectory> {
    let first = form.first_free();
    let mut next = traj.clone();
    if iteration % 2 == 1 {
        next.add_rows(&feasibility_update(obj, form, traj, states, params)?, 1.0, first);
    } else {
        let pose = pose_update(obj, states, params);
        next.add_rows(&pose.rows(first, form.free_count()).into_owned(), params.eta2, first);
    }
    project_if_needed(next, obj.chain, form, params)
}

fn combined_step(obj: &Objective, form: &SmoothnessForm, traj: &Trajectory, states: &[ChainState], params: &TormParams) -> Result<Trajectory> {
    let first = form.first_free();
    let mut delta = feasibility_update(obj, form, traj, states, params)?;
    delta += pose_update(obj, states, params).rows(first, form.free_count()) * params.eta2;
    let mut next = traj.clone();
    next.add_rows(&delta, 1.0, first);
    project_if_needed(next, obj.chain, form, params)
}

fn project_if_needed(traj: Trajectory, chain: &Chain, form: &SmoothnessForm, params: &TormParams) -> Result<Trajectory> {
    if traj.configs.iter().all(|q| chain.within_limits(q)) {
        Ok(traj)
    } else {
        smooth_projection(&traj, chain, form, params.alpha, params.projection_rounds)
    }
}

/// An evaluated iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub traj: Trajectory,
    pub cost: CostBreakdown,
    pub pose_error: f64,
}

/// Incumbent to beat: a candidate is accepted only when its cost is strictly
/// lower and its pose error is no higher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub cost: f64,
    pub pose_error: f64,
}

impl Bound {
    pub const NONE: Bound = Bound {
        cost: f64::INFINITY,
        pose_error: f64::INFINITY,
    };

    pub fn admits(&self, cost: f64, pose_error: f64) -> bool {
        cost < self.cost && pose_error <= self.pose_error
    }
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    /// Best iterate that beat the bound and passed every constraint.
    pub best: Option<(Candidate, FeasibilityReport)>,
    /// Lowest-cost iterate regardless of feasibility.
    pub lowest: Candidate,
    /// Final iterate, for continued refinement.
    pub last: Trajectory,
    /// Total cost after each update.
    pub trace: Vec<f64>,
    /// Waypoint kinematics evaluations performed.
    pub evaluations: u64,
}

/// Runs `params.tsgd_iterations` updates from `traj` (alternating stages, or
/// combined updates for [`Variant::NoTsgd`]) and returns the best feasible
/// iterate seen, including the input.
pub fn tsgd_round(obj: &Objective, form: &SmoothnessForm, traj: &Trajectory, params: &TormParams, gate: &ConstraintGate) -> Result<RoundOutcome> {
    refine(obj, form, traj, params, gate, Bound::NONE)
}

pub(crate) fn refine(obj: &Objective, form: &SmoothnessForm, traj: &Trajectory, params: &TormParams, gate: &ConstraintGate, mut bound: Bound) -> Result<RoundOutcome> {
    let combined = params.variant == Variant::NoTsgd;
    let mut current = traj.clone();
    let mut states = obj.states(&current)?;
    let mut evaluations = states.len() as u64;
    let mut best = None;
    let mut trace = Vec::with_capacity(params.tsgd_iterations);

    let consider = |cand: &Trajectory, states: &[ChainState], bound: &mut Bound, best: &mut Option<(Candidate, FeasibilityReport)>| -> Result<Candidate> {
        let cost = obj.evaluate_from(cand, states, form)?;
        let pose_error = obj.pose_error_from(states);
        let candidate = Candidate {
            traj: cand.clone(),
            cost,
            pose_error,
        };
        if bound.admits(cost.total, pose_error) {
            let report = check_constraints(cand, obj.chain, obj.scene, gate)?;
            if report.feasible() {
                *bound = Bound { cost: cost.total, pose_error };
                *best = Some((candidate.clone(), report));
            }
        }
        Ok(candidate)
    };

    let mut lowest = consider(&current, &states, &mut bound, &mut best)?;
    for it in 1..=params.tsgd_iterations {
        current = if combined {
            combined_step(obj, form, &current, &states, params)?
        } else {
            step_from(obj, form, &current, &states, it, params)?
        };
        states = obj.states(&current)?;
        evaluations += states.len() as u64;
        if combined || it % 2 == 0 {
            let cand = consider(&current, &states, &mut bound, &mut best)?;
            trace.push(cand.cost.total);
            if cand.cost.total < lowest.cost.total {
                lowest = cand;
            }
        } else {
            trace.push(obj.evaluate_from(&current, &states, form)?.total);
        }
    }
    Ok(RoundOutcome {
        best,
        lowest,
        last: current,
        trace,
        evaluations,
    })
}
