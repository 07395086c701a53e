//! The weighted objective `F_pose + lambda1 F_obs + lambda2 F_smooth` over a
//! discretised trajectory, with per-waypoint functional gradients.

use nalgebra::{Cholesky, DMatrix, Dyn, Matrix3, Vector3};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::{pose_residual, Chain, ChainState, JointVector, Pose};
use crate::scene::{obstacle_cost, Scene};

/// Speeds below this are treated as stationary by the obstacle gradient.
const STATIONARY_SPEED: f64 = 1e-8;

/// Joint configurations `q_0 .. q_n`, one per path waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub configs: Vec<JointVector>,
    /// Seconds per waypoint step.
    pub dt: f64,
}

impl Trajectory {
    pub fn new(configs: Vec<JointVector>, dt: f64) -> Result<Self> {
        if configs.len() < 2 {
            return Err(Error::InvalidArgument("a trajectory needs at least two waypoints".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        let d = configs[0].len();
        for q in &configs {
            check_dim(d, q.len())?;
        }
        Ok(Self { configs, dt })
    }

    /// Index of the last waypoint.
    pub fn n(&self) -> usize {
        self.configs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.configs[0].len()
    }

    /// Waypoints as rows.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dof(), |i, j| self.configs[i][j])
    }

    pub fn add_rows(&mut self, delta: &DMatrix<f64>, scale: f64, first_row: usize) {
        for (r, i) in (first_row..self.len()).enumerate() {
            for j in 0..self.dof() {
                self.configs[i][j] += scale * delta[(r, j)];
            }
        }
    }
}

/// Target poses `x_0 .. x_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub poses: Vec<Pose>,
}

impl PathSpec {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::InvalidArgument("path has no poses".into()));
        }
        for p in &poses {
            if (p.rotation.as_ref().norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument("path orientation is not a unit quaternion".into()));
            }
        }
        Ok(Self { poses })
    }

    pub fn n(&self) -> usize {
        self.poses.len() - 1
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Largest weighted distance `|dp| + w_rot |dr|` between consecutive poses.
    pub fn max_spacing(&self, w_rot: f64) -> f64 {
        self.poses.windows(2).map(|w| weighted_pose_distance(&w[0], &w[1], w_rot)).fold(0.0, f64::max)
    }
}

/// `|dp| + w_rot |dr|` with the unweighted rotation-vector norm.
pub fn weighted_pose_distance(a: &Pose, b: &Pose, w_rot: f64) -> f64 {
    let r = pose_residual(a, b, 1.0);
    r.fixed_rows::<3>(0).norm() + w_rot * r.fixed_rows::<3>(3).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl ObjectiveWeights {
    pub const DEFAULT_LAMBDA1: f64 = 1.8;

    /// `lambda1 = 1.8`, `lambda2 = 5 / (n + 1)`.
    pub fn defaults_for(waypoints: usize) -> Self {
        Self {
            lambda1: Self::DEFAULT_LAMBDA1,
            lambda2: 5.0 / waypoints as f64,
        }
    }
}

/// `F_smooth = 1/2 xi^T A xi + xi^T b + c0` over the free waypoints.
///
/// `A` is the same `N x N` matrix for every joint (the full operator is
/// block-diagonal per joint), so it is stored once; `b` has one column per
/// joint. When the start is free, `A` is singular on constant trajectories and
/// inverse applications use `A + mu P` instead, where `P` projects onto
/// constant trajectories and `mu` is the smallest non-zero eigenvalue of `A`.
#[derive(Debug, Clone)]
pub struct SmoothnessForm {
    n: usize,
    dof: usize,
    dt: f64,
    start_fixed: bool,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c0: f64,
    metric: Cholesky<f64, Dyn>,
    metric_inv: DMatrix<f64>,
}

pub fn build_smoothness(n: usize, dof: usize, dt: f64, start: Option<&JointVector>) -> Result<SmoothnessForm> {
    if n == 0 {
        return Err(Error::InvalidArgument("smoothness needs n >= 1".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    if let Some(q0) = start {
        check_dim(dof, q0.len())?;
    }
    let inv_dt2 = 1.0 / (dt * dt);
    let free = if start.is_some() { n } else { n + 1 };
    let mut a = DMatrix::zeros(free, free);
    // Each difference q_{i+1} - q_i contributes [1 -1; -1 1]; with a fixed
    // start the first difference only touches q_1.
    for i in 0..n {
        let (lo, hi) = if start.is_some() { (i.checked_sub(1), i) } else { (Some(i), i + 1) };
        a[(hi, hi)] += inv_dt2;
        if let Some(lo) = lo {
            a[(lo, lo)] += inv_dt2;
            a[(lo, hi)] -= inv_dt2;
            a[(hi, lo)] -= inv_dt2;
        }
    }
    let mut b = DMatrix::zeros(free, dof);
    let mut c0 = 0.0;
    let metric_matrix = if let Some(q0) = start {
        for j in 0..dof {
            b[(0, j)] = -q0[j] * inv_dt2;
        }
        c0 = 0.5 * q0.norm_squared() * inv_dt2;
        a.clone()
    } else {
        let mu = (2.0 - 2.0 * (std::f64::consts::PI / free as f64).cos()) * inv_dt2;
        a.add_scalar(mu / free as f64)
    };
    let metric = Cholesky::new(metric_matrix).ok_or_else(|| Error::InvalidArgument("smoothness metric is not positive definite".into()))?;
    let metric_inv = metric.inverse();
    Ok(SmoothnessForm {
        n,
        dof,
        dt,
        start_fixed: start.is_some(),
        a,
        b,
        c0,
        metric,
        metric_inv,
    })
}

impl SmoothnessForm {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn start_fixed(&self) -> bool {
        self.start_fixed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// First waypoint that is a free variable.
    pub fn first_free(&self) -> usize {
        usize::from(self.start_fixed)
    }

    pub fn free_count(&self) -> usize {
        self.a.nrows()
    }

    /// The matrix whose inverse preconditions updates (equal to `A` when the start is fixed).
    pub fn metric(&self) -> DMatrix<f64> {
        self.metric.l() * self.metric.l().transpose()
    }

    /// Applies the inverse metric to a free-block matrix (rows = free waypoints).
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.metric.solve(rhs)
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.metric_inv
    }

    /// Largest entry of the metric inverse.
    pub fn inverse_scale(&self) -> f64 {
        self.metric_inv.amax()
    }

    /// `M^-1 rhs` normalised so the largest entry of the applied inverse is 1.
    /// Keeps preconditioned step lengths independent of `n` and `dt`.
    pub fn precondition(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.solve(rhs) / self.inverse_scale()
    }

    fn check(&self, traj: &Trajectory) -> Result<()> {
        check_dim(self.n, traj.n())?;
        check_dim(self.dof, traj.dof())
    }

    /// Rows of the trajectory that are free variables.
    pub fn free_block(&self, traj: &Trajectory) -> Result<DMatrix<f64>> {
        self.check(traj)?;
        let first = self.first_free();
        Ok(DMatrix::from_fn(self.free_count(), self.dof, |r, j| traj.configs[r + first][j]))
    }
}

pub fn f_smooth(traj: &Trajectory, form: &SmoothnessForm) -> Result<f64> {
    let xi = form.free_block(traj)?;
    let a_xi = &form.a * &xi;
    Ok(0.5 * xi.dot(&a_xi) + xi.dot(&form.b) + form.c0)
}

/// `A xi + b` over the free waypoints.
pub fn grad_smooth(traj: &Trajectory, form: &SmoothnessForm) -> Result<DMatrix<f64>> {
    let xi = form.free_block(traj)?;
    Ok(&form.a * xi + &form.b)
}

/// Direct `1/2 sum |(q_{i+1} - q_i) / dt|^2`.
pub fn f_smooth_direct(traj: &Trajectory) -> f64 {
    traj.configs.windows(2).map(|w| ((&w[1] - &w[0]) / traj.dt).norm_squared()).sum::<f64>() * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub pose: f64,
    pub obstacle: f64,
    pub smooth: f64,
    pub total: f64,
}

/// Everything the objective terms need besides the trajectory itself.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub chain: &'a Chain,
    pub scene: &'a Scene,
    pub path: &'a PathSpec,
    pub weights: ObjectiveWeights,
    pub w_rot: f64,
    /// When set, `q_0` is not a variable and its gradient rows are zero.
    pub fixed_start: bool,
}

impl<'a> Objective<'a> {
    fn check(&self, traj: &Trajectory) -> Result<()> {
        check_dim(self.path.len(), traj.len())?;
        check_dim(self.chain.dof(), traj.dof())
    }

    pub(crate) fn states(&self, traj: &Trajectory) -> Result<Vec<ChainState>> {
        self.check(traj)?;
        traj.configs.iter().map(|q| self.chain.state(q)).collect()
    }

    pub fn f_pose(&self, traj: &Trajectory) -> Result<f64> {
        Ok(self.f_pose_from(&self.states(traj)?))
    }

    pub(crate) fn f_pose_from(&self, states: &[ChainState]) -> f64 {
        states
            .iter()
            .zip(&self.path.poses)
            .map(|(s, x)| pose_residual(x, &s.end_effector(), self.w_rot).norm_squared())
            .sum::<f64>()
            * 0.5
    }

    /// Rows `J_w^T r_i`: the descent direction of `F_pose` (its negative gradient).
    pub fn grad_pose(&self, traj: &Trajectory) -> Result<DMatrix<f64>> {
        Ok(self.grad_pose_from(&self.states(traj)?))
    }

    pub(crate) fn grad_pose_from(&self, states: &[ChainState]) -> DMatrix<f64> {
        let d = self.chain.dof();
        let mut out = DMatrix::zeros(states.len(), d);
        for (i, (s, x)) in states.iter().zip(&self.path.poses).enumerate() {
            if i == 0 && self.fixed_start {
                continue;
            }
            let r = pose_residual(x, &s.end_effector(), self.w_rot);
            let row = s.weighted_jacobian(self.w_rot).tr_mul(&r);
            out.row_mut(i).copy_from(&row.transpose());
        }
        out
    }

    /// Mean over waypoints of `|dp| + w_rot |dr|`.
    pub fn pose_error(&self, traj: &Trajectory) -> Result<f64> {
        Ok(self.pose_error_from(&self.states(traj)?))
    }

    pub(crate) fn pose_error_from(&self, states: &[ChainState]) -> f64 {
        let total: f64 = states
            .iter()
            .zip(&self.path.poses)
            .map(|(s, x)| weighted_pose_distance(x, &s.end_effector(), self.w_rot))
            .sum();
        total / states.len() as f64
    }

    pub fn f_obs(&self, traj: &Trajectory) -> Result<f64> {
        Ok(self.f_obs_from(&self.states(traj)?))
    }

    pub(crate) fn f_obs_from(&self, states: &[ChainState]) -> f64 {
        if self.scene.is_empty() {
            return 0.0;
        }
        let eps = self.scene.epsilon;
        let mut total = 0.0;
        for sphere in self.chain.spheres() {
            let mut prev: Option<(Vector3<f64>, f64)> = None;
            for s in states {
                let x = s.point(sphere);
                let c = obstacle_cost(self.scene.sdf(&x) - sphere.radius, eps).0;
                if let Some((px, pc)) = prev {
                    total += 0.5 * (c + pc) * (x - px).norm();
                }
                prev = Some((x, c));
            }
        }
        total
    }

    /// Workspace functional gradient of `F_obs` pulled back through each body
    /// point Jacobian. Needs at least three waypoints.
    pub fn grad_obs(&self, traj: &Trajectory) -> Result<DMatrix<f64>> {
        if traj.n() < 2 {
            return Err(Error::InvalidArgument("obstacle gradient needs n >= 2".into()));
        }
        Ok(self.grad_obs_from(&self.states(traj)?))
    }

    pub(crate) fn grad_obs_from(&self, states: &[ChainState]) -> DMatrix<f64> {
        let d = self.chain.dof();
        let count = states.len();
        let mut out = DMatrix::zeros(count, d);
        if self.scene.is_empty() || count < 3 {
            return out;
        }
        let eps = self.scene.epsilon;
        let last = count - 1;
        for sphere in self.chain.spheres() {
            let xs: Vec<Vector3<f64>> = states.iter().map(|s| s.point(sphere)).collect();
            for i in 0..count {
                if i == 0 && self.fixed_start {
                    continue;
                }
                let (dist, normal) = self.scene.sdf_with_gradient(&xs[i]);
                let (c, dc) = obstacle_cost(dist - sphere.radius, eps);
                if c == 0.0 && dc == 0.0 {
                    continue;
                }
                let vel = match i {
                    0 => xs[1] - xs[0],
                    i if i == last => xs[last] - xs[last - 1],
                    i => 0.5 * (xs[i + 1] - xs[i - 1]),
                };
                let acc = match i {
                    0 => xs[2] - 2.0 * xs[1] + xs[0],
                    i if i == last => xs[last] - 2.0 * xs[last - 1] + xs[last - 2],
                    i => xs[i + 1] - 2.0 * xs[i] + xs[i - 1],
                };
                let speed = vel.norm();
                if speed < STATIONARY_SPEED {
                    continue;
                }
                let dir = vel / speed;
                let proj = Matrix3::identity() - dir * dir.transpose();
                let curvature = proj * acc / (speed * speed);
                let work = speed * (proj * (normal * dc) - curvature * c);
                let jac = states[i].point_jacobian(sphere.link, &xs[i]);
                let row = jac.tr_mul(&work);
                for j in 0..d {
                    out[(i, j)] += row[j];
                }
            }
        }
        out
    }

    pub fn evaluate(&self, traj: &Trajectory, form: &SmoothnessForm) -> Result<CostBreakdown> {
        let states = self.states(traj)?;
        self.evaluate_from(traj, &states, form)
    }

    pub(crate) fn evaluate_from(&self, traj: &Trajectory, states: &[ChainState], form: &SmoothnessForm) -> Result<CostBreakdown> {
        let pose = self.f_pose_from(states);
        let obstacle = self.f_obs_from(states);
        let smooth = f_smooth(traj, form)?;
        Ok(CostBreakdown {
            pose,
            obstacle,
            smooth,
            total: pose + self.weights.lambda1 * obstacle + self.weights.lambda2 * smooth,
        })
    }

    pub fn total_cost(&self, traj: &Trajectory, form: &SmoothnessForm) -> Result<f64> {
        Ok(self.evaluate(traj, form)?.total)
    }
}
