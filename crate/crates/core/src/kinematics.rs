//! Serial revolute chains: forward kinematics, body points, geometric
//! Jacobians, manipulability and a damped-least-squares IK solver.
//!
//! Link numbering: link 0 is the base frame, link `j + 1` is the frame that
//! rotates with joint `j`. The end-effector is the last link composed with the
//! fixed `tip` transform.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3xX, Matrix6xX, Translation3, Unit, UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type JointVector = DVector<f64>;

/// End-effector pose: translation in metres plus a unit quaternion.
pub type Pose = Isometry3<f64>;

/// Rotational weight of the pose distance relative to the translational part.
pub const DEFAULT_ROTATION_WEIGHT: f64 = 0.17;

const UNIT_TOLERANCE: f64 = 1e-9;

/// A fixed transform given as translation plus roll-pitch-yaw (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedFrame {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl FixedFrame {
    pub fn translation(xyz: [f64; 3]) -> Self {
        Self { xyz, rpy: [0.0; 3] }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub origin: FixedFrame,
    pub axis: Unit<Vector3<f64>>,
    pub lower: f64,
    pub upper: f64,
    /// rad/s
    pub velocity_limit: f64,
}

impl Joint {
    pub fn revolute(origin: FixedFrame, axis: Vector3<f64>, lower: f64, upper: f64, velocity_limit: f64) -> Result<Self> {
        let norm = axis.norm();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidChain(format!("joint axis {axis:?} is not unit length")));
        }
        Ok(Self {
            origin,
            axis: Unit::new_unchecked(axis),
            lower,
            upper,
            velocity_limit,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodySphere {
    pub link: usize,
    pub offset: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPoint {
    pub position: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    base: FixedFrame,
    joints: Vec<Joint>,
    tip: FixedFrame,
    spheres: Vec<BodySphere>,
    base_iso: Isometry3<f64>,
    origin_isos: Vec<Isometry3<f64>>,
    tip_iso: Isometry3<f64>,
    task_rows: Vec<usize>,
}

impl Chain {
    pub fn new(base: FixedFrame, joints: Vec<Joint>, tip: FixedFrame, spheres: Vec<BodySphere>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidChain("chain has no joints".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::InvalidChain(format!("joint {i}: axis is not unit length")));
            }
            if !(j.lower < j.upper) {
                return Err(Error::InvalidChain(format!(
                    "joint {i}: lower limit {} must be below upper limit {}",
                    j.lower, j.upper
                )));
            }
            if !(j.velocity_limit > 0.0) {
                return Err(Error::InvalidChain(format!("joint {i}: velocity limit must be positive")));
            }
        }
        let links = joints.len() + 1;
        for (i, s) in spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(Error::InvalidChain(format!("body sphere {i}: radius must be positive")));
            }
            if s.link >= links {
                return Err(Error::InvalidChain(format!(
                    "body sphere {i}: link {} out of range (chain has {links} links)",
                    s.link
                )));
            }
        }
        let mut chain = Self {
            base_iso: base.isometry(),
            origin_isos: joints.iter().map(|j| j.origin.isometry()).collect(),
            tip_iso: tip.isometry(),
            base,
            joints,
            tip,
            spheres,
            task_rows: Vec::new(),
        };
        chain.task_rows = chain.detect_task_rows();
        Ok(chain)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn spheres(&self) -> &[BodySphere] {
        &self.spheres
    }

    pub fn base(&self) -> &FixedFrame {
        &self.base
    }

    pub fn tip(&self) -> &FixedFrame {
        &self.tip
    }

    pub fn link_count(&self) -> usize {
        self.joints.len() + 1
    }

    /// Jacobian rows the chain can actually move (e.g. x, y for a planar
    /// two-link arm). Used for the manipulability measure.
    pub fn task_rows(&self) -> &[usize] {
        &self.task_rows
    }

    pub fn limits(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.joints.iter().map(|j| (j.lower, j.upper))
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        self.joints.iter().zip(q.iter()).all(|(j, &v)| v >= j.lower && v <= j.upper)
    }

    pub fn clamp(&self, q: &mut JointVector) {
        for (j, v) in self.joints.iter().zip(q.iter_mut()) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    pub fn check_config(&self, q: &JointVector) -> Result<()> {
        check_dim(self.dof(), q.len())?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("joint vector has non-finite entries".into()));
        }
        Ok(())
    }

    /// Computes every frame needed by the kinematic queries for `q`.
    pub fn state(&self, q: &JointVector) -> Result<ChainState> {
        self.check_config(q)?;
        Ok(self.state_unchecked(q))
    }

    pub(crate) fn state_unchecked(&self, q: &JointVector) -> ChainState {
        let d = self.dof();
        let mut link_frames = Vec::with_capacity(d + 1);
        let mut axes = Vec::with_capacity(d);
        let mut origins = Vec::with_capacity(d);
        let mut frame = self.base_iso;
        link_frames.push(frame);
        for (j, joint) in self.joints.iter().enumerate() {
            let pre = frame * self.origin_isos[j];
            axes.push(pre.rotation * joint.axis.into_inner());
            origins.push(pre.translation.vector);
            frame = pre * UnitQuaternion::from_axis_angle(&joint.axis, q[j]);
            link_frames.push(frame);
        }
        let ee = frame * self.tip_iso;
        ChainState {
            link_frames,
            axes,
            origins,
            ee,
        }
    }

    fn detect_task_rows(&self) -> Vec<usize> {
        let d = self.dof();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut peak = [0.0f64; 6];
        for _ in 0..8 {
            let q = random_config(self, &mut rng);
            let jac = self.state_unchecked(&q).jacobian();
            for (r, p) in peak.iter_mut().enumerate() {
                *p = p.max(jac.row(r).amax());
            }
        }
        let mut rows: Vec<usize> = (0..6).filter(|&r| peak[r] > 1e-9).collect();
        // More active rows than joints would make J J^T singular everywhere;
        // drop rotational rows first.
        while rows.len() > d {
            rows.pop();
        }
        rows
    }
}

/// World-frame kinematic quantities of a chain at one configuration.
#[derive(Debug, Clone)]
pub struct ChainState {
    link_frames: Vec<Isometry3<f64>>,
    axes: Vec<Vector3<f64>>,
    origins: Vec<Vector3<f64>>,
    ee: Isometry3<f64>,
}

impl ChainState {
    pub fn end_effector(&self) -> Pose {
        self.ee
    }

    pub fn link_frame(&self, link: usize) -> &Isometry3<f64> {
        &self.link_frames[link]
    }

    pub fn point(&self, sphere: &BodySphere) -> Vector3<f64> {
        (self.link_frames[sphere.link] * nalgebra::Point3::from(sphere.offset)).coords
    }

    /// Geometric Jacobian of the end-effector, rows 0..3 linear, 3..6 angular.
    pub fn jacobian(&self) -> Matrix6xX<f64> {
        let d = self.axes.len();
        let p = self.ee.translation.vector;
        let mut jac = Matrix6xX::zeros(d);
        for j in 0..d {
            let a = self.axes[j];
            let lin = a.cross(&(p - self.origins[j]));
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, j).copy_from(&a);
        }
        jac
    }

    /// Jacobian with the angular rows scaled by `w_rot`, matching the
    /// weighting used by [`pose_residual`].
    pub fn weighted_jacobian(&self, w_rot: f64) -> Matrix6xX<f64> {
        let mut jac = self.jacobian();
        jac.rows_mut(3, 3).scale_mut(w_rot);
        jac
    }

    /// Linear-velocity Jacobian of a world point rigidly attached to `link`.
    pub fn point_jacobian(&self, link: usize, point: &Vector3<f64>) -> Matrix3xX<f64> {
        let d = self.axes.len();
        let mut jac = Matrix3xX::zeros(d);
        for j in 0..link.min(d) {
            let lin = self.axes[j].cross(&(point - self.origins[j]));
            jac.set_column(j, &lin);
        }
        jac
    }
}

pub fn fk(chain: &Chain, q: &JointVector) -> Result<Pose> {
    Ok(chain.state(q)?.end_effector())
}

pub fn body_points(chain: &Chain, q: &JointVector) -> Result<Vec<BodyPoint>> {
    let state = chain.state(q)?;
    Ok(chain
        .spheres
        .iter()
        .map(|s| BodyPoint {
            position: state.point(s),
            radius: s.radius,
        })
        .collect())
}

pub fn jacobian(chain: &Chain, q: &JointVector) -> Result<Matrix6xX<f64>> {
    Ok(chain.state(q)?.jacobian())
}

pub fn body_point_jacobian(chain: &Chain, q: &JointVector, sphere_index: usize) -> Result<Matrix3xX<f64>> {
    let sphere = chain
        .spheres
        .get(sphere_index)
        .ok_or_else(|| Error::InvalidArgument(format!("body sphere index {sphere_index} out of range")))?;
    let state = chain.state(q)?;
    let p = state.point(sphere);
    Ok(state.point_jacobian(sphere.link, &p))
}

/// Yoshikawa manipulability `sqrt(det(J J^T))` over the chain's task rows.
pub fn manipulability(chain: &Chain, q: &JointVector) -> Result<f64> {
    Ok(manipulability_of(chain, &chain.state(q)?))
}

pub(crate) fn manipulability_of(chain: &Chain, state: &ChainState) -> f64 {
    let jac = state.jacobian();
    let rows = chain.task_rows();
    let reduced = DMatrix::from_fn(rows.len(), jac.ncols(), |r, c| jac[(rows[r], c)]);
    let det = (&reduced * reduced.transpose()).determinant();
    det.max(0.0).sqrt()
}

pub fn random_config<R: Rng + ?Sized>(chain: &Chain, rng: &mut R) -> JointVector {
    let bounds: Vec<(f64, f64)> = chain.limits().collect();
    random_config_in(&bounds, rng)
}

/// Uniform sample in a box of joint bounds; a degenerate interval yields its endpoint.
pub fn random_config_in<R: Rng + ?Sized>(bounds: &[(f64, f64)], rng: &mut R) -> JointVector {
    JointVector::from_iterator(
        bounds.len(),
        bounds.iter().map(|&(lo, hi)| {
            let u: f64 = rng.gen();
            lo + u * (hi - lo)
        }),
    )
}

/// 6-vector `(target.p - actual.p, w_rot * log(R_target R_actual^T))`.
pub fn pose_residual(target: &Pose, actual: &Pose, w_rot: f64) -> Vector6<f64> {
    let dp = target.translation.vector - actual.translation.vector;
    let dr = if target.rotation == actual.rotation {
        Vector3::zeros()
    } else {
        (target.rotation * actual.rotation.inverse()).scaled_axis() * w_rot
    };
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkParams {
    pub max_iterations: usize,
    pub damping: f64,
    /// Largest per-joint change in one iteration, radians.
    pub step_clamp: f64,
    /// Converged when the weighted residual norm is at or below this.
    pub tolerance: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            damping: 0.05,
            step_clamp: 0.5,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IkReport {
    pub config: JointVector,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl IkReport {
    pub fn solution(self) -> Option<JointVector> {
        self.converged.then_some(self.config)
    }
}

/// Damped-least-squares IK from `seed`, clamping to joint limits every iteration.
pub fn solve_ik(chain: &Chain, target: &Pose, seed: &JointVector, params: &IkParams, w_rot: f64) -> Result<IkReport> {
    chain.check_config(seed)?;
    let d = chain.dof();
    let mut q = seed.clone();
    chain.clamp(&mut q);
    let damping = DMatrix::<f64>::identity(d, d) * (params.damping * params.damping);
    let mut iterations = 0;
    loop {
        let state = chain.state_unchecked(&q);
        let err = pose_residual(target, &state.end_effector(), w_rot);
        let residual_norm = err.norm();
        if residual_norm <= params.tolerance {
            return Ok(IkReport {
                config: q,
                residual_norm,
                iterations,
                converged: true,
            });
        }
        if iterations >= params.max_iterations {
            return Ok(IkReport {
                config: q,
                residual_norm,
                iterations,
                converged: false,
            });
        }
        let jac = state.weighted_jacobian(w_rot);
        let jt = jac.transpose();
        let lhs = &jt * &jac + &damping;
        let rhs = &jt * err;
        let Some(mut step) = lhs.cholesky().map(|c| c.solve(&rhs)) else {
            return Ok(IkReport {
                config: q,
                residual_norm,
                iterations,
                converged: false,
            });
        };
        let largest = step.amax();
        if largest > params.step_clamp {
            step *= params.step_clamp / largest;
        }
        q += step;
        chain.clamp(&mut q);
        iterations += 1;
    }
}
