//! Analytic signed distance over obstacle primitives, the smoothed obstacle
//! cost, and sphere-based collision queries.

use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{Chain, ChainState, JointVector};

/// Distance reported by an empty scene.
pub const EMPTY_SCENE_DISTANCE: f64 = 1.0e9;

/// Default clearance band of the obstacle cost, metres.
pub const DEFAULT_EPSILON: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Box {
        center: Vector3<f64>,
        orientation: UnitQuaternion<f64>,
        half_extents: Vector3<f64>,
    },
    /// Solid region `normal . x <= offset`; positive distance above it.
    HalfSpace { normal: Vector3<f64>, offset: f64 },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        match self {
            Primitive::Sphere { radius, .. } if !(*radius > 0.0) => Err(Error::InvalidScene("sphere radius must be positive".into())),
            Primitive::Box { half_extents, orientation, .. } => {
                if half_extents.iter().any(|h| !(*h > 0.0)) {
                    return Err(Error::InvalidScene("box half-extents must be positive".into()));
                }
                if (orientation.as_ref().norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidScene("box orientation must be a unit quaternion".into()));
                }
                Ok(())
            }
            Primitive::HalfSpace { normal, .. } if (normal.norm() - 1.0).abs() > 1e-9 => {
                Err(Error::InvalidScene("half-space normal must be unit length".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn distance(&self, x: &Vector3<f64>) -> f64 {
        self.distance_and_gradient(x).0
    }

    pub fn distance_and_gradient(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        match self {
            Primitive::Sphere { center, radius } => {
                let v = x - center;
                let len = v.norm();
                let grad = if len > 0.0 { v / len } else { Vector3::x() };
                (len - radius, grad)
            }
            Primitive::HalfSpace { normal, offset } => (normal.dot(x) - offset, *normal),
            Primitive::Box {
                center,
                orientation,
                half_extents,
            } => {
                let local = orientation.inverse_transform_vector(&(x - center));
                let q = local.abs() - half_extents;
                let outside = q.map(|v| v.max(0.0));
                let out_len = outside.norm();
                let (dist, local_grad) = if out_len > 0.0 {
                    let g = Vector3::from_fn(|i, _| outside[i] * local[i].signum()) / out_len;
                    (out_len, g)
                } else {
                    let axis = q.imax();
                    let mut g = Vector3::zeros();
                    g[axis] = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
                    (q[axis], g)
                };
                (dist, orientation.transform_vector(&local_grad))
            }
        }
    }

    /// A copy shrunk by `amount` (radius / half-extents reduced, half-space lowered).
    pub fn shrunk(&self, amount: f64) -> Primitive {
        match self {
            Primitive::Sphere { center, radius } => Primitive::Sphere {
                center: *center,
                radius: radius - amount,
            },
            Primitive::Box {
                center,
                orientation,
                half_extents,
            } => Primitive::Box {
                center: *center,
                orientation: *orientation,
                half_extents: half_extents.map(|h| h - amount),
            },
            Primitive::HalfSpace { normal, offset } => Primitive::HalfSpace {
                normal: *normal,
                offset: offset - amount,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub obstacles: Vec<Primitive>,
    /// Clearance band of the obstacle cost, metres.
    pub epsilon: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            obstacles: Vec::new(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Scene {
    pub fn new(obstacles: Vec<Primitive>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidScene("epsilon must be positive".into()));
        }
        for o in &obstacles {
            o.validate()?;
        }
        Ok(Self { obstacles, epsilon })
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn sdf(&self, x: &Vector3<f64>) -> f64 {
        self.obstacles.iter().map(|o| o.distance(x)).fold(EMPTY_SCENE_DISTANCE, f64::min)
    }

    /// Distance and gradient of the closest primitive; the first listed wins ties.
    pub fn sdf_with_gradient(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let mut best = (EMPTY_SCENE_DISTANCE, Vector3::zeros());
        for o in &self.obstacles {
            let (d, g) = o.distance_and_gradient(x);
            if d < best.0 {
                best = (d, g);
            }
        }
        best
    }
}

pub fn sdf_eval(scene: &Scene, x: &Vector3<f64>) -> f64 {
    scene.sdf(x)
}

pub fn sdf_grad(scene: &Scene, x: &Vector3<f64>) -> Vector3<f64> {
    scene.sdf_with_gradient(x).1
}

/// Piecewise obstacle cost of a clearance `d` (sdf minus sphere radius) and its derivative.
///
/// `-d + eps/2` inside, `(d - eps)^2 / (2 eps)` in the band, zero beyond `eps`.
pub fn obstacle_cost(d: f64, epsilon: f64) -> (f64, f64) {
    if d < 0.0 {
        (-d + 0.5 * epsilon, -1.0)
    } else if d <= epsilon {
        let t = d - epsilon;
        (t * t / (2.0 * epsilon), t / epsilon)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offender {
    pub waypoint: usize,
    pub sphere: usize,
    pub clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfCollision {
    pub waypoint: usize,
    pub first: usize,
    pub second: usize,
}

/// Per-waypoint, per-sphere clearances (sdf minus radius) plus self-collisions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClearanceReport {
    pub clearances: Vec<Vec<f64>>,
    pub worst: Option<Offender>,
    pub self_collisions: Vec<SelfCollision>,
}

impl ClearanceReport {
    pub fn external_collision(&self) -> bool {
        self.worst.is_some_and(|w| w.clearance < 0.0)
    }

    pub fn self_collision(&self) -> bool {
        !self.self_collisions.is_empty()
    }

    pub fn collision_free(&self) -> bool {
        !self.external_collision() && !self.self_collision()
    }

    /// Waypoints with at least one negative clearance, ascending.
    pub fn colliding_waypoints(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .clearances
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&c| c < 0.0))
            .map(|(i, _)| i)
            .collect();
        out.extend(self.self_collisions.iter().map(|s| s.waypoint));
        out.sort_unstable();
        out.dedup();
        out
    }

    fn push(&mut self, waypoint: usize, clearances: Vec<f64>, self_pairs: impl IntoIterator<Item = (usize, usize)>) {
        for (sphere, &c) in clearances.iter().enumerate() {
            if self.worst.is_none_or(|w| c < w.clearance) {
                self.worst = Some(Offender {
                    waypoint,
                    sphere,
                    clearance: c,
                });
            }
        }
        self.clearances.push(clearances);
        self.self_collisions.extend(self_pairs.into_iter().map(|(first, second)| SelfCollision { waypoint, first, second }));
    }
}

pub(crate) fn state_clearances(scene: &Scene, chain: &Chain, state: &ChainState) -> (Vec<f64>, Vec<(usize, usize)>) {
    let spheres = chain.spheres();
    let centers: Vec<Vector3<f64>> = spheres.iter().map(|s| state.point(s)).collect();
    let clearances = centers.iter().zip(spheres).map(|(c, s)| scene.sdf(c) - s.radius).collect();
    let mut pairs = Vec::new();
    for a in 0..spheres.len() {
        for b in a + 1..spheres.len() {
            if spheres[a].link.abs_diff(spheres[b].link) < 2 {
                continue;
            }
            if (centers[a] - centers[b]).norm() < spheres[a].radius + spheres[b].radius {
                pairs.push((a, b));
            }
        }
    }
    (clearances, pairs)
}

/// Clearance report for a single configuration.
pub fn check_collision(scene: &Scene, chain: &Chain, q: &JointVector) -> Result<ClearanceReport> {
    check_trajectory_collision(scene, chain, std::slice::from_ref(q))
}

pub fn check_trajectory_collision(scene: &Scene, chain: &Chain, configs: &[JointVector]) -> Result<ClearanceReport> {
    let mut report = ClearanceReport::default();
    for (i, q) in configs.iter().enumerate() {
        let state = chain.state(q)?;
        let (clearances, pairs) = state_clearances(scene, chain, &state);
        report.push(i, clearances, pairs);
    }
    Ok(report)
}
