//! Per-run quality measures and their aggregation over repeated runs.

use crate::error::Result;
use crate::kinematics::Chain;
use crate::objective::{Objective, ObjectiveWeights, PathSpec, Trajectory};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    /// Mean over waypoints of `|dp| + w_rot |dr|`.
    pub pose_error: f64,
    /// Smallest per-waypoint pose distance.
    pub min_waypoint_error: f64,
    /// Largest per-waypoint pose distance.
    pub max_waypoint_error: f64,
    /// Sum of joint-space step lengths, radians.
    pub trajectory_length: f64,
}

pub fn compute_metrics(traj: &Trajectory, path: &PathSpec, chain: &Chain, w_rot: f64) -> Result<RunMetrics> {
    let scene = Scene::default();
    let obj = Objective {
        chain,
        scene: &scene,
        path,
        weights: ObjectiveWeights { lambda1: 0.0, lambda2: 0.0 },
        w_rot,
        fixed_start: false,
    };
    let states = obj.states(traj)?;
    let per_waypoint: Vec<f64> = states
        .iter()
        .zip(&path.poses)
        .map(|(s, x)| crate::objective::weighted_pose_distance(x, &s.end_effector(), w_rot))
        .collect();
    Ok(RunMetrics {
        pose_error: per_waypoint.iter().sum::<f64>() / per_waypoint.len() as f64,
        min_waypoint_error: per_waypoint.iter().cloned().fold(f64::INFINITY, f64::min),
        max_waypoint_error: per_waypoint.iter().cloned().fold(0.0, f64::max),
        trajectory_length: trajectory_length(traj),
    })
}

pub fn trajectory_length(traj: &Trajectory) -> f64 {
    traj.configs.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
}

/// Average, minimum and maximum of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let avg = (values.iter().sum::<f64>() / values.len() as f64).clamp(min, max);
        Some(Self { avg, min, max })
    }
}
