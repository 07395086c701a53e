//! Built-in end-effector path generators.
//!
//! Every generator produces a sequence of pieces (straight segments, circular
//! arcs, rotations about a fixed axis) that are resampled so consecutive poses
//! are about `spacing` apart under the weighted metric `|dp| + w_rot |dr|`.
//! Polylines are split at turns sharper than [`SPLIT_TURN_DEG`] so corners
//! land on waypoints.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::objective::PathSpec;

pub const DEFAULT_SPACING: f64 = 0.005;
pub const SPLIT_TURN_DEG: f64 = 20.0;

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn one() -> f64 {
    1.0
}

fn default_amplitude() -> f64 {
    45.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathGenerator {
    /// Straight segment at a fixed orientation.
    Line {
        start: [f64; 3],
        end: [f64; 3],
        /// `[w, x, y, z]`
        #[serde(default = "identity_quat")]
        orientation: [f64; 4],
    },
    /// Closed square starting at `corner`, first edge along `u`, second along `v`.
    Square {
        corner: [f64; 3],
        u: [f64; 3],
        v: [f64; 3],
        side: f64,
        #[serde(default = "identity_quat")]
        orientation: [f64; 4],
    },
    /// Two tangent 270-degree arcs of equal radius forming an "S" in the `u`-`v` plane.
    SCurve {
        center: [f64; 3],
        u: [f64; 3],
        v: [f64; 3],
        radius: f64,
        #[serde(default = "identity_quat")]
        orientation: [f64; 4],
    },
    /// 2-D strokes placed in the `u`-`v` plane, joined end to start by straight moves.
    Polyline {
        origin: [f64; 3],
        u: [f64; 3],
        v: [f64; 3],
        #[serde(default = "one")]
        scale: f64,
        /// Plane coordinates; strokes are joined end to start.
        strokes: Vec<Vec<[f64; 2]>>,
        /// Rounds of corner cutting applied to the joined points, at most 8.
        #[serde(default)]
        smoothing: u32,
        #[serde(default = "identity_quat")]
        orientation: [f64; 4],
    },
    /// Fixed position; pitch 0 -> +a -> -a -> 0, then yaw the same way, in the local frame.
    Rotation {
        position: [f64; 3],
        #[serde(default = "identity_quat")]
        orientation: [f64; 4],
        #[serde(default = "default_amplitude")]
        amplitude_deg: f64,
    },
}

impl PathGenerator {
    pub const KINDS: [&'static str; 5] = ["line", "square", "s-curve", "polyline", "rotation"];

    pub fn kind(&self) -> &'static str {
        match self {
            PathGenerator::Line { .. } => "line",
            PathGenerator::Square { .. } => "square",
            PathGenerator::SCurve { .. } => "s-curve",
            PathGenerator::Polyline { .. } => "polyline",
            PathGenerator::Rotation { .. } => "rotation",
        }
    }

    /// Desk-scale defaults for the Fetch-like arm, facing +x.
    pub fn default_for(kind: &str) -> Result<Self> {
        let across = [0.0, 1.0, 0.0];
        let up = [0.0, 0.0, 1.0];
        Ok(match kind {
            "line" => PathGenerator::Line {
                start: [0.45, -0.25, 0.0],
                end: [0.45, 0.25, 0.0],
                orientation: identity_quat(),
            },
            "square" => PathGenerator::Square {
                corner: [0.75, -0.2, 0.6],
                u: across,
                v: up,
                side: 0.4,
                orientation: identity_quat(),
            },
            "s-curve" => PathGenerator::SCurve {
                center: [0.9, 0.0, 0.8],
                u: across,
                v: up,
                radius: 0.1,
                orientation: identity_quat(),
            },
            "polyline" => PathGenerator::Polyline {
                origin: [0.9, -0.2, 0.7],
                u: across,
                v: up,
                scale: 1.0,
                strokes: vec![vec![[0.0, 0.0], [0.2, 0.1], [0.4, 0.0]]],
                smoothing: 0,
                orientation: identity_quat(),
            },
            "rotation" => PathGenerator::Rotation {
                position: [0.85, 0.0, 0.8],
                orientation: identity_quat(),
                amplitude_deg: 45.0,
            },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown path kind `{other}` (expected one of {})",
                    Self::KINDS.join(", ")
                )))
            }
        })
    }
}

/// Unit quaternion from `[w, x, y, z]`, rejecting non-unit input.
pub fn quaternion(q: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = raw.norm();
    if !((norm - 1.0).abs() <= 1e-6) {
        return Err(Error::InvalidArgument(format!("quaternion {q:?} is not unit length (norm {norm})")));
    }
    Ok(UnitQuaternion::new_normalize(raw))
}

#[derive(Debug, Clone)]
enum Piece {
    Segment {
        a: Vector3<f64>,
        b: Vector3<f64>,
        rot: UnitQuaternion<f64>,
    },
    Arc {
        center: Vector3<f64>,
        e1: Vector3<f64>,
        e2: Vector3<f64>,
        radius: f64,
        from: f64,
        to: f64,
        rot: UnitQuaternion<f64>,
    },
    Turn {
        position: Vector3<f64>,
        base: UnitQuaternion<f64>,
        axis: Unit<Vector3<f64>>,
        from: f64,
        to: f64,
    },
}

impl Piece {
    fn length(&self, w_rot: f64) -> f64 {
        match self {
            Piece::Segment { a, b, .. } => (b - a).norm(),
            Piece::Arc { radius, from, to, .. } => radius * (to - from).abs(),
            Piece::Turn { from, to, .. } => w_rot * (to - from).abs(),
        }
    }

    fn at(&self, t: f64) -> Pose {
        match self {
            Piece::Segment { a, b, rot } => Isometry3::from_parts(Translation3::from(a.lerp(b, t)), *rot),
            Piece::Arc {
                center,
                e1,
                e2,
                radius,
                from,
                to,
                rot,
            } => {
                let angle = from + (to - from) * t;
                let p = center + *radius * (angle.cos() * e1 + angle.sin() * e2);
                Isometry3::from_parts(Translation3::from(p), *rot)
            }
            Piece::Turn {
                position,
                base,
                axis,
                from,
                to,
            } => {
                let angle = from + (to - from) * t;
                Isometry3::from_parts(Translation3::from(*position), base * UnitQuaternion::from_axis_angle(axis, angle))
            }
        }
    }
}

/// Orthonormal in-plane axes from two user directions.
fn plane_axes(u: [f64; 3], v: [f64; 3]) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let u = Vector3::from(u);
    let v = Vector3::from(v);
    let e1 = u.try_normalize(1e-12).ok_or_else(|| Error::InvalidArgument("plane axis u is zero".into()))?;
    let e2 = (v - e1 * e1.dot(&v))
        .try_normalize(1e-9)
        .ok_or_else(|| Error::InvalidArgument("plane axis v is parallel to u".into()))?;
    Ok((e1, e2))
}

/// Straight segments through `points`, skipping repeated points.
fn polyline_pieces(points: &[Vector3<f64>], rot: UnitQuaternion<f64>) -> Result<Vec<Piece>> {
    let mut pts: Vec<Vector3<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if pts.last().is_none_or(|q| (p - q).norm() > 1e-12) {
            pts.push(*p);
        }
    }
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("polyline has no length".into()));
    }
    Ok(pts.windows(2).map(|w| Piece::Segment { a: w[0], b: w[1], rot }).collect())
}

/// One round of Chaikin corner cutting; the end points are kept.
fn cut_corners(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let Some((first, last)) = points.first().zip(points.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(2 * points.len());
    out.push(*first);
    for w in points.windows(2) {
        out.push(0.75 * w[0] + 0.25 * w[1]);
        out.push(0.25 * w[0] + 0.75 * w[1]);
    }
    out.push(*last);
    out
}

/// Resamples a group of pieces as one arc-length parameterised curve.
fn resample_group(group: &[Piece], spacing: f64, w_rot: f64, out: &mut Vec<Pose>) {
    let lengths: Vec<f64> = group.iter().map(|p| p.length(w_rot)).collect();
    let total: f64 = lengths.iter().sum();
    let count = ((total / spacing).round() as usize).max(1);
    if out.is_empty() {
        out.push(group[0].at(0.0));
    }
    let mut piece = 0;
    let mut before = 0.0;
    for k in 1..=count {
        let s = total * k as f64 / count as f64;
        while piece + 1 < group.len() && s > before + lengths[piece] {
            before += lengths[piece];
            piece += 1;
        }
        let t = if k == count { 1.0 } else { ((s - before) / lengths[piece]).clamp(0.0, 1.0) };
        out.push(group[piece].at(t));
    }
}

/// Groups of pieces, each resampled on its own.
fn groups(gen: &PathGenerator) -> Result<Vec<Vec<Piece>>> {
    match gen {
        PathGenerator::Line { start, end, orientation } => {
            let (a, b) = (Vector3::from(*start), Vector3::from(*end));
            if (b - a).norm() < 1e-9 {
                return Err(Error::InvalidArgument("line has zero length".into()));
            }
            Ok(vec![vec![Piece::Segment {
                a,
                b,
                rot: quaternion(*orientation)?,
            }]])
        }
        PathGenerator::Square {
            corner,
            u,
            v,
            side,
            orientation,
        } => {
            if !(*side > 1e-9) {
                return Err(Error::InvalidArgument("square side must be positive".into()));
            }
            let (e1, e2) = plane_axes(*u, *v)?;
            let rot = quaternion(*orientation)?;
            let c0 = Vector3::from(*corner);
            let corners = [c0, c0 + *side * e1, c0 + *side * (e1 + e2), c0 + *side * e2, c0];
            Ok(corners.windows(2).map(|w| vec![Piece::Segment { a: w[0], b: w[1], rot }]).collect())
        }
        PathGenerator::SCurve {
            center,
            u,
            v,
            radius,
            orientation,
        } => {
            if !(*radius > 1e-9) {
                return Err(Error::InvalidArgument("s-curve radius must be positive".into()));
            }
            let (e1, e2) = plane_axes(*u, *v)?;
            let rot = quaternion(*orientation)?;
            let c = Vector3::from(*center);
            let upper = Piece::Arc {
                center: c + *radius * e2,
                e1,
                e2,
                radius: *radius,
                from: 0.0,
                to: 1.5 * PI,
                rot,
            };
            let lower = Piece::Arc {
                center: c - *radius * e2,
                e1,
                e2,
                radius: *radius,
                from: 0.5 * PI,
                to: -PI,
                rot,
            };
            Ok(vec![vec![upper], vec![lower]])
        }
        PathGenerator::Polyline {
            origin,
            u,
            v,
            scale,
            strokes,
            smoothing,
            orientation,
        } => {
            if !(*scale > 0.0) {
                return Err(Error::InvalidArgument("polyline scale must be positive".into()));
            }
            if *smoothing > 8 {
                return Err(Error::InvalidArgument("polyline smoothing is limited to 8 rounds".into()));
            }
            let (e1, e2) = plane_axes(*u, *v)?;
            let rot = quaternion(*orientation)?;
            let o = Vector3::from(*origin);
            let mut points: Vec<Vector3<f64>> = strokes.iter().flatten().map(|p| o + *scale * (p[0] * e1 + p[1] * e2)).collect();
            for _ in 0..*smoothing {
                points = cut_corners(&points);
            }
            Ok(split_polyline(polyline_pieces(&points, rot)?))
        }
        PathGenerator::Rotation {
            position,
            orientation,
            amplitude_deg,
        } => {
            if !(*amplitude_deg > 0.0 && *amplitude_deg <= 180.0) {
                return Err(Error::InvalidArgument("rotation amplitude must be in (0, 180] degrees".into()));
            }
            let a = amplitude_deg.to_radians();
            let base = quaternion(*orientation)?;
            let position = Vector3::from(*position);
            let mut out = Vec::new();
            for axis in [Vector3::y_axis(), Vector3::z_axis()] {
                for (from, to) in [(0.0, a), (a, -a), (-a, 0.0)] {
                    out.push(vec![Piece::Turn {
                        position,
                        base,
                        axis,
                        from,
                        to,
                    }]);
                }
            }
            Ok(out)
        }
    }
}

/// Splits consecutive straight segments into groups at sharp turns.
fn split_polyline(segments: Vec<Piece>) -> Vec<Vec<Piece>> {
    let split_cos = SPLIT_TURN_DEG.to_radians().cos();
    let mut out: Vec<Vec<Piece>> = Vec::new();
    let mut prev_dir: Option<Vector3<f64>> = None;
    for seg in segments {
        let Piece::Segment { a, b, .. } = &seg else { unreachable!() };
        let dir = (b - a).normalize();
        let sharp = prev_dir.is_none_or(|d| d.dot(&dir) < split_cos);
        if sharp {
            out.push(vec![seg]);
        } else {
            out.last_mut().unwrap().push(seg);
        }
        prev_dir = Some(dir);
    }
    out
}

pub fn generate_path(gen: &PathGenerator, spacing: f64, w_rot: f64) -> Result<PathSpec> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument("spacing must be positive".into()));
    }
    let mut poses = Vec::new();
    for group in groups(gen)? {
        resample_group(&group, spacing, w_rot, &mut poses);
    }
    PathSpec::new(poses)
}

/// The default generator for `kind` with `key=value` overrides applied.
/// Values use TOML syntax, e.g. `side=0.3` or `corner=[0.7, 0.0, 0.6]`.
pub fn generator_with_overrides(kind: &str, overrides: &[(String, String)]) -> Result<PathGenerator> {
    let base = PathGenerator::default_for(kind)?;
    let mut table = toml::Table::try_from(&base).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for (key, value) in overrides {
        if key == "kind" {
            return Err(Error::InvalidArgument("`kind` is set by the positional argument".into()));
        }
        let parsed: toml::Table = format!("v = {value}").parse().map_err(|e: toml::de::Error| Error::InvalidArgument(format!("{key}: {}", e.message().trim())))?;
        table.insert(key.clone(), parsed["v"].clone());
    }
    table.try_into().map_err(|e: toml::de::Error| Error::InvalidArgument(e.message().trim().to_string()))
}
