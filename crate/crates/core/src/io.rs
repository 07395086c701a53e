//! File formats: chains, scenes and problems as TOML; trajectories, paths and
//! solve histories as CSV.
//!
//! Schema problems are reported as [`Error::Schema`] with the 1-based line of
//! the offending entry.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::explorer::{HistoryEntry, Problem};
use crate::kinematics::{solve_ik, BodySphere, Chain, FixedFrame, Joint, JointVector, Pose};
use crate::objective::{PathSpec, Trajectory};
use crate::optimizer::TormParams;
use crate::paths::{generate_path, PathGenerator, DEFAULT_SPACING};
use crate::scene::{Primitive, Scene, DEFAULT_EPSILON};

const IDENTITY_QUAT: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

fn identity_quat() -> [f64; 4] {
    IDENTITY_QUAT
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn spanned_error(origin: &Path, text: &str, span: &Range<usize>, message: impl Into<String>) -> Error {
    Error::schema(origin, line_of(text, span.start), message)
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, origin: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_of(text, s.start));
        Error::schema(origin, line, e.message().trim().to_string())
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("file structs always serialize")
}

/// Unit quaternion from `[w, x, y, z]`. Values already unit length to within
/// rounding are taken verbatim so exported files load back bit for bit.
fn unit_quaternion(q: [f64; 4]) -> std::result::Result<UnitQuaternion<f64>, String> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = raw.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(format!("quaternion {q:?} is not unit length (norm {norm})"));
    }
    Ok(if (norm - 1.0).abs() <= 1e-14 {
        UnitQuaternion::new_unchecked(raw)
    } else {
        UnitQuaternion::new_normalize(raw)
    })
}

fn quaternion_array(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

// ---------------------------------------------------------------- chains

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointEntry {
    #[serde(default)]
    origin: FixedFrame,
    axis: [f64; 3],
    lower: f64,
    upper: f64,
    velocity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereEntry {
    link: usize,
    offset: [f64; 3],
    radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    #[serde(default)]
    base: FixedFrame,
    #[serde(default)]
    tip: FixedFrame,
    joints: Vec<Spanned<JointEntry>>,
    #[serde(default)]
    spheres: Vec<Spanned<SphereEntry>>,
}

impl ChainFile {
    fn build(self, origin: &Path, text: &str) -> Result<Chain> {
        if self.joints.is_empty() {
            return Err(Error::schema(origin, 1, "chain has no joints"));
        }
        let mut joints = Vec::with_capacity(self.joints.len());
        for (i, entry) in self.joints.iter().enumerate() {
            let span = entry.span();
            let j = entry.get_ref();
            let fail = |msg: String| spanned_error(origin, text, &span, format!("joint {i}: {msg}"));
            if !(j.lower < j.upper) {
                return Err(fail(format!("lower limit {} must be below upper limit {}", j.lower, j.upper)));
            }
            if !(j.velocity > 0.0) {
                return Err(fail("velocity limit must be positive".into()));
            }
            let joint = Joint::revolute(j.origin, Vector3::from(j.axis), j.lower, j.upper, j.velocity).map_err(|e| fail(e.to_string()))?;
            joints.push(joint);
        }
        let mut spheres = Vec::with_capacity(self.spheres.len());
        for (i, entry) in self.spheres.iter().enumerate() {
            let s = entry.get_ref();
            if s.link > joints.len() {
                return Err(spanned_error(origin, text, &entry.span(), format!("sphere {i}: link {} does not exist (chain has {} links)", s.link, joints.len() + 1)));
            }
            if !(s.radius > 0.0) {
                return Err(spanned_error(origin, text, &entry.span(), format!("sphere {i}: radius must be positive")));
            }
            spheres.push(BodySphere {
                link: s.link,
                offset: Vector3::from(s.offset),
                radius: s.radius,
            });
        }
        Chain::new(self.base, joints, self.tip, spheres).map_err(|e| Error::schema(origin, 1, e.to_string()))
    }

    fn from_chain(chain: &Chain) -> Self {
        let fake = 0..0;
        ChainFile {
            base: *chain.base(),
            tip: *chain.tip(),
            joints: chain
                .joints()
                .iter()
                .map(|j| {
                    Spanned::new(
                        fake.clone(),
                        JointEntry {
                            origin: j.origin,
                            axis: [j.axis.x, j.axis.y, j.axis.z],
                            lower: j.lower,
                            upper: j.upper,
                            velocity: j.velocity_limit,
                        },
                    )
                })
                .collect(),
            spheres: chain
                .spheres()
                .iter()
                .map(|s| {
                    Spanned::new(
                        fake.clone(),
                        SphereEntry {
                            link: s.link,
                            offset: s.offset.into(),
                            radius: s.radius,
                        },
                    )
                })
                .collect(),
        }
    }
}

pub fn parse_chain(text: &str, origin: &Path) -> Result<Chain> {
    parse_toml::<ChainFile>(text, origin)?.build(origin, text)
}

pub fn load_chain(path: &Path) -> Result<Chain> {
    parse_chain(&read(path)?, path)
}

pub fn chain_to_toml(chain: &Chain) -> String {
    to_toml(&ChainFile::from_chain(chain))
}

pub fn save_chain(chain: &Chain, path: &Path) -> Result<()> {
    write(path, &chain_to_toml(chain))
}

// ---------------------------------------------------------------- scenes

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
enum ObstacleEntry {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        #[serde(default = "identity_quat")]
        orientation: [f64; 4],
    },
    HalfSpace {
        normal: [f64; 3],
        offset: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default)]
    obstacles: Vec<Spanned<ObstacleEntry>>,
}

impl Default for SceneFile {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            obstacles: Vec::new(),
        }
    }
}

impl SceneFile {
    fn build(self, origin: &Path, text: &str, at: &Range<usize>) -> Result<Scene> {
        if !(self.epsilon > 0.0) {
            return Err(spanned_error(origin, text, at, "epsilon must be positive"));
        }
        let mut obstacles = Vec::with_capacity(self.obstacles.len());
        for (i, entry) in self.obstacles.iter().enumerate() {
            let span = entry.span();
            let fail = |msg: String| spanned_error(origin, text, &span, format!("obstacle {i}: {msg}"));
            let prim = match entry.get_ref() {
                ObstacleEntry::Sphere { center, radius } => Primitive::Sphere {
                    center: Vector3::from(*center),
                    radius: *radius,
                },
                ObstacleEntry::Box {
                    center,
                    half_extents,
                    orientation,
                } => Primitive::Box {
                    center: Vector3::from(*center),
                    orientation: unit_quaternion(*orientation).map_err(&fail)?,
                    half_extents: Vector3::from(*half_extents),
                },
                ObstacleEntry::HalfSpace { normal, offset } => Primitive::HalfSpace {
                    normal: Vector3::from(*normal),
                    offset: *offset,
                },
            };
            prim.validate().map_err(|e| fail(e.to_string()))?;
            obstacles.push(prim);
        }
        Scene::new(obstacles, self.epsilon)
    }

    fn from_scene(scene: &Scene) -> Self {
        SceneFile {
            epsilon: scene.epsilon,
            obstacles: scene
                .obstacles
                .iter()
                .map(|p| {
                    let entry = match p {
                        Primitive::Sphere { center, radius } => ObstacleEntry::Sphere {
                            center: (*center).into(),
                            radius: *radius,
                        },
                        Primitive::Box {
                            center,
                            orientation,
                            half_extents,
                        } => ObstacleEntry::Box {
                            center: (*center).into(),
                            half_extents: (*half_extents).into(),
                            orientation: quaternion_array(orientation),
                        },
                        Primitive::HalfSpace { normal, offset } => ObstacleEntry::HalfSpace {
                            normal: (*normal).into(),
                            offset: *offset,
                        },
                    };
                    Spanned::new(0..0, entry)
                })
                .collect(),
        }
    }
}

pub fn parse_scene(text: &str, origin: &Path) -> Result<Scene> {
    parse_toml::<SceneFile>(text, origin)?.build(origin, text, &(0..0))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    parse_scene(&read(path)?, path)
}

pub fn scene_to_toml(scene: &Scene) -> String {
    to_toml(&SceneFile::from_scene(scene))
}

// ---------------------------------------------------------------- problems

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    /// `[x, y, z, qw, qx, qy, qz]` per waypoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poses: Option<Vec<[f64; 7]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<PathGenerator>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StartEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<Vec<f64>>,
    /// Solve IK for the first path pose from this seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ik_seed: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene_file: Option<String>,
    #[serde(default)]
    params: TormParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain: Option<Spanned<ChainFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene: Option<Spanned<SceneFile>>,
    path: Spanned<PathEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<Spanned<StartEntry>>,
}

fn pose_from_array(p: &[f64; 7]) -> std::result::Result<Pose, String> {
    Ok(Isometry3::from_parts(Translation3::new(p[0], p[1], p[2]), unit_quaternion([p[3], p[4], p[5], p[6]])?))
}

fn pose_array(p: &Pose) -> [f64; 7] {
    let t = p.translation.vector;
    let q = quaternion_array(&p.rotation);
    [t.x, t.y, t.z, q[0], q[1], q[2], q[3]]
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Problem name from the file, falling back to the file stem.
pub fn problem_name(path: &Path) -> Result<String> {
    let text = read(path)?;
    let file: ProblemFile = parse_toml(&text, path)?;
    Ok(file
        .name
        .unwrap_or_else(|| path.file_stem().map_or_else(|| "problem".to_string(), |s| s.to_string_lossy().into_owned())))
}

/// Parses a problem; relative file references resolve against `base_dir`.
pub fn parse_problem(text: &str, origin: &Path, base_dir: &Path) -> Result<Problem> {
    let file: ProblemFile = parse_toml(text, origin)?;
    file.params.validate().map_err(|e| Error::schema(origin, params_line(text), e.to_string()))?;

    let chain = match (file.chain, &file.chain_file) {
        (Some(inline), None) => inline.into_inner().build(origin, text)?,
        (None, Some(f)) => load_chain(&resolve(base_dir, f))?,
        _ => return Err(Error::schema(origin, 1, "exactly one of `chain_file` or a [chain] table is required")),
    };
    let scene = match (file.scene, &file.scene_file) {
        (Some(inline), None) => {
            let span = inline.span();
            inline.into_inner().build(origin, text, &span)?
        }
        (None, Some(f)) => load_scene(&resolve(base_dir, f))?,
        (None, None) => Scene::default(),
        _ => return Err(Error::schema(origin, 1, "give either `scene_file` or a [scene] table, not both")),
    };

    let path_span = file.path.span();
    let entry = file.path.into_inner();
    let path_err = |msg: String| spanned_error(origin, text, &path_span, msg);
    let sources = entry.file.is_some() as u8 + entry.poses.is_some() as u8 + entry.generator.is_some() as u8;
    if sources != 1 {
        return Err(path_err("[path] needs exactly one of `file`, `poses` or `generator`".into()));
    }
    let path = if let Some(poses) = &entry.poses {
        let poses = poses.iter().enumerate().map(|(i, p)| pose_from_array(p).map_err(|m| format!("pose {i}: {m}"))).collect::<std::result::Result<Vec<_>, _>>().map_err(path_err)?;
        PathSpec::new(poses).map_err(|e| path_err(e.to_string()))?
    } else if let Some(f) = &entry.file {
        load_path_csv(&resolve(base_dir, f))?
    } else {
        let gen = entry.generator.as_ref().unwrap();
        generate_path(gen, entry.spacing.unwrap_or(DEFAULT_SPACING), file.params.w_rot).map_err(|e| path_err(e.to_string()))?
    };

    let start = match file.start {
        None => None,
        Some(s) => {
            let span = s.span();
            let fail = |msg: String| spanned_error(origin, text, &span, msg);
            let s = s.into_inner();
            match (s.config, s.ik_seed) {
                (Some(q), None) => Some(JointVector::from_vec(q)),
                (None, Some(seed)) => {
                    let seed = JointVector::from_vec(seed);
                    let report = solve_ik(&chain, &path.poses[0], &seed, &file.params.ik, file.params.w_rot).map_err(|e| fail(e.to_string()))?;
                    if !report.converged {
                        return Err(fail(format!("IK from the given seed did not reach the first pose (residual {:.3e})", report.residual_norm)));
                    }
                    Some(report.config)
                }
                _ => return Err(fail("[start] needs exactly one of `config` or `ik_seed`".into())),
            }
        }
    };
    Problem::new(chain, scene, path, start, file.params).map_err(|e| Error::schema(origin, 1, e.to_string()))
}

fn params_line(text: &str) -> usize {
    text.lines().position(|l| l.trim_start().starts_with("[params]")).map_or(1, |i| i + 1)
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_problem(&read(path)?, path, base)
}

/// Self-contained problem file: chain, scene, explicit poses and start.
pub fn problem_to_toml(problem: &Problem) -> String {
    let file = ProblemFile {
        name: None,
        chain_file: None,
        scene_file: None,
        params: problem.params.clone(),
        chain: Some(Spanned::new(0..0, ChainFile::from_chain(&problem.chain))),
        scene: Some(Spanned::new(0..0, SceneFile::from_scene(&problem.scene))),
        path: Spanned::new(
            0..0,
            PathEntry {
                spacing: None,
                file: None,
                poses: Some(problem.path.poses.iter().map(pose_array).collect()),
                generator: None,
            },
        ),
        start: problem.start.as_ref().map(|q| {
            Spanned::new(
                0..0,
                StartEntry {
                    config: Some(q.iter().cloned().collect()),
                    ik_seed: None,
                },
            )
        }),
    };
    to_toml(&file)
}

pub fn save_problem(problem: &Problem, path: &Path) -> Result<()> {
    write(path, &problem_to_toml(problem))
}

/// Effective solver parameters as a `[params]`-ready TOML body.
pub fn params_to_toml(params: &TormParams) -> String {
    to_toml(params)
}

// ---------------------------------------------------------------- CSV

fn csv_error(origin: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(1, |p| p.line() as usize);
    Error::schema(origin, line, e.to_string())
}

fn parse_rows(text: &str, origin: &Path, expected_header: &dyn Fn(usize) -> Option<String>) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(origin, e))?.clone();
    let columns = header.len();
    for (i, name) in header.iter().enumerate() {
        if let Some(want) = expected_header(i) {
            if name.trim() != want {
                return Err(Error::schema(origin, 1, format!("column {i} should be `{want}`, found `{name}`")));
            }
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != columns {
            return Err(Error::schema(origin, line, format!("expected {columns} fields, found {}", record.len())));
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, f)| f.trim().parse::<f64>().map_err(|_| Error::schema(origin, line, format!("column `{}`: `{f}` is not a number", &header[c]))))
            .collect::<Result<Vec<f64>>>()?;
        if values[0] != rows.len() as f64 {
            return Err(Error::schema(origin, line, format!("expected index {}, found {}", rows.len(), values[0])));
        }
        rows.push((line, values));
    }
    Ok(rows)
}

/// Header `index,time,q0..`, one row per waypoint, `time = index * dt`.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let mut out = String::from("index,time");
    for j in 0..traj.dof() {
        write!(out, ",q{j}").unwrap();
    }
    out.push('\n');
    for (i, q) in traj.configs.iter().enumerate() {
        write!(out, "{i},{}", i as f64 * traj.dt).unwrap();
        for v in q.iter() {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_trajectory(text: &str, origin: &Path) -> Result<Trajectory> {
    let header = |i: usize| match i {
        0 => Some("index".to_string()),
        1 => Some("time".to_string()),
        j => Some(format!("q{}", j - 2)),
    };
    let rows = parse_rows(text, origin, &header)?;
    if rows.len() < 2 {
        return Err(Error::schema(origin, 1, "a trajectory needs at least two rows"));
    }
    if rows[0].1.len() < 3 {
        return Err(Error::schema(origin, 1, "no joint columns"));
    }
    let dt = rows[1].1[1];
    if !(dt > 0.0) {
        return Err(Error::schema(origin, rows[1].0, "time must increase"));
    }
    for (line, values) in &rows {
        let expected = values[0] * dt;
        if (values[1] - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::schema(origin, *line, format!("time {} does not match index * dt = {expected}", values[1])));
        }
    }
    let configs = rows.into_iter().map(|(_, v)| JointVector::from_row_slice(&v[2..])).collect();
    Trajectory::new(configs, dt)
}

pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    write(path, &trajectory_to_csv(traj))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory(&read(path)?, path)
}

const PATH_COLUMNS: [&str; 8] = ["index", "x", "y", "z", "qw", "qx", "qy", "qz"];

pub fn path_to_csv(path: &PathSpec) -> String {
    let mut out = PATH_COLUMNS.join(",");
    out.push('\n');
    for (i, p) in path.poses.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for v in pose_array(p) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_path_csv(text: &str, origin: &Path) -> Result<PathSpec> {
    let header = |i: usize| PATH_COLUMNS.get(i).map(|s| s.to_string());
    let rows = parse_rows(text, origin, &header)?;
    let mut poses = Vec::with_capacity(rows.len());
    for (line, v) in &rows {
        if v.len() != PATH_COLUMNS.len() {
            return Err(Error::schema(origin, *line, format!("expected {} columns", PATH_COLUMNS.len())));
        }
        let arr = [v[1], v[2], v[3], v[4], v[5], v[6], v[7]];
        poses.push(pose_from_array(&arr).map_err(|m| Error::schema(origin, *line, m))?);
    }
    PathSpec::new(poses).map_err(|e| Error::schema(origin, 1, e.to_string()))
}

pub fn save_path_csv(path: &PathSpec, file: &Path) -> Result<()> {
    write(file, &path_to_csv(path))
}

pub fn load_path_csv(file: &Path) -> Result<PathSpec> {
    parse_path_csv(&read(file)?, file)
}

pub fn history_to_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from("time,cost,pose_error\n");
    for h in history {
        writeln!(out, "{},{},{}", h.time, h.cost, h.pose_error).unwrap();
    }
    out
}

pub fn save_history(history: &[HistoryEntry], path: &Path) -> Result<()> {
    write(path, &history_to_csv(history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robots;

    #[test]
    fn chain_round_trip() {
        for chain in [robots::planar3(), robots::fetch_like()] {
            let text = chain_to_toml(&chain);
            assert_eq!(parse_chain(&text, Path::new("c.toml")).unwrap(), chain);
        }
    }

    #[test]
    fn chain_errors_name_the_line() {
        let text = "[[joints]]\naxis = [0, 0, 1]\nlower = -1\nupper = 1\nvelocity = 1\n\n[[joints]]\naxis = [0, 0, 2]\nlower = -1\nupper = 1\nvelocity = 1\n";
        let err = parse_chain(text, Path::new("bad.toml")).unwrap_err();
        match err {
            Error::Schema { line, message, .. } => {
                assert!((7..=11).contains(&line), "line {line}");
                assert!(message.contains("joint 1"), "{message}");
            }
            other => panic!("{other}"),
        }
        let err = parse_chain("[[joints]]\naxis = [0, 0, 1]\nlower = -1\nupper = 1\nvelocity = 1\nspeed = 3\n", Path::new("bad.toml")).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 6, .. }), "{err}");
    }

    #[test]
    fn trajectory_csv_shape() {
        let traj = Trajectory::new(vec![JointVector::from_vec(vec![0.1, 0.2, 0.3]); 3], 0.1).unwrap();
        let text = trajectory_to_csv(&traj);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
        assert_eq!(parse_trajectory(&text, Path::new("t.csv")).unwrap(), traj);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = "index,time,q0\n0,0,0.1\n1,0.1,abc\n";
        let err = parse_trajectory(text, Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 3, .. }), "{err}");
        assert!(err.to_string().starts_with("t.csv:3:"));
    }
}
