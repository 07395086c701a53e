//! Independent oracles for the integration tests. Nothing here calls into the
//! crate's kinematics; transforms are composed with plain 4x4 arrays.
#![allow(dead_code)]

use nalgebra::{DVector, Vector3};
use rand::Rng;
use torm::kinematics::{Chain, FixedFrame, JointVector};

pub type Mat4 = [[f64; 4]; 4];

fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn rot_x(a: f64) -> Mat4 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn rot_y(a: f64) -> Mat4 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0], [-s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn rot_z(a: f64) -> Mat4 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

/// Rodrigues rotation about a unit axis.
fn rot_axis(axis: &Vector3<f64>, angle: f64) -> Mat4 {
    let (s, c) = angle.sin_cos();
    let (x, y, z) = (axis.x, axis.y, axis.z);
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y, 0.0],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x, 0.0],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn frame(f: &FixedFrame) -> Mat4 {
    let mut m = mul(&mul(&rot_z(f.rpy[2]), &rot_y(f.rpy[1])), &rot_x(f.rpy[0]));
    m[0][3] = f.xyz[0];
    m[1][3] = f.xyz[1];
    m[2][3] = f.xyz[2];
    m
}

/// Link frames (link 0 = base) followed by the end-effector frame.
pub fn oracle_frames(chain: &Chain, q: &JointVector) -> (Vec<Mat4>, Mat4) {
    let mut t = frame(chain.base());
    let mut frames = vec![t];
    for (j, joint) in chain.joints().iter().enumerate() {
        t = mul(&mul(&t, &frame(&joint.origin)), &rot_axis(&joint.axis, q[j]));
        frames.push(t);
    }
    let ee = mul(&t, &frame(chain.tip()));
    (frames, ee)
}

pub fn oracle_position(chain: &Chain, q: &JointVector) -> Vector3<f64> {
    let (_, ee) = oracle_frames(chain, q);
    Vector3::new(ee[0][3], ee[1][3], ee[2][3])
}

pub fn oracle_point(chain: &Chain, q: &JointVector, sphere: usize) -> Vector3<f64> {
    let (frames, _) = oracle_frames(chain, q);
    let s = &chain.spheres()[sphere];
    let m = &frames[s.link];
    Vector3::from_fn(|r, _| m[r][0] * s.offset.x + m[r][1] * s.offset.y + m[r][2] * s.offset.z + m[r][3])
}

/// Central difference gradient of a scalar function.
pub fn central_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let hi = f(&probe);
        probe[i] = orig - h;
        let lo = f(&probe);
        probe[i] = orig;
        g[i] = (hi - lo) / (2.0 * h);
    }
    g
}

/// Central difference Jacobian column `j` of a 3-vector valued function.
pub fn central_column(f: impl Fn(&DVector<f64>) -> Vector3<f64>, x: &DVector<f64>, j: usize, h: f64) -> Vector3<f64> {
    let mut probe = x.clone();
    probe[j] += h;
    let hi = f(&probe);
    probe[j] -= 2.0 * h;
    let lo = f(&probe);
    (hi - lo) / (2.0 * h)
}

pub fn random_in_limits<R: Rng>(chain: &Chain, rng: &mut R) -> JointVector {
    JointVector::from_iterator(chain.dof(), chain.joints().iter().map(|j| rng.gen_range(j.lower..j.upper)))
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn oracle_rotation(chain: &Chain, q: &JointVector) -> nalgebra::Matrix3<f64> {
    let (_, ee) = oracle_frames(chain, q);
    nalgebra::Matrix3::from_fn(|r, c| ee[r][c])
}

/// Rotation vector of `r` from the trace / skew-part formula (angles below pi).
pub fn rotation_log(r: &nalgebra::Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if angle < 1e-12 {
        return 0.5 * skew;
    }
    skew * (angle / (2.0 * angle.sin()))
}
