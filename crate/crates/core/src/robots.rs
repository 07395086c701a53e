//! Built-in example chains. The files under `data/` are exported from these.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::kinematics::{BodySphere, Chain, FixedFrame, Joint};

/// Planar chain in the x-y plane, every joint about +z, links along +x.
///
/// Each link carries spheres at a quarter, half and the full link length,
/// with radius a tenth of the shortest link.
pub fn planar(link_lengths: &[f64]) -> Chain {
    let shortest = link_lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    let radius = 0.1 * shortest;
    let mut joints = Vec::with_capacity(link_lengths.len());
    let mut spheres = Vec::new();
    let mut offset = 0.0;
    for (i, &len) in link_lengths.iter().enumerate() {
        joints.push(Joint::revolute(FixedFrame::translation([offset, 0.0, 0.0]), Vector3::z(), -PI, PI, 2.0).unwrap());
        for frac in [0.25, 0.5, 0.75, 1.0] {
            spheres.push(BodySphere {
                link: i + 1,
                offset: Vector3::new(frac * len, 0.0, 0.0),
                radius,
            });
        }
        offset = len;
    }
    Chain::new(FixedFrame::default(), joints, FixedFrame::translation([offset, 0.0, 0.0]), spheres).unwrap()
}

/// Desk-scale planar arm used by the line-tracing benchmarks.
pub fn planar3() -> Chain {
    planar(&[0.4, 0.3, 0.2])
}

/// 7-DoF arm with the joint layout and approximate link offsets of a Fetch
/// manipulator (torso fixed, shoulder at 0.79 m).
pub fn fetch_like() -> Chain {
    // (origin x, origin z, axis, lower, upper, velocity)
    let x = Vector3::x();
    let y = Vector3::y();
    let z = Vector3::z();
    let spec: [(f64, f64, Vector3<f64>, f64, f64, f64); 7] = [
        (0.12, 0.73, z, -1.6056, 1.6056, 1.256),
        (0.117, 0.06, y, -1.221, 1.518, 1.454),
        (0.219, 0.0, x, -PI, PI, 1.571),
        (0.133, 0.0, y, -2.251, 2.251, 1.521),
        (0.197, 0.0, x, -PI, PI, 1.571),
        (0.1245, 0.0, y, -2.16, 2.16, 2.268),
        (0.1385, 0.0, x, -PI, PI, 2.268),
    ];
    let joints = spec
        .iter()
        .map(|&(ox, oz, axis, lo, hi, vel)| Joint::revolute(FixedFrame::translation([ox, 0.0, oz]), axis, lo, hi, vel).unwrap())
        .collect();
    let sphere = |link, x: f64, z: f64, radius| BodySphere {
        link,
        offset: Vector3::new(x, 0.0, z),
        radius,
    };
    let spheres = vec![
        sphere(1, 0.06, 0.03, 0.07),
        sphere(2, 0.1, 0.0, 0.06),
        sphere(3, 0.0, 0.0, 0.06),
        sphere(3, 0.07, 0.0, 0.055),
        sphere(4, 0.0, 0.0, 0.055),
        sphere(4, 0.1, 0.0, 0.05),
        sphere(5, 0.0, 0.0, 0.05),
        sphere(5, 0.06, 0.0, 0.05),
        sphere(6, 0.0, 0.0, 0.05),
        sphere(6, 0.07, 0.0, 0.045),
        sphere(7, 0.05, 0.0, 0.045),
        sphere(7, 0.12, 0.0, 0.04),
    ];
    Chain::new(FixedFrame::default(), joints, FixedFrame::translation([0.16645, 0.0, 0.0]), spheres).unwrap()
}
