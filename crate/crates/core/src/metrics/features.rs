//! Hand-crafted motion descriptors for distribution metrics.

use crate::scalar::Scalar;
use crate::skeleton::rotation::{dot, norm, rot6d_to_matrix, sub3, Rotation6D, Vec3};
use crate::skeleton::{joint, motion_positions, MotionSequence, Skeleton, JOINT_COUNT};
use crate::{Error, Result};

pub const KINETIC_DIM: usize = 3 * JOINT_COUNT;
pub const GEOMETRIC_DIM: usize = 16;

/// Per joint, in three blocks of 24: mean speed (m/s), mean acceleration
/// magnitude (m/s^2), mean squared speed.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticFeatures(pub [f64; KINETIC_DIM]);

/// Fraction of frames on which each predicate in [`GEOMETRIC_PREDICATES`] holds.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricFeatures(pub [f64; GEOMETRIC_DIM]);

pub const GEOMETRIC_PREDICATES: [&str; GEOMETRIC_DIM] = [
    "left wrist above head",
    "right wrist above head",
    "left wrist above left shoulder",
    "right wrist above right shoulder",
    "wrists closer than 0.3 m",
    "left wrist in front of pelvis plane",
    "right wrist in front of pelvis plane",
    "left foot in front of pelvis plane",
    "right foot in front of pelvis plane",
    "left ankle 5 cm above right ankle",
    "right ankle 5 cm above left ankle",
    "left knee bent under 150 degrees",
    "right knee bent under 150 degrees",
    "left elbow bent under 150 degrees",
    "right elbow bent under 150 degrees",
    "ankles farther apart than 0.4 m",
];

fn positions<S: Scalar>(motion: &MotionSequence<S>, skeleton: &Skeleton<S>) -> Result<Vec<[Vec3<f64>; JOINT_COUNT]>> {
    let p = motion_positions(&skeleton.cast::<f64>(), &motion.frames().cast::<f64>())?;
    Ok((0..p.rows())
        .map(|i| std::array::from_fn(|j| [p.get(i, 3 * j), p.get(i, 3 * j + 1), p.get(i, 3 * j + 2)]))
        .collect())
}

/// Central differences of FK positions over frames `1..N-1`.
pub fn kinetic_features<S: Scalar>(motion: &MotionSequence<S>, skeleton: &Skeleton<S>) -> Result<KineticFeatures> {
    let n = motion.frame_count();
    if n < 3 {
        return Err(Error::Invalid(format!("kinetic features need at least 3 frames, got {n}")));
    }
    let fps = motion.fps();
    let p = positions(motion, skeleton)?;
    let mut out = [0.0; KINETIC_DIM];
    for i in 1..n - 1 {
        for j in 0..JOINT_COUNT {
            let (a, b, c) = (p[i - 1][j], p[i][j], p[i + 1][j]);
            let v: Vec3<f64> = std::array::from_fn(|k| (c[k] - a[k]) * fps / 2.0);
            let acc: Vec3<f64> = std::array::from_fn(|k| (c[k] - 2.0 * b[k] + a[k]) * fps * fps);
            let speed = norm(&v);
            out[j] += speed;
            out[JOINT_COUNT + j] += norm(&acc);
            out[2 * JOINT_COUNT + j] += speed * speed;
        }
    }
    let inv = 1.0 / (n - 2) as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("kinetic features of clip {}", motion.clip_id)));
    }
    Ok(KineticFeatures(out))
}

fn bend_angle(a: &Vec3<f64>, mid: &Vec3<f64>, b: &Vec3<f64>) -> f64 {
    let (u, v) = (sub3(a, mid), sub3(b, mid));
    let d = norm(&u) * norm(&v);
    if d == 0.0 {
        return std::f64::consts::PI;
    }
    (dot(&u, &v) / d).clamp(-1.0, 1.0).acos()
}

fn predicates(p: &[Vec3<f64>; JOINT_COUNT], forward: &Vec3<f64>) -> [bool; GEOMETRIC_DIM] {
    use joint::*;
    let y = |j: usize| p[j][1];
    let dist = |a: usize, b: usize| norm(&sub3(&p[a], &p[b]));
    let ahead = |j: usize| dot(&sub3(&p[j], &p[PELVIS]), forward) > 0.0;
    let bent = |a: usize, m: usize, b: usize| bend_angle(&p[a], &p[m], &p[b]) < 150f64.to_radians();
    [
        y(LEFT_WRIST) > y(HEAD),
        y(RIGHT_WRIST) > y(HEAD),
        y(LEFT_WRIST) > y(LEFT_SHOULDER),
        y(RIGHT_WRIST) > y(RIGHT_SHOULDER),
        dist(LEFT_WRIST, RIGHT_WRIST) < 0.3,
        ahead(LEFT_WRIST),
        ahead(RIGHT_WRIST),
        ahead(LEFT_FOOT),
        ahead(RIGHT_FOOT),
        y(LEFT_ANKLE) > y(RIGHT_ANKLE) + 0.05,
        y(RIGHT_ANKLE) > y(LEFT_ANKLE) + 0.05,
        bent(LEFT_HIP, LEFT_KNEE, LEFT_ANKLE),
        bent(RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE),
        bent(LEFT_SHOULDER, LEFT_ELBOW, LEFT_WRIST),
        bent(RIGHT_SHOULDER, RIGHT_ELBOW, RIGHT_WRIST),
        dist(LEFT_ANKLE, RIGHT_ANKLE) > 0.4,
    ]
}

/// The pelvis plane passes through the pelvis and faces the pelvis' +z axis.
pub fn geometric_features<S: Scalar>(motion: &MotionSequence<S>, skeleton: &Skeleton<S>) -> Result<GeometricFeatures> {
    let p = positions(motion, skeleton)?;
    let mut out = [0.0; GEOMETRIC_DIM];
    for (i, frame) in p.iter().enumerate() {
        let row = motion.frames().row(i);
        let r = Rotation6D(std::array::from_fn(|k| row[3 + k].to_f64_lossy()));
        let m = rot6d_to_matrix(&r)?;
        let forward = [m[0][2], m[1][2], m[2][2]];
        for (acc, hold) in out.iter_mut().zip(predicates(frame, &forward)) {
            if hold {
                *acc += 1.0;
            }
        }
    }
    let inv = 1.0 / p.len() as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    Ok(GeometricFeatures(out))
}
