//! 24-joint skeleton, 6D rotations, pose encoding and forward kinematics.

pub(crate) mod fk;
mod pose;
pub mod rotation;

use std::fmt::Write as _;
use std::path::Path;

pub use fk::{fk_row, forward_kinematics, forward_kinematics_vjp, motion_positions, JointPositions};
pub use pose::{MotionSequence, PoseVector};
pub use rotation::{matrix_to_rot6d, rot6d_to_matrix, Mat3, Rotation6D, Vec3};

use crate::scalar::Scalar;
use crate::{Error, Result};

pub const JOINT_COUNT: usize = 24;
pub const POSE_DIM: usize = 3 + JOINT_COUNT * 6;
pub const SKELETON_FILE_VERSION: u32 = 1;

const CANONICAL: &str = include_str!("../../data/smpl24.skel");

/// Joint indices in SMPL order.
pub mod joint {
    pub const PELVIS: usize = 0;
    pub const LEFT_HIP: usize = 1;
    pub const RIGHT_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const LEFT_KNEE: usize = 4;
    pub const RIGHT_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const LEFT_ANKLE: usize = 7;
    pub const RIGHT_ANKLE: usize = 8;
    pub const SPINE3: usize = 9;
    pub const LEFT_FOOT: usize = 10;
    pub const RIGHT_FOOT: usize = 11;
    pub const NECK: usize = 12;
    pub const LEFT_COLLAR: usize = 13;
    pub const RIGHT_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const LEFT_SHOULDER: usize = 16;
    pub const RIGHT_SHOULDER: usize = 17;
    pub const LEFT_ELBOW: usize = 18;
    pub const RIGHT_ELBOW: usize = 19;
    pub const LEFT_WRIST: usize = 20;
    pub const RIGHT_WRIST: usize = 21;
    pub const LEFT_HAND: usize = 22;
    pub const RIGHT_HAND: usize = 23;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton<S> {
    names: Vec<String>,
    /// `None` for the root.
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<Vec3<S>>,
}

impl<S: Scalar> Skeleton<S> {
    /// Validates the tree: 24 joints, root first, every parent precedes its child,
    /// finite offsets and positive-length bones.
    pub fn new(names: Vec<String>, parents: Vec<Option<usize>>, rest_offsets: Vec<Vec3<S>>) -> Result<Self> {
        if parents.len() != JOINT_COUNT || rest_offsets.len() != JOINT_COUNT || names.len() != JOINT_COUNT {
            return Err(Error::UnsupportedSkeleton { joint_count: parents.len() });
        }
        for (i, p) in parents.iter().enumerate() {
            match (i, p) {
                (0, None) => {}
                (0, Some(_)) => return Err(Error::Invalid("joint 0 must be the root".into())),
                (_, None) => return Err(Error::Invalid(format!("joint {i} has no parent; only one root allowed"))),
                (_, Some(p)) if *p >= i => {
                    return Err(Error::Invalid(format!("joint {i} has parent {p}; parents must precede children")))
                }
                _ => {}
            }
        }
        for (i, o) in rest_offsets.iter().enumerate() {
            if o.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("rest offset of joint {i}")));
            }
            if i > 0 && rotation::norm(o) <= S::zero() {
                return Err(Error::Invalid(format!("joint {i} has a zero-length bone")));
            }
        }
        Ok(Skeleton { names, parents, rest_offsets })
    }

    /// The bundled 24-joint skeleton with approximate adult proportions.
    pub fn canonical() -> Self {
        Self::parse(CANONICAL).expect("bundled skeleton definition is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut parents = Vec::new();
        let mut offsets = Vec::new();
        let mut version = None;
        let mut offset = 0u64;
        for line in text.lines() {
            let line_start = offset;
            offset += line.len() as u64 + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { what: "skeleton", offset: line_start, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "version" {
                let v: u32 = fields.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| err("bad version line".into()))?;
                if v != SKELETON_FILE_VERSION {
                    return Err(err(format!("unsupported version {v}")));
                }
                version = Some(v);
                continue;
            }
            if version.is_none() {
                return Err(err("missing version line".into()));
            }
            if fields.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", fields.len())));
            }
            let index: usize = fields[0].parse().map_err(|_| err(format!("bad index {:?}", fields[0])))?;
            if index != names.len() {
                return Err(err(format!("joint index {index} out of order")));
            }
            let parent: i64 = fields[2].parse().map_err(|_| err(format!("bad parent {:?}", fields[2])))?;
            let mut o = [S::zero(); 3];
            for (k, v) in o.iter_mut().enumerate() {
                let x: f64 = fields[3 + k].parse().map_err(|_| err(format!("bad offset {:?}", fields[3 + k])))?;
                *v = S::of(x);
            }
            names.push(fields[1].to_string());
            parents.push(if parent < 0 { None } else { Some(parent as usize) });
            offsets.push(o);
        }
        Self::new(names, parents, offsets)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# lm2d skeleton definition\n");
        let _ = writeln!(out, "version {SKELETON_FILE_VERSION}");
        for i in 0..JOINT_COUNT {
            let p = self.parents[i].map_or(-1, |p| p as i64);
            let o = self.rest_offsets[i];
            let _ = writeln!(out, "{i} {} {p} {} {} {}", self.names[i], o[0], o[1], o[2]);
        }
        out
    }

    pub fn joint_count(&self) -> usize {
        JOINT_COUNT
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn name(&self, joint: usize) -> &str {
        &self.names[joint]
    }

    pub fn rest_offset(&self, joint: usize) -> Vec3<S> {
        self.rest_offsets[joint]
    }

    pub fn cast<T: Scalar>(&self) -> Skeleton<T> {
        Skeleton {
            names: self.names.clone(),
            parents: self.parents.clone(),
            rest_offsets: self.rest_offsets.iter().map(|o| o.map(|v| T::of(v.to_f64_lossy()))).collect(),
        }
    }

    /// A straight chain: joint `j` hangs off `j - 1` with the given offset.
    pub fn chain(offset: Vec3<S>) -> Result<Self> {
        let names = (0..JOINT_COUNT).map(|i| format!("j{i}")).collect();
        let parents = (0..JOINT_COUNT).map(|i| i.checked_sub(1)).collect();
        let mut offsets = vec![offset; JOINT_COUNT];
        offsets[0] = [S::zero(); 3];
        Self::new(names, parents, offsets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_skeleton_round_trips_through_text() {
        let s: Skeleton<f64> = Skeleton::canonical();
        assert_eq!(s.name(joint::HEAD), "head");
        assert_eq!(s.parent(joint::LEFT_WRIST), Some(joint::LEFT_ELBOW));
        let back = Skeleton::<f64>::parse(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_definitions() {
        assert!(Skeleton::<f64>::parse("0 root -1 0 0 0\n").is_err(), "missing version");
        let mut text = CANONICAL.to_string();
        text = text.replace("23 right_hand 21", "23 right_hand 23");
        assert!(Skeleton::<f64>::parse(&text).is_err());
        let short: String = CANONICAL.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Skeleton::<f64>::parse(&short), Err(Error::UnsupportedSkeleton { .. })));
        let zero_bone = CANONICAL.replace("5 right_knee 2 -0.040 -0.380 0.000", "5 right_knee 2 0 0 0");
        assert!(Skeleton::<f64>::parse(&zero_bone).is_err());
    }
}
