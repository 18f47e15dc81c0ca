use super::rotation::{rot6d_to_matrix, Rotation6D, Vec3};
use super::{JOINT_COUNT, POSE_DIM};
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// One frame: root translation followed by 24 joint rotations, 147 values when
/// flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseVector<S> {
    pub root_translation: Vec3<S>,
    pub joint_rotations: [Rotation6D<S>; JOINT_COUNT],
}

impl<S: Scalar> PoseVector<S> {
    pub fn rest() -> Self {
        PoseVector { root_translation: [S::zero(); 3], joint_rotations: [Rotation6D::identity(); JOINT_COUNT] }
    }

    pub fn decode(v: &[S]) -> Result<Self> {
        if v.len() != POSE_DIM {
            return Err(Error::shape("PoseVector::decode", POSE_DIM, v.len()));
        }
        let mut joint_rotations = [Rotation6D::identity(); JOINT_COUNT];
        for (j, r) in joint_rotations.iter_mut().enumerate() {
            *r = Rotation6D::from_slice(&v[3 + 6 * j..9 + 6 * j]);
        }
        Ok(PoseVector { root_translation: [v[0], v[1], v[2]], joint_rotations })
    }

    pub fn encode(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(POSE_DIM);
        out.extend_from_slice(&self.root_translation);
        for r in &self.joint_rotations {
            out.extend_from_slice(&r.0);
        }
        out
    }

    /// Replaces every rotation by the orthonormal columns it decodes to.
    pub fn orthonormalized(&self) -> Result<Self> {
        self.validate()?;
        let mut out = self.clone();
        for r in out.joint_rotations.iter_mut() {
            let m = rot6d_to_matrix(r)?;
            *r = Rotation6D([m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]]);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.root_translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("root translation".into()));
        }
        for (j, r) in self.joint_rotations.iter().enumerate() {
            rot6d_to_matrix(r).map_err(|e| match e {
                Error::DegenerateRotation { detail, .. } => Error::DegenerateRotation { joint: Some(j), detail },
                other => other,
            })?;
        }
        Ok(())
    }
}

/// A clip of poses at a fixed frame rate, stored as an `N × 147` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence<S> {
    frames: Matrix<S>,
    fps: f64,
    pub clip_id: String,
}

impl<S: Scalar> MotionSequence<S> {
    pub fn new(frames: Matrix<S>, fps: f64, clip_id: impl Into<String>) -> Result<Self> {
        if frames.cols() != POSE_DIM {
            return Err(Error::shape("MotionSequence", POSE_DIM, frames.cols()));
        }
        if frames.rows() == 0 {
            return Err(Error::Invalid("motion sequence needs at least one frame".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
        }
        Ok(MotionSequence { frames, fps, clip_id: clip_id.into() })
    }

    /// Like [`MotionSequence::new`] but additionally decodes every frame.
    pub fn new_validated(frames: Matrix<S>, fps: f64, clip_id: impl Into<String>) -> Result<Self> {
        let m = Self::new(frames, fps, clip_id)?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_poses(poses: &[PoseVector<S>], fps: f64, clip_id: impl Into<String>) -> Result<Self> {
        let rows: Vec<Vec<S>> = poses.iter().map(PoseVector::encode).collect();
        Self::new(Matrix::from_rows(&rows)?, fps, clip_id)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.frames.rows() {
            self.pose(i)?.validate()?;
        }
        Ok(())
    }

    /// Decodes every frame and re-encodes it with orthonormal rotation columns.
    pub fn orthonormalized(&self) -> Result<Self> {
        let mut frames = self.frames.clone();
        for i in 0..frames.rows() {
            let p = self.pose(i)?.orthonormalized().map_err(|e| match e {
                Error::DegenerateRotation { joint, detail } => {
                    Error::DegenerateRotation { joint, detail: format!("frame {i}: {detail}") }
                }
                other => other,
            })?;
            frames.row_mut(i).copy_from_slice(&p.encode());
        }
        Ok(MotionSequence { frames, fps: self.fps, clip_id: self.clip_id.clone() })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.rows()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frame_count() as f64 / self.fps
    }

    pub fn frames(&self) -> &Matrix<S> {
        &self.frames
    }

    pub fn into_frames(self) -> Matrix<S> {
        self.frames
    }

    pub fn pose(&self, i: usize) -> Result<PoseVector<S>> {
        PoseVector::decode(self.frames.row(i))
    }

    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frame_count() || len == 0 {
            return Err(Error::Invalid(format!(
                "window [{start}, {}) outside clip of {} frames",
                start + len,
                self.frame_count()
            )));
        }
        Self::new(self.frames.slice_rows(start..start + len), self.fps, format!("{}@{start}", self.clip_id))
    }

    pub fn cast<T: Scalar>(&self) -> MotionSequence<T> {
        MotionSequence { frames: self.frames.cast(), fps: self.fps, clip_id: self.clip_id.clone() }
    }
}
