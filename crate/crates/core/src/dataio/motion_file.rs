use std::path::Path;

use crate::scalar::Scalar;
use crate::skeleton::{MotionSequence, JOINT_COUNT, POSE_DIM};
use crate::tensor::Matrix;
use crate::{Error, Result};

pub const MOTION_MAGIC: &[u8; 4] = b"MSQ1";
pub const MOTION_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

/// `MSQ1`, u16 version, f32 fps, u16 joint count, u32 frame count, then the
/// frames as little-endian f32, 147 per frame.
pub fn motion_to_bytes<S: Scalar>(motion: &MotionSequence<S>) -> Vec<u8> {
    let frames = motion.frames();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * frames.len());
    out.extend_from_slice(MOTION_MAGIC);
    out.extend_from_slice(&MOTION_VERSION.to_le_bytes());
    out.extend_from_slice(&(motion.fps() as f32).to_le_bytes());
    out.extend_from_slice(&(JOINT_COUNT as u16).to_le_bytes());
    out.extend_from_slice(&(frames.rows() as u32).to_le_bytes());
    for v in frames.data() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

pub fn motion_from_bytes<S: Scalar>(bytes: &[u8], clip_id: &str) -> Result<MotionSequence<S>> {
    let err = |offset: usize, message: String| Error::Parse { what: "motion file", offset: offset as u64, message };
    if bytes.len() < HEADER_LEN {
        return Err(err(bytes.len(), format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if &bytes[..4] != MOTION_MAGIC {
        return Err(err(0, "bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MOTION_VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let fps = f32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as f64;
    let joints = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    if joints != JOINT_COUNT {
        return Err(Error::UnsupportedSkeleton { joint_count: joints });
    }
    let frames = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expected = HEADER_LEN + 4 * frames * POSE_DIM;
    if bytes.len() != expected {
        return Err(err(
            bytes.len().min(expected),
            format!("expected {expected} bytes for {frames} frames, file has {}", bytes.len()),
        ));
    }
    let data: Vec<S> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| S::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(err(HEADER_LEN + 4 * i, "non-finite value".into()));
    }
    MotionSequence::new(Matrix::from_vec(frames, POSE_DIM, data)?, fps, clip_id).map_err(|e| err(6, e.to_string()))
}

pub fn save_motion<S: Scalar>(motion: &MotionSequence<S>, path: &Path) -> Result<()> {
    std::fs::write(path, motion_to_bytes(motion)).map_err(|e| Error::io(path, e))
}

/// The clip id is taken from the file stem.
pub fn load_motion<S: Scalar>(path: &Path) -> Result<MotionSequence<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    motion_from_bytes(&bytes, &id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_motion(n: usize) -> MotionSequence<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        MotionSequence::new(Matrix::from_fn(n, POSE_DIM, |_, _| rng.random_range(-1.0..1.0)), 60.0, "m").unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = random_motion(7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.msq");
        save_motion(&m, &path).unwrap();
        let back: MotionSequence<f32> = load_motion(&path).unwrap();
        assert_eq!(back, m);
        assert!(back.frames().data().iter().zip(m.frames().data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncation_names_lengths() {
        let bytes = motion_to_bytes(&random_motion(3));
        match motion_from_bytes::<f32>(&bytes[..bytes.len() - 5], "x") {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains(&bytes.len().to_string()), "{message}");
                assert!(message.contains(&(bytes.len() - 5).to_string()), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(motion_from_bytes::<f32>(&bytes[..9], "x"), Err(Error::Parse { .. })));
    }

    #[test]
    fn header_validation() {
        let mut bytes = motion_to_bytes(&random_motion(2));
        bytes[10] = 22;
        assert!(matches!(motion_from_bytes::<f32>(&bytes, "x"), Err(Error::UnsupportedSkeleton { joint_count: 22 })));
        let mut bad = motion_to_bytes(&random_motion(2));
        bad[0] = b'X';
        assert!(matches!(motion_from_bytes::<f32>(&bad, "x"), Err(Error::Parse { offset: 0, .. })));
        let mut ver = motion_to_bytes(&random_motion(2));
        ver[4] = 9;
        assert!(matches!(motion_from_bytes::<f32>(&ver, "x"), Err(Error::Parse { offset: 4, .. })));
    }
}
