use crate::scalar::Scalar;
use crate::skeleton::{motion_positions, MotionSequence, Skeleton, JOINT_COUNT};
use crate::Result;

/// Default kernel width in frames for a clip at `fps`: 3 frames at 60 fps.
pub fn default_sigma(fps: f64) -> f64 {
    3.0 * fps / 60.0
}

/// Mean joint speed per frame by central differences; the first and last
/// frames have no value and are reported as zero.
pub fn mean_joint_speed<S: Scalar>(motion: &MotionSequence<S>, skeleton: &Skeleton<S>) -> Result<Vec<f64>> {
    let n = motion.frame_count();
    let p = motion_positions(&skeleton.cast::<f64>(), &motion.frames().cast::<f64>())?;
    let fps = motion.fps();
    let mut speed = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        let (a, c) = (p.row(i - 1), p.row(i + 1));
        speed[i] = (0..JOINT_COUNT)
            .map(|j| (0..3).map(|k| (c[3 * j + k] - a[3 * j + k]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            * fps
            / (2.0 * JOINT_COUNT as f64);
    }
    Ok(speed)
}

/// The frames between the first frame that differs from its successor and the
/// last frame that differs from its predecessor. Held poses at either end are
/// therefore ignored.
fn active_range<S: Scalar>(motion: &MotionSequence<S>) -> Option<(usize, usize)> {
    let f = motion.frames();
    let n = f.rows();
    let first = (0..n.saturating_sub(1)).find(|&i| f.row(i) != f.row(i + 1))?;
    let last = (1..n).rev().find(|&i| f.row(i) != f.row(i - 1))?;
    Some((first, last))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Local minima of mean joint speed that fall below the median speed of the
/// active part of the clip. A plateau counts once, at its first frame.
pub fn kinematic_beats<S: Scalar>(motion: &MotionSequence<S>, skeleton: &Skeleton<S>) -> Result<Vec<usize>> {
    let Some((lo, hi)) = active_range(motion) else {
        return Ok(Vec::new());
    };
    if hi < lo + 2 {
        return Ok(Vec::new());
    }
    let active = motion.window(lo, hi - lo + 1)?;
    let speed = mean_joint_speed(&active, skeleton)?;
    let interior = &speed[1..speed.len() - 1];
    let med = median(interior.to_vec());
    Ok((2..speed.len().saturating_sub(2))
        .filter(|&i| speed[i] < speed[i - 1] && speed[i] <= speed[i + 1] && speed[i] < med)
        .map(|i| i + lo)
        .collect())
}

/// `mean over music beats b of exp(-min_k (b - k)^2 / (2 sigma^2))`.
pub fn beat_alignment_score(music_beats: &[usize], kinematic: &[usize], sigma: f64) -> f64 {
    if music_beats.is_empty() {
        return 0.0;
    }
    if kinematic.is_empty() {
        log::warn!("no kinematic beats detected; beat alignment is 0");
        return 0.0;
    }
    let total: f64 = music_beats
        .iter()
        .map(|&b| {
            let d = kinematic.iter().map(|&k| (b as f64 - k as f64).abs()).fold(f64::INFINITY, f64::min);
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    total / music_beats.len() as f64
}

pub fn beat_alignment<S: Scalar>(
    motion: &MotionSequence<S>,
    skeleton: &Skeleton<S>,
    music_beats: &[usize],
    sigma: f64,
) -> Result<f64> {
    if music_beats.is_empty() {
        return Err(crate::Error::Invalid("beat alignment needs at least one music beat".into()));
    }
    if !(sigma > 0.0) {
        return Err(crate::Error::Invalid(format!("beat sigma must be positive, got {sigma}")));
    }
    Ok(beat_alignment_score(music_beats, &kinematic_beats(motion, skeleton)?, sigma))
}
