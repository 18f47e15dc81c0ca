use crate::scalar::Scalar;
use crate::skeleton::{motion_positions, Skeleton};
use crate::tensor::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_pos: f64,
    pub lambda_vel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_pos: 1.0, lambda_vel: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_pos >= 0.0 && self.lambda_vel >= 0.0 {
            Ok(())
        } else {
            Err(Error::Invalid(format!("loss weights must be nonnegative: {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown<S> {
    pub reconstruction: S,
    pub positions: S,
    pub velocity: S,
    pub total: S,
}

/// Mean over all elements of the squared difference.
pub fn loss_reconstruction<S: Scalar>(x: &Matrix<S>, x_hat: &Matrix<S>) -> Result<S> {
    x.check_same(x_hat, "loss_reconstruction")?;
    Ok(x.sub(x_hat)?.sum_squares() / S::of(x.len().max(1) as f64))
}

/// Squared joint-position error summed over the 72 coordinates, averaged over frames.
pub fn loss_positions<S: Scalar>(x: &Matrix<S>, x_hat: &Matrix<S>, skeleton: &Skeleton<S>) -> Result<S> {
    x.check_same(x_hat, "loss_positions")?;
    let a = motion_positions(skeleton, x)?;
    let b = motion_positions(skeleton, x_hat)?;
    Ok(a.sub(&b)?.sum_squares() / S::of(x.rows().max(1) as f64))
}

/// Squared error of frame differences, averaged over the `N - 1` differences.
pub fn loss_velocity<S: Scalar>(x: &Matrix<S>, x_hat: &Matrix<S>) -> Result<S> {
    x.check_same(x_hat, "loss_velocity")?;
    let n = x.rows();
    if n < 2 {
        return Err(Error::Invalid(format!("velocity loss needs at least 2 frames, got {n}")));
    }
    let mut acc = S::zero();
    for i in 0..n - 1 {
        for c in 0..x.cols() {
            let d = (x.get(i + 1, c) - x.get(i, c)) - (x_hat.get(i + 1, c) - x_hat.get(i, c));
            acc = acc + d * d;
        }
    }
    Ok(acc / S::of((n - 1) as f64))
}

pub fn loss_total<S: Scalar>(
    x: &Matrix<S>,
    x_hat: &Matrix<S>,
    skeleton: &Skeleton<S>,
    weights: &LossWeights,
) -> Result<LossBreakdown<S>> {
    weights.validate()?;
    let reconstruction = loss_reconstruction(x, x_hat)?;
    let positions = loss_positions(x, x_hat, skeleton)?;
    let velocity = loss_velocity(x, x_hat)?;
    let total = reconstruction + S::of(weights.lambda_pos) * positions + S::of(weights.lambda_vel) * velocity;
    Ok(LossBreakdown { reconstruction, positions, velocity, total })
}
