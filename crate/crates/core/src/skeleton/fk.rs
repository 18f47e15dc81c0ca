//! Forward kinematics over the skeleton tree.
//!
//! Rotations are local to the parent and the root rotation is joint 0's
//! rotation. The root sits at the root translation; every other joint sits at
//! `parent position + parent global rotation * rest offset`.

use super::pose::PoseVector;
use super::rotation::{
    add3, mat_mul, mat_vec, rot6d_to_matrix, rot6d_to_matrix_vjp, transpose3, Mat3, Rotation6D, Vec3,
};
use super::{Skeleton, JOINT_COUNT, POSE_DIM};
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::{Error, Result};

pub type JointPositions<S> = [Vec3<S>; JOINT_COUNT];

fn tag_joint(e: Error, j: usize) -> Error {
    match e {
        Error::DegenerateRotation { detail, .. } => Error::DegenerateRotation { joint: Some(j), detail },
        other => other,
    }
}

fn local_rotations<S: Scalar>(row: &[S]) -> Result<[Mat3<S>; JOINT_COUNT]> {
    let mut out = [[[S::zero(); 3]; 3]; JOINT_COUNT];
    for (j, m) in out.iter_mut().enumerate() {
        *m = rot6d_to_matrix(&Rotation6D::from_slice(&row[3 + 6 * j..9 + 6 * j])).map_err(|e| tag_joint(e, j))?;
    }
    Ok(out)
}

fn globals<S: Scalar>(skel: &Skeleton<S>, local: &[Mat3<S>; JOINT_COUNT]) -> [Mat3<S>; JOINT_COUNT] {
    let mut g = *local;
    for j in 1..JOINT_COUNT {
        let p = skel.parent(j).expect("non-root joint has a parent");
        g[j] = mat_mul(&g[p], &local[j]);
    }
    g
}

/// Global joint positions for one encoded 147-wide pose row.
pub fn fk_row<S: Scalar>(skel: &Skeleton<S>, row: &[S]) -> Result<JointPositions<S>> {
    if row.len() != POSE_DIM {
        return Err(Error::shape("forward_kinematics", POSE_DIM, row.len()));
    }
    let local = local_rotations(row)?;
    let g = globals(skel, &local);
    let mut pos = [[S::zero(); 3]; JOINT_COUNT];
    pos[0] = [row[0], row[1], row[2]];
    for j in 1..JOINT_COUNT {
        let p = skel.parent(j).expect("non-root joint has a parent");
        pos[j] = add3(&pos[p], &mat_vec(&g[p], &skel.rest_offset(j)));
    }
    Ok(pos)
}

pub(crate) fn fk_row_into<S: Scalar>(skel: &Skeleton<S>, row: &[S], out: &mut [S]) -> Result<()> {
    let pos = fk_row(skel, row)?;
    out.copy_from_slice(pos.as_flattened());
    Ok(())
}

pub fn forward_kinematics<S: Scalar>(skel: &Skeleton<S>, pose: &PoseVector<S>) -> Result<JointPositions<S>> {
    fk_row(skel, &pose.encode())
}

/// Pulls a gradient on the 72 position coordinates of one frame back to the
/// 147 pose coordinates.
pub fn forward_kinematics_vjp<S: Scalar>(skel: &Skeleton<S>, row: &[S], grad_positions: &[S]) -> Result<Vec<S>> {
    if row.len() != POSE_DIM || grad_positions.len() != JOINT_COUNT * 3 {
        return Err(Error::shape("forward_kinematics_vjp", POSE_DIM, row.len()));
    }
    let local = local_rotations(row)?;
    let g = globals(skel, &local);
    let mut dp = [[S::zero(); 3]; JOINT_COUNT];
    for (j, d) in dp.iter_mut().enumerate() {
        *d = [grad_positions[3 * j], grad_positions[3 * j + 1], grad_positions[3 * j + 2]];
    }
    let mut dg = [[[S::zero(); 3]; 3]; JOINT_COUNT];
    let mut out = vec![S::zero(); POSE_DIM];
    // Children have larger indices than parents, so walking backwards sees every
    // joint's accumulated gradient complete before it is pushed to its parent.
    for j in (1..JOINT_COUNT).rev() {
        let p = skel.parent(j).expect("non-root joint has a parent");
        let o = skel.rest_offset(j);
        let dpj = dp[j];
        dp[p] = add3(&dp[p], &dpj);
        for r in 0..3 {
            for c in 0..3 {
                dg[p][r][c] = dg[p][r][c] + dpj[r] * o[c];
            }
        }
        // G_j = G_p R_j
        let back = mat_mul(&dg[j], &transpose3(&local[j]));
        for r in 0..3 {
            for c in 0..3 {
                dg[p][r][c] = dg[p][r][c] + back[r][c];
            }
        }
        let dlocal = mat_mul(&transpose3(&g[p]), &dg[j]);
        let dr = rot6d_to_matrix_vjp(&Rotation6D::from_slice(&row[3 + 6 * j..9 + 6 * j]), &dlocal)
            .map_err(|e| tag_joint(e, j))?;
        out[3 + 6 * j..9 + 6 * j].copy_from_slice(&dr);
    }
    let dr0 = rot6d_to_matrix_vjp(&Rotation6D::from_slice(&row[3..9]), &dg[0]).map_err(|e| tag_joint(e, 0))?;
    out[3..9].copy_from_slice(&dr0);
    out[..3].copy_from_slice(&dp[0]);
    Ok(out)
}

/// FK over every row of an `N × 147` matrix, returning `N × 72` positions.
pub fn motion_positions<S: Scalar>(skel: &Skeleton<S>, frames: &Matrix<S>) -> Result<Matrix<S>> {
    let mut out = Matrix::zeros(frames.rows(), JOINT_COUNT * 3);
    for i in 0..frames.rows() {
        let pos = fk_row(skel, frames.row(i))?;
        out.row_mut(i).copy_from_slice(pos.as_flattened());
    }
    Ok(out)
}
