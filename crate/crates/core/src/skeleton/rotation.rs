//! 3×3 rotation helpers and the continuous 6D rotation representation.
//!
//! A [`Rotation6D`] stores the first two columns of a rotation matrix,
//! column 1 then column 2: `[c1x, c1y, c1z, c2x, c2y, c2z]`. Decoding is
//! Gram–Schmidt on the two columns with the third column as their cross
//! product.

use crate::scalar::Scalar;
use crate::{Error, Result};

pub type Vec3<S> = [S; 3];
/// Row-major: `m[row][col]`.
pub type Mat3<S> = [[S; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation6D<S>(pub [S; 6]);

impl<S: Scalar> Rotation6D<S> {
    pub fn identity() -> Self {
        let o = S::one();
        let z = S::zero();
        Rotation6D([o, z, z, z, o, z])
    }

    pub fn from_slice(s: &[S]) -> Self {
        Rotation6D([s[0], s[1], s[2], s[3], s[4], s[5]])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot<S: Scalar>(a: &Vec3<S>, b: &Vec3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<S: Scalar>(a: &Vec3<S>, b: &Vec3<S>) -> Vec3<S> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm<S: Scalar>(a: &Vec3<S>) -> S {
    dot(a, a).sqrt()
}

#[inline]
pub fn add3<S: Scalar>(a: &Vec3<S>, b: &Vec3<S>) -> Vec3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<S: Scalar>(a: &Vec3<S>, b: &Vec3<S>) -> Vec3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<S: Scalar>(a: &Vec3<S>, k: S) -> Vec3<S> {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn identity3<S: Scalar>() -> Mat3<S> {
    let (o, z) = (S::one(), S::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn mat_mul<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat_vec<S: Scalar>(a: &Mat3<S>, v: &Vec3<S>) -> Vec3<S> {
    [dot(&a[0], v), dot(&a[1], v), dot(&a[2], v)]
}

pub fn transpose3<S: Scalar>(a: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn det3<S: Scalar>(a: &Mat3<S>) -> S {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn column<S: Scalar>(a: &Mat3<S>, j: usize) -> Vec3<S> {
    [a[0][j], a[1][j], a[2][j]]
}

pub fn from_columns<S: Scalar>(c0: &Vec3<S>, c1: &Vec3<S>, c2: &Vec3<S>) -> Mat3<S> {
    [[c0[0], c1[0], c2[0]], [c0[1], c1[1], c2[1]], [c0[2], c1[2], c2[2]]]
}

/// Rotation by `angle` radians about the (not necessarily unit) `axis`.
pub fn axis_angle<S: Scalar>(axis: &Vec3<S>, angle: S) -> Mat3<S> {
    let n = norm(axis);
    if n == S::zero() {
        return identity3();
    }
    let [x, y, z] = scale3(axis, S::one() / n);
    let (s, c) = angle.sin_cos();
    let t = S::one() - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn degenerate_tolerance<S: Scalar>() -> S {
    S::of(1e-6)
}

struct GramSchmidt<S> {
    a1_norm: S,
    u_norm: S,
    proj: S,
    b1: Vec3<S>,
    b2: Vec3<S>,
    a2: Vec3<S>,
}

fn gram_schmidt<S: Scalar>(r: &Rotation6D<S>) -> Result<GramSchmidt<S>> {
    if !r.is_finite() {
        return Err(Error::DegenerateRotation { joint: None, detail: "non-finite component".into() });
    }
    let a1 = [r.0[0], r.0[1], r.0[2]];
    let a2 = [r.0[3], r.0[4], r.0[5]];
    let a1_norm = norm(&a1);
    let a2_norm = norm(&a2);
    if a1_norm <= S::min_positive_value() || a2_norm <= S::min_positive_value() {
        return Err(Error::DegenerateRotation { joint: None, detail: "zero column".into() });
    }
    let b1 = scale3(&a1, S::one() / a1_norm);
    let proj = dot(&b1, &a2);
    let u = sub3(&a2, &scale3(&b1, proj));
    let u_norm = norm(&u);
    if u_norm <= degenerate_tolerance::<S>() * a2_norm {
        return Err(Error::DegenerateRotation { joint: None, detail: "parallel columns".into() });
    }
    let b2 = scale3(&u, S::one() / u_norm);
    Ok(GramSchmidt { a1_norm, u_norm, proj, b1, b2, a2 })
}

/// Decodes a 6D rotation into an orthonormal matrix with determinant +1.
pub fn rot6d_to_matrix<S: Scalar>(r: &Rotation6D<S>) -> Result<Mat3<S>> {
    let gs = gram_schmidt(r)?;
    let b3 = cross(&gs.b1, &gs.b2);
    Ok(from_columns(&gs.b1, &gs.b2, &b3))
}

/// Vector-Jacobian product of [`rot6d_to_matrix`]: maps `dL/dR` to `dL/dr`.
pub fn rot6d_to_matrix_vjp<S: Scalar>(r: &Rotation6D<S>, d_mat: &Mat3<S>) -> Result<[S; 6]> {
    let gs = gram_schmidt(r)?;
    let db3 = column(d_mat, 2);
    // b3 = b1 x b2
    let mut db1 = add3(&column(d_mat, 0), &cross(&gs.b2, &db3));
    let db2 = add3(&column(d_mat, 1), &cross(&db3, &gs.b1));
    // b2 = u / |u|
    let du = scale3(&sub3(&db2, &scale3(&gs.b2, dot(&gs.b2, &db2))), S::one() / gs.u_norm);
    // u = a2 - (b1.a2) b1
    let dproj = -dot(&gs.b1, &du);
    let da2 = add3(&du, &scale3(&gs.b1, dproj));
    db1 = add3(&db1, &scale3(&du, -gs.proj));
    db1 = add3(&db1, &scale3(&gs.a2, dproj));
    // b1 = a1 / |a1|
    let da1 = scale3(&sub3(&db1, &scale3(&gs.b1, dot(&gs.b1, &db1))), S::one() / gs.a1_norm);
    Ok([da1[0], da1[1], da1[2], da2[0], da2[1], da2[2]])
}

/// Drops the third column of a rotation matrix.
pub fn matrix_to_rot6d<S: Scalar>(m: &Mat3<S>) -> Result<Rotation6D<S>> {
    let tol = S::of(1e-4);
    let cols = [column(m, 0), column(m, 1), column(m, 2)];
    for (j, c) in cols.iter().enumerate() {
        let n = norm(c);
        if !n.is_finite() || (n - S::one()).abs() > tol {
            return Err(Error::NotOrthonormal(format!("column {j} has norm {n}")));
        }
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let d = dot(&cols[i], &cols[j]);
        if d.abs() > tol {
            return Err(Error::NotOrthonormal(format!("columns {i} and {j} have dot product {d}")));
        }
    }
    if det3(m) <= S::zero() {
        return Err(Error::NotOrthonormal("determinant is not positive".into()));
    }
    Ok(Rotation6D([m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]]))
}
