//! Floating point abstraction shared by every numeric routine in the crate.
//!
//! All math is written once against [`Scalar`]; `f32` is the working precision
//! for training and sampling, `f64` is used where finite-difference checks
//! need the extra headroom.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `C = alpha * A B + beta * C` over strided row/column views.
    ///
    /// # Safety
    /// Every index reachable through the given shapes and strides must be in
    /// bounds of the corresponding pointer, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// A strided 2-D view into a slice: `(offset, row stride, column stride)`.
#[derive(Clone, Copy, Debug)]
pub struct View {
    pub offset: usize,
    pub rs: isize,
    pub cs: isize,
}

impl View {
    pub fn row_major(offset: usize, cols: usize) -> Self {
        View { offset, rs: cols as isize, cs: 1 }
    }

    /// Transposed view of a row-major block with `cols` columns.
    pub fn transposed(offset: usize, cols: usize) -> Self {
        View { offset, rs: 1, cs: cols as isize }
    }

    fn max_index(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            return self.offset;
        }
        let r = (rows - 1) as isize * self.rs;
        let c = (cols - 1) as isize * self.cs;
        debug_assert!(self.rs >= 0 && self.cs >= 0);
        self.offset + (r + c) as usize
    }
}

/// Bounds-checked strided GEMM: `C[m×n] = alpha * A[m×k] B[k×n] + beta * C`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: S,
    a: &[S],
    av: View,
    b: &[S],
    bv: View,
    beta: S,
    c: &mut [S],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(av.max_index(m, k) < a.len(), "gemm: A view out of bounds");
        assert!(bv.max_index(k, n) < b.len(), "gemm: B view out of bounds");
    }
    assert!(cv.max_index(m, n) < c.len(), "gemm: C view out of bounds");
    // SAFETY: bounds checked above; `c` is a distinct &mut borrow so it cannot alias.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.offset),
            av.rs,
            av.cs,
            b.as_ptr().add(bv.offset),
            bv.rs,
            bv.cs,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs,
            cv.cs,
        );
    }
}
