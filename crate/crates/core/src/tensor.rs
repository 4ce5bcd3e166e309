//! Minimal dense row-major matrix math over f32/f64.
//!
//! The model is tiny, so plain loops are fast enough; keeping the type flat
//! (one `Vec` per matrix) makes checkpointing and finite-difference probing
//! trivial.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type for model arithmetic: f32 for training/inference, f64 for
/// gradient-check mode.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }
}

/// c[m,n] += a[m,k] * b[k,n], with `b` given as a flat slice.
pub fn matmul_acc<T: Scalar>(c: &mut Mat<T>, a: &Mat<T>, b: &[T], bk: usize, bn: usize) {
    assert_eq!(a.cols, bk);
    assert_eq!(c.rows, a.rows);
    assert_eq!(c.cols, bn);
    for i in 0..a.rows {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (kk, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[kk * bn..(kk + 1) * bn];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// c[m,n] = a[m,k] * b[k,n] + bias[n] broadcast over rows.
pub fn linear<T: Scalar>(a: &Mat<T>, w: &[T], bias: &[T], k: usize, n: usize) -> Mat<T> {
    let mut c = Mat::zeros(a.rows, n);
    for i in 0..a.rows {
        c.row_mut(i).copy_from_slice(bias);
    }
    matmul_acc(&mut c, a, w, k, n);
    c
}

/// dw[k,n] += aᵀ[k,m] * d[m,n]; db[n] += column sums of d.
pub fn linear_backward_params<T: Scalar>(
    a: &Mat<T>,
    d: &Mat<T>,
    dw: &mut [T],
    db: &mut [T],
    n: usize,
) {
    assert_eq!(a.rows, d.rows);
    assert_eq!(d.cols, n);
    for i in 0..a.rows {
        let arow = a.row(i);
        let drow = d.row(i);
        for (kk, &av) in arow.iter().enumerate() {
            let dwrow = &mut dw[kk * n..(kk + 1) * n];
            for (wv, &dv) in dwrow.iter_mut().zip(drow) {
                *wv += av * dv;
            }
        }
        for (bv, &dv) in db.iter_mut().zip(drow) {
            *bv += dv;
        }
    }
}

/// da[m,k] = d[m,n] * wᵀ[n,k] for w stored as [k,n].
pub fn linear_backward_input<T: Scalar>(d: &Mat<T>, w: &[T], k: usize, n: usize) -> Mat<T> {
    let mut da = Mat::zeros(d.rows, k);
    for i in 0..d.rows {
        let drow = d.row(i);
        let arow = da.row_mut(i);
        for (kk, av) in arow.iter_mut().enumerate() {
            let wrow = &w[kk * n..(kk + 1) * n];
            let mut acc = T::zero();
            for (&dv, &wv) in drow.iter().zip(wrow) {
                acc += dv * wv;
            }
            *av = acc;
        }
    }
    da
}

/// In-place numerically stable softmax over `xs`, restricted to indices where
/// `allowed` is true; disallowed entries are set to zero.
pub fn masked_softmax<T: Scalar>(xs: &mut [T], allowed: &[bool]) {
    debug_assert_eq!(xs.len(), allowed.len());
    let mut max = T::neg_infinity();
    for (x, &a) in xs.iter().zip(allowed) {
        if a && *x > max {
            max = *x;
        }
    }
    let mut sum = T::zero();
    for (x, &a) in xs.iter_mut().zip(allowed) {
        if a {
            *x = (*x - max).exp();
            sum += *x;
        } else {
            *x = T::zero();
        }
    }
    if sum > T::zero() {
        for x in xs.iter_mut() {
            *x = *x / sum;
        }
    }
}

/// Stable softmax over a full slice (no mask), returning a new vector.
pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut out = xs.to_vec();
    let allowed = vec![true; xs.len()];
    masked_softmax(&mut out, &allowed);
    out
}

pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
