//! Scalar abstraction shared by every tensor routine in the crate.
//!
//! All tensors hold `Complex<T>` entries where `T: Real`. The trait bundles
//! nalgebra's `RealField` (for decompositions) with the num-traits
//! conversions and a complex GEMM hook so that `f32` and `f64` both dispatch
//! to the blocked kernels in `matrixmultiply`.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type underlying the complex tensors.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// `c <- alpha * a * b + beta * c` on raw strided complex buffers.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-aliasing (for `c`)
    /// matrices of the stated shapes.
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Complex<Self>,
        a: *const Complex<Self>,
        rsa: isize,
        csa: isize,
        b: *const Complex<Self>,
        rsb: isize,
        csb: isize,
        beta: Complex<Self>,
        c: *mut Complex<Self>,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f64 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Complex<f64>,
        a: *const Complex<f64>,
        rsa: isize,
        csa: isize,
        b: *const Complex<f64>,
        rsb: isize,
        csb: isize,
        beta: Complex<f64>,
        c: *mut Complex<f64>,
        rsc: isize,
        csc: isize,
    ) {
        use matrixmultiply::CGemmOption::Standard;
        // Complex<f64> is repr(C) {re, im}, identical to [f64; 2].
        matrixmultiply::zgemm(
            Standard,
            Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a as *const [f64; 2],
            rsa,
            csa,
            b as *const [f64; 2],
            rsb,
            csb,
            [beta.re, beta.im],
            c as *mut [f64; 2],
            rsc,
            csc,
        );
    }
}

impl Real for f32 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Complex<f32>,
        a: *const Complex<f32>,
        rsa: isize,
        csa: isize,
        b: *const Complex<f32>,
        rsb: isize,
        csb: isize,
        beta: Complex<f32>,
        c: *mut Complex<f32>,
        rsc: isize,
        csc: isize,
    ) {
        use matrixmultiply::CGemmOption::Standard;
        matrixmultiply::cgemm(
            Standard,
            Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a as *const [f32; 2],
            rsa,
            csa,
            b as *const [f32; 2],
            rsb,
            csb,
            [beta.re, beta.im],
            c as *mut [f32; 2],
            rsc,
            csc,
        );
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn from_usize<T: Real>(x: usize) -> T {
    T::from_usize(x).expect("count representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `exp(i theta)`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub fn creal<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// Squared modulus.
#[inline]
pub fn abs2<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// Modulus.
#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    abs2(z).sqrt()
}
