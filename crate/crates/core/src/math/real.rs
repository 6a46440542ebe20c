use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

use super::signed_log::exact_log_sum;

/// Scalar arithmetic shared by plain values, Taylor jets and tape variables.
///
/// Everything downstream (network, Ansätze, local energy) is written once
/// against this trait. Branching decisions (pivot choice, signs) always use
/// [`Real::value`], so all instances follow the same control flow.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;

    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn square(self) -> Self {
        self * self
    }

    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }

    /// `bias + sum_k w[k] * h[k]` with constant weights.
    fn affine(bias: f64, w: &[f64], h: &[Self]) -> Self;

    fn sum(terms: &[Self]) -> Self {
        pairwise_sum(terms)
    }

    /// Sum of the log-magnitudes of a product's factors.
    fn sum_logs(terms: &[Self]) -> Self {
        Self::sum(terms)
    }
}

/// Network parameters as seen from a scalar type `S`: either constants
/// (`f64`) or, for parameter gradients, tape variables.
pub trait Param<S: Real>: Copy {
    fn lift(self) -> S;
    fn affine(bias: Self, w: &[Self], h: &[S]) -> S;
}

impl<S: Real> Param<S> for f64 {
    #[inline]
    fn lift(self) -> S {
        S::constant(self)
    }

    #[inline]
    fn affine(bias: f64, w: &[f64], h: &[S]) -> S {
        S::affine(bias, w, h)
    }
}

const PAIRWISE_LEAF: usize = 8;

/// Pairwise (cascade) summation; rounding error grows as `O(log n)`.
pub fn pairwise_sum<S: Real>(terms: &[S]) -> S {
    if terms.len() <= PAIRWISE_LEAF {
        let mut it = terms.iter();
        let Some(&first) = it.next() else {
            return S::constant(0.0);
        };
        return it.fold(first, |acc, &t| acc + t);
    }
    let (lo, hi) = terms.split_at(terms.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        libm::fabs(self)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }

    fn affine(bias: f64, w: &[f64], h: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), h.len());
        let mut acc = 0.0;
        for (a, b) in w.iter().zip(h) {
            acc += a * b;
        }
        bias + acc
    }

    fn sum_logs(terms: &[f64]) -> f64 {
        exact_log_sum(terms)
    }
}
