use core::ops::Mul;

use super::real::Real;

/// Sentinel log-magnitude carried by a zero amplitude.
pub const ZERO_LOG: f64 = -1e300;

/// An amplitude stored as `sign * exp(log_abs)`.
///
/// `sign == 0` exactly when the amplitude is zero, in which case `log_abs`
/// holds [`ZERO_LOG`]. Any product touching a zero is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog<S = f64> {
    pub sign: i8,
    pub log_abs: S,
}

impl<S: Real> SignedLog<S> {
    pub fn zero() -> Self {
        Self {
            sign: 0,
            log_abs: S::constant(ZERO_LOG),
        }
    }

    pub fn one() -> Self {
        Self {
            sign: 1,
            log_abs: S::constant(0.0),
        }
    }

    pub fn from_value(v: S) -> Self {
        let x = v.value();
        if x == 0.0 || x.is_nan() {
            return Self::zero();
        }
        Self {
            sign: if x < 0.0 { -1 } else { 1 },
            log_abs: v.abs().ln(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// The amplitude in the linear domain (may under/overflow).
    pub fn to_f64(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * libm::exp(self.log_abs.value())
        }
    }

    /// Product of many signed-log factors.
    pub fn product(factors: &[Self]) -> Self {
        let mut sign = 1i8;
        let mut logs = alloc::vec::Vec::with_capacity(factors.len());
        for f in factors {
            if f.sign == 0 {
                return Self::zero();
            }
            sign *= f.sign;
            logs.push(f.log_abs);
        }
        Self {
            sign,
            log_abs: S::sum_logs(&logs),
        }
    }

    /// Product of raw values, formed entirely in the log domain.
    pub fn product_of_values(values: impl IntoIterator<Item = S>) -> Self {
        let mut sign = 1i8;
        let values = values.into_iter();
        let mut logs = alloc::vec::Vec::with_capacity(values.size_hint().0);
        for v in values {
            let x = v.value();
            if x == 0.0 || x.is_nan() {
                return Self::zero();
            }
            if x < 0.0 {
                sign = -sign;
            }
            logs.push(v.abs().ln());
        }
        Self {
            sign,
            log_abs: S::sum_logs(&logs),
        }
    }

    pub fn negate(self) -> Self {
        Self {
            sign: -self.sign,
            log_abs: self.log_abs,
        }
    }

    /// Drops derivative information.
    pub fn detach(&self) -> SignedLog<f64> {
        SignedLog {
            sign: self.sign,
            log_abs: if self.sign == 0 {
                ZERO_LOG
            } else {
                self.log_abs.value()
            },
        }
    }
}

impl<S: Real> Mul for SignedLog<S> {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        if self.sign == 0 || o.sign == 0 {
            return Self::zero();
        }
        Self {
            sign: self.sign * o.sign,
            log_abs: self.log_abs + o.log_abs,
        }
    }
}

// 2^80: every log term of a finite non-zero f64 is below 745 in magnitude, so
// the fixed-point sum has ample headroom in an i128.
const FIXED_SCALE: f64 = 1_208_925_819_614_629_174_706_176.0;
const FIXED_LIMIT: f64 = 1.0e6;

/// Sums log terms in 2^-80 fixed point.
///
/// Each term is rounded independently and integer addition is associative,
/// so the result is bit-identical under any reordering of the terms.
/// Falls back to pairwise summation for terms outside the fixed-point range.
pub fn exact_log_sum(terms: &[f64]) -> f64 {
    let mut acc: i128 = 0;
    for &t in terms {
        if !(t.abs() < FIXED_LIMIT) {
            return super::real::pairwise_sum(terms);
        }
        acc += (t * FIXED_SCALE) as i128;
    }
    acc as f64 / FIXED_SCALE
}
