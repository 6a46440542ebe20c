use core::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;

/// Second-order Taylor jet along one input direction: value, first and
/// second directional derivative.
///
/// Seeding coordinate `k` with `Jet::variable` and evaluating `log|psi|`
/// yields `d/dx_k` and `d²/dx_k²` in one forward sweep; summing the second
/// components over all coordinates gives the Laplacian without storing a
/// Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub const fn new(v: f64, d: f64, dd: f64) -> Self {
        Self { v, d, dd }
    }

    /// The seeded input coordinate: unit first derivative.
    pub const fn variable(v: f64) -> Self {
        Self { v, d: 1.0, dd: 0.0 }
    }

    /// Composition with a scalar function given `f(v)`, `f'(v)`, `f''(v)`.
    #[inline]
    fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        Self {
            v: f,
            d: f1 * self.d,
            dd: f2 * self.d * self.d + f1 * self.dd,
        }
    }
}

impl Add for Jet {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d + o.d, self.dd + o.dd)
    }
}

impl Sub for Jet {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d - o.d, self.dd - o.dd)
    }
}

impl Mul for Jet {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.v * o.v,
            self.d * o.v + self.v * o.d,
            self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        )
    }
}

impl Div for Jet {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let r = 1.0 / o.v;
        let recip = o.chain(r, -r * r, 2.0 * r * r * r);
        self * recip
    }
}

impl Neg for Jet {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d, -self.dd)
    }
}

impl Real for Jet {
    #[inline]
    fn constant(v: f64) -> Self {
        Self::new(v, 0.0, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.v);
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(libm::log(self.v), r, -r * r)
    }
    fn tanh(self) -> Self {
        let t = libm::tanh(self.v);
        let s = 1.0 - t * t;
        self.chain(t, s, -2.0 * t * s)
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.v);
        let f1 = 0.5 / s;
        self.chain(s, f1, -0.5 * f1 / self.v)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Self::new(self.v * c, self.d * c, self.dd * c)
    }

    fn affine(bias: f64, w: &[f64], h: &[Jet]) -> Jet {
        debug_assert_eq!(w.len(), h.len());
        let (mut v, mut d, mut dd) = (bias, 0.0, 0.0);
        for (&a, b) in w.iter().zip(h) {
            v += a * b.v;
            d += a * b.d;
            dd += a * b.dd;
        }
        Jet::new(v, d, dd)
    }
}
