//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Each recorded node stores the local partial derivatives with respect to
//! its parents. A reverse sweep never mutates the tape, so repeated sweeps
//! from the same node give identical gradients.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{Param, Real};

#[derive(Default)]
struct TapeInner {
    spans: Vec<(u32, u32)>,
    edges: Vec<(u32, f64)>,
}

/// Recording context. Confined to one evaluation; it is deliberately not
/// `Sync`.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self {
            inner: RefCell::new(TapeInner {
                spans: Vec::with_capacity(nodes),
                edges: Vec::with_capacity(edges),
            }),
        }
    }

    /// A new independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(core::iter::empty());
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, edges: impl IntoIterator<Item = (u32, f64)>) -> u32 {
        let mut inner = self.inner.borrow_mut();
        let start = inner.edges.len() as u32;
        inner.edges.extend(edges);
        let end = inner.edges.len() as u32;
        let idx = inner.spans.len() as u32;
        inner.spans.push((start, end));
        idx
    }

    fn node<'t>(&'t self, val: f64, edges: impl IntoIterator<Item = (u32, f64)>) -> Var<'t> {
        Var {
            tape: Some(self),
            idx: self.push(edges),
            val,
        }
    }

    /// Adjoints of every node with respect to `output`.
    pub fn gradient(&self, output: Var<'_>) -> Gradient {
        let inner = self.inner.borrow();
        let mut adj = vec![0.0; inner.spans.len()];
        if let Some(t) = output.tape {
            debug_assert!(core::ptr::eq(t, self), "variable from another tape");
            adj[output.idx as usize] = 1.0;
            for i in (0..=output.idx as usize).rev() {
                let a = adj[i];
                if a == 0.0 {
                    continue;
                }
                let (s, e) = inner.spans[i];
                for &(p, w) in &inner.edges[s as usize..e as usize] {
                    adj[p as usize] += a * w;
                }
            }
        }
        Gradient { adjoints: adj }
    }
}

/// Result of one reverse sweep.
#[derive(Clone, Debug)]
pub struct Gradient {
    adjoints: Vec<f64>,
}

impl Gradient {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.tape {
            Some(_) => self.adjoints[v.idx as usize],
            None => 0.0,
        }
    }

    /// Adjoints of a contiguous block of variables created in order.
    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// A differentiable scalar: its value plus a handle into the tape.
/// Constants carry no handle and record nothing.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{}: {})", self.idx, self.val),
            None => write!(f, "Var(const {})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub const fn constant_var(val: f64) -> Self {
        Self {
            tape: None,
            idx: 0,
            val,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    #[inline]
    fn unary(self, val: f64, partial: f64) -> Self {
        match self.tape {
            None => Self::constant_var(val),
            Some(t) => t.node(val, [(self.idx, partial)]),
        }
    }

    #[inline]
    fn binary(a: Self, b: Self, val: f64, da: f64, db: f64) -> Self {
        match (a.tape, b.tape) {
            (None, None) => Self::constant_var(val),
            (Some(t), None) => t.node(val, [(a.idx, da)]),
            (None, Some(t)) => t.node(val, [(b.idx, db)]),
            (Some(t), Some(u)) => {
                debug_assert!(core::ptr::eq(t, u), "mixing tapes");
                t.node(val, [(a.idx, da), (b.idx, db)])
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::binary(self, o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::binary(self, o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::binary(self, o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let r = 1.0 / o.val;
        let q = self.val * r;
        Self::binary(self, o, q, r, -q * r)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

fn tape_of<'t>(items: impl Iterator<Item = Var<'t>>) -> Option<&'t Tape> {
    items.filter_map(|v| v.tape).next()
}

impl<'t> Real for Var<'t> {
    fn constant(v: f64) -> Self {
        Self::constant_var(v)
    }
    fn value(self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.val);
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(libm::log(self.val), 1.0 / self.val)
    }
    fn tanh(self) -> Self {
        let t = libm::tanh(self.val);
        self.unary(t, 1.0 - t * t)
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.val);
        self.unary(s, 0.5 / s)
    }
    fn scale(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }

    fn affine(bias: f64, w: &[f64], h: &[Self]) -> Self {
        debug_assert_eq!(w.len(), h.len());
        let val = bias + w.iter().zip(h).map(|(a, b)| a * b.val).sum::<f64>();
        match tape_of(h.iter().copied()) {
            None => Self::constant_var(val),
            Some(t) => t.node(
                val,
                w.iter()
                    .zip(h)
                    .filter(|(_, b)| b.tape.is_some())
                    .map(|(&a, b)| (b.idx, a)),
            ),
        }
    }

    fn sum(terms: &[Self]) -> Self {
        let val = super::real::pairwise_sum(&terms.iter().map(|t| t.val).collect::<Vec<_>>());
        match tape_of(terms.iter().copied()) {
            None => Self::constant_var(val),
            Some(t) => t.node(
                val,
                terms
                    .iter()
                    .filter(|v| v.tape.is_some())
                    .map(|v| (v.idx, 1.0)),
            ),
        }
    }
}

impl<'t> Param<Var<'t>> for Var<'t> {
    #[inline]
    fn lift(self) -> Var<'t> {
        self
    }

    fn affine(bias: Var<'t>, w: &[Var<'t>], h: &[Var<'t>]) -> Var<'t> {
        debug_assert_eq!(w.len(), h.len());
        let val = bias.val + w.iter().zip(h).map(|(a, b)| a.val * b.val).sum::<f64>();
        let tape = tape_of(
            core::iter::once(bias)
                .chain(w.iter().copied())
                .chain(h.iter().copied()),
        );
        match tape {
            None => Var::constant_var(val),
            Some(t) => {
                let bias_edge = bias.tape.map(|_| (bias.idx, 1.0));
                let edges = w.iter().zip(h).flat_map(|(a, b)| {
                    let ea = a.tape.map(|_| (a.idx, b.val));
                    let eb = b.tape.map(|_| (b.idx, a.val));
                    ea.into_iter().chain(eb)
                });
                t.node(val, bias_edge.into_iter().chain(edges))
            }
        }
    }
}
