use alloc::vec::Vec;

use super::real::Real;
use super::signed_log::SignedLog;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Pivot magnitudes below this are treated as an exactly singular matrix.
pub const PIVOT_UNDERFLOW: f64 = 1e-300;

/// Sign and log-magnitude of the determinant of a row-major `n x n` matrix,
/// by LU with partial pivoting.
///
/// Pivot selection looks at values only, so jets and tape variables follow
/// the same elimination as plain floats and the result is differentiable.
pub fn signed_logdet<S: Real>(m: &[S], n: usize) -> SignedLog<S> {
    assert_eq!(m.len(), n * n, "signed_logdet needs a square matrix");
    if n == 0 {
        return SignedLog::one();
    }
    let mut a = m.to_vec();
    let mut sign = 1i8;
    let mut logs = Vec::with_capacity(n);
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].value().abs();
        for r in k + 1..n {
            let v = a[r * n + k].value().abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if !(best >= PIVOT_UNDERFLOW) {
            return SignedLog::zero();
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            sign = -sign;
        }
        let pivot = a[k * n + k];
        if pivot.value() < 0.0 {
            sign = -sign;
        }
        logs.push(pivot.abs().ln());
        let inv = S::constant(1.0) / pivot;
        let (top, bottom) = a.split_at_mut((k + 1) * n);
        let pivot_row = &top[k * n + k + 1..(k + 1) * n];
        for row in bottom.chunks_exact_mut(n) {
            let f = row[k] * inv;
            for (x, &u) in row[k + 1..].iter_mut().zip(pivot_row) {
                *x = *x - f * u;
            }
        }
    }
    SignedLog {
        sign,
        log_abs: S::sum_logs(&logs),
    }
}

pub fn signed_logdet_tensor(m: &Tensor) -> Result<SignedLog> {
    if !m.is_square() {
        return Err(Error::Shape(alloc::format!(
            "determinant of non-square shape {:?}",
            m.shape()
        )));
    }
    Ok(signed_logdet(m.data(), m.shape()[0]))
}
