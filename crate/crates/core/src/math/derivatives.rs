use alloc::vec::Vec;

use super::jet::Jet;
use super::real::Real;
use super::signed_log::SignedLog;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// A wavefunction seen as a map from a flat coordinate vector to
/// `log|psi|`, evaluable at any [`Real`] scalar type.
pub trait LogPsi {
    fn log_psi<S: Real>(&self, x: &[S]) -> Result<SignedLog<S>>;
}

/// `grad_x log|psi|` by one reverse sweep.
pub fn grad_logpsi<F: LogPsi>(psi: &F, x: &[f64]) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = x.iter().map(|&v| tape.var(v)).collect();
    let out = psi.log_psi(&vars)?;
    if out.sign == 0 {
        return Err(Error::NodeEvaluation);
    }
    Ok(tape.gradient(out.log_abs).wrt_all(&vars))
}

/// Value, gradient and Laplacian of `log|psi|`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDerivatives {
    pub sign: i8,
    pub log_abs: f64,
    pub grad: Vec<f64>,
    pub laplacian: f64,
}

/// One second-order forward sweep per coordinate: `dN` sweeps, each costing
/// a constant multiple of one evaluation.
pub fn log_derivatives<F: LogPsi>(psi: &F, x: &[f64]) -> Result<LogDerivatives> {
    let mut jets: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
    let mut grad = Vec::with_capacity(x.len());
    let mut second = Vec::with_capacity(x.len());
    let mut head = SignedLog::zero();
    for k in 0..x.len() {
        jets[k] = Jet::variable(x[k]);
        let out = psi.log_psi(&jets)?;
        jets[k] = Jet::constant(x[k]);
        if out.sign == 0 {
            return Err(Error::NodeEvaluation);
        }
        grad.push(out.log_abs.d);
        second.push(out.log_abs.dd);
        head = out.detach();
    }
    if x.is_empty() {
        head = psi.log_psi::<f64>(&[])?;
        if head.sign == 0 {
            return Err(Error::NodeEvaluation);
        }
    }
    Ok(LogDerivatives {
        sign: head.sign,
        log_abs: head.log_abs,
        grad,
        laplacian: super::real::pairwise_sum(&second),
    })
}

/// `sum_i d² log|psi| / dx_i²`.
pub fn laplacian_logpsi<F: LogPsi>(psi: &F, x: &[f64]) -> Result<f64> {
    Ok(log_derivatives(psi, x)?.laplacian)
}
