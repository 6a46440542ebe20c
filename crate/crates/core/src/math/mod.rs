//! Numeric substrate: dense tensors, the [`Real`] scalar abstraction with its
//! three instances (`f64`, [`Jet`], [`Var`]), signed-log values, signed
//! log-determinants and derivatives of `log|psi|`.

mod derivatives;
mod jet;
mod linalg;
mod real;
mod signed_log;
mod tape;
mod tensor;

pub use derivatives::{grad_logpsi, laplacian_logpsi, log_derivatives, LogDerivatives, LogPsi};
pub use jet::Jet;
pub use linalg::{signed_logdet, signed_logdet_tensor, PIVOT_UNDERFLOW};
pub use real::{pairwise_sum, Param, Real};
pub use signed_log::{exact_log_sum, SignedLog, ZERO_LOG};
pub use tape::{Gradient, Tape, Var};
pub use tensor::Tensor;
