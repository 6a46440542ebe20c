//! Variational Monte Carlo for small real-space fermionic systems.
//!
//! The crate is `no_std` (with `alloc`). Wavefunctions are built from a
//! permutation-equivariant feature network whose per-electron outputs are
//! antisymmetrized either by a determinant (`O(N^3)`) or by a product over
//! electron pairs (`O(N^2)`). Every construction is evaluated in signed-log
//! form and is generic over [`math::Real`], so the same code path yields
//! plain values, second-order Taylor jets (for Laplacians) and reverse-mode
//! tape variables (for gradients).
//!
//! Enable the `parallel` feature to evaluate walkers on a rayon pool.

#![no_std]
// `!(a >= b)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod ansatz;
pub mod error;
pub mod hamiltonian;
pub mod math;
pub mod net;
pub mod optim;
pub mod oracle;
pub mod perm;
pub mod sampler;
pub mod trainer;

mod par;

pub use ansatz::{AnsatzKind, Wavefunction};
pub use error::{Error, Result};
pub use hamiltonian::{LocalEnergySample, Nucleus, Potential, SystemSpec};
pub use math::{Real, SignedLog, Tensor};
pub use net::{NetConfig, NetParams};
