//! Antisymmetric wavefunction constructions.
//!
//! Every construction returns a [`SignedLog`] and is generic over the scalar
//! type, so values, coordinate jets and parameter tapes share one code path.
//! Antisymmetry is imposed within each spin block; block values multiply.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::hamiltonian::SystemSpec;
use crate::math::{signed_logdet, LogPsi, Param, Real, SignedLog, Tape, Tensor, Var};
use crate::net::{Geometry, NetConfig, NetLayout, NetParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnsatzKind {
    /// Determinant of orbitals that each see one electron only.
    SlaterSingle,
    /// Determinant of permutation-equivariant orbitals.
    Fermi,
    /// Product of antisymmetrized pair functions `F(x_i, x_j; rest)`.
    PairGeneric,
    /// `prod_{i<j} (phi_B(x_j) - phi_B(x_i))`.
    PairPrime,
    /// `prod_{i<j} det [[phi_A(x_i), phi_A(x_j)], [phi_B(x_i), phi_B(x_j)]]`.
    PairDouble,
    /// Symmetric `phi_C` times antisymmetrized two-electron functions.
    Han,
}

impl AnsatzKind {
    pub const ALL: [AnsatzKind; 6] = [
        AnsatzKind::SlaterSingle,
        AnsatzKind::Fermi,
        AnsatzKind::PairGeneric,
        AnsatzKind::PairPrime,
        AnsatzKind::PairDouble,
        AnsatzKind::Han,
    ];

    pub fn is_determinant(self) -> bool {
        matches!(self, AnsatzKind::SlaterSingle | AnsatzKind::Fermi)
    }

    pub fn name(self) -> &'static str {
        match self {
            AnsatzKind::SlaterSingle => "slater-single",
            AnsatzKind::Fermi => "fermi",
            AnsatzKind::PairGeneric => "pair-generic",
            AnsatzKind::PairPrime => "pair-prime",
            AnsatzKind::PairDouble => "pair-double",
            AnsatzKind::Han => "han",
        }
    }
}

impl fmt::Display for AnsatzKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnsatzKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .flat_map(char::to_lowercase)
            .collect();
        AnsatzKind::ALL
            .into_iter()
            .find(|k| k.name().replace('-', "") == norm)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown ansatz kind '{s}'")))
    }
}

/// Mixing weights of an ensemble `sum_k w_k psi_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleWeights {
    omega: Tensor,
}

impl EnsembleWeights {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::InvalidConfig(
                "ensemble needs at least one weight".into(),
            ));
        }
        if !omega.iter().all(|w| w.is_finite()) {
            return Err(Error::NonFinite("ensemble weights"));
        }
        Ok(Self {
            omega: Tensor::vector(omega),
        })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.omega.data()
    }
}

/// `prod_{i<j} (f[i,j] - f[j,i])` for a row-major `n x n` matrix.
pub fn antisymmetrize_pair<S: Real>(f: &[S], n: usize) -> SignedLog<S> {
    debug_assert_eq!(f.len(), n * n);
    SignedLog::product_of_values(
        (0..n).flat_map(|i| (i + 1..n).map(move |j| f[i * n + j] - f[j * n + i])),
    )
}

/// `prod_{i<j} (phi_b[j] - phi_b[i])`.
pub fn psi_pair_prime<S: Real>(phi_b: &[S]) -> SignedLog<S> {
    let n = phi_b.len();
    SignedLog::product_of_values((0..n).flat_map(|i| (i + 1..n).map(move |j| phi_b[j] - phi_b[i])))
}

/// `prod_{i<j} (phi_a[i] phi_b[j] - phi_a[j] phi_b[i])`.
pub fn psi_pair_double<S: Real>(phi_a: &[S], phi_b: &[S]) -> SignedLog<S> {
    let n = phi_b.len();
    debug_assert_eq!(phi_a.len(), n);
    SignedLog::product_of_values(
        (0..n).flat_map(|i| (i + 1..n).map(move |j| phi_a[i] * phi_b[j] - phi_a[j] * phi_b[i])),
    )
}

/// `phi_c * prod_{i<j} (pair[j,i] - pair[i,j])` where `pair[i,j]` is the
/// two-electron function at `(x_i, x_j)`.
pub fn psi_han<S: Real>(pair: &[S], n: usize, phi_c: S) -> SignedLog<S> {
    debug_assert_eq!(pair.len(), n * n);
    SignedLog::from_value(phi_c)
        * SignedLog::product_of_values(
            (0..n).flat_map(|i| (i + 1..n).map(move |j| pair[j * n + i] - pair[i * n + j])),
        )
}

/// Determinant of a row-major `n x n` orbital matrix. Bitwise equal columns
/// (coincident electrons) give an exact zero, which elimination in floating
/// point would not.
pub fn psi_fermi<S: Real>(orbitals: &[S], n: usize) -> SignedLog<S> {
    let same = |a: usize, b: usize| {
        (0..n).all(|i| orbitals[i * n + a].value() == orbitals[i * n + b].value())
    };
    if (0..n).any(|a| (a + 1..n).any(|b| same(a, b))) {
        return SignedLog::zero();
    }
    signed_logdet(orbitals, n)
}

/// Signed log-sum-exp of `sum_k w_k psi_k`. Exact cancellation gives zero.
pub fn ensemble<S: Real>(weights: &[S], components: &[SignedLog<S>]) -> Result<SignedLog<S>> {
    if weights.len() != components.len() || weights.is_empty() {
        return Err(Error::Shape(alloc::format!(
            "{} ensemble weights for {} components",
            weights.len(),
            components.len()
        )));
    }
    let max = components
        .iter()
        .filter(|c| c.sign != 0)
        .map(|c| c.log_abs.value())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(SignedLog::zero());
    }
    let terms: Vec<S> = weights
        .iter()
        .zip(components)
        .filter(|(_, c)| c.sign != 0)
        .map(|(&w, c)| (w * (c.log_abs - S::constant(max)).exp()).scale(f64::from(c.sign)))
        .collect();
    let total = SignedLog::from_value(S::sum(&terms));
    if total.sign == 0 {
        return Ok(total);
    }
    Ok(SignedLog {
        sign: total.sign,
        log_abs: total.log_abs + S::constant(max),
    })
}

/// A wavefunction with an explicit flat parameter vector.
pub trait Model: Sync {
    fn n_params(&self) -> usize;

    /// `log|psi|` and sign at `x` under parameters `theta`.
    fn log_psi<S: Real, P: Param<S>>(&self, theta: &[P], x: &[S]) -> Result<SignedLog<S>>;

    /// Restores constraints on `theta` after an update.
    fn project(&self, _theta: &mut [f64]) {}
}

/// A model with fixed parameters, seen as a function of `x` only.
#[derive(Clone, Copy, Debug)]
pub struct Bound<'a, M> {
    pub model: &'a M,
    pub theta: &'a [f64],
}

impl<M: Model> LogPsi for Bound<'_, M> {
    fn log_psi<S: Real>(&self, x: &[S]) -> Result<SignedLog<S>> {
        self.model.log_psi::<S, f64>(self.theta, x)
    }
}

/// `log|psi(x)|` together with its gradient in the parameters.
pub fn param_gradient<M: Model>(
    model: &M,
    theta: &[f64],
    x: &[f64],
) -> Result<(SignedLog, Vec<f64>)> {
    let tape = Tape::with_capacity(2 * theta.len(), 8 * theta.len());
    let vars: Vec<Var<'_>> = theta.iter().map(|&t| tape.var(t)).collect();
    let xs: Vec<Var<'_>> = x.iter().map(|&v| Var::constant_var(v)).collect();
    let out = model.log_psi::<Var<'_>, Var<'_>>(&vars, &xs)?;
    if out.sign == 0 {
        return Err(Error::NodeEvaluation);
    }
    let grad = tape.gradient(out.log_abs).wrt_all(&vars);
    Ok((out.detach(), grad))
}

/// A neural wavefunction of one [`AnsatzKind`] for one system.
#[derive(Clone, Debug)]
pub struct Wavefunction {
    pub kind: AnsatzKind,
    pub spec: SystemSpec,
    pub layout: NetLayout,
}

impl Wavefunction {
    pub fn new(kind: AnsatzKind, spec: SystemSpec, config: &NetConfig) -> Result<Self> {
        let layout = NetLayout::new(kind, &spec, config)?;
        Ok(Self { kind, spec, layout })
    }

    pub fn init_params(&self, seed: u64) -> NetParams {
        self.layout.init_params(&self.spec, seed)
    }

    pub fn evaluate(&self, params: &NetParams, x: &[f64]) -> Result<SignedLog> {
        self.log_psi::<f64, f64>(&params.data, x)
    }

    pub fn bind<'a>(&'a self, theta: &'a [f64]) -> Bound<'a, Self> {
        Bound { model: self, theta }
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        self.spec.blocks().collect()
    }

    fn member<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        k: usize,
        geo: &Geometry<S>,
    ) -> Result<SignedLog<S>> {
        let net = &self.layout;
        let interacting = self.kind != AnsatzKind::SlaterSingle;
        let emb = net.forward(theta, geo, interacting)?;
        let blocks = self.blocks();
        let n = emb.n;

        if self.kind.is_determinant() {
            let orb = net
                .head_orbitals(theta, k, &emb, geo)
                .expect("orbital head");
            let mut out = SignedLog::one();
            for r in &blocks {
                let sub: Vec<S> = r
                    .clone()
                    .flat_map(|i| r.clone().map(move |j| (i, j)))
                    .map(|(i, j)| orb[i * n + j])
                    .collect();
                out = out * psi_fermi(&sub, r.len());
            }
            return Ok(out);
        }

        let phi_b = net.head_phi_b(theta, k, &emb, geo);
        let phi_a = net.head_phi_a(theta, k, &emb, geo);
        let pair = match self.kind {
            AnsatzKind::PairGeneric => net.generic_pair_matrix(theta, k, &emb),
            AnsatzKind::Han => net.han_pair_matrix(theta, k, geo),
            _ => None,
        };
        let sub_matrix = |m: &[S], r: &Range<usize>| -> Vec<S> {
            r.clone()
                .flat_map(|i| r.clone().map(move |j| (i, j)))
                .map(|(i, j)| m[i * n + j])
                .collect()
        };

        let mut out = SignedLog::one();
        for r in &blocks {
            if r.len() == 1 {
                out = out * SignedLog::from_value(phi_b[r.start]);
                continue;
            }
            let part = match self.kind {
                AnsatzKind::PairPrime => psi_pair_prime(&phi_b[r.clone()]),
                AnsatzKind::PairDouble => {
                    let a = phi_a.as_ref().expect("phi_a head");
                    psi_pair_double(&a[r.clone()], &phi_b[r.clone()])
                }
                AnsatzKind::PairGeneric => {
                    antisymmetrize_pair(&sub_matrix(pair.as_ref().expect("pair net"), r), r.len())
                }
                AnsatzKind::Han => psi_han(
                    &sub_matrix(pair.as_ref().expect("pair net"), r),
                    r.len(),
                    S::constant(1.0),
                ),
                AnsatzKind::SlaterSingle | AnsatzKind::Fermi => unreachable!(),
            };
            out = out * part;
        }
        if self.kind == AnsatzKind::Han {
            let phi_c = net.head_phi_c(theta, k, &emb).expect("phi_c head");
            out = out * SignedLog::from_value(phi_c);
        }
        let paired = blocks
            .iter()
            .filter(|r| r.len() > 1)
            .flat_map(|r| r.clone());
        if let Some(log_env) = net.log_sym_envelope(theta, k, geo, paired) {
            out = out
                * SignedLog {
                    sign: 1,
                    log_abs: log_env,
                };
        }
        Ok(out)
    }
}

impl Model for Wavefunction {
    fn n_params(&self) -> usize {
        self.layout.n_params()
    }

    fn log_psi<S: Real, P: Param<S>>(&self, theta: &[P], x: &[S]) -> Result<SignedLog<S>> {
        if theta.len() != self.layout.n_params() {
            return Err(Error::Shape(alloc::format!(
                "{} parameters supplied, model has {}",
                theta.len(),
                self.layout.n_params()
            )));
        }
        let geo = Geometry::new(x, &self.spec)?;
        let k_total = self.layout.config.ensemble;
        if k_total == 1 {
            return self.member(theta, 0, &geo);
        }
        let mut comps = Vec::with_capacity(k_total);
        let mut weights = Vec::with_capacity(k_total);
        for k in 0..k_total {
            comps.push(self.member(theta, k, &geo)?);
            weights.push(self.layout.ensemble_weight(theta, k));
        }
        ensemble(&weights, &comps)
    }

    fn project(&self, theta: &mut [f64]) {
        self.layout.project(theta);
    }
}
