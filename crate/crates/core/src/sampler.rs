//! Random-walk Metropolis sampling of `|psi|²`.
//!
//! Each walker draws from its own counter-based stream, addressed by
//! `(seed, walker, sweep)`, so results do not depend on evaluation order or
//! thread count.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ansatz::{Bound, Model};
use crate::error::{Error, Result};
use crate::hamiltonian::{min_distance, SystemSpec, MIN_DISTANCE};
use crate::math::{LogPsi, Tensor};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McmcConfig {
    pub steps_per_iter: usize,
    /// Standard deviation of the Gaussian proposal, in Bohr.
    pub move_width: f64,
    /// Sweeps discarded before training starts.
    pub burn_in: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            steps_per_iter: 10,
            move_width: 0.02,
            burn_in: 1000,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.move_width > 0.0) || !self.move_width.is_finite() {
            return Err(Error::InvalidConfig("move width must be positive".into()));
        }
        if self.steps_per_iter == 0 {
            return Err(Error::InvalidConfig(
                "steps per iteration must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `log p(x) = 2 log|psi(x)|`, or `None` where the walker may not go.
pub trait LogProb: Sync {
    fn log_prob(&self, x: &[f64]) -> Option<f64>;
}

impl<F: Fn(&[f64]) -> Option<f64> + Sync> LogProb for F {
    fn log_prob(&self, x: &[f64]) -> Option<f64> {
        self(x)
    }
}

/// `|psi|²` of a model at fixed parameters. Nodes and near-coincident
/// particles are excluded.
pub struct ModelDensity<'a, M> {
    psi: Bound<'a, M>,
    spec: &'a SystemSpec,
}

impl<'a, M: Model> ModelDensity<'a, M> {
    pub fn new(model: &'a M, theta: &'a [f64], spec: &'a SystemSpec) -> Self {
        Self {
            psi: Bound { model, theta },
            spec,
        }
    }
}

impl<M: Model> LogProb for ModelDensity<'_, M> {
    fn log_prob(&self, x: &[f64]) -> Option<f64> {
        if min_distance(x, self.spec) < MIN_DISTANCE {
            return None;
        }
        let v = self.psi.log_psi::<f64>(x).ok()?;
        (v.sign != 0 && v.log_abs.is_finite()).then_some(2.0 * v.log_abs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkerEnsemble {
    /// `[B, dN]`
    pub positions: Tensor,
    /// cached `2 log|psi|` per walker
    pub log_prob: Vec<f64>,
    pub seed: u64,
    /// Number of sweeps performed; addresses the random streams.
    pub sweep: u64,
}

/// Stream for one walker during one sweep.
pub fn walker_rng(seed: u64, walker: usize, sweep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walker as u64);
    rng.set_word_pos(u128::from(sweep) << 20);
    rng
}

// word offsets are 2^20 per sweep; the block counter allows 2^48 sweeps
const INIT_SWEEP: u64 = 1 << 47;

/// Electrons sit at Gaussian offsets around nuclei, assigned round-robin
/// with each nucleus repeated `round(Z)` times.
pub fn init_walkers(spec: &SystemSpec, batch: usize, seed: u64) -> Result<WalkerEnsemble> {
    if batch == 0 {
        return Err(Error::InvalidConfig(
            "at least one walker is required".into(),
        ));
    }
    spec.validate()?;
    let d = spec.dim;
    let n = spec.n_electrons();
    let mut slots = Vec::new();
    for (m, nuc) in spec.nuclei.iter().enumerate() {
        let reps = libm::round(nuc.charge).max(1.0) as usize;
        slots.extend(core::iter::repeat_n(m, reps));
    }
    let mut data = Vec::with_capacity(batch * n * d);
    for w in 0..batch {
        let mut rng = walker_rng(seed, w, INIT_SWEEP);
        for e in 0..n {
            let centre = &spec.nuclei[slots[e % slots.len()]].position;
            for c in centre.iter().take(d) {
                let z: f64 = rng.sample(StandardNormal);
                data.push(c + z);
            }
        }
    }
    Ok(WalkerEnsemble {
        positions: Tensor::new(alloc::vec![batch, n * d], data)?,
        log_prob: alloc::vec![f64::NAN; batch],
        seed,
        sweep: 0,
    })
}

impl WalkerEnsemble {
    pub fn batch(&self) -> usize {
        self.positions.shape()[0]
    }

    pub fn walker(&self, w: usize) -> &[f64] {
        self.positions.row(w)
    }

    /// Recomputes the cached log-probabilities. Walkers on a node are nudged
    /// with small deterministic kicks until they leave it.
    pub fn refresh(&mut self, target: &impl LogProb) -> Result<()> {
        let b = self.batch();
        let seed = self.seed;
        let results = par::map_indexed(b, |w| {
            let mut x = self.walker(w).to_vec();
            if let Some(lp) = target.log_prob(&x) {
                return Some((x, lp));
            }
            let mut rng = walker_rng(seed, w, INIT_SWEEP - 1);
            for _ in 0..1000 {
                for v in &mut x {
                    *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
                }
                if let Some(lp) = target.log_prob(&x) {
                    return Some((x, lp));
                }
            }
            None
        });
        for (w, r) in results.into_iter().enumerate() {
            let (x, lp) = r.ok_or(Error::NonFiniteEnergy { walker: w })?;
            self.positions.data_mut()[w * x.len()..(w + 1) * x.len()].copy_from_slice(&x);
            self.log_prob[w] = lp;
        }
        Ok(())
    }
}

/// `steps` Metropolis steps for every walker with all-electron Gaussian
/// proposals. Proposals where the target is undefined are rejected.
/// Returns the acceptance rate over all walkers and steps.
pub fn metropolis_sweep(ens: &mut WalkerEnsemble, target: &impl LogProb, cfg: &McmcConfig) -> f64 {
    let b = ens.batch();
    let dn = ens.positions.shape()[1];
    let (seed, sweep) = (ens.seed, ens.sweep);
    let results = par::map_indexed(b, |w| {
        let mut rng = walker_rng(seed, w, sweep);
        let mut x = ens.walker(w).to_vec();
        let mut lp = ens.log_prob[w];
        let mut prop = alloc::vec![0.0; dn];
        let mut accepted = 0usize;
        for _ in 0..cfg.steps_per_iter {
            for (p, &xi) in prop.iter_mut().zip(&x) {
                let z: f64 = rng.sample(StandardNormal);
                *p = xi + cfg.move_width * z;
            }
            let u: f64 = rng.random();
            if let Some(lp_new) = target.log_prob(&prop) {
                if u < libm::exp(lp_new - lp) {
                    core::mem::swap(&mut x, &mut prop);
                    lp = lp_new;
                    accepted += 1;
                }
            }
        }
        (x, lp, accepted)
    });
    let mut accepted = 0usize;
    for (w, (x, lp, a)) in results.into_iter().enumerate() {
        debug_assert!(lp.is_finite(), "walker {w} left the support");
        ens.positions.data_mut()[w * dn..(w + 1) * dn].copy_from_slice(&x);
        ens.log_prob[w] = lp;
        accepted += a;
    }
    ens.sweep += 1;
    accepted as f64 / (b * cfg.steps_per_iter) as f64
}
