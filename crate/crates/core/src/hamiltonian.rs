//! Atomic-unit Hamiltonians and the local energy estimator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::math::{log_derivatives, LogPsi};

/// Distances below this are treated as coincident particles.
pub const MIN_DISTANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Potential {
    /// Electron-electron repulsion, electron-nucleus attraction and
    /// nucleus-nucleus repulsion.
    Coulomb,
    /// Non-interacting electrons in `0.5 * omega² * |x|²` about the origin.
    Harmonic { omega: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Nucleus {
    pub charge: f64,
    pub position: Vec<f64>,
}

/// Particles and external potential. For harmonic traps the nuclei act only
/// as envelope centres; the potential ignores them.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub dim: usize,
    pub nuclei: Vec<Nucleus>,
    pub n_up: usize,
    pub n_down: usize,
    pub potential: Potential,
}

impl SystemSpec {
    /// Single atom of charge `z` at the origin in 3D.
    pub fn atom(z: f64, n_up: usize, n_down: usize) -> Self {
        Self {
            dim: 3,
            nuclei: vec![Nucleus {
                charge: z,
                position: vec![0.0; 3],
            }],
            n_up,
            n_down,
            potential: Potential::Coulomb,
        }
    }

    pub fn hydrogen() -> Self {
        Self::atom(1.0, 1, 0)
    }

    pub fn lithium() -> Self {
        Self::atom(3.0, 2, 1)
    }

    pub fn beryllium() -> Self {
        Self::atom(4.0, 2, 2)
    }

    /// Isotropic trap centred at the origin.
    pub fn harmonic(dim: usize, omega: f64, n_up: usize, n_down: usize) -> Self {
        Self {
            dim,
            nuclei: vec![Nucleus {
                charge: 1.0,
                position: vec![0.0; dim],
            }],
            n_up,
            n_down,
            potential: Potential::Harmonic { omega },
        }
    }

    pub fn n_electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn n_coords(&self) -> usize {
        self.dim * self.n_electrons()
    }

    /// Spin blocks as electron index ranges; empty blocks are omitted.
    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> {
        let n = self.n_electrons();
        [0..self.n_up, self.n_up..n]
            .into_iter()
            .filter(|r| !r.is_empty())
    }

    pub fn spin_of(&self, electron: usize) -> usize {
        usize::from(electron >= self.n_up)
    }

    /// Whether distance features should be smooth (squared). Harmonic traps
    /// have no Coulomb cusps, and a kink in `|x|` would hide a delta function
    /// from the pointwise kinetic energy.
    pub fn smooth_features(&self) -> bool {
        matches!(self.potential, Potential::Harmonic { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidSystem(format!(
                "dimension must be 1, 2 or 3 (got {})",
                self.dim
            )));
        }
        if self.n_electrons() == 0 {
            return Err(Error::InvalidSystem("no electrons".into()));
        }
        if self.nuclei.is_empty() {
            return Err(Error::InvalidSystem(
                "at least one nucleus (or trap centre) is required".into(),
            ));
        }
        for (i, n) in self.nuclei.iter().enumerate() {
            if !(n.charge > 0.0 && n.charge.is_finite()) {
                return Err(Error::InvalidSystem(format!(
                    "nucleus {i} has non-positive charge {}",
                    n.charge
                )));
            }
            if n.position.len() != self.dim || !n.position.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidSystem(format!(
                    "nucleus {i} position must have {} finite coordinates",
                    self.dim
                )));
            }
        }
        if let Potential::Harmonic { omega } = self.potential {
            if !(omega > 0.0 && omega.is_finite()) {
                return Err(Error::InvalidSystem(format!(
                    "trap frequency {omega} must be positive"
                )));
            }
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
}

fn checked_inverse(r: f64) -> Result<f64> {
    if r < MIN_DISTANCE {
        Err(Error::SingularConfiguration { distance: r })
    } else {
        Ok(1.0 / r)
    }
}

/// Smallest electron-electron or electron-nucleus distance.
pub fn min_distance(x: &[f64], spec: &SystemSpec) -> f64 {
    let d = spec.dim;
    let n = spec.n_electrons();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for j in i + 1..n {
            best = best.min(distance(xi, &x[j * d..(j + 1) * d]));
        }
        if spec.potential == Potential::Coulomb {
            for nuc in &spec.nuclei {
                best = best.min(distance(xi, &nuc.position));
            }
        }
    }
    best
}

pub fn potential_energy(x: &[f64], spec: &SystemSpec) -> Result<f64> {
    let d = spec.dim;
    let n = spec.n_electrons();
    if x.len() != spec.n_coords() {
        return Err(Error::Shape(format!(
            "configuration has {} coordinates, system needs {}",
            x.len(),
            spec.n_coords()
        )));
    }
    match spec.potential {
        Potential::Harmonic { omega } => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Ok(0.5 * omega * omega * r2)
        }
        Potential::Coulomb => {
            let mut v = 0.0;
            for i in 0..n {
                let xi = &x[i * d..(i + 1) * d];
                for j in i + 1..n {
                    v += checked_inverse(distance(xi, &x[j * d..(j + 1) * d]))?;
                }
                for nuc in &spec.nuclei {
                    v -= nuc.charge * checked_inverse(distance(xi, &nuc.position))?;
                }
            }
            for (a, na) in spec.nuclei.iter().enumerate() {
                for nb in &spec.nuclei[a + 1..] {
                    v += na.charge
                        * nb.charge
                        * checked_inverse(distance(&na.position, &nb.position))?;
                }
            }
            Ok(v)
        }
    }
}

/// One local energy evaluation, in Hartree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalEnergySample {
    pub e_local: f64,
    pub kinetic: f64,
    pub potential: f64,
}

/// `E_L = -0.5 (lap log|psi| + |grad log|psi||²) + V`.
pub fn local_energy<F: LogPsi>(psi: &F, x: &[f64], spec: &SystemSpec) -> Result<LocalEnergySample> {
    let potential = potential_energy(x, spec)?;
    let ld = log_derivatives(psi, x)?;
    let g2: f64 = ld.grad.iter().map(|g| g * g).sum();
    let kinetic = -0.5 * (ld.laplacian + g2);
    let e_local = kinetic + potential;
    if !e_local.is_finite() {
        return Err(Error::NonFinite("local energy"));
    }
    Ok(LocalEnergySample {
        e_local,
        kinetic,
        potential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Real, SignedLog};

    #[test]
    fn single_electron_coulomb() {
        let spec = SystemSpec::hydrogen();
        let v = potential_energy(&[0.0, 1.0, 0.0], &spec).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        assert!(matches!(
            potential_energy(&[0.0, 0.0, 0.0], &spec),
            Err(Error::SingularConfiguration { .. })
        ));
    }

    #[test]
    fn harmonic_potential() {
        let spec = SystemSpec::harmonic(1, 1.0, 1, 0);
        assert_eq!(potential_energy(&[2.0], &spec).unwrap(), 2.0);
    }

    #[test]
    fn lithium_matches_hand_sum() {
        let spec = SystemSpec::lithium();
        let x = [0.3, -0.2, 0.9, -1.1, 0.4, 0.05, 0.7, 1.3, -0.6];
        let e = |i: usize| [x[3 * i], x[3 * i + 1], x[3 * i + 2]];
        let r = |a: [f64; 3], b: [f64; 3]| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        };
        let o = [0.0; 3];
        let oracle = 1.0 / r(e(0), e(1)) + 1.0 / r(e(0), e(2)) + 1.0 / r(e(1), e(2))
            - 3.0 / r(e(0), o)
            - 3.0 / r(e(1), o)
            - 3.0 / r(e(2), o);
        let v = potential_energy(&x, &spec).unwrap();
        assert!(((v - oracle) / oracle).abs() < 1e-12);
    }

    #[test]
    fn nuclear_repulsion_included() {
        let mut spec = SystemSpec::atom(1.0, 1, 0);
        spec.nuclei.push(Nucleus {
            charge: 1.0,
            position: vec![0.0, 0.0, 1.4],
        });
        let v = potential_energy(&[0.0, 0.0, 0.7], &spec).unwrap();
        assert!((v - (1.0 / 1.4 - 2.0 / 0.7)).abs() < 1e-14);
    }

    #[test]
    fn validation() {
        assert!(SystemSpec::lithium().validate().is_ok());
        let mut bad = SystemSpec::hydrogen();
        bad.nuclei[0].charge = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = SystemSpec::hydrogen();
        bad.dim = 4;
        assert!(bad.validate().is_err());
        assert!(SystemSpec::atom(1.0, 0, 0).validate().is_err());
    }

    struct Hydrogen1s;
    impl LogPsi for Hydrogen1s {
        fn log_psi<S: Real>(&self, x: &[S]) -> Result<SignedLog<S>> {
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            Ok(SignedLog {
                sign: 1,
                log_abs: -r,
            })
        }
    }

    #[test]
    fn hydrogen_ground_state_local_energy() {
        let spec = SystemSpec::hydrogen();
        for x in [[0.3, 0.4, -1.2], [2.0, -1.0, 0.5], [0.01, 0.02, 0.0]] {
            let e = local_energy(&Hydrogen1s, &x, &spec).unwrap();
            assert!((e.e_local + 0.5).abs() < 1e-10, "{e:?}");
            assert_eq!(e.e_local, e.kinetic + e.potential);
        }
    }
}
