//! Property and oracle suites behind `pairvmc check`.

use std::fmt;
use std::str::FromStr;

use pairvmc_core::ansatz::{psi_pair_double, psi_pair_prime, Model};
use pairvmc_core::math::{log_derivatives, LogPsi};
use pairvmc_core::net::NetConfig;
use pairvmc_core::oracle::{
    brute_antisymmetrize, construct_phib_ordered, construct_phib_single, continuity_probe,
    pair_prime_value, sign_product_obstruction, squared_pair_product, vandermonde_logdet,
    PermutationRecord, RandomPairNet, SymmetricFactor, ToyAntisymmetricFunction,
};
use pairvmc_core::perm::{parity, permute_electrons, Permutations};
use pairvmc_core::{AnsatzKind, SystemSpec, Wavefunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

/// One reported property.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest observed error in the property's own metric.
    pub max_error: f64,
    pub tolerance: f64,
    pub note: String,
}

impl CheckResult {
    fn within(
        name: impl Into<String>,
        max_error: f64,
        tolerance: f64,
        note: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed: max_error <= tolerance,
            max_error,
            tolerance,
            note: note.into(),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: max error {:.3e} (tolerance {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.tolerance
        )?;
        if !self.note.is_empty() {
            write!(f, "; {}", self.note)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    All,
    Antisymmetry,
    Universality,
    Obstruction,
    Gradients,
}

impl FromStr for Suite {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "all" => Suite::All,
            "antisymmetry" => Suite::Antisymmetry,
            "universality" => Suite::Universality,
            "obstruction" => Suite::Obstruction,
            "gradients" => Suite::Gradients,
            _ => {
                return Err(CliError::Config(format!(
                    "unknown suite '{s}' (expected all, antisymmetry, universality, obstruction, gradients)"
                )))
            }
        })
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    if matches!(suite, Suite::All | Suite::Antisymmetry) {
        out.extend(antisymmetry(&AnsatzKind::ALL, 2..=5, seed));
        out.push(vandermonde(1000, seed));
        out.push(degeneration(1000, seed));
        out.push(brute_force_fixed_point(200, seed));
    }
    if matches!(suite, Suite::All | Suite::Universality) {
        out.extend(single_construction(1000, seed));
        out.extend(ordered_construction(1000, seed));
    }
    if matches!(suite, Suite::All | Suite::Obstruction) {
        out.extend(obstruction(100_000, seed));
    }
    if matches!(suite, Suite::All | Suite::Gradients) {
        out.extend(gradients(&AnsatzKind::ALL, 100, seed));
    }
    out
}

/// Small networks keep the exhaustive checks fast; the constructions do not
/// depend on width.
pub fn check_net() -> NetConfig {
    NetConfig {
        layers: 2,
        one_width: 8,
        two_width: 4,
        pair_width: 5,
        ensemble: 1,
    }
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, half: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-half..half)).collect()
}

/// Initialised parameters with every entry, biases included, perturbed.
fn random_params(wf: &Wavefunction, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut theta = wf.init_params(rng.random()).data;
    for t in &mut theta {
        *t += rng.random_range(-0.2..0.2);
    }
    wf.project(&mut theta);
    theta
}

/// Every permutation of `n` same-spin electrons, for each kind and each `n`:
/// the sign must follow the parity and `log|psi|` must be unchanged.
pub fn antisymmetry(
    kinds: &[AnsatzKind],
    ns: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &kind in kinds {
        let mut worst = 0.0f64;
        let mut evaluated = 0usize;
        for n in ns.clone() {
            let spec = SystemSpec::atom(n as f64, n, 0);
            let wf = Wavefunction::new(kind, spec, &check_net()).expect("valid layout");
            let theta = random_params(&wf, &mut rng);
            for _ in 0..2 {
                let x = uniform(&mut rng, 3 * n, 1.5);
                let base = wf.log_psi::<f64, f64>(&theta, &x).expect("finite");
                for p in Permutations::new(n) {
                    let y = wf
                        .log_psi::<f64, f64>(&theta, &permute_electrons(&x, 3, &p))
                        .expect("finite");
                    evaluated += 1;
                    let err = if y.sign != parity(&p) * base.sign || base.sign == 0 {
                        f64::INFINITY
                    } else {
                        (y.log_abs - base.log_abs).abs()
                    };
                    worst = worst.max(err);
                }
            }
        }
        out.push(CheckResult::within(
            format!("antisymmetry {kind} N={}..{}", ns.start(), ns.end()),
            worst,
            1e-10,
            format!("{evaluated} permuted evaluations, log|psi| difference"),
        ));
    }
    out
}

/// Relative difference of two signed-log values in the linear domain.
fn signed_log_rel(a: pairvmc_core::SignedLog, b: pairvmc_core::SignedLog) -> f64 {
    if a.sign != b.sign {
        return f64::INFINITY;
    }
    if a.sign == 0 {
        return 0.0;
    }
    (a.log_abs - b.log_abs).exp_m1().abs()
}

/// Pair product against the explicit Vandermonde determinant.
pub fn vandermonde(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(2..=8);
        let phi = uniform(&mut rng, n, 3.0);
        worst = worst.max(signed_log_rel(
            psi_pair_prime(&phi),
            vandermonde_logdet(&phi),
        ));
    }
    CheckResult::within(
        "vandermonde determinant",
        worst,
        1e-9,
        format!("{cases} vectors, N<=8"),
    )
}

/// The two-head pair product with `phi_A = 1` must reproduce the one-head
/// product exactly.
pub fn degeneration(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xde);
    let mut mismatches = 0usize;
    for _ in 0..cases {
        let n = rng.random_range(1..=8);
        let b = uniform(&mut rng, n, 3.0);
        let ones = vec![1.0; n];
        let p = psi_pair_prime(&b);
        let d = psi_pair_double(&ones, &b);
        if p.sign != d.sign || p.log_abs.to_bits() != d.log_abs.to_bits() {
            mismatches += 1;
        }
    }
    CheckResult::within(
        "degeneration phi_A=1 (bitwise)",
        mismatches as f64,
        0.0,
        format!("{mismatches} of {cases} differ"),
    )
}

/// The pair product is its own antisymmetric projection.
pub fn brute_force_fixed_point(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb7);
    let phi = |v: f64| v * v * v + 0.5 * v - 0.3;
    let f = |y: &[f64]| pair_prime_value(&y.iter().map(|&v| phi(v)).collect::<Vec<_>>());
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(2..=5);
        let x = uniform(&mut rng, n, 2.0);
        let direct = f(&x);
        let brute = brute_antisymmetrize(f, &x, n, 1).expect("n <= 8");
        if direct != 0.0 {
            worst = worst.max((brute - direct).abs() / direct.abs());
        }
    }
    CheckResult::within(
        "brute-force antisymmetrizer fixed point",
        worst,
        1e-10,
        format!("{cases} points, N<=5"),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn toys(n: usize) -> Vec<(String, ToyAntisymmetricFunction)> {
    let mut v = vec![(
        format!("vandermonde N={n}"),
        ToyAntisymmetricFunction::vandermonde(n),
    )];
    if n == 2 {
        v.push(("x1-x2".into(), ToyAntisymmetricFunction::difference()));
    }
    v
}

/// Reconstruction of each toy from the single-electron construction, and
/// continuity of that construction across ordering-cell boundaries.
pub fn single_construction(points: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x75);
    let mut out = Vec::new();
    for n in 2..=4 {
        for (label, toy) in toys(n) {
            let mut worst = 0.0f64;
            for _ in 0..points {
                let x = uniform(&mut rng, n, 2.0);
                worst = worst.max(rel(
                    pair_prime_value(&construct_phib_single(&toy, &x)),
                    toy.eval(&x),
                ));
            }
            out.push(CheckResult::within(
                format!("single-phi reconstruction {label}"),
                worst,
                1e-9,
                format!("{points} points"),
            ));
        }
    }
    for n in 2..=4 {
        let toy = ToyAntisymmetricFunction::vandermonde(n);
        let r = continuity_probe(&toy, 2000, 1e-4, 2.0, seed);
        out.push(CheckResult {
            name: format!("single-phi boundary continuity |dphi| <= L|dx| + 1e-6, N={n}"),
            passed: r.worst_excess <= 0.0,
            max_error: r.worst_excess.max(0.0),
            tolerance: 0.0,
            note: format!(
                "L = {:.3}, worst jump {:.3e} at |dx| = {:.3e}",
                r.lipschitz, r.worst_jump, r.worst_step
            ),
        });
    }
    for n in 3..=4 {
        // the jump shrinks like |dx|^(2/(N(N-1))); the ratio must stay bounded
        let toy = ToyAntisymmetricFunction::vandermonde(n);
        let coarse = continuity_probe(&toy, 2000, 1e-4, 2.0, seed);
        let fine = continuity_probe(&toy, 2000, 1e-8, 2.0, seed);
        let growth = fine.holder_ratio / coarse.holder_ratio.max(f64::MIN_POSITIVE);
        out.push(CheckResult::within(
            format!("single-phi boundary continuity, Holder exponent 2/(N(N-1)), N={n}"),
            growth,
            2.0,
            format!(
                "ratio {:.3} at |dx|<=1e-4, {:.3} at |dx|<=1e-8",
                coarse.holder_ratio, fine.holder_ratio
            ),
        ));
    }
    out
}

/// Reconstruction for every fixed ordering, with a plain and a
/// sign-changing symmetric factor.
pub fn ordered_construction(points: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1);
    let mut out = Vec::new();
    for n in 2..=4 {
        let factors = [
            ("gaussian", SymmetricFactor::Gaussian),
            ("excited", SymmetricFactor::ExcitedGaussian { radius: 1.0 }),
        ];
        for (label, factor) in factors {
            let toy = ToyAntisymmetricFunction::new(n, 1.0, factor).expect("antisymmetric toy");
            let mut worst = 0.0f64;
            let mut perms = 0;
            for p in Permutations::new(n) {
                let pi = PermutationRecord::new(p).expect("permutation");
                perms += 1;
                for _ in 0..points {
                    let x = uniform(&mut rng, n, 2.0);
                    let phi = construct_phib_ordered(&toy, &x, &pi).expect("n >= 2");
                    worst = worst.max(rel(pair_prime_value(&phi), toy.eval(&x)));
                }
            }
            out.push(CheckResult::within(
                format!("ordered-phi reconstruction {label} N={n}"),
                worst,
                1e-9,
                format!("{perms} orderings x {points} points"),
            ));
        }
    }
    out
}

/// The four-point product of three-electron pair antisymmetrizations is a
/// product of squares, hence never negative.
pub fn obstruction(draws: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b);
    let mut min = f64::INFINITY;
    let mut worst_identity = 0.0f64;
    for _ in 0..draws {
        let net = RandomPairNet::new(3, 8, &mut rng);
        let pts: [[f64; 3]; 4] =
            std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
        let phi = |y: &[f64; 3], z: &[f64; 3]| net.eval(y, z);
        let v = sign_product_obstruction(phi, &pts);
        min = min.min(v);
        worst_identity = worst_identity.max(rel(v, squared_pair_product(phi, &pts)));
    }
    let poly = |y: &f64, z: &f64| y * z * z;
    let pts = [0.0, 1.0, 2.0, 3.0];
    let hand = rel(
        sign_product_obstruction(poly, &pts),
        squared_pair_product(poly, &pts),
    );
    vec![
        CheckResult {
            name: "sign-product obstruction >= 0".into(),
            passed: min >= -1e-12,
            max_error: (-min).max(0.0),
            tolerance: 1e-12,
            note: format!("{draws} draws, smallest product {min:.3e}"),
        },
        CheckResult::within(
            "sign product equals product of squared pair differences",
            worst_identity.max(hand),
            1e-9,
            format!("random nets and phi(y,z) = y z^2 (hand case {hand:.1e})"),
        ),
    ]
}

/// Five-point central differences along coordinate `k`: first and second
/// derivative.
fn five_point(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> (f64, f64) {
    let at = |t: f64| {
        let mut y = x.to_vec();
        y[k] += t;
        f(&y)
    };
    let (m2, m1, z, p1, p2) = (at(-2.0 * h), at(-h), at(0.0), at(h), at(2.0 * h));
    (
        (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h),
        (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * h * h),
    )
}

/// Automatic gradient and Laplacian of `log|psi|` against finite
/// differences on a 2-up/1-down atom. Points where `|grad| >= 20` sit next
/// to a node, where differences lose their accuracy, and are redrawn.
pub fn gradients(kinds: &[AnsatzKind], configs: usize, seed: u64) -> Vec<CheckResult> {
    let spec = SystemSpec::atom(3.0, 2, 1);
    let mut out = Vec::new();
    for &kind in kinds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((kind as u64 + 1) * 0x9e37));
        let wf = Wavefunction::new(kind, spec.clone(), &check_net()).expect("valid layout");
        let theta = random_params(&wf, &mut rng);
        let psi = wf.bind(&theta);
        let f = |y: &[f64]| psi.log_psi::<f64>(y).map(|v| v.log_abs).unwrap_or(f64::NAN);
        let (mut worst_g, mut worst_l) = (0.0f64, 0.0f64);
        let mut done = 0;
        while done < configs {
            let x = uniform(&mut rng, spec.n_coords(), 1.2);
            let Ok(ld) = log_derivatives(&psi, &x) else {
                continue;
            };
            if ld.grad.iter().any(|g| g.abs() >= 20.0) {
                continue;
            }
            done += 1;
            let mut lap = 0.0;
            for k in 0..x.len() {
                let (g, g2) = five_point(f, &x, k, 1e-3);
                lap += g2;
                worst_g = worst_g.max((g - ld.grad[k]).abs() / g.abs().max(1e-2));
            }
            worst_l = worst_l.max((lap - ld.laplacian).abs() / lap.abs().max(1.0));
        }
        let note = format!("{configs} configurations");
        out.push(CheckResult::within(
            format!("gradient {kind}"),
            worst_g,
            1e-4,
            note.clone(),
        ));
        out.push(CheckResult::within(
            format!("laplacian {kind}"),
            worst_l,
            1e-4,
            note,
        ));
    }
    out
}
