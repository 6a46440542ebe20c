//! Reference constructions for pairwise antisymmetric products.
//!
//! One-dimensional toy functions whose nodal cells are the coordinate
//! orderings, the sorting permutation into a fixed positive cell, explicit
//! `phi_B` values that make `prod_{i<j}(phi_B(x_j) - phi_B(x_i))` reproduce a
//! given antisymmetric function, and a brute-force antisymmetrizer.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::psi_pair_prime;
use crate::error::{Error, Result};
use crate::math::SignedLog;
use crate::perm::{inverse, is_permutation, parity, permute_electrons, Permutations};

/// Largest electron count accepted by [`brute_antisymmetrize`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// `(1/N!) sum_pi parity(pi) f(x_pi)` for `n` particles in `dim` dimensions.
pub fn brute_antisymmetrize(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    n: usize,
    dim: usize,
) -> Result<f64> {
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeLimit(n));
    }
    if x.len() != n * dim {
        return Err(Error::Shape(alloc::format!(
            "{} coordinates for {n} x {dim}",
            x.len()
        )));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for p in Permutations::new(n) {
        acc += f64::from(parity(&p)) * f(&permute_electrons(x, dim, &p));
        count += 1;
    }
    Ok(acc / count as f64)
}

/// Optional symmetric factor multiplying a toy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SymmetricFactor {
    None,
    /// `exp(-|x|²)`
    Gaussian,
    /// `(|x|² - r²) exp(-|x|²)`: changes sign on a sphere, giving nodes
    /// beyond the coincidence planes.
    ExcitedGaussian {
        radius: f64,
    },
}

/// `orientation * prod_{i<j} (x_j - x_i) * factor(x)` for `n` particles on a
/// line. Away from a sign-changing factor, its nodal cells are the `n!`
/// coordinate orderings.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyAntisymmetricFunction {
    pub n: usize,
    pub orientation: f64,
    pub factor: SymmetricFactor,
}

impl ToyAntisymmetricFunction {
    /// Builds the toy and checks antisymmetry at 100 random points.
    pub fn new(n: usize, orientation: f64, factor: SymmetricFactor) -> Result<Self> {
        if n == 0 || !(orientation == 1.0 || orientation == -1.0) {
            return Err(Error::InvalidConfig(
                "toy needs n >= 1 and orientation ±1".into(),
            ));
        }
        let toy = Self {
            n,
            orientation,
            factor,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0x70_79);
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            let lhs = toy.eval(&permute_electrons(&x, 1, &p));
            let rhs = f64::from(parity(&p)) * toy.eval(&x);
            if (lhs - rhs).abs() > 1e-12 * rhs.abs().max(1e-300) {
                return Err(Error::InvalidConfig("toy is not antisymmetric".into()));
            }
        }
        Ok(toy)
    }

    /// `prod_{i<j} (x_j - x_i) exp(-|x|²)`.
    pub fn vandermonde(n: usize) -> Self {
        Self::new(n, 1.0, SymmetricFactor::Gaussian).expect("valid toy")
    }

    /// `x_1 - x_2`.
    pub fn difference() -> Self {
        Self::new(2, -1.0, SymmetricFactor::None).expect("valid toy")
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.orientation;
        for i in 0..self.n {
            for j in i + 1..self.n {
                v *= x[j] - x[i];
            }
        }
        let r2: f64 = x.iter().map(|a| a * a).sum();
        match self.factor {
            SymmetricFactor::None => v,
            SymmetricFactor::Gaussian => v * libm::exp(-r2),
            SymmetricFactor::ExcitedGaussian { radius } => {
                v * (r2 - radius * radius) * libm::exp(-r2)
            }
        }
    }

    /// The ordering cell containing `x`: indices sorted by decreasing
    /// coordinate. `None` on a coincidence plane.
    pub fn cell(&self, x: &[f64]) -> Option<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
        idx.windows(2).all(|w| x[w[0]] != x[w[1]]).then_some(idx)
    }
}

/// A permutation `pi` with its parity and the 1-based position of every
/// electron after reordering. `x_pi[k] = x[perm[k]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationRecord {
    pub perm: Vec<usize>,
    pub sign: i8,
    pub positions: Vec<usize>,
}

impl PermutationRecord {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        if !is_permutation(&perm) {
            return Err(Error::InvalidConfig("not a permutation".into()));
        }
        let sign = parity(&perm);
        let positions = inverse(&perm).into_iter().map(|k| k + 1).collect();
        Ok(Self {
            perm,
            sign,
            positions,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::new((0..n).collect()).expect("identity is a permutation")
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        permute_electrons(x, 1, &self.perm)
    }
}

/// Sorting permutation into the reference positive cell: the decreasing
/// ordering, with its last two positions exchanged when the toy is negative
/// there. Constant on every ordering cell.
pub fn pi_star(x: &[f64], toy: &ToyAntisymmetricFunction) -> Result<PermutationRecord> {
    if toy.eval(x) == 0.0 {
        return Err(Error::OnNode);
    }
    let mut perm = toy.cell(x).ok_or(Error::OnNode)?;
    let rec = PermutationRecord::new(perm.clone())?;
    if toy.eval(&rec.apply(x)) < 0.0 {
        let n = perm.len();
        perm.swap(n - 2, n - 1);
        return PermutationRecord::new(perm);
    }
    Ok(rec)
}

fn superfactorial_product(n: usize) -> f64 {
    let mut p = 1.0;
    for i in 1..=n {
        for j in i + 1..=n {
            p *= (j - i) as f64;
        }
    }
    p
}

/// `phi_B(x_j) = pi*(x, j) * (Psi(x_pi*) / prod_{i<j}(j - i))^(2 / (N(N-1)))`,
/// and zeros on the node set.
pub fn construct_phib_single(toy: &ToyAntisymmetricFunction, x: &[f64]) -> Vec<f64> {
    let n = toy.n;
    if n == 1 {
        return vec![toy.eval(x)];
    }
    let rec = match pi_star(x, toy) {
        Ok(r) => r,
        Err(_) => return vec![0.0; n],
    };
    let base = toy.eval(&rec.apply(x)) / superfactorial_product(n);
    assert!(base > 0.0, "reference cell must be positive");
    let scale = libm::pow(base, 2.0 / (n * (n - 1)) as f64);
    rec.positions.iter().map(|&p| p as f64 * scale).collect()
}

/// `Lambda = prod_{3<=j<=N} j (j + s) * prod_{3<=i<j<=N} (j - i)`.
pub fn ordered_lambda(n: usize, s: f64) -> f64 {
    let mut lambda = 1.0;
    for j in 3..=n {
        lambda *= j as f64 * (j as f64 + s);
    }
    for i in 3..=n {
        for j in i + 1..=n {
            lambda *= (j - i) as f64;
        }
    }
    lambda
}

/// `phi_B` values for an arbitrary fixed ordering `pi`: position 1 gets
/// `-s c`, position 2 gets `0`, position `j >= 3` gets `j c`, where
/// `s = sign(Psi(x_pi))` and `c = (|Psi(x_pi)| / Lambda)^(2 / (N(N-1)))`.
pub fn construct_phib_ordered(
    toy: &ToyAntisymmetricFunction,
    x: &[f64],
    pi: &PermutationRecord,
) -> Result<Vec<f64>> {
    let n = toy.n;
    if n < 2 || pi.perm.len() != n {
        return Err(Error::InvalidConfig(
            "ordered construction needs N >= 2".into(),
        ));
    }
    let v = toy.eval(&pi.apply(x));
    if v == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let s = v.signum();
    let lambda = ordered_lambda(n, s);
    assert!(lambda > 0.0);
    let c = libm::pow(v.abs() / lambda, 2.0 / (n * (n - 1)) as f64);
    let mut phi = vec![0.0; n];
    for (k, &e) in pi.perm.iter().enumerate() {
        phi[e] = match k {
            0 => -s * c,
            1 => 0.0,
            _ => (k + 1) as f64 * c,
        };
    }
    Ok(phi)
}

/// Double-double number `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const fn new(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Self {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Self {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add(self, o: Self) -> Self {
        let s = Self::two_sum(self.hi, o.hi);
        Self::renorm(s.hi, s.lo + self.lo + o.lo)
    }

    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = libm::fma(self.hi, o.hi, -p);
        Self::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Self::new(q1)).neg());
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Self::new(q2)).neg());
        let q3 = r.hi / o.hi;
        Self::renorm(q1, q2).add(Self::new(q3))
    }
}

/// Signed log-determinant of the Vandermonde matrix with rows
/// `phi^0, ..., phi^(N-1)`. The matrix is built and eliminated (partial
/// pivoting) in double-double arithmetic: Vandermonde matrices are badly
/// conditioned, and plain `f64` elimination loses about `1e-9` relative
/// accuracy by `N = 8`.
pub fn vandermonde_logdet(phi: &[f64]) -> SignedLog {
    let n = phi.len();
    let mut a = vec![Dd::new(0.0); n * n];
    for j in 0..n {
        let mut p = Dd::new(1.0);
        for i in 0..n {
            a[i * n + j] = p;
            p = p.mul(Dd::new(phi[j]));
        }
    }
    let mut sign = 1i8;
    let mut log_abs = 0.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&r, &s| a[r * n + k].hi.abs().total_cmp(&a[s * n + k].hi.abs()))
            .expect("non-empty range");
        if a[p * n + k].hi == 0.0 {
            return SignedLog::zero();
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            sign = -sign;
        }
        let pivot = a[k * n + k];
        if pivot.hi < 0.0 {
            sign = -sign;
        }
        log_abs += libm::log(pivot.hi.abs()) + libm::log1p(pivot.lo / pivot.hi);
        for r in k + 1..n {
            let f = a[r * n + k].div(pivot);
            for c in k + 1..n {
                a[r * n + c] = a[r * n + c].add(f.mul(a[k * n + c]).neg());
            }
        }
    }
    SignedLog { sign, log_abs }
}

/// `A_123 A_124 A_134 A_234` with `A_ijk = a_ij a_ik a_jk` and
/// `a_ij = phi(x_j, x_i) - phi(x_i, x_j)`.
pub fn sign_product_obstruction<T>(phi: impl Fn(&T, &T) -> f64, pts: &[T; 4]) -> f64 {
    let a = |i: usize, j: usize| phi(&pts[j], &pts[i]) - phi(&pts[i], &pts[j]);
    let triple = |i, j, k| a(i, j) * a(i, k) * a(j, k);
    triple(0, 1, 2) * triple(0, 1, 3) * triple(0, 2, 3) * triple(1, 2, 3)
}

/// `prod_{i<j} a_ij²`, the square form of [`sign_product_obstruction`].
pub fn squared_pair_product<T>(phi: impl Fn(&T, &T) -> f64, pts: &[T; 4]) -> f64 {
    let mut p = 1.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let a = phi(&pts[j], &pts[i]) - phi(&pts[i], &pts[j]);
            p *= a * a;
        }
    }
    p
}

/// A random one-hidden-layer tanh network of two `d`-dimensional points.
#[derive(Clone, Debug)]
pub struct RandomPairNet {
    dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
}

impl RandomPairNet {
    pub fn new(dim: usize, width: usize, rng: &mut impl Rng) -> Self {
        let scale = libm::sqrt(3.0 / (2 * dim) as f64);
        Self {
            dim,
            w1: (0..width * 2 * dim)
                .map(|_| rng.random_range(-scale..scale))
                .collect(),
            b1: (0..width).map(|_| rng.random_range(-1.0..1.0)).collect(),
            w2: (0..width).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    pub fn eval(&self, y: &[f64], z: &[f64]) -> f64 {
        let d = self.dim;
        let mut out = 0.0;
        for (h, (&b, &w)) in self.b1.iter().zip(&self.w2).enumerate() {
            let row = &self.w1[h * 2 * d..(h + 1) * 2 * d];
            let mut a = b;
            for c in 0..d {
                a += row[c] * y[c] + row[d + c] * z[c];
            }
            out += w * libm::tanh(a);
        }
        out
    }
}

/// Outcome of probing `phi_B` across ordering-cell boundaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuityReport {
    /// Lipschitz constant of the toy estimated on the sampling box.
    pub lipschitz: f64,
    /// Largest `|dphi| - (L |dx| + 1e-6)` seen; positive means violated.
    pub worst_excess: f64,
    /// `|dphi|` and `|dx|` at the worst pair.
    pub worst_jump: f64,
    pub worst_step: f64,
    /// Largest `|dphi| / |dx|^(2/(N(N-1)))` seen.
    pub holder_ratio: f64,
}

/// Samples pairs `x, x'` with `|x - x'| <= step` on opposite sides of an
/// ordering-cell boundary inside `[-box, box]^N` and compares the jump in the
/// constructed `phi_B` to `L |x - x'| + 1e-6`.
pub fn continuity_probe(
    toy: &ToyAntisymmetricFunction,
    samples: usize,
    step: f64,
    half_box: f64,
    seed: u64,
) -> ContinuityReport {
    let n = toy.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lipschitz = estimate_lipschitz(toy, half_box, &mut rng);
    let exponent = 2.0 / (n * (n - 1)).max(1) as f64;
    let mut report = ContinuityReport {
        lipschitz,
        worst_excess: f64::NEG_INFINITY,
        worst_jump: 0.0,
        worst_step: 0.0,
        holder_ratio: 0.0,
    };
    for _ in 0..samples {
        let mut x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-half_box..half_box))
            .collect();
        // put electrons a and b just either side of each other
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let h = 0.5 * step * rng.random_range(0.01..1.0) / core::f64::consts::SQRT_2;
        let mid = x[a];
        x[a] = mid + h;
        x[b] = mid - h;
        let mut xp = x.clone();
        xp[a] = mid - h;
        xp[b] = mid + h;
        let dx = libm::sqrt(x.iter().zip(&xp).map(|(u, v)| (u - v) * (u - v)).sum());
        let pa = construct_phib_single(toy, &x);
        let pb = construct_phib_single(toy, &xp);
        let jump = pa
            .iter()
            .zip(&pb)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        let excess = jump - (lipschitz * dx + 1e-6);
        if excess > report.worst_excess {
            report.worst_excess = excess;
            report.worst_jump = jump;
            report.worst_step = dx;
        }
        report.holder_ratio = report.holder_ratio.max(jump / libm::pow(dx, exponent));
    }
    report
}

fn estimate_lipschitz(toy: &ToyAntisymmetricFunction, half_box: f64, rng: &mut impl Rng) -> f64 {
    let n = toy.n;
    let h = 1e-6;
    let mut best: f64 = 0.0;
    for _ in 0..4000 {
        let x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-half_box..half_box))
            .collect();
        let mut g2 = 0.0;
        for k in 0..n {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[k] += h;
            lo[k] -= h;
            let d = (toy.eval(&hi) - toy.eval(&lo)) / (2.0 * h);
            g2 += d * d;
        }
        best = best.max(libm::sqrt(g2));
    }
    best
}

/// `psi_pair_prime(phi)` in the linear domain.
pub fn pair_prime_value(phi: &[f64]) -> f64 {
    psi_pair_prime(phi).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn brute_force_examples() {
        let toy = ToyAntisymmetricFunction::vandermonde(3);
        let x = [0.3, -0.7, 1.1];
        let got = brute_antisymmetrize(|y| toy.eval(y), &x, 3, 1).unwrap();
        assert!(rel(got, toy.eval(&x)) < 1e-12);
        let sym = brute_antisymmetrize(|y| y.iter().map(|v| v * v).sum(), &x, 3, 1).unwrap();
        assert!(sym.abs() < 1e-15);
        let (a, b) = (0.4, -1.3);
        let got = brute_antisymmetrize(|y| y[0] * y[1] * y[1], &[a, b], 2, 1).unwrap();
        assert!((got - (a * b * b - b * a * a) / 2.0).abs() < 1e-15);
        assert_eq!(
            brute_antisymmetrize(|_| 0.0, &[0.0; 9], 9, 1),
            Err(Error::SizeLimit(9))
        );
    }

    #[test]
    fn pi_star_examples() {
        let toy = ToyAntisymmetricFunction::difference();
        let r = pi_star(&[1.0, 3.0], &toy).unwrap();
        assert_eq!(r.perm, vec![1, 0]);
        assert_eq!(r.sign, -1);
        assert_eq!(r.positions, vec![2, 1]);
        let r = pi_star(&[3.0, 1.0], &toy).unwrap();
        assert_eq!(r, PermutationRecord::identity(2));
        assert_eq!(pi_star(&[2.0, 2.0], &toy), Err(Error::OnNode));

        let toy = ToyAntisymmetricFunction::vandermonde(3);
        let x = [0.2, -0.5, 0.9];
        let first = pi_star(&x, &toy).unwrap();
        for p in Permutations::new(3) {
            let xp = permute_electrons(&x, 1, &p);
            let r = pi_star(&xp, &toy).unwrap();
            assert!(toy.eval(&r.apply(&xp)) > 0.0);
            assert_eq!(r.apply(&xp), first.apply(&x));
        }
    }

    #[test]
    fn single_construction_examples() {
        let toy = ToyAntisymmetricFunction::difference();
        let phi = construct_phib_single(&toy, &[1.0, 3.0]);
        assert_eq!(phi, vec![4.0, 2.0]);
        assert_eq!(pair_prime_value(&phi), -2.0);
        assert_eq!(construct_phib_single(&toy, &[1.5, 1.5]), vec![0.0, 0.0]);

        let toy = ToyAntisymmetricFunction::vandermonde(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let phi = construct_phib_single(&toy, &x);
            assert!(rel(pair_prime_value(&phi), toy.eval(&x)) < 1e-9);
        }
    }

    #[test]
    fn ordered_construction_examples() {
        let toy = ToyAntisymmetricFunction::difference();
        let id = PermutationRecord::identity(2);
        let x = [1.0, 3.0];
        assert_eq!(toy.eval(&x), -2.0);
        let phi = construct_phib_ordered(&toy, &x, &id).unwrap();
        assert_eq!(phi, vec![2.0, 0.0]);
        assert_eq!(pair_prime_value(&phi), -2.0);

        assert_eq!(ordered_lambda(3, 1.0), 12.0);
        let toy = ToyAntisymmetricFunction::vandermonde(3);
        let x = [0.9, 0.1, -0.6];
        let pi = PermutationRecord::new(vec![2, 1, 0]).unwrap();
        assert!(toy.eval(&pi.apply(&x)) > 0.0);
        let phi = construct_phib_ordered(&toy, &x, &pi).unwrap();
        assert!(rel(pair_prime_value(&phi), toy.eval(&x)) < 1e-9);

        let on_node = [0.5, 0.5, -0.2];
        let phi = construct_phib_ordered(&toy, &on_node, &pi).unwrap();
        assert_eq!(phi, vec![0.0; 3]);
        assert_eq!(pair_prime_value(&phi), 0.0);
    }

    #[test]
    fn vandermonde_examples() {
        let v = vandermonde_logdet(&[1.0, 2.0, 3.0]);
        assert_eq!(v.sign, 1);
        assert!((v.log_abs - libm::log(2.0)).abs() < 1e-14);
        assert_eq!(vandermonde_logdet(&[1.0, 2.0, 1.0]).sign, 0);
        // nodes 1..8: det = 0! 1! ... 7!
        let nodes: Vec<f64> = (1..=8).map(f64::from).collect();
        let v = vandermonde_logdet(&nodes);
        assert_eq!(v.sign, 1);
        assert!((v.log_abs - libm::log(125_411_328_000.0)).abs() < 1e-14);
        // clustered nodes, where f64 elimination is off by ~1e-9
        let nodes = [2.9, -2.95, 2.97, -0.01, 0.013, 1.5, -1.49, 2.88];
        let mut want = 0.0;
        for i in 0..8 {
            for j in i + 1..8 {
                want += libm::log(libm::fabs(nodes[j] - nodes[i]));
            }
        }
        assert!((vandermonde_logdet(&nodes).log_abs - want).abs() < 1e-13);
    }

    #[test]
    fn obstruction_examples() {
        let sym = |y: &f64, z: &f64| y * y + z * z;
        assert_eq!(sign_product_obstruction(sym, &[0.1, 0.5, -0.3, 2.0]), 0.0);
        let cubic = |y: &f64, z: &f64| y * z * z;
        let pts = [0.0, 1.0, 2.0, 3.0];
        let lhs = sign_product_obstruction(cubic, &pts);
        let rhs = squared_pair_product(cubic, &pts);
        assert!(lhs >= 0.0);
        assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn toy_rejects_bad_orientation() {
        assert!(ToyAntisymmetricFunction::new(3, 0.5, SymmetricFactor::None).is_err());
        let excited =
            ToyAntisymmetricFunction::new(3, 1.0, SymmetricFactor::ExcitedGaussian { radius: 1.0 })
                .unwrap();
        assert_eq!(excited.eval(&[1.0, 0.0, 0.0]), 0.0);
    }
}
