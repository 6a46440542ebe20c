use pairvmc_core::ansatz::psi_pair_prime;
use pairvmc_core::oracle::{
    brute_antisymmetrize, construct_phib_ordered, construct_phib_single, continuity_probe,
    pair_prime_value, sign_product_obstruction, vandermonde_logdet, PermutationRecord,
    RandomPairNet, SymmetricFactor, ToyAntisymmetricFunction,
};
use pairvmc_core::perm::Permutations;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #[test]
    fn single_construction_reconstructs_the_toy(xs in prop::collection::vec(-2.5f64..2.5, 2..=4)) {
        let toy = ToyAntisymmetricFunction::vandermonde(xs.len());
        let want = toy.eval(&xs);
        let phi = construct_phib_single(&toy, &xs);
        let got = pair_prime_value(&phi);
        if want == 0.0 {
            prop_assert_eq!(got, 0.0);
        } else {
            prop_assert!(rel(got, want) <= 1e-9);
        }
    }

    #[test]
    fn ordered_construction_reconstructs_for_any_ordering(
        xs in prop::collection::vec(-2.0f64..2.0, 2..=4),
        excited in any::<bool>(),
        pick in any::<prop::sample::Index>(),
    ) {
        let n = xs.len();
        let factor = if excited {
            SymmetricFactor::ExcitedGaussian { radius: 1.2 }
        } else {
            SymmetricFactor::Gaussian
        };
        let toy = ToyAntisymmetricFunction::new(n, 1.0, factor).unwrap();
        let perms: Vec<Vec<usize>> = Permutations::new(n).collect();
        let pi = PermutationRecord::new(perms[pick.index(perms.len())].clone()).unwrap();
        let phi = construct_phib_ordered(&toy, &xs, &pi).unwrap();
        let want = toy.eval(&xs);
        prop_assert!(rel(pair_prime_value(&phi), want) <= 1e-9 || want == 0.0);
    }

    #[test]
    fn pair_prime_is_its_own_antisymmetrization(xs in prop::collection::vec(-2.0f64..2.0, 2..=5)) {
        let phi: Vec<f64> = xs.iter().map(|v| v * v * v + 0.5 * v).collect();
        let n = xs.len();
        let f = |y: &[f64]| {
            let p: Vec<f64> = y.iter().map(|v| v * v * v + 0.5 * v).collect();
            pair_prime_value(&p)
        };
        let direct = pair_prime_value(&phi);
        let brute = brute_antisymmetrize(f, &xs, n, 1).unwrap();
        prop_assert!((brute - direct).abs() <= 1e-10 * direct.abs().max(1e-12));
    }

    #[test]
    fn vandermonde_matches_pair_product(phi in prop::collection::vec(-3.0f64..3.0, 1..=8)) {
        let a = vandermonde_logdet(&phi);
        let b = psi_pair_prime(&phi);
        prop_assert_eq!(a.sign, b.sign);
        if a.sign != 0 {
            prop_assert!((a.log_abs - b.log_abs).abs() <= 1e-9 * b.log_abs.abs().max(1.0));
        }
    }
}

#[test]
fn sign_product_is_never_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::INFINITY;
    for _ in 0..2000 {
        let net = RandomPairNet::new(3, 8, &mut rng);
        let pts: [[f64; 3]; 4] =
            core::array::from_fn(|_| core::array::from_fn(|_| rng.random_range(-2.0..2.0)));
        let v = sign_product_obstruction(|y: &[f64; 3], z: &[f64; 3]| net.eval(y, z), &pts);
        worst = worst.min(v);
    }
    assert!(worst >= -1e-12);
}

#[test]
fn two_electron_construction_is_lipschitz() {
    let toy = ToyAntisymmetricFunction::vandermonde(2);
    let r = continuity_probe(&toy, 2000, 1e-4, 2.0, 1);
    assert!(r.worst_excess <= 0.0, "{r:?}");
}

#[test]
fn larger_constructions_are_holder_continuous() {
    // the fractional power makes the jump across a cell boundary scale like
    // |dx|^(2/(N(N-1))), so the ratio stays bounded while |dx| shrinks
    for n in [3, 4] {
        let toy = ToyAntisymmetricFunction::vandermonde(n);
        let coarse = continuity_probe(&toy, 2000, 1e-4, 2.0, 7);
        let fine = continuity_probe(&toy, 2000, 1e-8, 2.0, 7);
        assert!(
            fine.holder_ratio <= 2.0 * coarse.holder_ratio.max(1e-12),
            "{coarse:?} {fine:?}"
        );
        assert!(fine.worst_jump <= coarse.worst_jump);
    }
}
