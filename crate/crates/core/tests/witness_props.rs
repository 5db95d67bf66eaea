mod common;

use fermiwit::schliemann::concurrence;
use fermiwit::states::{apply_lso, random_mixed, random_pure, random_separable};
use fermiwit::witness::{optimal_witness, WitnessConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(seed: u64) -> WitnessConfig {
    let mut c = WitnessConfig::for_sector(fermiwit::fock::Sector::new(4, 2).unwrap());
    c.seed = seed;
    c.validation_samples = 2000;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn separable_states_and_their_lso_images_have_no_robustness(seed in 0u64..10_000, terms in 1usize..8) {
        let rho = random_separable(4, 2, terms, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = apply_lso(&rho, &common::random_lso(4, 2, 3, &mut rng)).unwrap();
        for s in [&rho, &image] {
            prop_assert!(concurrence(s).unwrap() <= 1e-8);
            let r = optimal_witness(s, &config(seed)).unwrap();
            prop_assert!(r.robustness <= 2e-3, "{}", r.robustness);
            prop_assert!(common::witness_is_valid(&r));
        }
    }

    #[test]
    fn pure_states_have_robustness_equal_to_concurrence(seed in 0u64..10_000) {
        let rho = random_pure(4, 2, seed).unwrap();
        let r = optimal_witness(&rho, &config(seed)).unwrap();
        let c = concurrence(&rho).unwrap();
        prop_assert!((r.robustness - c).abs() <= 0.03, "R {} C {c}", r.robustness);
        prop_assert!(r.robustness <= r.dual_bound + 1e-4);
        prop_assert!(common::witness_is_valid(&r));
    }

    #[test]
    fn concurrence_bounds_mixed_robustness(seed in 0u64..10_000) {
        let rho = random_mixed(4, 2, 6, seed).unwrap();
        let r = optimal_witness(&rho, &config(seed)).unwrap();
        prop_assert!(r.robustness <= concurrence(&rho).unwrap() + 0.02);
        prop_assert!(common::witness_is_valid(&r));
    }
}

#[test]
fn three_particle_witness_is_valid_and_bracketed() {
    let rho = random_pure(6, 3, 5).unwrap();
    let mut cfg = WitnessConfig::for_sector(rho.sector());
    cfg.validation_samples = 2000;
    let r = optimal_witness(&rho, &cfg).unwrap();
    assert!(common::witness_is_valid(&r));
    assert!(r.robustness > 0.1, "{}", r.robustness);
    assert!(r.robustness <= r.dual_bound + 1e-6, "{} {}", r.robustness, r.dual_bound);
}
