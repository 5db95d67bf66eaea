use fermiwit::discord::*;
use fermiwit::fock::lift_single_particle;
use fermiwit::linalg::{self, HermitianEigen};
use fermiwit::sdp::ipm::IpmConfig;
use fermiwit::states::{family_linear, maximally_mixed, DensityState, StateMetadata};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spec(seed: u64, same_basis: bool) -> ZeroDiscordSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = linalg::haar_unitary(4, &mut rng);
    let v = if same_basis { u.clone() } else { linalg::haar_unitary(4, &mut rng) };
    let raw: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    ZeroDiscordSpec { u, v, weights: raw.iter().map(|w| w / total).collect() }
}

fn quick(seed: u64, restarts: usize) -> DiscordConfig {
    DiscordConfig { restarts, seed, max_evals: 40, ..DiscordConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn fixed_bases_recover_their_own_zero_discord_states(seed in any::<u64>()) {
        let spec = random_spec(seed, false);
        let rho = zero_discord_state(&spec).unwrap();
        let r = inner_min_weights(&rho, &spec.u, &spec.v, &IpmConfig::default()).unwrap();
        prop_assert!(r.distance <= 1e-6, "{}", r.distance);
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        prop_assert!(r.weights.iter().all(|&w| w >= -1e-8));
    }

    #[test]
    fn inner_distance_never_exceeds_a_feasible_point(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = fermiwit::states::random_mixed(4, 2, 3, seed).unwrap();
        let u = linalg::haar_unitary(4, &mut rng);
        let v = linalg::haar_unitary(4, &mut rng);
        let r = inner_min_weights(&rho, &u, &v, &IpmConfig::default()).unwrap();
        let raw: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let guess = ZeroDiscordSpec { u, v, weights: raw.iter().map(|w| w / total).collect() };
        let d = trace_distance(&rho, &zero_discord_state(&guess).unwrap()).unwrap();
        prop_assert!(r.distance >= 0.0 && r.distance <= d + 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn single_basis_mixtures_have_no_discord(seed in any::<u64>()) {
        let rho = zero_discord_state(&random_spec(seed, true)).unwrap();
        let r = geometric_discord(&rho, &quick(seed, 1)).unwrap();
        prop_assert!(r.value <= 1e-4, "{}", r.value);
    }
}

#[test]
fn reported_value_is_the_distance_to_the_reported_state() {
    let rho = family_linear(0.9).unwrap();
    let r = geometric_discord(&rho, &quick(1, 2)).unwrap();
    let d = trace_distance(&rho, &zero_discord_state(&r.spec).unwrap()).unwrap();
    assert!((d - r.value).abs() <= 1e-10, "{d} vs {}", r.value);
    assert!(r.value >= 0.0);
}

#[test]
fn more_restarts_never_worsen_the_best_value() {
    let rho = family_linear(0.9).unwrap();
    let two = geometric_discord(&rho, &quick(7, 2)).unwrap();
    let four = geometric_discord(&rho, &quick(7, 4)).unwrap();
    assert_eq!(&four.per_restart[..2], &two.per_restart[..]);
    assert!(four.value <= two.value);
}

#[test]
fn single_particle_rotations_leave_the_discord_unchanged() {
    let rho = family_linear(0.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = lift_single_particle(&linalg::haar_unitary(4, &mut rng), rho.sector()).unwrap();
    let rotated = DensityState::new(
        rho.sector(),
        linalg::hermitian_part(&(&u * rho.matrix() * u.adjoint())),
        StateMetadata::new("rotated"),
    )
    .unwrap();
    let cfg = DiscordConfig { seed: 3, ..DiscordConfig::default() };
    let a = geometric_discord(&rho, &cfg).unwrap();
    let b = geometric_discord(&rotated, &cfg).unwrap();
    let scatter = |r: &DiscordResult| {
        let hi = r.per_restart.iter().cloned().fold(f64::MIN, f64::max);
        hi - r.value
    };
    let tol = 2.0 * scatter(&a).max(scatter(&b)) + 1e-3;
    assert!((a.value - b.value).abs() <= tol, "{} vs {} (tol {tol})", a.value, b.value);
}

#[test]
fn maximally_mixed_state_has_no_discord() {
    let rho = maximally_mixed(fermiwit::fock::Sector::new(4, 2).unwrap());
    let r = geometric_discord(&rho, &quick(0, 1)).unwrap();
    assert!(r.value <= 1e-4, "{}", r.value);
    assert!(HermitianEigen::new(rho.matrix()).min() > 0.0);
}
