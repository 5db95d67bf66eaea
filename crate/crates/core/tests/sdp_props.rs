use fermiwit::sdp::ipm::{solve, IpmConfig};
use fermiwit::sdp::SdpStatus;
use fermiwit::states::{random_mixed, random_pure};
use fermiwit::witness::{sample_slater_constraints, sampled_robustness, WitnessConfig};
use proptest::prelude::*;

mod common;
use common::sdp_instance as instance;

#[test]
fn duality_gap_closes_on_random_instances() {
    for seed in 0..50 {
        let p = instance(seed);
        let s = solve(&p, &IpmConfig { gap_tol: 1e-9, ..IpmConfig::default() }).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal, "seed {seed}");
        let gap = (s.primal_objective - s.dual_objective).abs();
        assert!(gap <= 1e-7 * s.primal_objective.abs().max(1.0), "seed {seed}: gap {gap:e}");
        for (k, (x, f)) in s.dual.iter().zip(&s.slack).enumerate() {
            assert!(x.symmetric_eigenvalues().min() >= -1e-9, "seed {seed} block {k}");
            assert!(f.symmetric_eigenvalues().min() >= -1e-9, "seed {seed} block {k}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn more_constraints_never_raise_the_sampled_robustness(seed in 0u64..1000, pure in any::<bool>()) {
        let rho = if pure { random_pure(4, 2, seed) } else { random_mixed(4, 2, 3, seed) }.unwrap();
        let cfg = WitnessConfig::for_sector(rho.sector());
        let all = sample_slater_constraints(4, 2, 240, seed).unwrap();
        let mut last = f64::INFINITY;
        for k in [15, 60, 240] {
            let r = sampled_robustness(&rho, &all[..k], &cfg).unwrap();
            prop_assert!(r <= last + 1e-6, "{k}: {r} after {last}");
            last = r;
        }
    }
}
