use fermiwit::fock::sector_embedding;
use fermiwit::hubbard::*;
use fermiwit::linalg::{self, CMat, HermitianEigen};
use proptest::prelude::*;

mod common;
use common::tensor_space_spectrum;

fn sector_spectrum(p: &EhmParams) -> Vec<f64> {
    HermitianEigen::new(build_hamiltonian(p).unwrap().matrix()).values
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sector_and_tensor_space_spectra_agree(
        u in -8.0f64..8.0,
        v in -8.0f64..8.0,
        which in 0usize..3,
    ) {
        let (sites, particles, boundary) = [(2, 2, Boundary::Open), (3, 3, Boundary::Periodic), (3, 2, Boundary::Open)][which];
        let p = EhmParams { sites, particles, hopping: 1.0, u, v, boundary };
        let a = sector_spectrum(&p);
        let b = tensor_space_spectrum(&p);
        prop_assert!(close(&a, &b, 1e-10), "{a:?} vs {b:?}");
    }

    #[test]
    fn ground_state_is_a_valid_translation_invariant_state(u in -8.0f64..8.0, v in -8.0f64..8.0) {
        let p = EhmParams::half_filled(3, u, v);
        let h = build_hamiltonian(&p).unwrap();
        let g = ground_state(&h, None).unwrap();
        prop_assert!((linalg::trace(g.state.matrix()).re - 1.0).abs() < 1e-10);
        prop_assert!((linalg::inner_re(g.state.matrix(), h.matrix()) - g.energy).abs() < 1e-9);
        // [ρ, H] = 0 for a ground-space mixture
        let comm = g.state.matrix() * h.matrix() - h.matrix() * g.state.matrix();
        prop_assert!(comm.camax() < 1e-9);
    }
}

#[test]
fn free_ring_of_five_has_the_band_energy() {
    let g = ground_state(&build_hamiltonian(&EhmParams::half_filled(5, 0.0, 0.0)).unwrap(), None).unwrap();
    let exact = -4.0 - 6.0 * (2.0 * std::f64::consts::PI / 5.0).cos();
    assert!((g.energy - exact).abs() < 1e-8, "{} vs {exact}", g.energy);
}

#[test]
fn embedding_is_an_isometry_for_the_oracle_sizes() {
    for (d, n) in [(4, 2), (6, 3), (6, 2)] {
        let e = sector_embedding(d, n).unwrap();
        let g = e.adjoint() * &e;
        assert!(linalg::max_abs_diff(&g, &CMat::identity(g.nrows(), g.ncols())) < 1e-12);
    }
}
