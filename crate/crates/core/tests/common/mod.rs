#![allow(dead_code)]

use fermiwit::fock::{build_sector_basis, permutations};
use fermiwit::hubbard::{Boundary, EhmParams};
use fermiwit::linalg::{self, CMat, HermitianEigen, C64};
use fermiwit::sdp::{Block, RMat, SdpProblem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use fermiwit::witness::WitnessResult;
use rand::Rng;

/// Kraus operators `M_i` of a random local (single-particle) operation,
/// scaled so that `Σ_i (M_i^{⊗n})† M_i^{⊗n} ⪯ I` on the `n`-particle sector.
pub fn random_lso<R: Rng + ?Sized>(d: usize, n: usize, terms: usize, rng: &mut R) -> Vec<CMat> {
    let ops: Vec<CMat> = (0..terms)
        .map(|k| if k == 0 { linalg::haar_unitary(d, rng) } else { linalg::ginibre(d, d, rng) })
        .collect();
    let norms: Vec<f64> = ops.iter().map(|m| m.clone().singular_values().max()).collect();
    let total: f64 = norms.iter().map(|s| s.powi(2 * n as i32)).sum();
    let scale = total.powf(-1.0 / (2.0 * n as f64));
    ops.into_iter().map(|m| m * C64::new(scale, 0.0)).collect()
}

/// Validity thresholds every returned witness must meet.
pub fn witness_is_valid(r: &WitnessResult) -> bool {
    r.validation.min_validation_value >= -5e-3 && r.validation.max_eigenvalue <= 1.0 + 1e-8
}

/// Creation operator for mode `m` on the full Fock space of `d` modes
/// (dimension 2^d), built by Jordan–Wigner strings.
pub fn jw_creation(d: usize, m: usize) -> CMat {
    let dim = 1usize << d;
    let mut a = CMat::zeros(dim, dim);
    for s in 0..dim {
        if s >> m & 1 == 0 {
            let below = (s & ((1 << m) - 1)).count_ones();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            a[(s | 1 << m, s)] = C64::new(sign, 0.0);
        }
    }
    a
}

/// Block of a full Fock-space operator between particle-number sectors.
pub fn sector_block(op: &CMat, d: usize, n_to: usize, n_from: usize) -> CMat {
    let to = build_sector_basis(d, n_to).unwrap();
    let from = build_sector_basis(d, n_from).unwrap();
    CMat::from_fn(to.dim(), from.dim(), |r, c| op[(to.state(r) as usize, from.state(c) as usize)])
}

/// First-quantized Hamiltonian on the n-fold tensor product of one-particle
/// spaces (mode 2j + σ), restricted to the range of the antisymmetrizer.
pub fn tensor_space_spectrum(p: &EhmParams) -> Vec<f64> {
    let d = 2 * p.sites;
    let n = p.particles;
    let bonds: Vec<(usize, usize)> = match p.boundary {
        Boundary::Open => (0..p.sites - 1).map(|j| (j, j + 1)).collect(),
        Boundary::Periodic => (0..p.sites).map(|j| (j, (j + 1) % p.sites)).collect(),
    };
    let mut h1 = CMat::zeros(d, d);
    for &(a, b) in &bonds {
        for s in 0..2 {
            h1[(2 * a + s, 2 * b + s)] -= C64::new(p.hopping, 0.0);
            h1[(2 * b + s, 2 * a + s)] -= C64::new(p.hopping, 0.0);
        }
    }
    let tdim = d.pow(n as u32);
    let digits = |mut idx: usize| {
        let mut v = vec![0usize; n];
        for k in (0..n).rev() {
            v[k] = idx % d;
            idx /= d;
        }
        v
    };
    let mut h = CMat::zeros(tdim, tdim);
    for col in 0..tdim {
        let x = digits(col);
        // one-body part on each factor
        for k in 0..n {
            for m in 0..d {
                let amp = h1[(m, x[k])];
                if amp.norm() > 0.0 {
                    let mut y = x.clone();
                    y[k] = m;
                    let row = y.iter().fold(0, |acc, &v| acc * d + v);
                    h[(row, col)] += amp;
                }
            }
        }
        // density interactions between distinct particles
        let mut diag = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                let (sa, sb) = (x[a] / 2, x[b] / 2);
                if sa == sb && x[a] % 2 != x[b] % 2 {
                    diag += p.u;
                }
                let links = bonds.iter().filter(|&&(i, j)| (i, j) == (sa, sb) || (j, i) == (sa, sb)).count();
                diag += p.v * links as f64;
            }
        }
        h[(col, col)] += C64::new(diag, 0.0);
    }
    // orthonormal basis of the antisymmetric subspace from the antisymmetrizer itself
    let perms = permutations(n);
    let mut anti = CMat::zeros(tdim, tdim);
    for col in 0..tdim {
        let x = digits(col);
        for (perm, sign) in &perms {
            let row = perm.iter().fold(0, |acc, &k| acc * d + x[k]);
            anti[(row, col)] += C64::new(sign / perms.len() as f64, 0.0);
        }
    }
    let q = linalg::orthonormal_columns(&anti, 1e-8);
    HermitianEigen::new(&linalg::congruence(&q, &h)).values
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> RMat {
    let a = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> RMat {
    let a = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + RMat::identity(n, n) * 0.1
}

/// Strictly primal and dual feasible instance: `F(y₀) = S ≻ 0` and
/// `c_i = <F_i, X₀>` with `X₀ ≻ 0`, so strong duality holds.
pub fn sdp_instance(seed: u64) -> SdpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = rng.random_range(1..=5);
    let sizes: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=4)).collect();
    let y0: Vec<f64> = (0..vars).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut objective = vec![0.0; vars];
    let mut blocks = Vec::new();
    for &n in &sizes {
        let coeffs: Vec<(usize, RMat)> = (0..vars).map(|i| (i, random_symmetric(n, &mut rng))).collect();
        let x0 = random_pd(n, &mut rng);
        let mut constant = random_pd(n, &mut rng);
        for (i, f) in &coeffs {
            constant -= f * y0[*i];
            objective[*i] += f.dot(&x0);
        }
        blocks.push(Block::Dense { constant, coeffs });
    }
    let mut p = SdpProblem::new(objective);
    p.blocks = blocks;
    p
}
