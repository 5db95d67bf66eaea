//! Geometric discord of two fermions in four modes: the trace-norm distance to
//! antisymmetrized classically correlated states.
//!
//! A zero-discord state is built from two single-particle bases `{e_i}`,
//! `{f_j}` and weights `λ_ij` as `Σ λ_ij P̂_ij`, where `P̂_ij` is the
//! normalized sector image of `A(|e_i⟩⟨e_i| ⊗ |f_j⟩⟨f_j|)A†`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{one_body_density, sector_embedding, Sector};
use crate::linalg::{self, derive_seed, CMat, CVec, HermitianEigen, C64};
use crate::sdp::ipm::{solve_hermitian, IpmConfig};
use crate::sdp::{HermitianBlock, HermitianSdp, SdpStatus};
use crate::states::{DensityState, StateMetadata};

const MODES: usize = 4;
const PAIRS: usize = MODES * MODES;
/// Pair terms whose antisymmetrized trace falls below this are dropped.
pub const PAIR_TRACE_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-10;

fn sector() -> Sector {
    Sector { modes: MODES, particles: 2 }
}

fn check_sector(s: Sector) -> Result<()> {
    if s.modes != MODES || s.particles != 2 {
        return Err(Error::WrongSector { expected_modes: 4, expected_particles: 2, modes: s.modes, particles: s.particles });
    }
    Ok(())
}

/// Two bases (columns of `u` and `v`) and weights over ordered pairs, index `4 i + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroDiscordSpec {
    pub u: CMat,
    pub v: CMat,
    pub weights: Vec<f64>,
}

impl ZeroDiscordSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("U", &self.u), ("V", &self.v)] {
            if m.nrows() != MODES || m.ncols() != MODES {
                return Err(Error::InvalidInput(format!("{name} must be 4x4")));
            }
            let defect = linalg::unitarity_defect(m);
            if defect > UNITARY_TOL {
                return Err(Error::InvalidInput(format!("{name} is not unitary (defect {defect:e})")));
            }
        }
        if self.weights.len() != PAIRS {
            return Err(Error::InvalidInput(format!("expected {PAIRS} weights, got {}", self.weights.len())));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Unit sector vectors of `A(e_i ⊗ f_j)`, `None` where the pair is (nearly) parallel.
fn pair_vectors(u: &CMat, v: &CMat) -> Vec<Option<CVec>> {
    let emb = sector_embedding(MODES, 2).expect("the (4, 2) embedding is small");
    let mut out = Vec::with_capacity(PAIRS);
    for i in 0..MODES {
        for j in 0..MODES {
            let e = u.column(i);
            let f = v.column(j);
            let prod = CVec::from_fn(MODES * MODES, |k, _| e[k / MODES] * f[k % MODES]);
            let s = emb.ad_mul(&prod);
            let tr = s.norm_squared();
            out.push(if tr < PAIR_TRACE_TOL { None } else { Some(s / C64::new(tr.sqrt(), 0.0)) });
        }
    }
    out
}

fn mixture(vecs: &[Option<CVec>], weights: &[f64]) -> Result<CMat> {
    let mut m = CMat::zeros(6, 6);
    let mut total = 0.0;
    for (p, &w) in vecs.iter().zip(weights) {
        if let Some(p) = p {
            if w > 0.0 {
                m += linalg::outer(p) * C64::new(w, 0.0);
                total += w;
            }
        }
    }
    if total < PAIR_TRACE_TOL {
        return Err(Error::InvalidState("every weighted pair annihilates under antisymmetrization".into()));
    }
    Ok(m / C64::new(total, 0.0))
}

pub fn zero_discord_state(spec: &ZeroDiscordSpec) -> Result<DensityState> {
    spec.validate()?;
    let m = mixture(&pair_vectors(&spec.u, &spec.v), &spec.weights)?;
    DensityState::normalized(sector(), m, StateMetadata::new("zero-discord"))
}

/// Schatten 1-norm `‖ρ − ξ‖₁`, without the ½ prefactor.
pub fn trace_distance(rho: &DensityState, xi: &DensityState) -> Result<f64> {
    if rho.sector() != xi.sector() {
        return Err(Error::InvalidInput("states live in different sectors".into()));
    }
    Ok(linalg::trace_norm_hermitian(&(rho.matrix() - xi.matrix())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    /// Weights over ordered pairs, zero on dropped pairs, summing to one.
    pub weights: Vec<f64>,
    pub distance: f64,
    /// Duality gap reported by the solver.
    pub gap: f64,
    pub status: SdpStatus,
}

fn herm_basis6() -> Vec<CMat> {
    let mut out = Vec::with_capacity(36);
    for r in 0..6 {
        for c in r..6 {
            let mut m = CMat::zeros(6, 6);
            if r == c {
                m[(r, r)] = C64::new(1.0, 0.0);
                out.push(m);
            } else {
                m[(r, c)] = C64::new(1.0, 0.0);
                m[(c, r)] = C64::new(1.0, 0.0);
                out.push(m.clone());
                m[(r, c)] = C64::new(0.0, 1.0);
                m[(c, r)] = C64::new(0.0, -1.0);
                out.push(m);
            }
        }
    }
    out
}

/// Exact minimum of `‖ρ − Σ λ_ij P̂_ij‖₁` over the simplex for fixed bases.
///
/// With `T₋ = T₊ − ρ + S(λ)` eliminated and `Tr S = 1` this is
/// `minimize 2 Tr T₊` subject to `T₊ ⪰ 0`, `T₊ − ρ + S(λ) ⪰ 0`, `λ` in the simplex,
/// where the last kept weight is `1 − Σ` of the others.
pub fn inner_min_weights(rho: &DensityState, u: &CMat, v: &CMat, ipm: &IpmConfig) -> Result<InnerResult> {
    check_sector(rho.sector())?;
    let vecs = pair_vectors(u, v);
    let kept: Vec<usize> = (0..PAIRS).filter(|&k| vecs[k].is_some()).collect();
    let Some((&last, free)) = kept.split_last() else {
        return Err(Error::InvalidState("every pair annihilates under antisymmetrization".into()));
    };
    let proj = |k: usize| linalg::outer(vecs[k].as_ref().expect("kept pair"));
    let p_last = proj(last);
    let basis = herm_basis6();
    let nt = basis.len();
    let n_vars = nt + free.len();
    let mut objective = vec![0.0; n_vars];
    for (i, g) in basis.iter().enumerate() {
        objective[i] = 2.0 * linalg::trace(g).re;
    }
    let t_coeffs: Vec<(usize, CMat)> = basis.iter().cloned().enumerate().collect();
    let mut second = t_coeffs.clone();
    for (k, &pair) in free.iter().enumerate() {
        second.push((nt + k, proj(pair) - &p_last));
    }
    let one = |x: f64| CMat::from_element(1, 1, C64::new(x, 0.0));
    let mut blocks = vec![
        HermitianBlock::Dense { constant: CMat::zeros(6, 6), coeffs: t_coeffs },
        HermitianBlock::Dense { constant: &p_last - rho.matrix(), coeffs: second },
    ];
    for k in 0..free.len() {
        blocks.push(HermitianBlock::Dense { constant: one(0.0), coeffs: vec![(nt + k, one(1.0))] });
    }
    if !free.is_empty() {
        blocks.push(HermitianBlock::Dense {
            constant: one(1.0),
            coeffs: (0..free.len()).map(|k| (nt + k, one(-1.0))).collect(),
        });
    }
    let sdp = HermitianSdp { n_vars, objective, maps: Vec::new(), blocks };
    let sol = solve_hermitian(&sdp, ipm)?;
    let mut weights = vec![0.0; PAIRS];
    for (k, &pair) in free.iter().enumerate() {
        weights[pair] = sol.real.y[nt + k].max(0.0);
    }
    weights[last] = (1.0 - free.iter().map(|&p| weights[p]).sum::<f64>()).max(0.0);
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let xi = mixture(&vecs, &weights)?;
    let distance = linalg::trace_norm_hermitian(&(rho.matrix() - xi));
    Ok(InnerResult { weights, distance, gap: sol.real.gap, status: sol.real.status })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscordConfig {
    pub restarts: usize,
    pub seed: u64,
    /// Objective evaluations allowed per restart.
    pub max_evals: usize,
    /// Restrict to `U = V`.
    pub single_basis: bool,
    pub ipm: IpmConfig,
}

impl Default for DiscordConfig {
    fn default() -> Self {
        Self { restarts: 4, seed: 0, max_evals: 300, single_basis: false, ipm: IpmConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscordResult {
    /// Best distance found, an upper bound on the minimum.
    pub value: f64,
    pub spec: ZeroDiscordSpec,
    /// Best value of each restart, in restart order.
    pub per_restart: Vec<f64>,
    pub evaluations: usize,
}

/// `U₀ exp(i H(x))` with `H` Hermitian from 16 real parameters.
fn rotate(u0: &CMat, x: &[f64]) -> CMat {
    let mut h = CMat::zeros(MODES, MODES);
    let mut k = 0;
    for r in 0..MODES {
        h[(r, r)] = C64::new(x[k], 0.0);
        k += 1;
        for c in r + 1..MODES {
            h[(r, c)] = C64::new(x[k], x[k + 1]);
            h[(c, r)] = C64::new(x[k], -x[k + 1]);
            k += 2;
        }
    }
    linalg::mul(u0, &linalg::expm_i_hermitian(&h))
}

const GEN: usize = MODES * MODES;

/// Nelder–Mead minimization from `x0` with initial step `step`.
fn nelder_mead(f: &mut impl FnMut(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if worst - best <= 1e-10 * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let x = along(0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < fr.min(worst) {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&x0) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    *v = eval(x, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    (x, v, evals)
}

/// Eigenvectors of the one-body density, largest occupation first.
pub fn natural_orbitals(rho: &DensityState) -> CMat {
    let eig = HermitianEigen::new(&one_body_density(rho.op()));
    let n = eig.values.len();
    CMat::from_fn(n, n, |r, c| eig.vectors[(r, n - 1 - c)])
}

/// Best-found geometric discord: restart 0 starts from the natural orbitals,
/// later restarts from Haar-random bases; each runs Nelder–Mead over the
/// generators of both bases with the exact inner minimization at every step.
pub fn geometric_discord(rho: &DensityState, cfg: &DiscordConfig) -> Result<DiscordResult> {
    check_sector(rho.sector())?;
    let restarts = cfg.restarts.max(1);
    let runs: Vec<(f64, ZeroDiscordSpec, usize)> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let (u0, v0) = if k == 0 {
                let nat = natural_orbitals(rho);
                (nat.clone(), nat)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[k as u64]));
                let u = linalg::haar_unitary(MODES, &mut rng);
                let v = if cfg.single_basis { u.clone() } else { linalg::haar_unitary(MODES, &mut rng) };
                (u, v)
            };
            let bases = |x: &[f64]| {
                let u = rotate(&u0, &x[..GEN]);
                let v = if cfg.single_basis { u.clone() } else { rotate(&v0, &x[GEN..]) };
                (u, v)
            };
            let dim = if cfg.single_basis { GEN } else { 2 * GEN };
            let mut failure = None;
            let mut objective = |x: &[f64]| {
                let (u, v) = bases(x);
                match inner_min_weights(rho, &u, &v, &cfg.ipm) {
                    Ok(r) => r.distance,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::INFINITY
                    }
                }
            };
            let (x, _, evals) = nelder_mead(&mut objective, &vec![0.0; dim], 0.3, cfg.max_evals);
            let (u, v) = bases(&x);
            let inner = match inner_min_weights(rho, &u, &v, &cfg.ipm) {
                Ok(r) => r,
                Err(e) => return Err(failure.unwrap_or(e)),
            };
            Ok((inner.distance, ZeroDiscordSpec { u, v, weights: inner.weights }, evals + 1))
        })
        .collect::<Result<_>>()?;
    let per_restart: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let evaluations = runs.iter().map(|r| r.2).sum();
    let (value, spec, _) = runs
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .expect("at least one restart");
    Ok(DiscordResult { value, spec, per_restart, evaluations })
}
