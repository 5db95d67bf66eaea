//! Density matrices on a Fock sector and the state families used in the
//! experiments.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{lift_single_particle, slater_amplitudes, Sector, SectorBasis, SectorOperator, SlaterSpec};
use crate::linalg::{self, CMat, CVec, HermitianEigen, C64};

pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
/// Width of the Gaussian weights in [`family_gaussian`].
pub const GAUSSIAN_WIDTH: f64 = 0.1826;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateMetadata {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Set when a constructor rescaled a subnormalized output.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub renormalized: bool,
}

impl StateMetadata {
    pub fn new(family: &str) -> Self {
        Self { family: family.to_owned(), ..Self::default() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_owned(), value);
        self
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Hermitian, unit-trace, positive semidefinite operator on a sector.
#[derive(Debug, Clone)]
pub struct DensityState {
    op: SectorOperator,
    pub metadata: StateMetadata,
}

impl DensityState {
    pub fn new(sector: Sector, matrix: CMat, metadata: StateMetadata) -> Result<Self> {
        let op = SectorOperator::hermitian(sector, matrix)
            .map_err(|e| Error::InvalidState(e.to_string()))?;
        let tr = linalg::trace(op.matrix());
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min = HermitianEigen::new(op.matrix()).min();
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:e} is negative")));
        }
        Ok(Self { op, metadata })
    }

    /// Divides by the trace first; fails if the trace is not positive.
    pub fn normalized(sector: Sector, matrix: CMat, metadata: StateMetadata) -> Result<Self> {
        let tr = linalg::trace(&matrix).re;
        if !(tr > 1e-12) {
            return Err(Error::InvalidState(format!("trace {tr:e} cannot be normalized")));
        }
        Self::new(sector, matrix / C64::new(tr, 0.0), metadata)
    }

    pub fn pure(sector: Sector, psi: &CVec, metadata: StateMetadata) -> Result<Self> {
        let n = psi.norm();
        if !(n > 1e-12) {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Self::new(sector, linalg::outer(&(psi / C64::new(n, 0.0))), metadata)
    }

    pub fn op(&self) -> &SectorOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMat {
        self.op.matrix()
    }

    pub fn sector(&self) -> Sector {
        self.op.sector()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn purity(&self) -> f64 {
        linalg::inner_re(self.matrix(), self.matrix())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        HermitianEigen::new(self.matrix()).values
    }
}

/// `½ ‖a − b‖₁`, the trace distance between two states.
pub fn half_trace_distance(a: &DensityState, b: &DensityState) -> f64 {
    0.5 * linalg::trace_norm_hermitian(&(a.matrix() - b.matrix()))
}

fn check_sector(d: usize, n: usize) -> Result<Sector> {
    let s = Sector::new(d, n)?;
    if n == 0 || n >= d {
        return Err(Error::DimensionOutOfRange(format!("random states need 0 < n < d, got d={d}, n={n}")));
    }
    Ok(s)
}

pub fn slater_projector(spec: &SlaterSpec) -> Result<DensityState> {
    let meta = StateMetadata::new("slater");
    DensityState::pure(spec.sector(), &slater_amplitudes(spec), meta)
}

pub fn maximally_mixed(sector: Sector) -> DensityState {
    let dim = sector.dim();
    let m = CMat::identity(dim, dim) / C64::new(dim as f64, 0.0);
    DensityState::new(sector, m, StateMetadata::new("maximally-mixed")).expect("identity is a state")
}

/// Haar-random pure state on the sector sphere.
pub fn random_pure(d: usize, n: usize, seed: u64) -> Result<DensityState> {
    let sector = check_sector(d, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = linalg::random_unit_vector(sector.dim(), &mut rng);
    DensityState::pure(sector, &psi, StateMetadata::new("random-pure").seeded(seed))
}

/// `G G† / Tr(G G†)` with `G` a `D × rank` Ginibre matrix.
pub fn random_mixed(d: usize, n: usize, rank: usize, seed: u64) -> Result<DensityState> {
    let sector = check_sector(d, n)?;
    if rank == 0 || rank > sector.dim() {
        return Err(Error::InvalidInput(format!("rank {rank} outside 1..={}", sector.dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = linalg::ginibre(sector.dim(), rank, &mut rng);
    let meta = StateMetadata::new("random-mixed").with("rank", rank as f64).seeded(seed);
    DensityState::normalized(sector, linalg::mul_adj_b(&g, &g), meta)
}

/// `(1/√L) Σ_k f†_{2k} f†_{2k+1} |0>` on `2L` modes.
pub fn max_entangled_vector(l: usize) -> Result<CVec> {
    if l < 2 {
        return Err(Error::DimensionOutOfRange(format!("L = {l}, need L >= 2")));
    }
    let basis = SectorBasis::new(Sector::new(2 * l, 2)?);
    let mut v = CVec::zeros(basis.dim());
    let a = C64::new(1.0 / (l as f64).sqrt(), 0.0);
    for k in 0..l {
        let mask = (1u32 << (2 * k)) | (1u32 << (2 * k + 1));
        v[basis.index_of(mask).expect("pair lies in the sector")] = a;
    }
    Ok(v)
}

pub fn max_entangled(l: usize) -> Result<DensityState> {
    let v = max_entangled_vector(l)?;
    let meta = StateMetadata::new("max-entangled").with("L", l as f64);
    DensityState::pure(Sector::new(2 * l, 2)?, &v, meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub p: f64,
    pub delta: f64,
    pub l: usize,
}

impl FamilyParams {
    pub fn new(p: f64, l: usize) -> Self {
        Self { p, delta: GAUSSIAN_WIDTH, l }
    }

    /// Unnormalized weights `exp(-(p - x)²/Δ²)` at `x = 0, ½, 1`.
    pub fn raw_weights(&self) -> [f64; 3] {
        [0.0, 0.5, 1.0].map(|x| (-(self.p - x).powi(2) / self.delta.powi(2)).exp())
    }

    /// Weights including the amplitude that makes the mixture unit trace.
    pub fn weights(&self) -> [f64; 3] {
        let w = self.raw_weights();
        let a = 1.0 / w.iter().sum::<f64>();
        w.map(|x| a * x)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p = {p} outside [0, 1]")));
    }
    Ok(())
}

/// `f(0) σ + f(½) ρ_max + f(1) I/D` with `σ` the Slater determinant `f†_0 f†_2 |0>`.
pub fn family_gaussian(params: &FamilyParams) -> Result<DensityState> {
    check_p(params.p)?;
    if !(params.delta > 0.0) {
        return Err(Error::InvalidInput("Gaussian width must be positive".into()));
    }
    let sector = Sector::new(2 * params.l, 2)?;
    let [a, b, c] = params.weights();
    let sigma = slater_projector(&SlaterSpec::from_modes(2 * params.l, &[0, 2])?)?;
    let rho_max = max_entangled(params.l)?;
    let mixed = maximally_mixed(sector);
    let m = sigma.matrix() * C64::new(a, 0.0)
        + rho_max.matrix() * C64::new(b, 0.0)
        + mixed.matrix() * C64::new(c, 0.0);
    let meta = StateMetadata::new("gaussian")
        .with("p", params.p)
        .with("delta", params.delta)
        .with("L", params.l as f64);
    DensityState::normalized(sector, m, meta)
}

/// How the identity term of [`family_linear_with`] enters the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMixing {
    /// `(1 − p) I + p ρ_max`, then divided by its trace `6 − 5p`.
    #[default]
    Identity,
    /// `(1 − p) I/6 + p ρ_max`.
    TraceNormalized,
}

/// The linear family on two fermions in four modes, identity convention.
pub fn family_linear(p: f64) -> Result<DensityState> {
    family_linear_with(p, LinearMixing::Identity)
}

pub fn family_linear_with(p: f64, mixing: LinearMixing) -> Result<DensityState> {
    check_p(p)?;
    let sector = Sector::new(4, 2)?;
    let id_weight = match mixing {
        LinearMixing::Identity => 1.0 - p,
        LinearMixing::TraceNormalized => (1.0 - p) / 6.0,
    };
    let m = CMat::identity(6, 6) * C64::new(id_weight, 0.0)
        + max_entangled(2)?.matrix() * C64::new(p, 0.0);
    let meta = StateMetadata::new(match mixing {
        LinearMixing::Identity => "linear",
        LinearMixing::TraceNormalized => "linear-trace-normalized",
    })
    .with("p", p);
    DensityState::normalized(sector, m, meta)
}

/// `Σ_i Λ(M_i) ρ Λ(M_i)†`, `Λ(M)` the sector representation of `M^{⊗n}`.
/// Subnormalized outputs are rescaled and flagged in the metadata.
pub fn apply_lso(rho: &DensityState, kraus: &[CMat]) -> Result<DensityState> {
    let sector = rho.sector();
    let dim = rho.dim();
    let mut out = CMat::zeros(dim, dim);
    for m in kraus {
        let lifted = lift_single_particle(m, sector)?;
        out += linalg::mul_adj_b(&linalg::mul(&lifted, rho.matrix()), &lifted);
    }
    let tr = linalg::trace(&out).re;
    if tr < 1e-12 {
        return Err(Error::InvalidState(format!("channel annihilates the state (trace {tr:e})")));
    }
    if tr > 1.0 + 1e-8 {
        return Err(Error::InvalidInput(format!("Kraus set increases the trace to {tr}")));
    }
    let mut meta = StateMetadata::new("lso-image");
    meta.params.insert("kraus_terms".into(), kraus.len() as f64);
    meta.renormalized = tr < 1.0 - TRACE_TOL;
    DensityState::normalized(sector, out, meta)
}

/// Haar-random Slater determinant: orthonormalized Ginibre `d × n` coefficients.
pub fn random_slater_spec<R: rand::Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> SlaterSpec {
    loop {
        if let Ok(s) = SlaterSpec::new(linalg::ginibre(d, n, rng)) {
            return s;
        }
    }
}

/// `Σ_i p_i |Sl_i><Sl_i|` with flat-Dirichlet weights and Haar Slater determinants.
pub fn random_separable(d: usize, n: usize, k: usize, seed: u64) -> Result<DensityState> {
    let sector = check_sector(d, n)?;
    if k == 0 {
        return Err(Error::InvalidInput("a mixture needs at least one term".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let dim = sector.dim();
    let mut m = CMat::zeros(dim, dim);
    for w in raw {
        let psi = slater_amplitudes(&random_slater_spec(d, n, &mut rng));
        m += linalg::outer(&psi) * C64::new(w / total, 0.0);
    }
    let meta = StateMetadata::new("random-separable").with("terms", k as f64).seeded(seed);
    DensityState::normalized(sector, m, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::SectorBasis;

    #[test]
    fn slater_of_first_modes_is_first_basis_projector() {
        let rho = slater_projector(&SlaterSpec::from_modes(4, &[0, 1]).unwrap()).unwrap();
        let mut expect = CMat::zeros(6, 6);
        expect[(0, 0)] = C64::new(1.0, 0.0);
        assert!(linalg::max_abs_diff(rho.matrix(), &expect) < 1e-14);
        assert!((rho.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singlet_for_two_orbitals() {
        let v = max_entangled_vector(2).unwrap();
        let basis = SectorBasis::new(Sector::new(4, 2).unwrap());
        let s = 0.5f64.sqrt();
        assert!((v[basis.index_of(0b0011).unwrap()].re - s).abs() < 1e-15);
        assert!((v[basis.index_of(0b1100).unwrap()].re - s).abs() < 1e-15);
        assert!((v.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_states_are_valid_and_reproducible() {
        let a = random_mixed(4, 2, 6, 9).unwrap();
        let b = random_mixed(4, 2, 6, 9).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!((random_pure(5, 2, 1).unwrap().purity() - 1.0).abs() < 1e-12);
        assert!((random_mixed(4, 2, 1, 3).unwrap().purity() - 1.0).abs() < 1e-12);
        assert!(random_mixed(4, 2, 7, 1).is_err());
    }

    #[test]
    fn gaussian_family_endpoints() {
        let half = family_gaussian(&FamilyParams::new(0.5, 2)).unwrap();
        assert!(half_trace_distance(&half, &max_entangled(2).unwrap()) < 2e-3);
        let zero = family_gaussian(&FamilyParams::new(0.0, 2)).unwrap();
        let sigma = slater_projector(&SlaterSpec::from_modes(4, &[0, 2]).unwrap()).unwrap();
        assert!(half_trace_distance(&zero, &sigma) < 2e-3);
    }

    #[test]
    fn linear_family_spectra() {
        let p0 = family_linear(0.0).unwrap();
        assert!(linalg::max_abs_diff(p0.matrix(), maximally_mixed(Sector::new(4, 2).unwrap()).matrix()) < 1e-15);
        let p1 = family_linear(1.0).unwrap();
        assert!(linalg::max_abs_diff(p1.matrix(), max_entangled(2).unwrap().matrix()) < 1e-15);
        let ev = family_linear_with(0.5, LinearMixing::TraceNormalized).unwrap().eigenvalues();
        for v in &ev[..5] {
            assert!((v - 1.0 / 12.0).abs() < 1e-12);
        }
        assert!((ev[5] - (1.0 / 12.0 + 0.5)).abs() < 1e-12);
        let ev = family_linear(0.5).unwrap().eigenvalues();
        assert!((ev[0] - 1.0 / 7.0).abs() < 1e-12 && (ev[5] - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_lso_maps_slater_to_slater() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = linalg::haar_unitary(4, &mut rng);
        let spec = SlaterSpec::from_modes(4, &[1, 3]).unwrap();
        let image = apply_lso(&slater_projector(&spec).unwrap(), std::slice::from_ref(&u)).unwrap();
        let moved = slater_projector(&SlaterSpec::new(&u * spec.coeffs()).unwrap()).unwrap();
        assert!(linalg::max_abs_diff(image.matrix(), moved.matrix()) < 1e-12);
        assert!(!image.metadata.renormalized);
    }

    #[test]
    fn subnormalized_lso_is_flagged() {
        let rho = random_mixed(4, 2, 6, 1).unwrap();
        let half = CMat::identity(4, 4) * C64::new(0.5f64.sqrt(), 0.0);
        let out = apply_lso(&rho, &[half]).unwrap();
        assert!(out.metadata.renormalized);
        assert!(linalg::max_abs_diff(out.matrix(), rho.matrix()) < 1e-12);
        assert!(apply_lso(&rho, &[CMat::zeros(4, 4)]).is_err());
    }

    #[test]
    fn invalid_matrices_are_rejected() {
        let s = Sector::new(4, 2).unwrap();
        assert!(DensityState::new(s, CMat::identity(6, 6), StateMetadata::default()).is_err());
        let mut m = CMat::zeros(6, 6);
        m[(0, 0)] = C64::new(1.5, 0.0);
        m[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(DensityState::new(s, m, StateMetadata::default()).is_err());
    }
}
