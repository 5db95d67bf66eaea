//! Fixed-particle-number sectors of the fermionic Fock space.
//!
//! A sector `(d, n)` holds `n` fermions in `d` modes. Basis kets are
//! occupation bitmasks in ascending integer order; the ket for the set
//! `{i1 < i2 < ... < in}` is `f†_{i1} f†_{i2} ... f†_{in} |0>`. Every matrix in
//! the crate uses this convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64, ONE, ZERO};

pub const MAX_MODES: usize = 16;
const NO_INDEX: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sector {
    pub modes: usize,
    pub particles: usize,
}

impl Sector {
    pub fn new(modes: usize, particles: usize) -> Result<Self> {
        if modes == 0 || modes > MAX_MODES {
            return Err(Error::DimensionOutOfRange(format!(
                "mode count {modes} outside 1..={MAX_MODES}"
            )));
        }
        if particles > modes {
            return Err(Error::DimensionOutOfRange(format!(
                "particle count {particles} exceeds mode count {modes}"
            )));
        }
        Ok(Self { modes, particles })
    }

    pub fn dim(&self) -> usize {
        binomial(self.modes, self.particles)
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of occupied modes strictly below `mode`.
#[inline]
fn occupied_below(mask: u32, mode: usize) -> u32 {
    (mask & ((1u32 << mode) - 1)).count_ones()
}

#[inline]
fn parity_sign(count: u32) -> f64 {
    if count % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `f†_m |mask>` as `(target mask, sign)`, or `None` when mode `m` is occupied.
#[inline]
pub fn create_on(mask: u32, mode: usize) -> Option<(u32, f64)> {
    if mask & (1 << mode) != 0 {
        None
    } else {
        Some((mask | (1 << mode), parity_sign(occupied_below(mask, mode))))
    }
}

/// `f_m |mask>` as `(target mask, sign)`, or `None` when mode `m` is empty.
#[inline]
pub fn annihilate_on(mask: u32, mode: usize) -> Option<(u32, f64)> {
    if mask & (1 << mode) == 0 {
        None
    } else {
        Some((mask & !(1 << mode), parity_sign(occupied_below(mask, mode))))
    }
}

/// `f†_a f_b |mask>`.
#[inline]
pub fn hop_on(mask: u32, to: usize, from: usize) -> Option<(u32, f64)> {
    let (m1, s1) = annihilate_on(mask, from)?;
    let (m2, s2) = create_on(m1, to)?;
    Some((m2, s1 * s2))
}

#[derive(Debug, Clone)]
pub struct SectorBasis {
    sector: Sector,
    states: Vec<u32>,
    index: Vec<u32>,
}

impl SectorBasis {
    pub fn new(sector: Sector) -> Self {
        let Sector { modes, particles } = sector;
        let mut states = Vec::with_capacity(sector.dim());
        let mut index = vec![NO_INDEX; 1usize << modes];
        for mask in 0u32..(1u32 << modes) {
            if mask.count_ones() as usize == particles {
                index[mask as usize] = states.len() as u32;
                states.push(mask);
            }
        }
        Self { sector, states, index }
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn modes(&self) -> usize {
        self.sector.modes
    }

    pub fn particles(&self) -> usize {
        self.sector.particles
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, i: usize) -> u32 {
        self.states[i]
    }

    pub fn index_of(&self, mask: u32) -> Option<usize> {
        match self.index.get(mask as usize) {
            Some(&i) if i != NO_INDEX => Some(i as usize),
            _ => None,
        }
    }

    /// Occupied modes of basis state `i`, ascending.
    pub fn occupied(&self, i: usize) -> Vec<usize> {
        let mask = self.states[i];
        (0..self.modes()).filter(|&m| mask & (1 << m) != 0).collect()
    }
}

pub fn build_sector_basis(modes: usize, particles: usize) -> Result<SectorBasis> {
    Ok(SectorBasis::new(Sector::new(modes, particles)?))
}

/// A complex matrix acting on one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorOperator {
    sector: Sector,
    matrix: CMat,
    hermitian: bool,
}

pub const HERMITIAN_TOL: f64 = 1e-12;

impl SectorOperator {
    pub fn new(sector: Sector, matrix: CMat) -> Result<Self> {
        let dim = sector.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionOutOfRange(format!(
                "operator is {}x{}, sector (d={}, n={}) has dimension {dim}",
                matrix.nrows(),
                matrix.ncols(),
                sector.modes,
                sector.particles
            )));
        }
        Ok(Self { sector, matrix, hermitian: false })
    }

    /// Claims Hermiticity; the claim is verified to `HERMITIAN_TOL`.
    pub fn hermitian(sector: Sector, matrix: CMat) -> Result<Self> {
        let mut op = Self::new(sector, matrix)?;
        let defect = linalg::hermitian_defect(&op.matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidInput(format!(
                "operator claimed Hermitian but |A - A†| reaches {defect:e}"
            )));
        }
        op.matrix = linalg::hermitian_part(&op.matrix);
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(sector: Sector) -> Self {
        let dim = sector.dim();
        Self { sector, matrix: CMat::identity(dim, dim), hermitian: true }
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Dense matrix of `f†_m` from sector `(d, n)` to `(d, n + 1)`.
pub fn creation_matrix(modes: usize, particles: usize, mode: usize) -> Result<CMat> {
    if particles >= modes || mode >= modes {
        return Err(Error::DimensionOutOfRange(format!(
            "creation of mode {mode} on sector (d={modes}, n={particles})"
        )));
    }
    let from = build_sector_basis(modes, particles)?;
    let to = build_sector_basis(modes, particles + 1)?;
    let mut m = CMat::zeros(to.dim(), from.dim());
    for (j, &mask) in from.states().iter().enumerate() {
        if let Some((target, sign)) = create_on(mask, mode) {
            let i = to.index_of(target).expect("target lies in the next sector");
            m[(i, j)] = C64::new(sign, 0.0);
        }
    }
    Ok(m)
}

/// Dense matrix of `f_m` from sector `(d, n)` to `(d, n - 1)`.
pub fn annihilation_matrix(modes: usize, particles: usize, mode: usize) -> Result<CMat> {
    if particles == 0 {
        return Err(Error::DimensionOutOfRange("annihilation on the vacuum sector".into()));
    }
    Ok(creation_matrix(modes, particles - 1, mode)?.adjoint())
}

fn check_coefficients(c: &CVec, modes: usize) -> Result<()> {
    if c.len() != modes {
        return Err(Error::InvalidInput(format!(
            "coefficient vector has length {}, expected {modes}",
            c.len()
        )));
    }
    if c.iter().all(|x| *x == ZERO) {
        return Err(Error::InvalidInput("zero coefficient vector".into()));
    }
    Ok(())
}

/// Applies `a†(c) = Σ_l c_l f†_l` to every column of `x` (states of `from`).
pub fn apply_creation(from: &SectorBasis, to: &SectorBasis, c: &CVec, x: &CMat) -> CMat {
    debug_assert_eq!(to.particles(), from.particles() + 1);
    let mut y = CMat::zeros(to.dim(), x.ncols());
    let modes = from.modes();
    for (j, &mask) in from.states().iter().enumerate() {
        for mode in 0..modes {
            let coef = c[mode];
            if coef == ZERO {
                continue;
            }
            if let Some((target, sign)) = create_on(mask, mode) {
                let i = to.index_of(target).expect("target lies in the next sector");
                let f = coef * sign;
                for col in 0..x.ncols() {
                    let v = x[(j, col)];
                    if v != ZERO {
                        y[(i, col)] += f * v;
                    }
                }
            }
        }
    }
    y
}

/// Matrix of `a(c) = Σ_l c̄_l f_l` from the sector of `from` to one particle fewer.
pub fn generalized_annihilator(from: &SectorBasis, c: &CVec) -> Result<CMat> {
    check_coefficients(c, from.modes())?;
    if from.particles() == 0 {
        return Err(Error::DimensionOutOfRange("annihilation on the vacuum sector".into()));
    }
    let lower = build_sector_basis(from.modes(), from.particles() - 1)?;
    let creation = apply_creation(&lower, from, c, &CMat::identity(lower.dim(), lower.dim()));
    Ok(creation.adjoint())
}

/// The map `v ↦ a†(c_1) ··· a†(c_k) a†(v) |0>` as a `D × d` matrix into
/// sector `(d, k + 1)`; column `l` is the image of `f†_l |0>`.
pub fn creation_string(modes: usize, cs: &[CVec]) -> Result<CMat> {
    for c in cs {
        check_coefficients(c, modes)?;
    }
    if cs.len() + 1 > modes {
        return Err(Error::DimensionOutOfRange(format!(
            "{} creation operators do not fit into {modes} modes",
            cs.len() + 1
        )));
    }
    let mut basis = build_sector_basis(modes, 1)?;
    let mut t = CMat::identity(modes, modes);
    for c in cs.iter().rev() {
        let next = build_sector_basis(modes, basis.particles() + 1)?;
        t = apply_creation(&basis, &next, c, &t);
        basis = next;
    }
    Ok(t)
}

/// `B = a(c^{n-1}) ··· a(c^1) W a†(c^1) ··· a†(c^{n-1})` restricted to one particle.
pub fn contract_witness(w: &SectorOperator, cs: &[CVec]) -> Result<CMat> {
    let Sector { modes, particles } = w.sector();
    if particles == 0 || cs.len() != particles - 1 {
        return Err(Error::InvalidInput(format!(
            "contraction of an n={particles} operator needs {} vectors, got {}",
            particles.saturating_sub(1),
            cs.len()
        )));
    }
    let t = creation_string(modes, cs)?;
    Ok(linalg::congruence(&t, w.matrix()))
}

/// Coefficients of a single Slater determinant `a†_1 ··· a†_n |0>`,
/// `a†_k = Σ_l coeffs[(l, k)] f†_l`. Columns are orthonormalized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterSpec {
    coeffs: CMat,
}

pub const SLATER_RANK_TOL: f64 = 1e-10;

impl SlaterSpec {
    pub fn new(coeffs: CMat) -> Result<Self> {
        let (d, n) = coeffs.shape();
        if d == 0 || d > MAX_MODES || n > d {
            return Err(Error::DimensionOutOfRange(format!("Slater coefficients of shape {d}x{n}")));
        }
        let q = linalg::orthonormal_columns(&coeffs, SLATER_RANK_TOL);
        if q.ncols() < n {
            return Err(Error::RankDeficient { rank: q.ncols(), particles: n });
        }
        Ok(Self { coeffs: q })
    }

    /// Occupation-basis Slater determinant for the given modes.
    pub fn from_modes(modes: usize, occupied: &[usize]) -> Result<Self> {
        let mut c = CMat::zeros(modes, occupied.len());
        for (k, &m) in occupied.iter().enumerate() {
            if m >= modes {
                return Err(Error::DimensionOutOfRange(format!("mode {m} >= {modes}")));
            }
            c[(m, k)] = ONE;
        }
        Self::new(c)
    }

    pub fn coeffs(&self) -> &CMat {
        &self.coeffs
    }

    pub fn modes(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn particles(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn sector(&self) -> Sector {
        Sector { modes: self.modes(), particles: self.particles() }
    }

    pub fn orbital(&self, k: usize) -> CVec {
        self.coeffs.column(k).into_owned()
    }
}

pub fn slater_amplitudes(spec: &SlaterSpec) -> CVec {
    let basis = SectorBasis::new(spec.sector());
    let n = spec.particles();
    let c = spec.coeffs();
    CVec::from_iterator(
        basis.dim(),
        (0..basis.dim()).map(|i| {
            let rows = basis.occupied(i);
            let sub = CMat::from_fn(n, n, |r, k| c[(rows[r], k)]);
            linalg::determinant(&sub)
        }),
    )
}

/// Sector representation of `M ⊗ ··· ⊗ M` (n factors): entry `(S', S)` is the
/// minor `det M[S', S]`.
pub fn lift_single_particle(m: &CMat, sector: Sector) -> Result<CMat> {
    if m.nrows() != sector.modes || m.ncols() != sector.modes {
        return Err(Error::DimensionOutOfRange(format!(
            "single-particle operator is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            sector.modes,
            sector.modes
        )));
    }
    let basis = SectorBasis::new(sector);
    let n = sector.particles;
    let occ: Vec<Vec<usize>> = (0..basis.dim()).map(|i| basis.occupied(i)).collect();
    let dim = basis.dim();
    let mut out = CMat::zeros(dim, dim);
    for col in 0..dim {
        for row in 0..dim {
            let sub = CMat::from_fn(n, n, |r, c| m[(occ[row][r], occ[col][c])]);
            out[(row, col)] = linalg::determinant(&sub);
        }
    }
    Ok(out)
}

/// Sector representation of the one-body operator `Σ_ab h_ab f†_a f_b`.
pub fn second_quantize(h: &CMat, sector: Sector) -> Result<CMat> {
    if h.nrows() != sector.modes || h.ncols() != sector.modes {
        return Err(Error::DimensionOutOfRange(format!(
            "one-body operator is {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            sector.modes,
            sector.modes
        )));
    }
    let basis = SectorBasis::new(sector);
    let mut out = CMat::zeros(basis.dim(), basis.dim());
    for (col, &mask) in basis.states().iter().enumerate() {
        for a in 0..sector.modes {
            for b in 0..sector.modes {
                let z = h[(a, b)];
                if z == ZERO {
                    continue;
                }
                if let Some((target, sign)) = hop_on(mask, a, b) {
                    let row = basis.index_of(target).expect("hopping stays in the sector");
                    out[(row, col)] += z * sign;
                }
            }
        }
    }
    Ok(out)
}

pub const EMBEDDING_MAX_TENSOR_DIM: usize = 1_000_000;

/// Isometry from the sector into the `n`-fold tensor space; the column for
/// `{i1 < ... < in}` is `(1/√n!) Σ_π sgn(π) |i_π(1)⟩ ⊗ ··· ⊗ |i_π(n)⟩`, with the
/// first tensor factor most significant in the flattened index.
pub fn sector_embedding(modes: usize, particles: usize) -> Result<CMat> {
    let basis = build_sector_basis(modes, particles)?;
    let tensor_dim = (modes as u128).pow(particles as u32);
    if tensor_dim > EMBEDDING_MAX_TENSOR_DIM as u128 {
        return Err(Error::DimensionOutOfRange(format!(
            "tensor space dimension {tensor_dim} exceeds {EMBEDDING_MAX_TENSOR_DIM}"
        )));
    }
    let tensor_dim = tensor_dim as usize;
    let perms = permutations(particles);
    let norm = 1.0 / (perms.len() as f64).sqrt();
    let mut v = CMat::zeros(tensor_dim, basis.dim());
    for col in 0..basis.dim() {
        let occ = basis.occupied(col);
        for (perm, sign) in &perms {
            let idx = perm.iter().fold(0usize, |acc, &p| acc * modes + occ[p]);
            v[(idx, col)] += C64::new(sign * norm, 0.0);
        }
    }
    Ok(v)
}

/// All permutations of `0..n` with their signs (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut sign = 1.0;
    out.push((a.clone(), sign));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            sign = -sign;
            out.push((a.clone(), sign));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// One-body reduced density matrix `γ_{kl} = Tr(ρ f†_l f_k)` (trace n).
pub fn one_body_density(rho: &SectorOperator) -> CMat {
    let basis = SectorBasis::new(rho.sector());
    let d = basis.modes();
    let m = rho.matrix();
    let mut gamma = CMat::zeros(d, d);
    for (j, &mask) in basis.states().iter().enumerate() {
        for l in 0..d {
            for k in 0..d {
                // <i| f†_l f_k |j> contributes ρ_{j i} to Tr(ρ f†_l f_k)
                if let Some((target, sign)) = hop_on(mask, l, k) {
                    let i = basis.index_of(target).expect("hopping conserves the sector");
                    gamma[(k, l)] += m[(j, i)] * sign;
                }
            }
        }
    }
    gamma
}
