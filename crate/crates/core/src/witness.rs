//! Optimal entanglement witnesses over sampled Slater constraints with
//! cutting-plane refinement, and the generalized robustness they yield.
//!
//! The witness problem is
//!
//! ```text
//! minimize Tr(W ρ)   subject to   W ⪯ I,   a(c_{n-1})···a(c_1) W a†(c_1)···a†(c_{n-1}) ⪰ 0
//! ```
//!
//! for sampled tuples `c`. The contracted operator equals `T† W T` with `T` the
//! creation string of the tuple, and `T = Q R` with `Q` an orthonormal basis of
//! its range, so each block is imposed as `Q† W Q ⪰ 0` of size `d − n + 1`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    apply_creation, creation_string, lift_single_particle, second_quantize, slater_amplitudes, Sector, SectorBasis, SectorOperator, SlaterSpec,
};
use crate::linalg::{self, derive_seed, CMat, CVec, HermitianEigen, C64};
use crate::sdp::first_order::{solve_first_order, FirstOrderConfig, WarmStart, WitnessProblem};
use crate::sdp::ipm::{solve as solve_real, solve_hermitian, IpmConfig};
use crate::sdp::{
    realify, Backend, Block, HermitianBlock, HermitianMap, HermitianSdp, RMat, SdpStatus, SparseHerm,
    AUTO_IPM_MAX_SECTOR_DIM,
};
use crate::states::{random_slater_spec, DensityState};

/// Tolerance used to decide that a state is block diagonal.
pub const BLOCK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryMode {
    /// Dense witness.
    None,
    /// Witness block diagonal in the `(N↑, N↓)` sectors, modes `2j` up and `2j + 1` down.
    SpinSectors,
    /// Spin sectors further split by ring momentum.
    Momentum,
    /// Total spin, ring momentum and reflection multiplets.
    Ring,
    /// The finest structure under which the state is invariant.
    #[default]
    Auto,
}

impl std::str::FromStr for SymmetryMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "spin" | "spin-sectors" => Ok(Self::SpinSectors),
            "momentum" => Ok(Self::Momentum),
            "ring" => Ok(Self::Ring),
            "auto" => Ok(Self::Auto),
            o => Err(format!("unknown symmetry mode '{o}' (expected none, spin, momentum, ring or auto)")),
        }
    }
}

/// How the Slater constraints enter the witness problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessMethod {
    /// Families up to sector dimension 16, atoms above.
    #[default]
    Auto,
    /// Sampled `(n − 1)`-tuples, each imposing `Q† W Q ⪰ 0` on the family of
    /// Slater determinants that contain it.
    Families,
    /// Column generation over single Slater projectors with `W = I − Z` and
    /// `Z ⪰ 0` supported on the symmetry blocks where the state lives.
    Atoms,
}

impl WitnessMethod {
    pub fn resolve(self, sector_dim: usize) -> Self {
        match self {
            Self::Auto if sector_dim <= AUTO_IPM_MAX_SECTOR_DIM => Self::Families,
            Self::Auto => Self::Atoms,
            other => other,
        }
    }
}

impl std::str::FromStr for WitnessMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "families" => Ok(Self::Families),
            "atoms" => Ok(Self::Atoms),
            o => Err(format!("unknown witness method '{o}' (expected auto, families or atoms)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessConfig {
    pub samples: usize,
    pub seed: u64,
    pub rounds: usize,
    /// Slater expectations below `-violation_tol` become cutting planes.
    pub violation_tol: f64,
    pub restarts: usize,
    pub method: WitnessMethod,
    pub backend: Backend,
    pub symmetry: SymmetryMode,
    pub ipm: IpmConfig,
    pub first_order: FirstOrderConfig,
    /// Fresh Slater determinants drawn to validate the final witness.
    pub validation_samples: usize,
}

impl WitnessConfig {
    /// Defaults: 800 samples up to sector dimension 16, 3000 above.
    pub fn for_sector(sector: Sector) -> Self {
        let samples = if sector.dim() <= 16 { 800 } else { 3000 };
        Self {
            samples,
            seed: 0,
            rounds: 5,
            violation_tol: 1e-4,
            restarts: 32,
            method: WitnessMethod::Auto,
            backend: Backend::Auto,
            symmetry: SymmetryMode::Auto,
            ipm: IpmConfig::default(),
            first_order: FirstOrderConfig::default(),
            validation_samples: 10_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidInput("at least one constraint sample is required".into()));
        }
        if !(self.violation_tol > 0.0) || !(self.ipm.gap_tol > 0.0) || !(self.first_order.accuracy > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// A tuple of `n − 1` single-particle vectors.
pub type ConstraintTuple = Vec<CVec>;

/// Independent Haar-uniform unit vectors, `n − 1` per tuple.
pub fn sample_slater_constraints(d: usize, n: usize, m: usize, seed: u64) -> Result<Vec<ConstraintTuple>> {
    check_witness_sector(d, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| (0..n - 1).map(|_| linalg::random_unit_vector(d, &mut rng)).collect()).collect())
}

fn check_witness_sector(d: usize, n: usize) -> Result<Sector> {
    let s = Sector::new(d, n)?;
    if n == 0 || n >= d {
        return Err(Error::DimensionOutOfRange(format!("witnesses need 0 < n < d, got d={d}, n={n}")));
    }
    Ok(s)
}

/// Orthonormal basis of the range of the tuple's creation string.
pub fn constraint_factor(d: usize, tuple: &[CVec]) -> Result<CMat> {
    let t = creation_string(d, tuple)?;
    let q = linalg::orthonormal_columns(&t, 1e-8);
    if q.ncols() == 0 {
        return Err(Error::InvalidInput("constraint tuple is linearly dependent".into()));
    }
    Ok(q)
}

/// Real-parameter basis of symmetric Hermitian matrices in the new basis:
/// `E_rr`, `E_rc + E_cr` and `i(E_rc − E_cr)` for `r < c` inside a block,
/// repeated on every tied copy.
pub fn hermitian_basis(structure: &BlockStructure) -> Vec<SparseHerm> {
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let offsets = structure.offsets();
    let mut copies: Vec<Vec<usize>> = vec![Vec::new(); structure.group_count()];
    for (&o, &g) in offsets.iter().zip(&structure.groups) {
        copies[g].push(o);
    }
    let mut size = vec![0; copies.len()];
    for (&g, &b) in structure.groups.iter().zip(&structure.sizes) {
        size[g] = b;
    }
    let mut out = Vec::new();
    for (at, &b) in copies.iter().zip(&size) {
        for r in 0..b {
            for c in r..b {
                let on = |z: C64, w: C64| {
                    let mut entries = Vec::new();
                    for &o in at {
                        entries.push((o + r, o + c, z));
                        if r != c {
                            entries.push((o + c, o + r, w));
                        }
                    }
                    SparseHerm { entries }
                };
                if r == c {
                    out.push(on(one, one));
                } else {
                    out.push(on(one, one));
                    out.push(on(i, -i));
                }
            }
        }
    }
    out
}

fn herm_from_vars(basis: &[SparseHerm], y: &[f64], dim: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    for (g, &v) in basis.iter().zip(y) {
        for &(r, c, z) in &g.entries {
            m[(r, c)] += z * v;
        }
    }
    linalg::hermitian_part(&m)
}

#[derive(Debug, Clone, PartialEq)]
enum Basis {
    /// `order[i]` is the original index of new position `i`.
    Permutation(Vec<usize>),
    /// Columns are the new basis vectors.
    Unitary(CMat),
}

/// Orthonormal basis change making a block pattern contiguous. Blocks in the
/// same group are copies of one multiplet: a symmetric operator carries the
/// same matrix on each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStructure {
    basis: Basis,
    pub sizes: Vec<usize>,
    /// Group of each block, numbered from zero in order of first appearance.
    pub groups: Vec<usize>,
}

fn ring_shift(l: usize) -> CMat {
    let mut u = CMat::zeros(2 * l, 2 * l);
    for j in 0..l {
        for s in 0..2 {
            u[(2 * ((j + 1) % l) + s, 2 * j + s)] = C64::new(1.0, 0.0);
        }
    }
    u
}

fn ring_reflection(l: usize) -> CMat {
    let mut u = CMat::zeros(2 * l, 2 * l);
    for j in 0..l {
        for s in 0..2 {
            u[(2 * ((l - j) % l) + s, 2 * j + s)] = C64::new(1.0, 0.0);
        }
    }
    u
}

fn up_count(mask: u32) -> usize {
    (mask & 0x5555_5555).count_ones() as usize
}

/// Columns spanning the eigenspace of `(1/L) Σ_m e^{-2πikm/L} T^m` inside `span(k_basis)`.
fn momentum_part(powers: &[CMat], k_basis: &CMat, k: usize) -> CMat {
    let l = powers.len();
    let r = k_basis.ncols();
    let mut proj = CMat::zeros(r, r);
    for (m, tm) in powers.iter().enumerate() {
        let phase = C64::from_polar(1.0 / l as f64, -2.0 * std::f64::consts::PI * (k * m) as f64 / l as f64);
        proj += linalg::mul_adj_a(k_basis, &linalg::mul(tm, k_basis)) * phase;
    }
    let eig = HermitianEigen::new(&linalg::hermitian_part(&proj));
    let keep: Vec<usize> = (0..r).filter(|&c| eig.values[c] > 0.5).collect();
    let v = CMat::from_fn(r, keep.len(), |i, j| eig.vectors[(i, keep[j])]);
    linalg::mul(k_basis, &v)
}

fn columns_of(m: &CMat) -> Vec<CVec> {
    (0..m.ncols()).map(|c| m.column(c).into_owned()).collect()
}

impl BlockStructure {
    pub fn dense(dim: usize) -> Self {
        Self { basis: Basis::Permutation((0..dim).collect()), sizes: vec![dim], groups: vec![0] }
    }

    /// Groups indices by label, blocks ordered by label, indices ascending.
    pub fn from_labels(labels: &[u64]) -> Self {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| (labels[i], i));
        let mut sizes = Vec::new();
        let mut prev = None;
        for &i in &order {
            if prev == Some(labels[i]) {
                *sizes.last_mut().expect("a block is open") += 1;
            } else {
                sizes.push(1);
                prev = Some(labels[i]);
            }
        }
        let groups = (0..sizes.len()).collect();
        Self { basis: Basis::Permutation(order), sizes, groups }
    }

    /// `(N↑, N↓)` sectors with up modes even and down modes odd.
    pub fn spin_sectors(sector: Sector) -> Self {
        let basis = SectorBasis::new(sector);
        let labels: Vec<u64> = basis.states().iter().map(|&m| up_count(m) as u64).collect();
        Self::from_labels(&labels)
    }

    /// Joint eigenspaces of `(N↑, N↓)` and the one-site translation of a ring
    /// with `modes / 2` sites.
    pub fn spin_momentum_sectors(sector: Sector) -> Result<Self> {
        let l = sector.modes / 2;
        if sector.modes % 2 != 0 || l < 2 {
            return Err(Error::InvalidInput("momentum sectors need a ring of at least 2 sites".into()));
        }
        let powers = translation_powers(sector)?;
        let dim = sector.dim();
        let spin = Self::spin_sectors(sector);
        let Basis::Permutation(order) = &spin.basis else { unreachable!("spin sectors are a permutation") };
        let mut columns: Vec<CVec> = Vec::with_capacity(dim);
        let mut sizes = Vec::new();
        let mut start = 0;
        for &b in &spin.sizes {
            let mut inject = CMat::zeros(dim, b);
            for (c, &i) in order[start..start + b].iter().enumerate() {
                inject[(i, c)] = C64::new(1.0, 0.0);
            }
            start += b;
            for k in 0..l {
                let part = momentum_part(&powers, &inject, k);
                if part.ncols() > 0 {
                    sizes.push(part.ncols());
                    columns.extend(columns_of(&part));
                }
            }
        }
        Self::unitary(columns, sizes.clone(), (0..sizes.len()).collect(), "momentum")
    }

    /// Multiplets of total spin, ring momentum and the reflection `j → −j`.
    /// Each highest-weight space of spin `S` is lowered to all `2S + 1`
    /// magnetizations, and the `−k` copy of a momentum `k` space is its mirror
    /// image, so operators commuting with all three symmetries are
    /// `⊕_g W_g ⊗ I` over the groups.
    pub fn ring_symmetry(sector: Sector) -> Result<Self> {
        let l = sector.modes / 2;
        if sector.modes % 2 != 0 || l < 2 {
            return Err(Error::InvalidInput("ring symmetry needs a ring of at least 2 sites".into()));
        }
        let n = sector.particles;
        let dim = sector.dim();
        let basis = SectorBasis::new(sector);
        let powers = translation_powers(sector)?;
        let mirror = lift_single_particle(&ring_reflection(l), sector)?;
        let mut raise = CMat::zeros(sector.modes, sector.modes);
        for j in 0..l {
            raise[(2 * j, 2 * j + 1)] = C64::new(1.0, 0.0);
        }
        let raise = second_quantize(&raise, sector)?;
        let lower = raise.adjoint();
        let inject = |up: usize| {
            let idx: Vec<usize> = (0..dim).filter(|&i| up_count(basis.state(i)) == up).collect();
            let mut m = CMat::zeros(dim, idx.len());
            for (c, &i) in idx.iter().enumerate() {
                m[(i, c)] = C64::new(1.0, 0.0);
            }
            m
        };
        let mut columns: Vec<CVec> = Vec::with_capacity(dim);
        let mut sizes = Vec::new();
        let mut groups = Vec::new();
        let mut group = 0;
        let mut emit = |copies: Vec<CMat>, two_s: usize| {
            for base in copies {
                let mut x = base;
                for step in 0..=two_s {
                    if step > 0 {
                        x = linalg::mul(&lower, &x);
                        for mut c in x.column_iter_mut() {
                            let norm = c.norm();
                            c /= C64::new(norm, 0.0);
                        }
                    }
                    sizes.push(x.ncols());
                    groups.push(group);
                    columns.extend(columns_of(&x));
                }
            }
            group += 1;
        };
        for up in n.div_ceil(2)..=n.min(l) {
            let two_s = 2 * up - n;
            let here = inject(up);
            // highest weights: the kernel of S+ on this magnetization
            let image = linalg::mul(&raise, &here);
            let gram = HermitianEigen::new(&linalg::mul_adj_a(&image, &image));
            let kernel: Vec<usize> = (0..here.ncols()).filter(|&c| gram.values[c] < 0.5).collect();
            if kernel.is_empty() {
                continue;
            }
            let v = CMat::from_fn(here.ncols(), kernel.len(), |i, j| gram.vectors[(i, kernel[j])]);
            let highest = linalg::mul(&here, &v);
            for k in 0..l {
                let partner = (l - k) % l;
                if partner < k {
                    continue;
                }
                let part = momentum_part(&powers, &highest, k);
                if part.ncols() == 0 {
                    continue;
                }
                if partner == k {
                    let p = HermitianEigen::new(&linalg::hermitian_part(&linalg::congruence(&part, &mirror)));
                    for sign in [1.0, -1.0] {
                        let keep: Vec<usize> = (0..part.ncols()).filter(|&c| p.values[c] * sign > 0.0).collect();
                        if !keep.is_empty() {
                            let v = CMat::from_fn(part.ncols(), keep.len(), |i, j| p.vectors[(i, keep[j])]);
                            emit(vec![linalg::mul(&part, &v)], two_s);
                        }
                    }
                } else {
                    let image = linalg::mul(&mirror, &part);
                    emit(vec![part, image], two_s);
                }
            }
        }
        Self::unitary(columns, sizes, groups, "ring symmetry")
    }

    fn unitary(columns: Vec<CVec>, sizes: Vec<usize>, groups: Vec<usize>, what: &str) -> Result<Self> {
        let dim = columns.first().map_or(0, |c| c.len());
        if columns.len() != dim {
            return Err(Error::Numerical(format!("{what} decomposition found {} of {dim} states", columns.len())));
        }
        let v = CMat::from_columns(&columns);
        let defect = linalg::unitarity_defect(&v);
        if defect > 1e-9 {
            return Err(Error::Numerical(format!("{what} basis is not orthonormal (defect {defect:e})")));
        }
        Ok(Self { basis: Basis::Unitary(v), sizes, groups })
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Number of independent blocks of a symmetric operator.
    pub fn group_count(&self) -> usize {
        self.groups.iter().max().map_or(0, |g| g + 1)
    }

    /// Real parameters of a symmetric Hermitian operator.
    pub fn parameter_count(&self) -> usize {
        let mut seen = vec![false; self.group_count()];
        let mut total = 0;
        for (&g, &b) in self.groups.iter().zip(&self.sizes) {
            if !seen[g] {
                seen[g] = true;
                total += b * b;
            }
        }
        total
    }

    /// `M` in the new basis.
    pub fn permute(&self, m: &CMat) -> CMat {
        match &self.basis {
            Basis::Permutation(order) => {
                let n = order.len();
                CMat::from_fn(n, n, |r, c| m[(order[r], order[c])])
            }
            Basis::Unitary(v) => linalg::congruence(v, m),
        }
    }

    /// Rows of `Q` in the new basis.
    pub fn permute_rows(&self, q: &CMat) -> CMat {
        match &self.basis {
            Basis::Permutation(order) => CMat::from_fn(order.len(), q.ncols(), |r, c| q[(order[r], c)]),
            Basis::Unitary(v) => linalg::mul_adj_a(v, q),
        }
    }

    /// Back to the original basis.
    pub fn unpermute(&self, m: &CMat) -> CMat {
        match &self.basis {
            Basis::Permutation(order) => {
                let n = order.len();
                let mut out = CMat::zeros(n, n);
                for r in 0..n {
                    for c in 0..n {
                        out[(order[r], order[c])] = m[(r, c)];
                    }
                }
                out
            }
            Basis::Unitary(v) => linalg::mul_adj_b(&linalg::mul(v, m), v),
        }
    }

    /// Maps the rows of a matrix from the new basis back to the original one.
    pub(crate) fn unpermute_rows(&self, m: &CMat) -> CMat {
        match &self.basis {
            Basis::Permutation(order) => {
                let mut out = CMat::zeros(m.nrows(), m.ncols());
                for (r, &o) in order.iter().enumerate() {
                    out.row_mut(o).copy_from(&m.row(r));
                }
                out
            }
            Basis::Unitary(v) => linalg::mul(v, m),
        }
    }

    pub(crate) fn offsets(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0, |acc, &b| {
                let o = *acc;
                *acc += b;
                Some(o)
            })
            .collect()
    }

    /// Group average of a matrix given in the new basis: off-block entries
    /// vanish and tied blocks are replaced by their mean.
    pub fn twirl_permuted(&self, p: &CMat) -> CMat {
        let offsets = self.offsets();
        let count = self.group_count();
        let mut sums: Vec<Option<CMat>> = vec![None; count];
        let mut mult = vec![0usize; count];
        for ((&o, &b), &g) in offsets.iter().zip(&self.sizes).zip(&self.groups) {
            let block = p.view((o, o), (b, b)).into_owned();
            mult[g] += 1;
            sums[g] = Some(match sums[g].take() {
                Some(acc) => acc + block,
                None => block,
            });
        }
        let mut out = CMat::zeros(p.nrows(), p.ncols());
        for ((&o, &b), &g) in offsets.iter().zip(&self.sizes).zip(&self.groups) {
            let mean = sums[g].as_ref().expect("every group has a block") / C64::new(mult[g] as f64, 0.0);
            out.view_mut((o, o), (b, b)).copy_from(&mean);
        }
        out
    }

    /// Group average in the original basis.
    pub fn twirl(&self, m: &CMat) -> CMat {
        self.unpermute(&self.twirl_permuted(&self.permute(m)))
    }

    /// Largest entry of `m − twirl(m)`, measured in the new basis.
    pub fn symmetry_defect(&self, m: &CMat) -> f64 {
        let p = self.permute(m);
        let t = self.twirl_permuted(&p);
        linalg::max_abs_diff(&p, &t)
    }
}

fn translation_powers(sector: Sector) -> Result<Vec<CMat>> {
    let l = sector.modes / 2;
    let t = lift_single_particle(&ring_shift(l), sector)?;
    let dim = t.nrows();
    let mut powers = vec![CMat::identity(dim, dim)];
    for m in 1..l {
        powers.push(linalg::mul(&t, &powers[m - 1]));
    }
    Ok(powers)
}

/// Picks the block structure for a state under the configured mode.
pub fn resolve_symmetry(rho: &DensityState, mode: SymmetryMode) -> Result<BlockStructure> {
    let sector = rho.sector();
    let fits = |s: &BlockStructure| s.symmetry_defect(rho.matrix()) <= BLOCK_TOL;
    let require = |s: BlockStructure, what: &str| {
        let w = s.symmetry_defect(rho.matrix());
        if w > BLOCK_TOL {
            return Err(Error::InvalidInput(format!("state is not invariant under {what} (defect {w:e})")));
        }
        Ok(s)
    };
    let even = sector.modes % 2 == 0;
    if !even && !matches!(mode, SymmetryMode::None | SymmetryMode::Auto) {
        return Err(Error::InvalidInput("spin symmetries need an even number of modes".into()));
    }
    match mode {
        SymmetryMode::None => Ok(BlockStructure::dense(rho.dim())),
        SymmetryMode::SpinSectors => require(BlockStructure::spin_sectors(sector), "spin sectors"),
        SymmetryMode::Momentum => require(BlockStructure::spin_momentum_sectors(sector)?, "momentum sectors"),
        SymmetryMode::Ring => require(BlockStructure::ring_symmetry(sector)?, "ring symmetry"),
        SymmetryMode::Auto => {
            if !even {
                return Ok(BlockStructure::dense(rho.dim()));
            }
            for candidate in [
                BlockStructure::ring_symmetry(sector)?,
                BlockStructure::spin_momentum_sectors(sector)?,
                BlockStructure::spin_sectors(sector),
            ] {
                if candidate.sizes.len() > 1 && fits(&candidate) {
                    return Ok(candidate);
                }
            }
            Ok(BlockStructure::dense(rho.dim()))
        }
    }
}

/// The sampled witness problem in LMI form over the real parameters of
/// `W`: block 0 is `I − W`, block `s + 1` is `Q_s† W Q_s`.
pub fn assemble_witness_sdp(
    rho: &DensityState,
    constraints: &[ConstraintTuple],
    structure: &BlockStructure,
) -> Result<HermitianSdp> {
    if constraints.is_empty() {
        return Err(Error::InvalidInput("no constraints".into()));
    }
    let Sector { modes, .. } = rho.sector();
    let factors: Vec<CMat> = constraints
        .iter()
        .map(|t| constraint_factor(modes, t).map(|q| structure.permute_rows(&q)))
        .collect::<Result<_>>()?;
    Ok(witness_sdp_from_factors(&structure.permute(rho.matrix()), &factors, structure))
}

fn witness_sdp_from_factors(rho_p: &CMat, factors: &[CMat], structure: &BlockStructure) -> HermitianSdp {
    let dim = rho_p.nrows();
    let basis = hermitian_basis(structure);
    let objective: Vec<f64> = basis
        .iter()
        .map(|g| g.entries.iter().map(|&(r, c, z)| (z * rho_p[(c, r)]).re).sum())
        .collect();
    let mut blocks = Vec::with_capacity(factors.len() + 1);
    blocks.push(HermitianBlock::Congruence {
        map: 0,
        factor: CMat::identity(dim, dim),
        sign: -1.0,
        constant: CMat::identity(dim, dim),
    });
    for q in factors {
        blocks.push(HermitianBlock::Congruence {
            map: 0,
            factor: q.clone(),
            sign: 1.0,
            constant: CMat::zeros(q.ncols(), q.ncols()),
        });
    }
    HermitianSdp {
        n_vars: basis.len(),
        objective,
        maps: vec![HermitianMap { dim, constant: CMat::zeros(dim, dim), basis }],
        blocks,
    }
}

/// Result of one solve over a fixed constraint set, in the permuted basis.
struct Sampled {
    witness: CMat,
    objective: f64,
    /// Certified upper bound on the robustness from a separable decomposition.
    dual_bound: f64,
    dual_sigma: Option<CMat>,
    status: SdpStatus,
    iterations: usize,
    warm: Option<WarmStart>,
}

/// `t` with `t σ ⪰ ρ` for the group average of `σ`, which stays separable;
/// uses `σ + δ I` when `σ` is singular.
fn dual_certificate(rho_p: &CMat, sigma: &CMat, structure: &BlockStructure) -> (f64, CMat) {
    let dim = rho_p.nrows();
    let mut sigma = structure.twirl_permuted(&linalg::hermitian_part(sigma));
    let scale = linalg::trace(&sigma).re.abs().max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut t = 0.0f64;
        let mut ok = true;
        let mut start = 0;
        for &b in &structure.sizes {
            let r = rho_p.view((start, start), (b, b)).into_owned();
            let s = sigma.view((start, start), (b, b)).into_owned();
            start += b;
            if r.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let Some(ch) = linalg::hermitian_cholesky(&s) else {
                ok = false;
                break;
            };
            let l = ch.l();
            let a = l.solve_lower_triangular(&r).expect("triangular factor is invertible");
            let m = l.solve_lower_triangular(&a.adjoint()).expect("triangular factor is invertible");
            t = t.max(HermitianEigen::new(&m).max());
        }
        if ok {
            let scaled = sigma * C64::new(t, 0.0);
            let bound = linalg::trace(&scaled).re - 1.0;
            return (bound, scaled);
        }
        let add = if jitter == 0.0 { 1e-12 * scale } else { jitter * 99.0 };
        jitter += add;
        for i in 0..dim {
            sigma[(i, i)] += add;
        }
    }
    (f64::INFINITY, sigma)
}

/// Makes `W` exactly satisfy `W ⪯ I` and the given constraints.
fn repair(w: &CMat, factors: &[CMat]) -> CMat {
    let mut w = linalg::hermitian_part(w);
    let top = HermitianEigen::new(&w).max();
    if top > 1.0 {
        for i in 0..w.nrows() {
            w[(i, i)] -= top - 1.0;
        }
    }
    let eps = factors
        .par_iter()
        .map(|q| (-HermitianEigen::new(&linalg::congruence(q, &w)).min()).max(0.0))
        .reduce(|| 0.0, f64::max);
    if eps > 0.0 {
        shift_witness(&w, eps)
    } else {
        w
    }
}

/// `(W + v I) / (1 + v)`.
pub fn shift_witness(w: &CMat, v: f64) -> CMat {
    let mut out = w.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += v;
    }
    out / C64::new(1.0 + v, 0.0)
}

fn solve_sampled(
    rho_p: &CMat,
    factors: &[CMat],
    structure: &BlockStructure,
    backend: Backend,
    cfg: &WitnessConfig,
    warm: Option<&WarmStart>,
) -> Result<Sampled> {
    match backend {
        Backend::Ipm | Backend::Auto => {
            let sdp = witness_sdp_from_factors(rho_p, factors, structure);
            let sol = solve_hermitian(&sdp, &cfg.ipm)?;
            if sol.real.status == SdpStatus::InfeasibleDetected {
                return Err(Error::Solver("interior-point method reports infeasibility".into()));
            }
            let basis = &sdp.maps[0].basis;
            let w = repair(&herm_from_vars(basis, &sol.real.y, rho_p.nrows()), factors);
            let mut sigma = CMat::zeros(rho_p.nrows(), rho_p.nrows());
            for (q, x) in factors.iter().zip(&sol.dual[1..]) {
                let x = HermitianEigen::new(x).map(|v| v.max(0.0));
                sigma += linalg::mul_adj_b(&linalg::mul(q, &x), q);
            }
            let (dual_bound, sigma) = dual_certificate(rho_p, &sigma, structure);
            Ok(Sampled {
                objective: linalg::inner_re(rho_p, &w),
                witness: w,
                dual_bound,
                dual_sigma: Some(sigma),
                status: sol.real.status,
                iterations: sol.real.iterations,
                warm: None,
            })
        }
        Backend::FirstOrder => {
            let p = WitnessProblem {
                cost: rho_p.clone(),
                block_sizes: structure.sizes.clone(),
                block_groups: structure.groups.clone(),
                factors: factors.to_vec(),
            };
            let sol = solve_first_order(&p, &cfg.first_order, warm)?;
            let mut sigma = CMat::zeros(rho_p.nrows(), rho_p.nrows());
            for (q, l) in factors.iter().zip(&sol.duals) {
                sigma += linalg::mul_adj_b(&linalg::mul(q, l), q);
            }
            Ok(Sampled {
                objective: sol.upper,
                witness: sol.witness,
                dual_bound: -sol.lower,
                dual_sigma: Some(structure.twirl_permuted(&sigma)),
                status: sol.status,
                iterations: sol.iterations,
                warm: Some(sol.warm),
            })
        }
    }
}

/// Quadratic form minimized by the violation search.
enum SearchForm<'a> {
    Dense(&'a CMat),
    /// `−F F†`.
    NegativeGram(CMat),
}

/// Cyclic single-orbital minimization of `<Sl|W|Sl>`: with the other
/// orbitals fixed the optimal remaining orbital is the lowest eigenvector of
/// the contracted single-particle matrix on their orthogonal complement.
struct SlaterSearch<'a> {
    modes: usize,
    particles: usize,
    /// Sector bases for one up to `particles` particles.
    bases: Vec<SectorBasis>,
    form: SearchForm<'a>,
}

impl<'a> SlaterSearch<'a> {
    fn new(sector: Sector, form: SearchForm<'a>) -> Self {
        let bases = (1..=sector.particles).map(|k| SectorBasis::new(Sector { modes: sector.modes, particles: k })).collect();
        Self { modes: sector.modes, particles: sector.particles, bases, form }
    }

    /// `T† W T` for the creation string `T` of `others`.
    fn contracted(&self, others: &[CVec]) -> CMat {
        let mut t = CMat::identity(self.modes, self.modes);
        for (k, c) in others.iter().rev().enumerate() {
            t = apply_creation(&self.bases[k], &self.bases[k + 1], c, &t);
        }
        match &self.form {
            SearchForm::Dense(w) => linalg::congruence(&t, w),
            SearchForm::NegativeGram(f) => {
                let g = linalg::mul_adj_a(f, &t);
                -linalg::mul_adj_a(&g, &g)
            }
        }
    }

    fn value(&self, spec: &SlaterSpec) -> f64 {
        let a = slater_amplitudes(spec);
        match &self.form {
            SearchForm::Dense(w) => (a.adjoint() * *w * &a)[(0, 0)].re,
            SearchForm::NegativeGram(f) => -(f.adjoint() * &a).norm_squared(),
        }
    }

    fn descend(&self, start: SlaterSpec) -> Result<(SlaterSpec, f64)> {
        let (d, n) = (self.modes, self.particles);
        let mut orbitals: Vec<CVec> = (0..n).map(|k| start.orbital(k)).collect();
        let mut value = self.value(&start);
        for _sweep in 0..200 {
            let before = value;
            for k in 0..n {
                let others: Vec<CVec> = (0..n).filter(|&j| j != k).map(|j| orbitals[j].clone()).collect();
                let b = self.contracted(&others);
                let mut span = CMat::zeros(d, others.len() + d);
                for (j, o) in others.iter().enumerate() {
                    span.set_column(j, o);
                }
                for j in 0..d {
                    span[(j, others.len() + j)] = C64::new(1.0, 0.0);
                }
                let full = linalg::orthonormal_columns(&span, 1e-10);
                let comp = full.columns(others.len(), full.ncols() - others.len()).into_owned();
                let eig = HermitianEigen::new(&linalg::congruence(&comp, &b));
                orbitals[k] = &comp * eig.vectors.column(0);
                value = eig.min();
            }
            if before - value <= 1e-10 * (1.0 + value.abs()) {
                break;
            }
        }
        let mut c = CMat::zeros(d, n);
        for (k, o) in orbitals.iter().enumerate() {
            c.set_column(k, o);
        }
        let spec = SlaterSpec::new(c)?;
        let v = self.value(&spec);
        Ok((spec, v))
    }

    /// Local minima from `restarts` Haar starts followed by the given starts,
    /// best first.
    fn run(&self, restarts: usize, seed: u64, starts: Vec<SlaterSpec>) -> Result<Vec<(SlaterSpec, f64)>> {
        let total = restarts + starts.len();
        let mut found: Vec<(usize, SlaterSpec, f64)> = (0..total)
            .into_par_iter()
            .map(|k| {
                let start = if k < restarts {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64]));
                    random_slater_spec(self.modes, self.particles, &mut rng)
                } else {
                    starts[k - restarts].clone()
                };
                let (spec, v) = self.descend(start)?;
                Ok((k, spec, v))
            })
            .collect::<Result<_>>()?;
        found.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        Ok(found.into_iter().map(|(_, s, v)| (s, v)).collect())
    }
}

/// Minimizes `<Sl|W|Sl>` over Slater determinants from `restarts` random
/// starts. Returns every restart's local minimum, best first.
pub fn find_violating_slaters(w: &SectorOperator, restarts: usize, seed: u64) -> Result<Vec<(SlaterSpec, f64)>> {
    let Sector { modes, particles } = w.sector();
    check_witness_sector(modes, particles)?;
    SlaterSearch::new(w.sector(), SearchForm::Dense(w.matrix())).run(restarts.max(1), seed, Vec::new())
}

pub fn find_violating_slater(w: &SectorOperator, restarts: usize, seed: u64) -> Result<(SlaterSpec, f64)> {
    Ok(find_violating_slaters(w, restarts, seed)?.swap_remove(0))
}

/// Drops determinants that coincide with an earlier one up to phase.
fn distinct_cuts(cuts: Vec<&SlaterSpec>) -> Vec<&SlaterSpec> {
    let mut kept: Vec<(&SlaterSpec, CVec)> = Vec::new();
    for c in cuts {
        let a = slater_amplitudes(c);
        if kept.iter().all(|(_, b)| b.dotc(&a).norm() < 1.0 - 1e-8) {
            kept.push((c, a));
        }
    }
    kept.into_iter().map(|(c, _)| c).collect()
}

fn slater_value(w: &CMat, spec: &SlaterSpec) -> f64 {
    let a = slater_amplitudes(spec);
    (a.adjoint() * w * &a)[(0, 0)].re
}

/// Minimum of `<Sl|W|Sl>` over `count` fresh Haar Slater determinants.
pub fn validate_witness(w: &SectorOperator, count: usize, seed: u64) -> f64 {
    let Sector { modes, particles } = w.sector();
    let chunks = 64usize;
    let per = count.div_ceil(chunks);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c as u64]));
            let todo = per.min(count.saturating_sub(c * per));
            (0..todo)
                .map(|_| slater_value(w.matrix(), &random_slater_spec(modes, particles, &mut rng)))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundInfo {
    pub constraints: usize,
    pub objective: f64,
    pub dual_bound: f64,
    pub most_violated: Option<f64>,
    pub status: SdpStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub objective: f64,
    pub robustness: f64,
    /// Minimum of `Tr(W σ)` over fresh Slater projectors.
    pub min_validation_value: f64,
    pub validation_samples: usize,
    /// Minimum found by the violation search on the returned witness.
    pub min_search_value: f64,
    /// `s` in `(W₀ + s I)/(1 + s)`, which lifts the optimized `W₀` to be
    /// nonnegative on every determinant the violation search found.
    pub shift: f64,
    pub max_eigenvalue: f64,
    pub rounds: usize,
    pub constraints_added: usize,
}

#[derive(Debug, Clone)]
pub struct WitnessResult {
    pub witness: SectorOperator,
    /// `Tr(W ρ)` for the returned witness.
    pub objective: f64,
    /// `max(0, −objective)`.
    pub robustness: f64,
    /// Certified upper bound from an explicit separable decomposition.
    pub dual_bound: f64,
    /// Separable operator `σ ⪰ ρ` with `Tr σ = 1 + dual_bound`, original basis.
    pub dual_sigma: Option<CMat>,
    pub method: WitnessMethod,
    pub backend: Backend,
    pub block_sizes: Vec<usize>,
    pub rounds: Vec<RoundInfo>,
    pub validation: ValidationReport,
}

impl WitnessResult {
    /// The normalized state `φ` with `(ρ + s φ)/(1 + s)` separable, `s = dual_bound`.
    pub fn mixing_state(&self, rho: &DensityState) -> Option<CMat> {
        let sigma = self.dual_sigma.as_ref()?;
        let s = self.dual_bound;
        if !(s > 1e-12) || !s.is_finite() {
            return None;
        }
        Some((sigma - rho.matrix()) / C64::new(s, 0.0))
    }
}

/// Sampled optimum for a fixed constraint set (no cutting planes, no shift).
pub fn sampled_robustness(
    rho: &DensityState,
    constraints: &[ConstraintTuple],
    cfg: &WitnessConfig,
) -> Result<f64> {
    cfg.validate()?;
    let Sector { modes, particles } = rho.sector();
    check_witness_sector(modes, particles)?;
    let structure = resolve_symmetry(rho, cfg.symmetry)?;
    let factors: Vec<CMat> = constraints
        .iter()
        .map(|t| constraint_factor(modes, t).map(|q| structure.permute_rows(&q)))
        .collect::<Result<_>>()?;
    let backend = cfg.backend.resolve(rho.dim());
    let s = solve_sampled(&structure.permute(rho.matrix()), &factors, &structure, backend, cfg, None)?;
    Ok((-s.objective).max(0.0))
}

fn tuples_from_spec(spec: &SlaterSpec) -> Vec<ConstraintTuple> {
    let n = spec.particles();
    (0..n)
        .map(|skip| (0..n).filter(|&k| k != skip).map(|k| spec.orbital(k)).collect())
        .collect()
}

/// Witness optimization with cutting planes and validation.
pub fn optimal_witness(rho: &DensityState, cfg: &WitnessConfig) -> Result<WitnessResult> {
    cfg.validate()?;
    let Sector { modes, particles } = rho.sector();
    check_witness_sector(modes, particles)?;
    let structure = resolve_symmetry(rho, cfg.symmetry)?;
    match cfg.method.resolve(rho.dim()) {
        WitnessMethod::Atoms => atoms_witness(rho, cfg, &structure),
        _ => families_witness(rho, cfg, &structure),
    }
}

fn finish(
    rho: &DensityState,
    cfg: &WitnessConfig,
    witness: SectorOperator,
    min_search: f64,
    parts: (f64, Option<CMat>, WitnessMethod, Backend, Vec<usize>, Vec<RoundInfo>, usize),
) -> WitnessResult {
    let (dual_bound, dual_sigma, method, backend, block_sizes, rounds, constraints_added) = parts;
    let shift = (-min_search).max(0.0);
    let witness = if shift > 0.0 {
        let dim = witness.dim();
        let m = (witness.into_matrix() + CMat::identity(dim, dim) * C64::new(shift, 0.0)) / C64::new(1.0 + shift, 0.0);
        SectorOperator::hermitian(rho.sector(), m).expect("shifted witness stays Hermitian")
    } else {
        witness
    };
    let objective = linalg::inner_re(rho.matrix(), witness.matrix());
    let min_fresh = validate_witness(&witness, cfg.validation_samples, derive_seed(cfg.seed, &[2]));
    let robustness = (-objective).max(0.0);
    let validation = ValidationReport {
        objective,
        robustness,
        min_validation_value: min_fresh,
        validation_samples: cfg.validation_samples,
        min_search_value: (min_search + shift) / (1.0 + shift),
        shift,
        max_eigenvalue: HermitianEigen::new(witness.matrix()).max(),
        rounds: rounds.len(),
        constraints_added,
    };
    WitnessResult {
        witness,
        objective,
        robustness,
        dual_bound,
        dual_sigma,
        method,
        backend,
        block_sizes,
        rounds,
        validation,
    }
}

fn families_witness(rho: &DensityState, cfg: &WitnessConfig, structure: &BlockStructure) -> Result<WitnessResult> {
    let sector = rho.sector();
    let Sector { modes, particles } = sector;
    let backend = cfg.backend.resolve(rho.dim());
    let rho_p = structure.permute(rho.matrix());

    let tuples = sample_slater_constraints(modes, particles, cfg.samples, derive_seed(cfg.seed, &[0]))?;
    let mut factors: Vec<CMat> = tuples
        .par_iter()
        .map(|t| constraint_factor(modes, t).map(|q| structure.permute_rows(&q)))
        .collect::<Result<_>>()?;
    let initial = factors.len();
    let mut rounds = Vec::new();
    let mut warm: Option<WarmStart> = None;
    let mut round = 0usize;
    let (sampled, witness, worst) = loop {
        let s = solve_sampled(&rho_p, &factors, structure, backend, cfg, warm.as_ref())?;
        let w_orig = SectorOperator::hermitian(sector, structure.unpermute(&s.witness))?;
        let found = find_violating_slaters(&w_orig, cfg.restarts, derive_seed(cfg.seed, &[1, round as u64]))?;
        let worst = found.first().map_or(f64::INFINITY, |f| f.1);
        rounds.push(RoundInfo {
            constraints: factors.len(),
            objective: s.objective,
            dual_bound: s.dual_bound,
            most_violated: Some(worst),
            status: s.status,
            iterations: s.iterations,
        });
        let cuts: Vec<&SlaterSpec> =
            found.iter().filter(|(_, v)| *v < -cfg.violation_tol).map(|(spec, _)| spec).collect();
        if round >= cfg.rounds || cuts.is_empty() {
            break (s, w_orig, worst);
        }
        for spec in cuts {
            for t in tuples_from_spec(spec) {
                if let Ok(q) = constraint_factor(modes, &t) {
                    factors.push(structure.permute_rows(&q));
                }
            }
        }
        warm = s.warm.clone();
        round += 1;
    };
    let dual_sigma = sampled.dual_sigma.map(|s| structure.unpermute(&s));
    let added = factors.len() - initial;
    Ok(finish(
        rho,
        cfg,
        witness,
        worst,
        (sampled.dual_bound, dual_sigma, WitnessMethod::Families, backend, structure.sizes.clone(), rounds, added),
    ))
}

/// Symmetric operators restricted to the groups on which the state has weight,
/// stored as one block per group.
struct SupportSpace {
    structure: BlockStructure,
    /// `(group, copy offsets, compact offset, size)`.
    groups: Vec<(usize, Vec<usize>, usize, usize)>,
    dim: usize,
    rho: CMat,
    basis: Vec<SparseHerm>,
}

impl SupportSpace {
    fn new(rho: &DensityState, structure: &BlockStructure) -> Self {
        let rho_p = structure.permute(rho.matrix());
        let offsets = structure.offsets();
        let mut groups: Vec<(usize, Vec<usize>, usize, usize)> = Vec::new();
        let mut dim = 0;
        for g in 0..structure.group_count() {
            let copies: Vec<usize> =
                (0..offsets.len()).filter(|&b| structure.groups[b] == g).map(|b| offsets[b]).collect();
            let size = structure.sizes[structure.groups.iter().position(|&x| x == g).expect("group exists")];
            let o = copies[0];
            let block = rho_p.view((o, o), (size, size));
            if block.iter().any(|z| z.norm() > BLOCK_TOL) {
                groups.push((g, copies, dim, size));
                dim += size;
            }
        }
        let mut rho_c = CMat::zeros(dim, dim);
        for (_, copies, at, size) in &groups {
            let mut mean = CMat::zeros(*size, *size);
            for &o in copies {
                mean += rho_p.view((o, o), (*size, *size));
            }
            rho_c.view_mut((*at, *at), (*size, *size)).copy_from(&(mean / C64::new(copies.len() as f64, 0.0)));
        }
        let compact = BlockStructure {
            basis: Basis::Permutation((0..dim).collect()),
            sizes: groups.iter().map(|g| g.3).collect(),
            groups: (0..groups.len()).collect(),
        };
        let basis = hermitian_basis(&compact);
        Self { structure: structure.clone(), groups, dim, rho: rho_c, basis }
    }

    /// Compact blocks of the group average of `|φ⟩⟨φ|`.
    fn atom(&self, amplitudes: &CVec) -> CMat {
        let x = self.structure.permute_rows(&CMat::from_column_slice(amplitudes.len(), 1, amplitudes.as_slice()));
        let mut a = CMat::zeros(self.dim, self.dim);
        for (_, copies, at, size) in &self.groups {
            let mut block = CMat::zeros(*size, *size);
            for &o in copies {
                let v = x.view((o, 0), (*size, 1));
                block += &v * v.adjoint();
            }
            a.view_mut((*at, *at), (*size, *size)).copy_from(&(block / C64::new(copies.len() as f64, 0.0)));
        }
        a
    }

    fn coefficients(&self, a: &CMat) -> Vec<f64> {
        self.basis.iter().map(|g| g.entries.iter().map(|&(r, c, z)| (z * a[(c, r)]).re).sum()).collect()
    }

    /// The symmetric operator whose expectation in `|φ⟩` equals `<Z_c, atom(φ)>`.
    fn embed(&self, z: &CMat) -> CMat {
        let d = self.structure.dim();
        let mut full = CMat::zeros(d, d);
        for (_, copies, at, size) in &self.groups {
            let block = z.view((*at, *at), (*size, *size)) / C64::new(copies.len() as f64, 0.0);
            for &o in copies {
                full.view_mut((o, o), (*size, *size)).copy_from(&block);
            }
        }
        self.structure.unpermute(&full)
    }

    /// `F` with `embed(z) = F F†` for PSD `z`.
    fn factor(&self, z: &CMat) -> CMat {
        let mut cols: Vec<(usize, CVec)> = Vec::new();
        for (_, copies, at, size) in &self.groups {
            let eig = HermitianEigen::new(&z.view((*at, *at), (*size, *size)).into_owned());
            let top = eig.values.iter().cloned().fold(0.0f64, f64::max);
            for (j, &lam) in eig.values.iter().enumerate() {
                if lam <= 1e-12 * top.max(1e-300) {
                    continue;
                }
                let v = eig.vectors.column(j) * C64::new((lam / copies.len() as f64).sqrt(), 0.0);
                for &o in copies {
                    cols.push((o, v.clone()));
                }
            }
        }
        let mut f = CMat::zeros(self.structure.dim(), cols.len().max(1));
        for (j, (o, v)) in cols.iter().enumerate() {
            f.view_mut((*o, j), (v.len(), 1)).copy_from(v);
        }
        self.structure.unpermute_rows(&f)
    }

    /// `t · Σ w_k` with `t Σ w_k A_k ⪰ ρ` on every support group, adding
    /// multiples of the (separable) identity when the mixture is singular.
    fn upper_bound(&self, atoms: &[CMat], weights: &[f64]) -> f64 {
        let mut sigma = CMat::zeros(self.dim, self.dim);
        let mut total = 0.0;
        for (a, &w) in atoms.iter().zip(weights) {
            if w > 0.0 {
                sigma += a * C64::new(w, 0.0);
                total += w;
            }
        }
        let full_dim = self.structure.dim() as f64;
        let mut jitter = 0.0;
        for _ in 0..10 {
            let mut t = 0.0f64;
            let mut ok = true;
            for (_, _, at, size) in &self.groups {
                let s = sigma.view((*at, *at), (*size, *size)).into_owned();
                let r = self.rho.view((*at, *at), (*size, *size)).into_owned();
                let Some(ch) = linalg::hermitian_cholesky(&s) else {
                    ok = false;
                    break;
                };
                let l = ch.l();
                let a = l.solve_lower_triangular(&r).expect("triangular factor is invertible");
                let m = l.solve_lower_triangular(&a.adjoint()).expect("triangular factor is invertible");
                t = t.max(HermitianEigen::new(&m).max());
            }
            if ok {
                return t * (total + jitter * full_dim) - 1.0;
            }
            let add = if jitter == 0.0 { 1e-12 * total.max(1e-300) } else { jitter * 99.0 };
            jitter += add;
            for i in 0..self.dim {
                sigma[(i, i)] += add;
            }
        }
        f64::INFINITY
    }
}

/// `max <Z, ρ>` subject to `Z ⪰ 0` and `<Z, A_k> ≤ 1`; returns `Z`, the
/// multipliers `w_k` of the atom constraints, and the solver record.
fn solve_atoms(space: &SupportSpace, coeffs: &[Vec<f64>], cfg: &IpmConfig) -> Result<(CMat, Vec<f64>, SdpStatus, usize)> {
    let n = space.basis.len();
    let objective: Vec<f64> = space.coefficients(&space.rho).iter().map(|c| -c).collect();
    let psd = HermitianSdp {
        n_vars: n,
        objective,
        maps: vec![HermitianMap {
            dim: space.dim,
            constant: CMat::zeros(space.dim, space.dim),
            basis: space.basis.clone(),
        }],
        blocks: vec![HermitianBlock::Congruence {
            map: 0,
            factor: CMat::identity(space.dim, space.dim),
            sign: 1.0,
            constant: CMat::zeros(space.dim, space.dim),
        }],
    };
    let mut real = realify(&psd)?;
    for a in coeffs {
        real.blocks.push(Block::Dense {
            constant: RMat::from_element(1, 1, 1.0),
            coeffs: a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, RMat::from_element(1, 1, -v))).collect(),
        });
    }
    let sol = solve_real(&real, cfg)?;
    let z = herm_from_vars(&space.basis, &sol.y, space.dim);
    let z = HermitianEigen::new(&z).map(|v| v.max(0.0));
    let weights = sol.dual[1..].iter().map(|x| x[(0, 0)].max(0.0)).collect();
    Ok((z, weights, sol.status, sol.iterations))
}

fn atoms_witness(rho: &DensityState, cfg: &WitnessConfig, structure: &BlockStructure) -> Result<WitnessResult> {
    let sector = rho.sector();
    let Sector { modes, particles } = sector;
    let space = SupportSpace::new(rho, structure);
    let basis = SectorBasis::new(sector);
    let mut atoms: Vec<CMat> = Vec::new();
    let mut specs: Vec<SlaterSpec> = Vec::new();
    for i in 0..basis.dim() {
        let mut e = CVec::zeros(basis.dim());
        e[i] = C64::new(1.0, 0.0);
        let a = space.atom(&e);
        if linalg::trace(&a).re > 1e-14 {
            let mask = basis.state(i);
            let occupied: Vec<usize> = (0..modes).filter(|&m| mask >> m & 1 == 1).collect();
            specs.push(SlaterSpec::from_modes(modes, &occupied)?);
            atoms.push(a);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0]));
    let sampled: Vec<SlaterSpec> = (0..cfg.samples).map(|_| random_slater_spec(modes, particles, &mut rng)).collect();
    atoms.extend(sampled.par_iter().map(|s| space.atom(&slater_amplitudes(s))).collect::<Vec<_>>());
    specs.extend(sampled);
    let initial = atoms.len();
    let mut coeffs: Vec<Vec<f64>> = atoms.par_iter().map(|a| space.coefficients(a)).collect();
    let mut rounds = Vec::new();
    let mut round = 0usize;
    // (⟨Z, ρ⟩ / max(1, best), Z, best) of the round whose rescaled witness certifies the most
    let mut kept: Option<(f64, CMat, f64)> = None;
    let mut dual_bound = f64::INFINITY;
    loop {
        let (z, weights, status, iterations) = solve_atoms(&space, &coeffs, &cfg.ipm)?;
        let round_bound = space.upper_bound(&atoms, &weights);
        let z_full = space.embed(&z);
        let mut ranked: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > 0.0).collect();
        ranked.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        let starts = ranked.iter().take(cfg.restarts).map(|&k| specs[k].clone()).collect();
        let search = SlaterSearch::new(sector, SearchForm::NegativeGram(space.factor(&z)));
        let found = search.run(cfg.restarts, derive_seed(cfg.seed, &[1, round as u64]), starts)?;
        let best = found.first().map_or(0.0, |f| -f.1);
        let value = linalg::inner_re(&space.rho, &z);
        dual_bound = dual_bound.min(round_bound);
        let ratio = value / best.max(1.0);
        if kept.as_ref().is_none_or(|k| ratio > k.0) {
            kept = Some((ratio, z_full.clone(), best));
        }
        rounds.push(RoundInfo {
            constraints: atoms.len(),
            objective: 1.0 - value,
            dual_bound: round_bound,
            most_violated: Some(1.0 - best),
            status,
            iterations,
        });
        let cuts: Vec<&SlaterSpec> =
            found.iter().filter(|(_, v)| -*v > 1.0 + cfg.violation_tol).map(|(spec, _)| spec).collect();
        let cuts = distinct_cuts(cuts);
        if round >= cfg.rounds || cuts.is_empty() {
            break;
        }
        let fresh: Vec<CMat> = cuts.par_iter().map(|s| space.atom(&slater_amplitudes(s))).collect();
        coeffs.extend(fresh.iter().map(|a| space.coefficients(a)));
        atoms.extend(fresh);
        specs.extend(cuts.into_iter().cloned());
        round += 1;
    };
    let (_, z_full, best) = kept.expect("at least one round");
    let dim = rho.dim();
    let witness = SectorOperator::hermitian(sector, CMat::identity(dim, dim) - z_full)?;
    let min_search = 1.0 - best;
    let added = atoms.len() - initial;
    Ok(finish(
        rho,
        cfg,
        witness,
        min_search,
        (dual_bound, None, WitnessMethod::Atoms, Backend::Ipm, structure.sizes.clone(), rounds, added),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{max_entangled, max_entangled_vector, random_pure, slater_projector};

    fn quick(sector: Sector) -> WitnessConfig {
        let mut c = WitnessConfig::for_sector(sector);
        c.samples = 200;
        c.validation_samples = 2000;
        c.restarts = 8;
        c
    }

    #[test]
    fn samples_are_unit_and_reproducible() {
        let a = sample_slater_constraints(10, 5, 2, 1).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|t| t.len() == 4));
        assert!(a.iter().flatten().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert_eq!(a, sample_slater_constraints(10, 5, 2, 1).unwrap());
    }

    #[test]
    fn assembled_problem_shape() {
        let rho = max_entangled(2).unwrap();
        let cons = sample_slater_constraints(4, 2, 5, 0).unwrap();
        let p = assemble_witness_sdp(&rho, &cons, &BlockStructure::dense(6)).unwrap();
        assert_eq!(p.blocks.len(), 6);
        assert_eq!(p.n_vars, 36);
        let real = crate::sdp::realify(&p).unwrap();
        let zero = real.evaluate(&vec![0.0; 36]);
        assert!(zero.iter().all(|m| m.symmetric_eigenvalues().min() >= 0.0));
    }

    #[test]
    fn spin_sector_structure() {
        let s = BlockStructure::spin_sectors(Sector::new(10, 5).unwrap());
        assert_eq!(s.sizes, vec![1, 25, 100, 100, 25, 1]);
        let t = BlockStructure::spin_sectors(Sector::new(4, 2).unwrap());
        assert_eq!(t.sizes, vec![1, 4, 1]);
        let m = linalg::ginibre(6, 6, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(t.unpermute(&t.permute(&m)), m);
    }

    #[test]
    fn momentum_structure_block_diagonalizes_the_ring() {
        let sector = Sector::new(10, 5).unwrap();
        let s = BlockStructure::spin_momentum_sectors(sector).unwrap();
        assert_eq!(s.dim(), 252);
        assert_eq!(s.sizes.iter().map(|b| b * b).sum::<usize>(), 4252);
        let h = crate::hubbard::build_hamiltonian(&crate::hubbard::EhmParams::half_filled(5, 3.0, 1.0)).unwrap();
        assert!(s.symmetry_defect(h.matrix()) < 1e-12);
        let m = linalg::ginibre(252, 252, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(linalg::max_abs_diff(&s.unpermute(&s.permute(&m)), &m) < 1e-11);
    }

    #[test]
    fn ring_symmetry_multiplets() {
        let sector = Sector::new(10, 5).unwrap();
        let s = BlockStructure::ring_symmetry(sector).unwrap();
        assert_eq!(s.dim(), 252);
        // spin 1/2, 3/2, 5/2 multiplicities 75, 24, 1
        let mut per_group = vec![0usize; s.group_count()];
        for (&g, &b) in s.groups.iter().zip(&s.sizes) {
            per_group[g] += b;
        }
        assert_eq!(per_group.iter().sum::<usize>(), 252);
        assert!(s.parameter_count() < 1300, "{}", s.parameter_count());
        for (u, v) in [(3.0, 1.0), (-6.0, 4.0)] {
            let h = crate::hubbard::build_hamiltonian(&crate::hubbard::EhmParams::half_filled(5, u, v)).unwrap();
            assert!(s.symmetry_defect(h.matrix()) < 1e-11);
            let g = crate::hubbard::ground_state(&h, None).unwrap();
            assert!(s.symmetry_defect(g.state.matrix()) < 1e-9);
        }
        let m = linalg::ginibre(252, 252, &mut ChaCha8Rng::seed_from_u64(5));
        let t = s.twirl(&m);
        assert!(linalg::max_abs_diff(&s.twirl(&t), &t) < 1e-11);
        let basis = hermitian_basis(&s);
        assert_eq!(basis.len(), s.parameter_count());
        let small = BlockStructure::ring_symmetry(Sector::new(4, 2).unwrap()).unwrap();
        assert_eq!(small.dim(), 6);
    }

    #[test]
    fn violation_search_on_identity_and_singlet_witness() {
        let sector = Sector::new(4, 2).unwrap();
        let id = SectorOperator::identity(sector);
        let (_, v) = find_violating_slater(&id, 4, 0).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let psi = max_entangled_vector(2).unwrap();
        let w = CMat::identity(6, 6) - linalg::outer(&psi) * C64::new(2.0, 0.0);
        let (_, v) = find_violating_slater(&SectorOperator::hermitian(sector, w).unwrap(), 8, 1).unwrap();
        assert!(v.abs() < 1e-8, "{v}");
    }

    #[test]
    fn slater_state_has_no_robustness() {
        let rho = slater_projector(&SlaterSpec::from_modes(4, &[0, 3]).unwrap()).unwrap();
        let r = optimal_witness(&rho, &quick(rho.sector())).unwrap();
        assert!(r.robustness <= 1e-6, "{}", r.robustness);
    }

    #[test]
    fn singlet_has_unit_robustness() {
        let rho = max_entangled(2).unwrap();
        let r = optimal_witness(&rho, &quick(rho.sector())).unwrap();
        assert!((r.robustness - 1.0).abs() < 0.02, "{}", r.robustness);
        assert!(r.validation.min_validation_value >= -5e-3);
        assert!(r.validation.max_eigenvalue <= 1.0 + 1e-8);
        assert!(r.dual_bound >= r.robustness - 1e-6);
    }

    #[test]
    fn random_pure_witness_is_valid() {
        let rho = random_pure(4, 2, 3).unwrap();
        let r = optimal_witness(&rho, &quick(rho.sector())).unwrap();
        assert!(r.validation.min_validation_value >= -5e-3);
        assert!(r.validation.min_search_value >= -1e-12);
        assert!(r.robustness <= r.dual_bound + 1e-3, "{} {}", r.robustness, r.dual_bound);
    }
}
