//! Semidefinite programming in linear-matrix-inequality form.
//!
//! Problems are stated as
//!
//! ```text
//! minimize  cᵀy   subject to   F_k(y) = F_k0 + Σ_i y_i F_ki ⪰ 0   for every block k
//! ```
//!
//! over a real vector `y`. The Lagrange dual is `maximize -Σ_k <F_k0, X_k>`
//! subject to `Σ_k <F_ki, X_k> = c_i`, `X_k ⪰ 0`, and the duality gap of a
//! feasible pair equals `Σ_k <X_k, F_k(y)>`.
//!
//! Complex Hermitian problems ([`HermitianSdp`]) are solved through
//! [`realify`], which maps each Hermitian block `A + iB` to the real symmetric
//! `[[A, -B], [B, A]]`. The dense interior-point method lives in [`ipm`]; the
//! first-order method for witness-shaped problems of larger sectors lives in
//! [`first_order`].

pub mod dump;
pub mod first_order;
pub mod ipm;
mod realify;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, C64};

pub use realify::{realify, realify_matrix, unrealify_matrix, REALIFY_TRACE_FACTOR};

pub type RMat = DMatrix<f64>;

/// A symmetric matrix stored as its nonzero entries (both triangles).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn to_dense(&self, dim: usize) -> RMat {
        let mut m = RMat::zeros(dim, dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// `Tr(self · m)` for symmetric `m`.
    pub fn dot(&self, m: &RMat) -> f64 {
        self.entries.iter().map(|&(r, c, v)| v * m[(c, r)]).sum()
    }
}

/// A complex matrix stored as its nonzero entries (Hermitian overall).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseHerm {
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseHerm {
    pub fn to_dense(&self, dim: usize) -> CMat {
        let mut m = CMat::zeros(dim, dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// Shared affine matrix function `G(y) = G_0 + Σ_i y_i G_i`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub dim: usize,
    pub constant: RMat,
    /// One entry per variable; variables absent from the map have empty entries.
    pub basis: Vec<SparseSym>,
}

impl AffineMap {
    pub fn linear_part(&self, y: &[f64]) -> RMat {
        let mut m = RMat::zeros(self.dim, self.dim);
        for (g, &yi) in self.basis.iter().zip(y) {
            if yi != 0.0 {
                for &(r, c, v) in &g.entries {
                    m[(r, c)] += yi * v;
                }
            }
        }
        m
    }

    pub fn evaluate(&self, y: &[f64]) -> RMat {
        &self.constant + self.linear_part(y)
    }
}

#[derive(Debug, Clone)]
pub enum Block {
    /// `F0 + Σ_i y_i F_i` with explicit coefficient matrices.
    Dense { constant: RMat, coeffs: Vec<(usize, RMat)> },
    /// `sign · Rᵀ G(y) R + constant` for a shared map `G`.
    Congruence { map: usize, factor: RMat, sign: f64, constant: RMat },
}

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::Dense { constant, .. } => constant.nrows(),
            Block::Congruence { factor, .. } => factor.ncols(),
        }
    }
}

/// Real LMI-form semidefinite program.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub maps: Vec<AffineMap>,
    pub blocks: Vec<Block>,
}

impl SdpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { n_vars: objective.len(), objective, maps: Vec::new(), blocks: Vec::new() }
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Block::dim).collect()
    }

    /// Evaluates every block at `y`.
    pub fn evaluate(&self, y: &[f64]) -> Vec<RMat> {
        let map_values: Vec<RMat> = self.maps.iter().map(|m| m.evaluate(y)).collect();
        self.blocks
            .iter()
            .map(|b| match b {
                Block::Dense { constant, coeffs } => {
                    let mut m = constant.clone();
                    for (i, f) in coeffs {
                        if y[*i] != 0.0 {
                            m += f * y[*i];
                        }
                    }
                    m
                }
                Block::Congruence { map, factor, sign, constant } => {
                    factor.transpose() * &map_values[*map] * factor * *sign + constant
                }
            })
            .collect()
    }

    /// Checks dimensional consistency and symmetry of every piece.
    pub fn validate(&self) -> Result<(), String> {
        if self.objective.len() != self.n_vars {
            return Err(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.n_vars
            ));
        }
        let sym = |m: &RMat, what: &str| -> Result<(), String> {
            if !m.is_square() {
                return Err(format!("{what} is not square"));
            }
            let defect = (m - m.transpose()).amax();
            if defect > 1e-12 * (1.0 + m.amax()) {
                return Err(format!("{what} is not symmetric (defect {defect:e})"));
            }
            Ok(())
        };
        for (k, map) in self.maps.iter().enumerate() {
            if map.basis.len() != self.n_vars {
                return Err(format!("map {k} has {} basis entries", map.basis.len()));
            }
            sym(&map.constant, "map constant")?;
            for g in &map.basis {
                for &(r, c, _) in &g.entries {
                    if r >= map.dim || c >= map.dim {
                        return Err(format!("map {k} entry out of range"));
                    }
                }
                sym(&g.to_dense(map.dim), "map basis element")?;
            }
        }
        for (k, b) in self.blocks.iter().enumerate() {
            match b {
                Block::Dense { constant, coeffs } => {
                    sym(constant, "block constant")?;
                    for (i, f) in coeffs {
                        if *i >= self.n_vars || f.shape() != constant.shape() {
                            return Err(format!("block {k}: bad coefficient for variable {i}"));
                        }
                        sym(f, "block coefficient")?;
                    }
                }
                Block::Congruence { map, factor, constant, .. } => {
                    let Some(m) = self.maps.get(*map) else {
                        return Err(format!("block {k} refers to missing map {map}"));
                    };
                    if factor.nrows() != m.dim || constant.nrows() != factor.ncols() {
                        return Err(format!("block {k}: factor shape mismatch"));
                    }
                    sym(constant, "block constant")?;
                }
            }
        }
        Ok(())
    }
}

/// Complex Hermitian counterpart of [`AffineMap`].
#[derive(Debug, Clone)]
pub struct HermitianMap {
    pub dim: usize,
    pub constant: CMat,
    pub basis: Vec<SparseHerm>,
}

#[derive(Debug, Clone)]
pub enum HermitianBlock {
    Dense { constant: CMat, coeffs: Vec<(usize, CMat)> },
    Congruence { map: usize, factor: CMat, sign: f64, constant: CMat },
}

/// LMI-form problem with complex Hermitian blocks and real variables.
#[derive(Debug, Clone)]
pub struct HermitianSdp {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub maps: Vec<HermitianMap>,
    pub blocks: Vec<HermitianBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    MaxIter,
    Stalled,
    InfeasibleDetected,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// The LMI variable `y`.
    pub y: Vec<f64>,
    /// Dual matrices `X_k`, one per block.
    pub dual: Vec<RMat>,
    /// Slack matrices `F_k(y)`.
    pub slack: Vec<RMat>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SdpStatus,
    pub history: Vec<ipm::IterationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Auto,
    Ipm,
    #[serde(rename = "fo")]
    FirstOrder,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Backend::Auto),
            "ipm" => Ok(Backend::Ipm),
            "fo" | "first-order" => Ok(Backend::FirstOrder),
            other => Err(format!("unknown backend '{other}' (expected auto, ipm or fo)")),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Auto => "auto",
            Backend::Ipm => "ipm",
            Backend::FirstOrder => "fo",
        })
    }
}

/// Witness variables up to this sector dimension are solved by the
/// interior-point method when the backend is [`Backend::Auto`].
pub const AUTO_IPM_MAX_SECTOR_DIM: usize = 16;

impl Backend {
    pub fn resolve(self, sector_dim: usize) -> Backend {
        match self {
            Backend::Auto if sector_dim <= AUTO_IPM_MAX_SECTOR_DIM => Backend::Ipm,
            Backend::Auto => Backend::FirstOrder,
            other => other,
        }
    }
}
