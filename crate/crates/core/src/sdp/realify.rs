use super::{AffineMap, Block, HermitianBlock, HermitianSdp, RMat, SdpProblem, SparseSym};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};

/// `<realify(A), realify(B)> = 2 Re Tr(A† B)`: dual matrices of a realified
/// problem carry half the weight of their complex counterparts.
pub const REALIFY_TRACE_FACTOR: f64 = 2.0;

/// `A + iB  ↦  [[A, -B], [B, A]]`, also for rectangular matrices.
pub fn realify_matrix(m: &CMat) -> RMat {
    let (r, c) = m.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`realify_matrix`] projected onto realified matrices.
pub fn unrealify_matrix(m: &RMat) -> CMat {
    let (r2, c2) = m.shape();
    let (r, c) = (r2 / 2, c2 / 2);
    CMat::from_fn(r, c, |i, j| {
        C64::new(
            0.5 * (m[(i, j)] + m[(i + r, j + c)]),
            0.5 * (m[(i + r, j)] - m[(i, j + c)]),
        )
    })
}

fn check_hermitian(m: &CMat, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!("{what} is not square")));
    }
    let defect = linalg::hermitian_defect(m);
    let scale = 1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if defect > 1e-12 * scale {
        return Err(Error::InvalidInput(format!("{what} is not Hermitian (defect {defect:e})")));
    }
    Ok(())
}

/// Converts a complex Hermitian LMI problem into an equivalent real symmetric
/// one. Positive semidefiniteness is preserved in both directions and the
/// objective `cᵀy` is unchanged.
pub fn realify(p: &HermitianSdp) -> Result<SdpProblem> {
    if p.objective.len() != p.n_vars {
        return Err(Error::InvalidInput("objective length differs from variable count".into()));
    }
    let mut maps = Vec::with_capacity(p.maps.len());
    for m in &p.maps {
        check_hermitian(&m.constant, "map constant")?;
        if m.basis.len() != p.n_vars {
            return Err(Error::InvalidInput("map basis length differs from variable count".into()));
        }
        let n = m.dim;
        let basis = m
            .basis
            .iter()
            .map(|g| {
                let dense = g.to_dense(n);
                check_hermitian(&dense, "map basis element")?;
                let mut entries = Vec::with_capacity(4 * g.entries.len());
                for &(r, c, z) in &g.entries {
                    if z.re != 0.0 {
                        entries.push((r, c, z.re));
                        entries.push((r + n, c + n, z.re));
                    }
                    if z.im != 0.0 {
                        entries.push((r, c + n, -z.im));
                        entries.push((r + n, c, z.im));
                    }
                }
                Ok(SparseSym { entries })
            })
            .collect::<Result<Vec<_>>>()?;
        maps.push(AffineMap { dim: 2 * n, constant: realify_matrix(&m.constant), basis });
    }
    let mut blocks = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        blocks.push(match b {
            HermitianBlock::Dense { constant, coeffs } => {
                check_hermitian(constant, "block constant")?;
                let coeffs = coeffs
                    .iter()
                    .map(|(i, f)| {
                        check_hermitian(f, "block coefficient")?;
                        Ok((*i, realify_matrix(f)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Block::Dense { constant: realify_matrix(constant), coeffs }
            }
            HermitianBlock::Congruence { map, factor, sign, constant } => {
                check_hermitian(constant, "block constant")?;
                Block::Congruence {
                    map: *map,
                    factor: realify_matrix(factor),
                    sign: *sign,
                    constant: realify_matrix(constant),
                }
            }
        });
    }
    let out = SdpProblem { n_vars: p.n_vars, objective: p.objective.clone(), maps, blocks };
    out.validate().map_err(Error::InvalidInput)?;
    Ok(out)
}
