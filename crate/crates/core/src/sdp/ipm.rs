//! Infeasible-start primal-dual interior-point method (HKM direction,
//! Mehrotra predictor-corrector).

use nalgebra::{Cholesky, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    realify, unrealify_matrix, Block, HermitianSdp, RMat, SdpProblem, SdpSolution, SdpStatus,
    REALIFY_TRACE_FACTOR,
};
use crate::error::{Error, Result};
use crate::linalg::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpmConfig {
    /// Relative duality gap target, scaled by `max(1, |cᵀy|)`.
    pub gap_tol: f64,
    /// Relative primal and dual residual target.
    pub feas_tol: f64,
    pub max_iters: usize,
}

impl Default for IpmConfig {
    fn default() -> Self {
        Self { gap_tol: 1e-7, feas_tol: 1e-8, max_iters: 120 }
    }
}

/// State of one iteration, recorded before the step is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `Σ_k <X_k, Z_k>`.
    pub complementarity: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub step_primal: f64,
    pub step_dual: f64,
    pub sigma: f64,
}

const STEP_FRACTION: f64 = 0.95;
const JITTER_FLOOR: f64 = 1e-12;
const DIVERGENCE: f64 = 1e12;
/// Congruence groups with map dimension above this use per-block Schur assembly.
const GEMM_SCHUR_MAX_MAP_DIM: usize = 64;

struct Prepared<'a> {
    p: &'a SdpProblem,
    /// `F_k0` including the map constant pushed through the congruence.
    consts: Vec<RMat>,
    /// Congruence blocks grouped by map.
    groups: Vec<(usize, Vec<usize>)>,
    /// Variables with nonzero support in each map.
    active: Vec<Vec<usize>>,
    total_dim: usize,
}

fn frob_dot(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: RMat) -> RMat {
    (&m + m.transpose()) * 0.5
}

impl<'a> Prepared<'a> {
    fn new(p: &'a SdpProblem) -> Self {
        let consts = p
            .blocks
            .par_iter()
            .map(|b| match b {
                Block::Dense { constant, .. } => constant.clone(),
                Block::Congruence { map, factor, sign, constant } => {
                    sym(factor.transpose() * &p.maps[*map].constant * factor * *sign + constant)
                }
            })
            .collect();
        let mut groups: Vec<(usize, Vec<usize>)> =
            (0..p.maps.len()).map(|m| (m, Vec::new())).collect();
        for (k, b) in p.blocks.iter().enumerate() {
            if let Block::Congruence { map, .. } = b {
                groups[*map].1.push(k);
            }
        }
        groups.retain(|g| !g.1.is_empty());
        let active = p
            .maps
            .iter()
            .map(|m| (0..p.n_vars).filter(|&i| !m.basis[i].entries.is_empty()).collect())
            .collect();
        let total_dim = p.blocks.iter().map(Block::dim).sum();
        Self { p, consts, groups, active, total_dim }
    }

    /// `Σ_i y_i F_ki` for every block.
    fn linear(&self, y: &[f64]) -> Vec<RMat> {
        let map_lin: Vec<RMat> = self.p.maps.iter().map(|m| m.linear_part(y)).collect();
        self.p
            .blocks
            .par_iter()
            .map(|b| match b {
                Block::Dense { constant, coeffs } => {
                    let mut m = RMat::zeros(constant.nrows(), constant.ncols());
                    for (i, f) in coeffs {
                        if y[*i] != 0.0 {
                            m += f * y[*i];
                        }
                    }
                    m
                }
                Block::Congruence { map, factor, sign, .. } => {
                    sym(factor.transpose() * &map_lin[*map] * factor * *sign)
                }
            })
            .collect()
    }

    /// Adjoint map: `out_i = Σ_k <F_ki, mats_k>`.
    fn adjoint(&self, mats: &[RMat]) -> Vec<f64> {
        let p = self.p;
        let mut out = vec![0.0; p.n_vars];
        let mut acc: Vec<Option<RMat>> = vec![None; p.maps.len()];
        for (k, b) in p.blocks.iter().enumerate() {
            match b {
                Block::Dense { coeffs, .. } => {
                    for (i, f) in coeffs {
                        out[*i] += frob_dot(f, &mats[k]);
                    }
                }
                Block::Congruence { map, factor, sign, .. } => {
                    let t = factor * &mats[k] * factor.transpose() * *sign;
                    match &mut acc[*map] {
                        Some(a) => *a += t,
                        slot => *slot = Some(t),
                    }
                }
            }
        }
        for (g, a) in acc.iter().enumerate() {
            if let Some(a) = a {
                for &i in &self.active[g] {
                    out[i] += p.maps[g].basis[i].dot(a);
                }
            }
        }
        out
    }

    /// Schur complement `M_ij = Σ_k Tr(F_ki X_k F_kj Z_k⁻¹)`.
    fn schur(&self, x: &[RMat], zinv: &[RMat]) -> RMat {
        let p = self.p;
        let n = p.n_vars;
        let mut m = RMat::zeros(n, n);
        let mut scalar_rows: Vec<(usize, f64)> = Vec::new();
        for (k, b) in p.blocks.iter().enumerate() {
            if let Block::Dense { coeffs, constant } = b {
                if constant.nrows() == 1 {
                    scalar_rows.push((k, (x[k][(0, 0)] * zinv[k][(0, 0)]).max(0.0).sqrt()));
                } else {
                    dense_schur(&mut m, coeffs, &x[k], &zinv[k]);
                }
            }
        }
        if !scalar_rows.is_empty() {
            // scalar blocks contribute (x/z) a aᵀ each; batched as A Aᵀ
            let mut a = RMat::zeros(n, scalar_rows.len());
            for (c, &(k, w)) in scalar_rows.iter().enumerate() {
                let Block::Dense { coeffs, .. } = &p.blocks[k] else { unreachable!() };
                for (i, f) in coeffs {
                    a[(*i, c)] += w * f[(0, 0)];
                }
            }
            m += &a * a.transpose();
        }
        for (g, blocks) in &self.groups {
            let map = &p.maps[*g];
            let md = map.dim;
            if md > GEMM_SCHUR_MAX_MAP_DIM {
                for &k in blocks {
                    let Block::Congruence { factor, sign, .. } = &p.blocks[k] else { continue };
                    let coeffs: Vec<(usize, RMat)> = self.active[*g]
                        .iter()
                        .map(|&i| {
                            let gi = map.basis[i].to_dense(md);
                            (i, factor.transpose() * gi * factor * *sign)
                        })
                        .collect();
                    dense_schur(&mut m, &coeffs, &x[k], &zinv[k]);
                }
                continue;
            }
            let cols: Vec<(RMat, RMat)> = blocks
                .par_iter()
                .map(|&k| {
                    let Block::Congruence { factor, .. } = &p.blocks[k] else { unreachable!() };
                    let ft = factor.transpose();
                    (factor * &x[k] * &ft, factor * &zinv[k] * &ft)
                })
                .collect();
            let m2 = md * md;
            let mut pm = RMat::zeros(m2, cols.len());
            let mut qm = RMat::zeros(m2, cols.len());
            for (c, (pk, qk)) in cols.iter().enumerate() {
                pm.column_mut(c).copy_from_slice(pk.as_slice());
                qm.column_mut(c).copy_from_slice(qk.as_slice());
            }
            let t = &pm * qm.transpose();
            let active = &self.active[*g];
            let rows: Vec<Vec<f64>> = active
                .par_iter()
                .enumerate()
                .map(|(ai, &i)| {
                    let gi = &map.basis[i].entries;
                    active[ai..]
                        .iter()
                        .map(|&j| {
                            let mut s = 0.0;
                            for &(a, b, v) in gi {
                                for &(c, d, w) in &map.basis[j].entries {
                                    s += v * w * t[(b + c * md, d + a * md)];
                                }
                            }
                            s
                        })
                        .collect()
                })
                .collect();
            for (ai, row) in rows.iter().enumerate() {
                let i = active[ai];
                for (off, &s) in row.iter().enumerate() {
                    let j = active[ai + off];
                    m[(i, j)] += s;
                    if i != j {
                        m[(j, i)] += s;
                    }
                }
            }
        }
        sym(m)
    }
}

fn dense_schur(m: &mut RMat, coeffs: &[(usize, RMat)], x: &RMat, zinv: &RMat) {
    let g: Vec<RMat> = coeffs.par_iter().map(|(_, f)| x * f * zinv).collect();
    for (i, fi) in coeffs {
        for ((j, _), gj) in coeffs.iter().zip(&g) {
            // Tr(F_i G_j) = Σ F_i[a,b] G_j[b,a]
            let mut s = 0.0;
            for b in 0..fi.ncols() {
                for a in 0..fi.nrows() {
                    s += fi[(a, b)] * gj[(b, a)];
                }
            }
            m[(*i, *j)] += s;
        }
    }
}

fn cholesky_jittered(m: &RMat) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut delta = JITTER_FLOOR;
    while delta <= 1e-4 {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += delta * scale;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
        delta *= 100.0;
    }
    Err(Error::Numerical("matrix is not numerically positive definite".into()))
}

/// Largest `α` with `M + α dM ⪰ 0`, given a Cholesky factor of `M`.
fn max_step(chol: &Cholesky<f64, Dyn>, dm: &RMat) -> f64 {
    if dm.nrows() == 1 {
        let d = dm[(0, 0)];
        let v = chol.l()[(0, 0)].powi(2);
        return if d < 0.0 { -v / d } else { f64::INFINITY };
    }
    let l = chol.l();
    let Some(a) = l.solve_lower_triangular(dm) else { return 0.0 };
    let Some(b) = l.solve_lower_triangular(&a.transpose()) else { return 0.0 };
    let lam = sym(b).symmetric_eigenvalues().min();
    if lam < 0.0 {
        -1.0 / lam
    } else {
        f64::INFINITY
    }
}

fn block_steps(chols: &[Cholesky<f64, Dyn>], d: &[RMat]) -> f64 {
    chols
        .par_iter()
        .zip(d.par_iter())
        .map(|(c, dm)| max_step(c, dm))
        .reduce(|| f64::INFINITY, f64::min)
}

fn norm(mats: &[RMat]) -> f64 {
    mats.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn factor_all(mats: &[RMat]) -> Result<Vec<Cholesky<f64, Dyn>>> {
    mats.par_iter().map(cholesky_jittered).collect()
}

struct Direction {
    dy: Vec<f64>,
    dz: Vec<RMat>,
    dx: Vec<RMat>,
}

/// Solves the LMI problem. Returns the final iterate even when the tolerances
/// are not met; inspect [`SdpSolution::status`].
pub fn solve(p: &SdpProblem, cfg: &IpmConfig) -> Result<SdpSolution> {
    p.validate().map_err(Error::InvalidInput)?;
    let prep = Prepared::new(p);
    let n = p.n_vars;
    let nd = prep.total_dim.max(1) as f64;
    let c = &p.objective;
    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let f0_norm = norm(&prep.consts);

    let eyes: Vec<RMat> = p.blocks.iter().map(|b| RMat::identity(b.dim(), b.dim())).collect();
    let fi_norms: Vec<f64> = prep.schur(&eyes, &eyes).diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut xi = 10f64.max(nd.sqrt());
    let mut eta = xi.max(f0_norm);
    for i in 0..n {
        xi = xi.max(nd.sqrt() * (1.0 + c[i].abs()) / (1.0 + fi_norms[i]));
        eta = eta.max(fi_norms[i]);
    }
    let mut y = vec![0.0; n];
    let mut x: Vec<RMat> = eyes.iter().map(|e| e * xi).collect();
    let mut z: Vec<RMat> = eyes.iter().map(|e| e * eta).collect();

    let mut history = Vec::new();
    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it;
        let zchol = factor_all(&z)?;
        let xchol = factor_all(&x)?;
        let zinv: Vec<RMat> = zchol.par_iter().map(|ch| sym(ch.inverse())).collect();
        let lin = prep.linear(&y);
        let rd: Vec<RMat> = (0..z.len()).map(|k| &prep.consts[k] + &lin[k] - &z[k]).collect();
        let ax = prep.adjoint(&x);
        let r: Vec<f64> = (0..n).map(|i| c[i] - ax[i]).collect();
        let pobj: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
        let dobj: f64 = -prep.consts.iter().zip(&x).map(|(f, xk)| frob_dot(f, xk)).sum::<f64>();
        let xz: f64 = x.iter().zip(&z).map(|(a, b)| frob_dot(a, b)).sum();
        let mu = xz / nd;
        let pres = norm(&rd) / (1.0 + f0_norm);
        let dres = r.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + c_norm);
        let mut rec = IterationRecord {
            iteration: it,
            primal_objective: pobj,
            dual_objective: dobj,
            complementarity: xz,
            primal_residual: pres,
            dual_residual: dres,
            step_primal: 0.0,
            step_dual: 0.0,
            sigma: 0.0,
        };
        let gap_scale = cfg.gap_tol * pobj.abs().max(1.0);
        if pres <= cfg.feas_tol
            && dres <= cfg.feas_tol
            && xz <= gap_scale
            && (pobj - dobj).abs() <= gap_scale
        {
            history.push(rec);
            status = SdpStatus::Optimal;
            break;
        }
        let ynorm = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if ynorm > DIVERGENCE || norm(&x) > DIVERGENCE {
            history.push(rec);
            status = SdpStatus::InfeasibleDetected;
            break;
        }

        let mchol = cholesky_jittered(&prep.schur(&x, &zinv))?;
        let direction = |kmat: Option<&[RMat]>| -> Direction {
            let s: Vec<RMat> = (0..x.len())
                .into_par_iter()
                .map(|k| {
                    let mut t = -&x[k] - &x[k] * &rd[k] * &zinv[k];
                    if let Some(km) = kmat {
                        t += &km[k] * &zinv[k];
                    }
                    sym(t)
                })
                .collect();
            let as_ = prep.adjoint(&s);
            let rhs = DVector::from_iterator(n, (0..n).map(|i| as_[i] - r[i]));
            let dy: Vec<f64> = mchol.solve(&rhs).iter().copied().collect();
            let a = prep.linear(&dy);
            let dz: Vec<RMat> = (0..z.len()).map(|k| &rd[k] + &a[k]).collect();
            let dx: Vec<RMat> = (0..x.len())
                .into_par_iter()
                .map(|k| &s[k] - sym(&x[k] * &a[k] * &zinv[k]))
                .collect();
            Direction { dy, dz, dx }
        };

        let pred = direction(None);
        let ap = block_steps(&zchol, &pred.dz).min(1.0);
        let ad = block_steps(&xchol, &pred.dx).min(1.0);
        let mu_aff: f64 = (0..x.len())
            .map(|k| frob_dot(&(&x[k] + &pred.dx[k] * ad), &(&z[k] + &pred.dz[k] * ap)))
            .sum::<f64>()
            / nd;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let kmat: Vec<RMat> = (0..x.len())
            .map(|k| {
                let d = x[k].nrows();
                RMat::identity(d, d) * (sigma * mu) - &pred.dx[k] * &pred.dz[k]
            })
            .collect();
        let corr = direction(Some(&kmat));
        let ap = (STEP_FRACTION * block_steps(&zchol, &corr.dz)).min(1.0);
        let ad = (STEP_FRACTION * block_steps(&xchol, &corr.dx)).min(1.0);
        rec.step_primal = ap;
        rec.step_dual = ad;
        rec.sigma = sigma;
        history.push(rec);
        if ap < 1e-10 && ad < 1e-10 {
            status = SdpStatus::Stalled;
            break;
        }
        for i in 0..n {
            y[i] += ap * corr.dy[i];
        }
        for k in 0..x.len() {
            z[k] = sym(&z[k] + &corr.dz[k] * ap);
            x[k] = sym(&x[k] + &corr.dx[k] * ad);
        }
        iterations = it + 1;
    }

    let lin = prep.linear(&y);
    let slack: Vec<RMat> = (0..z.len()).map(|k| &prep.consts[k] + &lin[k]).collect();
    let ax = prep.adjoint(&x);
    let pobj: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
    let dobj: f64 = -prep.consts.iter().zip(&x).map(|(f, xk)| frob_dot(f, xk)).sum::<f64>();
    let dres = (0..n).map(|i| (c[i] - ax[i]).powi(2)).sum::<f64>().sqrt() / (1.0 + c_norm);
    let pres = slack
        .iter()
        .map(|s| (-s.symmetric_eigenvalues().min()).max(0.0))
        .fold(0.0, f64::max);
    Ok(SdpSolution {
        y,
        dual: x,
        slack,
        primal_objective: pobj,
        dual_objective: dobj,
        gap: pobj - dobj,
        primal_residual: pres,
        dual_residual: dres,
        iterations,
        status,
        history,
    })
}

/// Solution of a complex problem: dual and slack matrices mapped back to
/// Hermitian form, so that `Σ_k Re Tr(F_ki X_k) = c_i`.
#[derive(Debug, Clone)]
pub struct HermitianSolution {
    pub real: SdpSolution,
    pub dual: Vec<CMat>,
    pub slack: Vec<CMat>,
}

pub fn solve_hermitian(p: &HermitianSdp, cfg: &IpmConfig) -> Result<HermitianSolution> {
    let real = solve(&realify(p)?, cfg)?;
    let dual = real.dual.iter().map(|x| unrealify_matrix(x).map(|z| z * REALIFY_TRACE_FACTOR)).collect();
    let slack = real.slack.iter().map(unrealify_matrix).collect();
    Ok(HermitianSolution { real, dual, slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{AffineMap, SparseSym};

    fn scalar(v: f64) -> RMat {
        RMat::from_element(1, 1, v)
    }

    #[test]
    fn linear_program_as_diagonal_blocks() {
        // min x1 + 2 x2 s.t. x1 + x2 >= 1, x >= 0
        let mut p = SdpProblem::new(vec![1.0, 2.0]);
        p.blocks.push(Block::Dense { constant: scalar(-1.0), coeffs: vec![(0, scalar(1.0)), (1, scalar(1.0))] });
        p.blocks.push(Block::Dense { constant: scalar(0.0), coeffs: vec![(0, scalar(1.0))] });
        p.blocks.push(Block::Dense { constant: scalar(0.0), coeffs: vec![(1, scalar(1.0))] });
        let s = solve(&p, &IpmConfig::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.primal_objective - 1.0).abs() < 1e-7);
        assert!((s.y[0] - 1.0).abs() < 1e-6 && s.y[1].abs() < 1e-6);
    }

    #[test]
    fn minimum_eigenvalue_via_congruence() {
        // max t s.t. A - t I ⪰ 0  ⇔ min -t
        let a = RMat::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let mut p = SdpProblem::new(vec![-1.0]);
        let basis = vec![SparseSym { entries: (0..3).map(|i| (i, i, -1.0)).collect() }];
        p.maps.push(AffineMap { dim: 3, constant: a.clone(), basis });
        p.blocks.push(Block::Congruence {
            map: 0,
            factor: RMat::identity(3, 3),
            sign: 1.0,
            constant: RMat::zeros(3, 3),
        });
        let s = solve(&p, &IpmConfig::default()).unwrap();
        let lmin = a.symmetric_eigenvalues().min();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.y[0] - lmin).abs() < 1e-6, "{} vs {lmin}", s.y[0]);
        // dual is the projector onto the minimal eigenvector, trace one
        assert!((s.dual[0].trace() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn congruence_and_dense_schur_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let md = 4;
        let mut basis = Vec::new();
        for a in 0..md {
            for b in a..md {
                let e = if a == b { vec![(a, a, 1.0)] } else { vec![(a, b, 1.0), (b, a, 1.0)] };
                basis.push(SparseSym { entries: e });
            }
        }
        let nv = basis.len();
        let mut p = SdpProblem::new(vec![0.0; nv]);
        p.maps.push(AffineMap { dim: md, constant: RMat::identity(md, md), basis: basis.clone() });
        let mut dense = SdpProblem::new(vec![0.0; nv]);
        for _ in 0..3 {
            let r = RMat::from_fn(md, 2, |_, _| rng.random::<f64>() - 0.5);
            p.blocks.push(Block::Congruence { map: 0, factor: r.clone(), sign: -1.0, constant: RMat::zeros(2, 2) });
            let coeffs = basis
                .iter()
                .enumerate()
                .map(|(i, g)| (i, -(r.transpose() * g.to_dense(md) * &r)))
                .collect();
            dense.blocks.push(Block::Dense { constant: r.transpose() * &r * -1.0, coeffs });
        }
        let x: Vec<RMat> = (0..3).map(|_| {
            let g = RMat::from_fn(2, 2, |_, _| rng.random::<f64>());
            &g * g.transpose() + RMat::identity(2, 2)
        }).collect();
        let zi: Vec<RMat> = (0..3).map(|_| {
            let g = RMat::from_fn(2, 2, |_, _| rng.random::<f64>());
            &g * g.transpose() + RMat::identity(2, 2)
        }).collect();
        let a = Prepared::new(&p).schur(&x, &zi);
        let b = Prepared::new(&dense).schur(&x, &zi);
        assert!((a - b).amax() < 1e-12);
        let ya: Vec<f64> = (0..nv).map(|_| rng.random()).collect();
        let la = Prepared::new(&p).linear(&ya);
        let lb = Prepared::new(&dense).linear(&ya);
        for (u, v) in la.iter().zip(&lb) {
            assert!((u - v).amax() < 1e-12);
        }
        assert!((&Prepared::new(&p).consts[0] - &Prepared::new(&dense).consts[0]).amax() < 1e-12);
    }

    #[test]
    fn unbounded_problem_is_not_reported_optimal() {
        // min -x s.t. x >= 0
        let mut p = SdpProblem::new(vec![-1.0]);
        p.blocks.push(Block::Dense { constant: scalar(0.0), coeffs: vec![(0, scalar(1.0))] });
        let s = solve(&p, &IpmConfig::default()).unwrap();
        assert_ne!(s.status, SdpStatus::Optimal);
    }
}
