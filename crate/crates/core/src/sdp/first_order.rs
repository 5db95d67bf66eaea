//! First-order solver for witness-shaped problems
//!
//! ```text
//! minimize <C, W>   subject to   W ⪯ I,   Q_s† W Q_s ⪰ 0   for every s
//! ```
//!
//! where every `Q_s` has orthonormal columns and `W` may be restricted to a
//! block-diagonal pattern whose blocks can be tied to a shared matrix. The method is a primal-dual hybrid gradient
//! iteration with adaptive restarts and primal-weight updates. Every check
//! produces two certificates: a feasible witness `(W + εI)/(1 + ε)` whose
//! objective bounds the optimum from above, and a scaled dual
//! `Λ ⪰ 0, Σ Q_s Λ_s Q_s† ⪰ C` whose value `Tr C − Tr Σ Q_s Λ_s Q_s†` bounds it
//! from below.

use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SdpStatus;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, HermitianEigen, C64};

#[derive(Debug, Clone)]
pub struct WitnessProblem {
    /// Hermitian cost, block diagonal with respect to `block_sizes`.
    pub cost: CMat,
    /// Sizes of the diagonal blocks of `W`, summing to the dimension.
    pub block_sizes: Vec<usize>,
    /// Variable index of every block; blocks sharing an index carry the same
    /// matrix. Empty means one variable per block.
    pub block_groups: Vec<usize>,
    /// Constraint factors `Q_s` with orthonormal columns.
    pub factors: Vec<CMat>,
}

impl WitnessProblem {
    pub fn dim(&self) -> usize {
        self.cost.nrows()
    }

    pub fn groups(&self) -> Vec<usize> {
        if self.block_groups.is_empty() {
            (0..self.block_sizes.len()).collect()
        } else {
            self.block_groups.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !self.cost.is_square() || self.block_sizes.iter().sum::<usize>() != d {
            return Err(Error::InvalidInput("block sizes do not cover the cost matrix".into()));
        }
        if self.block_sizes.contains(&0) {
            return Err(Error::InvalidInput("empty block".into()));
        }
        let scale = 1.0 + self.cost.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if linalg::hermitian_defect(&self.cost) > 1e-12 * scale {
            return Err(Error::InvalidInput("cost is not Hermitian".into()));
        }
        let groups = self.groups();
        if groups.len() != self.block_sizes.len() {
            return Err(Error::InvalidInput("one group index per block expected".into()));
        }
        let count = groups.iter().max().map_or(0, |g| g + 1);
        let mut size = vec![None; count];
        for (&g, &b) in groups.iter().zip(&self.block_sizes) {
            match size[g] {
                None => size[g] = Some(b),
                Some(s) if s != b => return Err(Error::InvalidInput("tied blocks differ in size".into())),
                _ => {}
            }
        }
        if size.contains(&None) {
            return Err(Error::InvalidInput("group indices are not contiguous".into()));
        }
        let owner = block_owner(&self.block_sizes);
        for c in 0..d {
            for r in 0..d {
                if owner[r] != owner[c] && self.cost[(r, c)].norm() > 1e-10 * scale {
                    return Err(Error::InvalidInput(
                        "cost has weight outside the block pattern".into(),
                    ));
                }
            }
        }
        if self.factors.is_empty() {
            return Err(Error::InvalidInput("no constraints".into()));
        }
        for q in &self.factors {
            if q.nrows() != d || q.ncols() == 0 {
                return Err(Error::InvalidInput("constraint factor has the wrong shape".into()));
            }
        }
        Ok(())
    }
}

fn block_owner(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderConfig {
    /// Target for the certified gap between the upper and lower bound.
    pub accuracy: f64,
    pub max_iters: usize,
    /// Iterations between certificate evaluations and restart checks.
    pub check_every: usize,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        Self { accuracy: 1e-2, max_iters: 20_000, check_every: 32 }
    }
}

/// Iterate carried between solves over growing constraint sets.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub witness_blocks: Vec<CMat>,
    /// `Y_s ⪯ 0` per constraint; missing trailing entries start at zero.
    pub duals: Vec<CMat>,
    pub primal_weight: f64,
}

#[derive(Debug, Clone)]
pub struct FirstOrderSolution {
    /// Feasible witness (full matrix) achieving `upper`.
    pub witness: CMat,
    pub upper: f64,
    pub lower: f64,
    /// Certified dual multipliers `Λ_s ⪰ 0` achieving `lower`.
    pub duals: Vec<CMat>,
    pub iterations: usize,
    pub restarts: usize,
    pub status: SdpStatus,
    pub warm: WarmStart,
}

fn hermitize(m: CMat) -> CMat {
    let a = m.adjoint();
    (m + a) * C64::new(0.5, 0.0)
}

struct Operator {
    dim: usize,
    blocks: Vec<(usize, usize)>,
    /// Variable of each block.
    groups: Vec<usize>,
    group_sizes: Vec<usize>,
    multiplicity: Vec<usize>,
    /// All factors side by side, `D × R`.
    q: CMat,
    /// Entrywise conjugate of `q`; its transpose through strides gives `Q†`.
    qc: CMat,
    cols: Vec<(usize, usize)>,
    /// `D × R` workspace for `W Q` and `Q Y`.
    scratch: Mutex<CMat>,
}

impl Operator {
    fn new(p: &WitnessProblem) -> Self {
        let dim = p.dim();
        let total: usize = p.factors.iter().map(|q| q.ncols()).sum();
        let mut q = CMat::zeros(dim, total);
        let mut cols = Vec::with_capacity(p.factors.len());
        let mut off = 0;
        for f in &p.factors {
            q.view_mut((0, off), (dim, f.ncols())).copy_from(f);
            cols.push((off, f.ncols()));
            off += f.ncols();
        }
        let mut blocks = Vec::new();
        let mut start = 0;
        for &b in &p.block_sizes {
            blocks.push((start, b));
            start += b;
        }
        let groups = p.groups();
        let count = groups.iter().max().map_or(0, |g| g + 1);
        let mut group_sizes = vec![0; count];
        let mut multiplicity = vec![0; count];
        for (&g, &(_, b)) in groups.iter().zip(&blocks) {
            group_sizes[g] = b;
            multiplicity[g] += 1;
        }
        let qc = q.map(|z| z.conj());
        Self {
            dim,
            blocks,
            groups,
            group_sizes,
            multiplicity,
            q,
            qc,
            cols,
            scratch: Mutex::new(CMat::zeros(dim, total)),
        }
    }

    fn total_cols(&self) -> usize {
        self.q.ncols()
    }

    /// `Q_s† W Q_s` for every constraint.
    fn apply(&self, w: &[CMat]) -> Vec<CMat> {
        let d = self.dim as isize;
        let total = self.total_cols();
        let mut wq = self.scratch.lock().expect("operator workspace poisoned");
        let wq_ptr = wq.as_mut_ptr();
        for (&(o, b), &g) in self.blocks.iter().zip(&self.groups) {
            let wb = &w[g];
            // SAFETY: rows o..o+b of the D × R buffers, column-major with stride D;
            // the output rows are disjoint from every input.
            unsafe {
                linalg::gemm_strided(
                    b,
                    b,
                    total,
                    (wb.as_ptr(), 1, b as isize),
                    (self.q.as_ptr().add(o), 1, d),
                    (wq_ptr.add(o), 1, d),
                );
            }
        }
        let wq = &*wq;
        self.cols
            .par_iter()
            .map(|&(c0, r)| {
                let mut m = CMat::zeros(r, r);
                // SAFETY: columns c0..c0+r of two D × R buffers; Q_s† is read
                // through transposed strides of the conjugate copy.
                unsafe {
                    linalg::gemm_strided(
                        r,
                        self.dim,
                        r,
                        (self.qc.as_ptr().add(c0 * self.dim), d, 1),
                        (wq.as_ptr().add(c0 * self.dim), 1, d),
                        (m.as_mut_ptr(), 1, r as isize),
                    );
                }
                hermitize(m)
            })
            .collect()
    }

    /// Diagonal blocks of `Σ_s Q_s Y_s Q_s†`, summed over tied copies.
    fn adjoint(&self, y: &[CMat]) -> Vec<CMat> {
        let d = self.dim as isize;
        let total = self.total_cols();
        let mut qy = self.scratch.lock().expect("operator workspace poisoned");
        let qy_ptr = qy.as_mut_ptr();
        for (&(c0, r), ys) in self.cols.iter().zip(y) {
            // SAFETY: writes columns c0..c0+r of the workspace only.
            unsafe {
                linalg::gemm_strided(
                    self.dim,
                    r,
                    r,
                    (self.q.as_ptr().add(c0 * self.dim), 1, d),
                    (ys.as_ptr(), 1, r as isize),
                    (qy_ptr.add(c0 * self.dim), 1, d),
                );
            }
        }
        let qy = &*qy;
        let per_block: Vec<CMat> = self
            .blocks
            .par_iter()
            .map(|&(o, b)| {
                let mut m = CMat::zeros(b, b);
                // SAFETY: rows o..o+b of the workspace times the transposed
                // conjugate rows o..o+b of Q.
                unsafe {
                    linalg::gemm_strided(
                        b,
                        total,
                        b,
                        (qy.as_ptr().add(o), 1, d),
                        (self.qc.as_ptr().add(o), d, 1),
                        (m.as_mut_ptr(), 1, b as isize),
                    );
                }
                hermitize(m)
            })
            .collect();
        self.sum_groups(per_block)
    }

    fn sum_groups(&self, per_block: Vec<CMat>) -> Vec<CMat> {
        let mut out: Vec<CMat> = self.group_sizes.iter().map(|&b| CMat::zeros(b, b)).collect();
        for (m, &g) in per_block.into_iter().zip(&self.groups) {
            out[g] += m;
        }
        out
    }

    /// Cost blocks summed over tied copies.
    fn group_blocks(&self, m: &CMat) -> Vec<CMat> {
        self.sum_groups(self.blocks.iter().map(|&(o, b)| m.view((o, o), (b, b)).into_owned()).collect())
    }

    fn assemble(&self, w: &[CMat]) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for (&(o, b), &g) in self.blocks.iter().zip(&self.groups) {
            m.view_mut((o, o), (b, b)).copy_from(&w[g]);
        }
        m
    }

    /// Upper bound on `‖K‖`: `max_b λ_max((Σ_s Q_s Q_s†)_bb)^{1/2}` times the
    /// root of the largest multiplicity.
    fn norm_bound(&self) -> f64 {
        self.blocks
            .iter()
            .map(|&(o, b)| {
                let rows = self.q.rows(o, b).into_owned();
                HermitianEigen::new(&linalg::mul_adj_b(&rows, &rows)).max()
            })
            .fold(0.0, f64::max)
            .sqrt()
            * (self.multiplicity.iter().copied().max().unwrap_or(1) as f64).sqrt()
    }
}

fn project_below_identity(m: &CMat) -> CMat {
    HermitianEigen::new(m).map(|v| v.min(1.0))
}

fn project_nsd(m: &CMat) -> CMat {
    if linalg::hermitian_cholesky(&-m.clone()).is_some() {
        return m.clone();
    }
    HermitianEigen::new(m).map(|v| v.min(0.0))
}

fn diff_sq_norm(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum()
}

struct Certificates<'a> {
    op: &'a Operator,
    cost: Vec<CMat>,
    trace_cost: f64,
}

struct Upper {
    value: f64,
    witness: Vec<CMat>,
}

struct Lower {
    value: f64,
    duals: Vec<CMat>,
}

impl Certificates<'_> {
    fn upper(&self, w: &[CMat]) -> Upper {
        let eps = self
            .op
            .apply(w)
            .par_iter()
            .map(|b| {
                if linalg::hermitian_cholesky(b).is_some() {
                    0.0
                } else {
                    (-HermitianEigen::new(b).min()).max(0.0)
                }
            })
            .reduce(|| 0.0, f64::max);
        let cw: f64 = self.cost.iter().zip(w).map(|(c, wb)| linalg::inner_re(c, wb)).sum();
        let scale = C64::new(1.0 / (1.0 + eps), 0.0);
        let witness = w
            .iter()
            .map(|wb| {
                let mut m = wb.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += eps;
                }
                m * scale
            })
            .collect();
        Upper { value: (cw + eps * self.trace_cost) / (1.0 + eps), witness }
    }

    fn lower(&self, y: &[CMat]) -> Lower {
        let total_r = self.op.total_cols() as f64;
        let tr: f64 = y.iter().map(|m| -linalg::trace(m).re).sum();
        let beta = (1e-4 * tr / total_r).max(1e-12);
        let lam: Vec<CMat> = y
            .iter()
            .map(|m| {
                let mut l = -m.clone();
                for i in 0..l.nrows() {
                    l[(i, i)] += beta;
                }
                l
            })
            .collect();
        let sigma = self.op.adjoint(&lam);
        let mut t = 0.0f64;
        for (c, s) in self.cost.iter().zip(&sigma) {
            if c.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let Some(ch) = linalg::hermitian_cholesky(s) else {
                return Lower { value: f64::NEG_INFINITY, duals: lam };
            };
            let l = ch.l();
            let Some(a) = l.solve_lower_triangular(c) else {
                return Lower { value: f64::NEG_INFINITY, duals: lam };
            };
            let Some(b) = l.solve_lower_triangular(&a.adjoint()) else {
                return Lower { value: f64::NEG_INFINITY, duals: lam };
            };
            t = t.max(HermitianEigen::new(&b).max());
        }
        let tr_sigma: f64 = sigma.iter().map(|s| linalg::trace(s).re).sum();
        let tc = C64::new(t, 0.0);
        Lower {
            value: self.trace_cost - t * tr_sigma,
            duals: lam.into_iter().map(|l| l * tc).collect(),
        }
    }
}

/// Solves the witness problem to the configured certified accuracy.
pub fn solve_first_order(
    p: &WitnessProblem,
    cfg: &FirstOrderConfig,
    warm: Option<&WarmStart>,
) -> Result<FirstOrderSolution> {
    p.validate()?;
    if !(cfg.accuracy > 0.0) || cfg.check_every == 0 {
        return Err(Error::InvalidInput("accuracy and check interval must be positive".into()));
    }
    let op = Operator::new(p);
    let cost = op.group_blocks(&p.cost);
    let certs = Certificates {
        op: &op,
        trace_cost: linalg::trace(&p.cost).re,
        cost: cost.clone(),
    };
    let eta = 0.9 / op.norm_bound().max(1e-12);

    let mut w: Vec<CMat> = op.group_sizes.iter().map(|&b| CMat::zeros(b, b)).collect();
    let mut y: Vec<CMat> = op.cols.iter().map(|&(_, r)| CMat::zeros(r, r)).collect();
    let mut omega = 1.0;
    if let Some(ws) = warm {
        if ws.witness_blocks.len() == w.len()
            && ws.witness_blocks.iter().zip(&w).all(|(a, b)| a.shape() == b.shape())
        {
            w = ws.witness_blocks.clone();
        }
        for (slot, prev) in y.iter_mut().zip(&ws.duals) {
            if prev.shape() == slot.shape() {
                *slot = prev.clone();
            }
        }
        if ws.primal_weight.is_finite() && ws.primal_weight > 0.0 {
            omega = ws.primal_weight;
        }
    }

    let mut best_upper = certs.upper(&w);
    let mut best_lower = certs.lower(&y);
    let mut w_avg = w.clone();
    let mut y_avg = y.clone();
    let mut avg_count = 0usize;
    let mut w_restart = w.clone();
    let mut y_restart = y.clone();
    let mut gap_at_restart = f64::INFINITY;
    let mut gap_prev_check = f64::INFINITY;
    let mut since_restart = 0usize;
    let mut restarts = 0usize;
    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;

    for it in 1..=cfg.max_iters {
        iterations = it;
        let tau = eta / omega;
        let sigma = eta * omega;
        let ky = op.adjoint(&y);
        let w_new: Vec<CMat> = (0..w.len())
            .into_par_iter()
            .map(|b| {
                let step = (&cost[b] + &ky[b]) * C64::new(tau, 0.0);
                project_below_identity(&hermitize(&w[b] - step))
            })
            .collect();
        let extrap: Vec<CMat> =
            w_new.iter().zip(&w).map(|(a, b)| a * C64::new(2.0, 0.0) - b).collect();
        let kx = op.apply(&extrap);
        let s = C64::new(sigma, 0.0);
        y = y.par_iter().zip(kx.par_iter()).map(|(ys, ks)| project_nsd(&(ys + ks * s))).collect();
        w = w_new;
        avg_count += 1;
        let inv = C64::new(1.0 / avg_count as f64, 0.0);
        for (a, x) in w_avg.iter_mut().zip(&w) {
            *a += (x - &*a) * inv;
        }
        for (a, x) in y_avg.iter_mut().zip(&y) {
            *a += (x - &*a) * inv;
        }
        since_restart += 1;

        if it % cfg.check_every != 0 && it != cfg.max_iters {
            continue;
        }
        let up_cur = certs.upper(&w);
        let lo_cur = certs.lower(&y);
        let up_avg = certs.upper(&w_avg);
        let lo_avg = certs.lower(&y_avg);
        let gap_cur = up_cur.value - lo_cur.value;
        let gap_avg = up_avg.value - lo_avg.value;
        for u in [up_cur, up_avg] {
            if u.value < best_upper.value {
                best_upper = u;
            }
        }
        for l in [lo_cur, lo_avg] {
            if l.value > best_lower.value {
                best_lower = l;
            }
        }
        if best_upper.value - best_lower.value <= cfg.accuracy {
            status = SdpStatus::Optimal;
            break;
        }
        let use_avg = gap_avg < gap_cur;
        let gap_cand = if use_avg { gap_avg } else { gap_cur };
        let restart = gap_cand <= 0.2 * gap_at_restart
            || (gap_cand <= 0.8 * gap_at_restart && gap_cand > gap_prev_check)
            || since_restart as f64 >= 0.36 * it as f64;
        gap_prev_check = gap_cand;
        if restart {
            if use_avg {
                w = w_avg.clone();
                y = y_avg.clone();
            }
            let dw = diff_sq_norm(&w, &w_restart).sqrt();
            let dy = diff_sq_norm(&y, &y_restart).sqrt();
            if dw > 1e-10 && dy > 1e-10 {
                omega = (0.5 * (dy / dw).ln() + 0.5 * omega.ln()).exp();
            }
            w_restart = w.clone();
            y_restart = y.clone();
            w_avg = w.clone();
            y_avg = y.clone();
            avg_count = 0;
            since_restart = 0;
            gap_at_restart = gap_cand;
            gap_prev_check = f64::INFINITY;
            restarts += 1;
        }
    }
    Ok(FirstOrderSolution {
        witness: op.assemble(&best_upper.witness),
        upper: best_upper.value,
        lower: best_lower.value,
        duals: best_lower.duals,
        iterations,
        restarts,
        status,
        warm: WarmStart { witness_blocks: w, duals: y, primal_weight: omega },
    })
}
