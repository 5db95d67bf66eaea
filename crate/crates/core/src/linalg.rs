//! Dense complex linear algebra shared by every module.
//!
//! Matrices are `nalgebra` column-major `DMatrix<Complex<f64>>`. The large
//! products in the witness solvers go through `matrixmultiply::zgemm`, since
//! nalgebra only dispatches real `f32`/`f64` products to an optimized kernel.

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, in the order of `values`.
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(m: &CMat) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "eigen-decomposition of a non-square matrix");
        if n == 0 {
            return Self { values: Vec::new(), vectors: CMat::zeros(0, 0) };
        }
        let eig = hermitian_part(m).symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Rebuilds `V f(Λ) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (c, &v) in self.values.iter().enumerate() {
            let s = f(v);
            for r in 0..n {
                scaled[(r, c)] *= s;
            }
        }
        mul_adj_b(&scaled, &self.vectors)
    }
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest entry of `|A - A†|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for c in 0..n {
        for r in 0..=c {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Real part of the Hilbert-Schmidt inner product `Tr(A† B)`.
pub fn inner_re(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Schatten 1-norm of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMat) -> f64 {
    HermitianEigen::new(m).values.iter().map(|v| v.abs()).sum()
}

/// Cholesky factor of a Hermitian matrix, `None` unless numerically positive
/// definite. The plain complex factorization accepts negative pivots because
/// complex square roots always exist.
pub fn hermitian_cholesky(m: &CMat) -> Option<Cholesky<C64, Dyn>> {
    let ch = Cholesky::new(m.clone())?;
    let l = ch.l_dirty();
    for i in 0..m.nrows() {
        let p = l[(i, i)];
        if !(p.re > 0.0) || p.im.abs() > 1e-12 * p.re || !p.re.is_finite() {
            return None;
        }
    }
    Some(ch)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `C ← A B` on strided operands given as `(pointer, row stride, column stride)`.
///
/// # Safety
///
/// Each pointer must address an `m × k`, `k × n` or `m × n` operand under its
/// strides, valid for the duration of the call, and `c` must not overlap `a`
/// or `b`.
pub unsafe fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: (*const C64, isize, isize),
    b: (*const C64, isize, isize),
    c: (*mut C64, isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: `Complex<f64>` is `repr(C)` with layout `[f64; 2]`, the element
    // type `zgemm` expects; validity of the operands is the caller's contract.
    // With k = 0 and beta = 0 zgemm writes zeros.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.0 as *const [f64; 2],
            a.1,
            a.2,
            b.0 as *const [f64; 2],
            b.1,
            b.2,
            [0.0, 0.0],
            c.0 as *mut [f64; 2],
            c.1,
            c.2,
        );
    }
}

fn gemm_raw(
    m: usize,
    k: usize,
    n: usize,
    a: (*const C64, isize, isize),
    b: (*const C64, isize, isize),
    c: &mut CMat,
) {
    if k == 0 {
        c.fill(ZERO);
        return;
    }
    let csc = c.nrows() as isize;
    // SAFETY: the operands are the caller's matrices described by their own
    // shapes and strides, and `c` is a distinct owned buffer.
    unsafe { gemm_strided(m, k, n, a, b, (c.as_mut_ptr(), 1, csc)) }
}

/// `A B`
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "mul: inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMat::zeros(m, n);
    gemm_raw(
        m,
        k,
        n,
        (a.as_ptr(), 1, a.nrows() as isize),
        (b.as_ptr(), 1, b.nrows() as isize),
        &mut c,
    );
    c
}

/// `A B` for matrix views (row stride 1).
pub fn mul_view(a: DMatrixView<'_, C64>, b: DMatrixView<'_, C64>) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "mul_view: inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMat::zeros(m, n);
    let (ar, ac) = a.strides();
    let (br, bc) = b.strides();
    gemm_raw(m, k, n, (a.as_ptr(), ar as isize, ac as isize), (b.as_ptr(), br as isize, bc as isize), &mut c);
    c
}

/// `A† B`
pub fn mul_adj_a(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.nrows(), b.nrows(), "mul_adj_a: inner dimensions differ");
    let conj_a = a.map(|x| x.conj());
    let (m, k, n) = (a.ncols(), a.nrows(), b.ncols());
    let mut c = CMat::zeros(m, n);
    // transpose through strides: element (i, l) of Aᵀ sits at l + i * nrows
    gemm_raw(
        m,
        k,
        n,
        (conj_a.as_ptr(), conj_a.nrows() as isize, 1),
        (b.as_ptr(), 1, b.nrows() as isize),
        &mut c,
    );
    c
}

/// `A B†`
pub fn mul_adj_b(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.ncols(), "mul_adj_b: inner dimensions differ");
    let conj_b = b.map(|x| x.conj());
    let (m, k, n) = (a.nrows(), a.ncols(), b.nrows());
    let mut c = CMat::zeros(m, n);
    gemm_raw(
        m,
        k,
        n,
        (a.as_ptr(), 1, a.nrows() as isize),
        (conj_b.as_ptr(), conj_b.nrows() as isize, 1),
        &mut c,
    );
    c
}

/// `Q† A Q`
pub fn congruence(q: &CMat, a: &CMat) -> CMat {
    mul_adj_a(q, &mul(a, q))
}

pub fn outer(v: &CVec) -> CMat {
    let n = v.len();
    CMat::from_fn(n, n, |r, c| v[r] * v[c].conj())
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    // fill column-major so the draw order is a documented function of the seed
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_gaussian(rng);
        }
    }
    m
}

/// Uniformly distributed unit vector on the complex sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    loop {
        let v = CVec::from_fn(d, |_, _| complex_gaussian(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / C64::new(n, 0.0);
        }
    }
}

/// Modified Gram-Schmidt (two passes) on the columns of `m`.
///
/// Returns an orthonormal basis of the column span; columns whose residual
/// norm falls below `tol` times their original norm are dropped.
pub fn orthonormal_columns(m: &CMat, tol: f64) -> CMat {
    let mut basis: Vec<CVec> = Vec::with_capacity(m.ncols());
    for c in 0..m.ncols() {
        let orig = m.column(c).into_owned();
        let scale = orig.norm();
        if scale == 0.0 {
            continue;
        }
        let mut v = orig;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&v);
                v -= b * proj;
            }
        }
        let n = v.norm();
        if n > tol * scale {
            basis.push(v / C64::new(n, 0.0));
        }
    }
    let rows = m.nrows();
    CMat::from_fn(rows, basis.len(), |r, c| basis[c][r])
}

/// Haar-random unitary: QR of a Ginibre matrix with the phase fix on R's diagonal.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    loop {
        let g = ginibre(d, d, rng);
        let q = orthonormal_columns(&g, 1e-10);
        if q.ncols() == d {
            // Gram-Schmidt already yields R with a positive real diagonal,
            // which is the phase convention that makes Q Haar distributed.
            return q;
        }
    }
}

/// `exp(i H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &CMat) -> CMat {
    let eig = HermitianEigen::new(h);
    let n = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for (c, &v) in eig.values.iter().enumerate() {
        let ph = C64::from_polar(1.0, v);
        for r in 0..n {
            scaled[(r, c)] *= ph;
        }
    }
    mul_adj_b(&scaled, &eig.vectors)
}

/// Deviation from unitarity `max |U†U - I|`.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.ncols();
    max_abs_diff(&mul_adj_a(u, u), &identity(n))
}

pub fn determinant(m: &CMat) -> C64 {
    match m.nrows() {
        0 => ONE,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().lu().determinant(),
    }
}

/// Deterministic per-task seed derivation (splitmix64 over the index path).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_mul(a: &CMat, b: &CMat) -> CMat {
        a * b
    }

    #[test]
    fn zgemm_products_match_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ginibre(7, 5, &mut rng);
        let b = ginibre(5, 4, &mut rng);
        let c = ginibre(7, 4, &mut rng);
        assert!(max_abs_diff(&mul(&a, &b), &naive_mul(&a, &b)) < 1e-12);
        assert!(max_abs_diff(&mul_adj_a(&a, &c), &(a.adjoint() * &c)) < 1e-12);
        assert!(max_abs_diff(&mul_adj_b(&c, &b), &(&c * b.adjoint())) < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_and_sorts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ginibre(6, 6, &mut rng);
        let h = hermitian_part(&g);
        let eig = HermitianEigen::new(&h);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(max_abs_diff(&eig.map(|x| x), &h) < 1e-12);
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = haar_unitary(5, &mut rng);
        assert!(unitarity_defect(&u) < 1e-12);
        let e = expm_i_hermitian(&hermitian_part(&ginibre(4, 4, &mut rng)));
        assert!(unitarity_defect(&e) < 1e-12);
    }

    #[test]
    fn orthonormal_columns_drops_dependent_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = ginibre(5, 2, &mut rng);
        let mut m = CMat::zeros(5, 3);
        m.set_column(0, &a.column(0));
        m.set_column(1, &(a.column(0) * C64::new(2.0, -1.0)));
        m.set_column(2, &a.column(1));
        let q = orthonormal_columns(&m, 1e-10);
        assert_eq!(q.ncols(), 2);
        assert!(unitarity_defect(&q) < 1e-12);
    }

    #[test]
    fn seed_derivation_separates_paths() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(9, &[4]), derive_seed(9, &[4]));
    }
}
