//! Dense complex linear algebra shared by the channel, exposure and solver code.
//!
//! Stacked vectors follow the PB-major order used throughout the crate:
//! entry `n * M + m` is antenna `m` of PB `n`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// `h h^H`.
pub fn outer(h: &CVec) -> CMat {
    h * h.adjoint()
}

/// `Tr(V^T A)`, the pairing used by every power functional.
///
/// For Hermitian `V` and `A` this is real and equals `sum_ij V_ij A_ij`.
pub fn trace_t(v: &CMat, a: &CMat) -> f64 {
    debug_assert_eq!(v.shape(), a.shape());
    v.iter().zip(a.iter()).map(|(x, y)| (x * y).re).sum()
}

/// `Tr(V^T h h^H) = h^H V^T h` without forming the outer product.
pub fn trace_t_rank1(v: &CMat, h: &CVec) -> f64 {
    // h^H V^T h = (conj h)^T V^T ... = h^T V conj(h)
    let hc = h.map(|z| z.conj());
    let vh = v * &hc;
    h.iter().zip(vh.iter()).map(|(a, b)| (a * b).re).sum()
}

/// Average a matrix with its adjoint.
pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig(m: &CMat) -> (RVec, CMat) {
    let mut sym = m.clone();
    hermitize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = RVec::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitian_eig(m).0[0]
}

/// Real trace of a complex square matrix.
pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Rebuild `U diag(f(lambda)) U^H`, keeping only eigenpairs selected by `keep`.
pub fn reassemble(values: &RVec, vectors: &CMat, keep: impl Fn(f64) -> Option<f64>) -> CMat {
    let n = vectors.nrows();
    let mut out = CMat::zeros(n, n);
    for (i, &lam) in values.iter().enumerate() {
        if let Some(w) = keep(lam) {
            let u = vectors.column(i);
            out += (u * u.adjoint()) * C64::new(w, 0.0);
        }
    }
    hermitize(&mut out);
    out
}

/// Floor the eigenvalues of a Hermitian matrix at zero.
pub fn project_psd(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eig(m);
    reassemble(&vals, &vecs, |l| (l > 0.0).then_some(l))
}

/// Real symmetric embedding `[Re -Im; Im Re]` of a complex matrix.
pub fn embed(m: &CMat) -> RMat {
    let (r, c) = m.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`embed`], averaging the redundant blocks.
pub fn unembed(x: &RMat) -> CMat {
    let r = x.nrows() / 2;
    let c = x.ncols() / 2;
    CMat::from_fn(r, c, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + r, j + c)]);
        let im = 0.5 * (x[(i + r, j)] - x[(i, j + c)]);
        C64::new(re, im)
    })
}

/// Stack per-PB blocks into one PB-major vector.
pub fn stack(blocks: &[CVec]) -> CVec {
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    CVec::from_iterator(total, blocks.iter().flat_map(|b| b.iter().copied()))
}

/// Split a stacked vector into `n` blocks of `m` entries.
pub fn unstack(v: &CVec, m: usize) -> Vec<CVec> {
    assert!(m > 0 && v.len() % m == 0, "length {} not a multiple of {}", v.len(), m);
    v.as_slice()
        .chunks(m)
        .map(|c| CVec::from_column_slice(c))
        .collect()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
