//! Dense complex linear algebra used throughout the crate.
//!
//! Thin layer over `faer`: every kernel runs with `Par::Seq` so results are
//! bit-reproducible; parallelism lives one level up, over grid points.

use faer::linalg::matmul::matmul as faer_matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMat = Mat<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

/// `a * b`.
pub fn matmul(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> CMat {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    faer_matmul(out.as_mut(), Accum::Replace, a, b, ONE, Par::Seq);
    out
}

/// `a^dag * b` without materialising the adjoint.
pub fn matmul_adj_lhs(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> CMat {
    let mut out = Mat::zeros(a.ncols(), b.ncols());
    faer_matmul(out.as_mut(), Accum::Replace, a.adjoint(), b, ONE, Par::Seq);
    out
}

/// `a * b^dag`.
pub fn matmul_adj_rhs(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> CMat {
    let mut out = Mat::zeros(a.nrows(), b.nrows());
    faer_matmul(out.as_mut(), Accum::Replace, a, b.adjoint(), ONE, Par::Seq);
    out
}

/// `a*b - b*a`.
pub fn commutator(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> CMat {
    let mut out = matmul(a, b);
    faer_matmul(out.as_mut(), Accum::Add, b, a, -ONE, Par::Seq);
    out
}

/// `(row, col, value)` of every nonzero entry, column by column.
pub fn nonzeros(m: MatRef<'_, Complex64>) -> Vec<(usize, usize, Complex64)> {
    let mut v = Vec::new();
    for j in 0..m.ncols() {
        for (i, &x) in m.col(j).iter().enumerate() {
            if x != ZERO {
                v.push((i, j, x));
            }
        }
    }
    v
}

/// `a*b - b*a` through the nonzero entries of the sparser operand, in
/// `O(nnz * n)`. Each entry of a product of embedded operators with disjoint
/// supports is a single product, so such commutators come out exactly zero.
pub fn commutator_sparse(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> CMat {
    let n = a.nrows();
    let (na, nb) = (nonzeros(a), nonzeros(b));
    let (s, d, sign) = if na.len() <= nb.len() { (na, b, ONE) } else { (nb, a, -ONE) };
    // s*d - d*s, then the sign for which operand is sparse
    let mut out = zeros(n, n);
    for j in 0..n {
        for &(i, k, v) in &s {
            out[(i, j)] += v * d[(k, j)];
        }
    }
    for &(k, j, v) in &s {
        for i in 0..n {
            out[(i, j)] -= d[(i, k)] * v;
        }
    }
    if sign != ONE {
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] = -out[(i, j)];
            }
        }
    }
    out
}

pub fn adjoint(a: MatRef<'_, Complex64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn scale(a: MatRef<'_, Complex64>, s: Complex64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn add(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn sub(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

/// Kronecker product, `a` on the slower-varying index.
pub fn kron(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> CMat {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn trace(a: MatRef<'_, Complex64>) -> Complex64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn max_abs(a: MatRef<'_, Complex64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// max |a - a^dag| entrywise.
pub fn hermiticity_residual(a: MatRef<'_, Complex64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows() - 1) {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// (a + a^dag)/2, used to clean roundoff before a Hermitian eigensolve.
pub fn hermitian_part(a: MatRef<'_, Complex64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(a: MatRef<'_, Complex64>) -> Result<(Vec<f64>, CMat)> {
    if a.nrows() == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd =
        a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical(format!("Hermitian eigensolver: {e:?}")))?;
    let values = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((values, evd.U().to_owned()))
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(a: MatRef<'_, Complex64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Numerical(format!("Hermitian eigensolver: {e:?}")))
}

/// Largest singular value.
///
/// Hermitian and anti-Hermitian inputs go through the (cheaper) Hermitian
/// eigensolver; anything else through the SVD.
pub fn spectral_norm(a: MatRef<'_, Complex64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let scale = max_abs(a);
    if scale == 0.0 {
        return 0.0;
    }
    if a.nrows() == a.ncols() {
        let n = a.nrows();
        if (0..n).all(|j| (0..n).all(|i| i == j || a[(i, j)] == ZERO)) {
            return (0..n).map(|i| a[(i, i)].norm()).fold(0.0, f64::max);
        }
        let tol = 1e-14 * scale;
        if hermiticity_residual(a) <= tol {
            if let Ok(ev) = hermitian_eigenvalues(hermitian_part(a).as_ref()) {
                return ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            }
        }
        let ia = scale_ref(a, I);
        if hermiticity_residual(ia.as_ref()) <= tol {
            if let Ok(ev) = hermitian_eigenvalues(hermitian_part(ia.as_ref()).as_ref()) {
                return ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            }
        }
    }
    a.singular_values().ok().and_then(|s| s.first().copied()).unwrap_or(f64::NAN)
}

fn scale_ref(a: MatRef<'_, Complex64>, s: Complex64) -> CMat {
    scale(a, s)
}

pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest |eigenvalue| of a Hermitian operator given only by its action.
///
/// Lanczos with full reorthogonalisation; the Krylov space grows until both
/// extreme Ritz values are stable to `tol` (relative) or the space is
/// exhausted. `start` seeds the Krylov space deterministically.
pub fn lanczos_max_abs<F>(dim: usize, apply: F, tol: f64) -> Result<f64>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    if dim == 0 {
        return Ok(0.0);
    }
    let max_steps = dim.min(400);
    // Deterministic, generic start vector.
    let mut v: Vec<Complex64> = (0..dim)
        .map(|i| {
            let x = i as f64 + 1.0;
            Complex64::new((0.7 * x).sin() + 1.1, (1.3 * x).cos() * 0.5)
        })
        .collect();
    let n0 = norm2(&v);
    v.iter_mut().for_each(|z| *z /= n0);

    let mut basis: Vec<Vec<Complex64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last = f64::NAN;
    let mut stable = 0;
    for step in 0..max_steps {
        let mut w = apply(&basis[step]);
        let alpha = dot(&basis[step], &w).re;
        alphas.push(alpha);
        // Full reorthogonalisation (twice for stability).
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let beta = norm2(&w);
        let ritz = tridiagonal_extreme_abs(&alphas, &betas)?;
        let scale = ritz.abs().max(f64::MIN_POSITIVE);
        if (ritz - last).abs() <= tol * scale {
            stable += 1;
        } else {
            stable = 0;
        }
        last = ritz;
        if beta <= 1e-13 * scale.max(alpha.abs()) || step + 1 == max_steps || stable >= 3 {
            return Ok(ritz);
        }
        betas.push(beta);
        w.iter_mut().for_each(|z| *z /= beta);
        basis.push(w);
    }
    Ok(last)
}

fn tridiagonal_extreme_abs(alphas: &[f64], betas: &[f64]) -> Result<f64> {
    let k = alphas.len();
    let t = Mat::<Complex64>::from_fn(k, k, |i, j| {
        if i == j {
            Complex64::new(alphas[i], 0.0)
        } else if i + 1 == j {
            Complex64::new(betas[i], 0.0)
        } else if j + 1 == i {
            Complex64::new(betas[j], 0.0)
        } else {
            ZERO
        }
    });
    let ev = hermitian_eigenvalues(t.as_ref())?;
    Ok(ev.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kron_orders_left_factor_slowest() {
        let a = Mat::from_fn(2, 2, |i, j| c((i * 2 + j) as f64, 0.0));
        let id = identity(2);
        let k = kron(a.as_ref(), id.as_ref());
        assert_eq!(k[(0, 2)], c(1.0, 0.0));
        assert_eq!(k[(1, 3)], c(1.0, 0.0));
        assert_eq!(k[(0, 1)], ZERO);
    }

    #[test]
    fn spectral_norm_paths_agree() {
        let n = 12;
        let g = Mat::from_fn(n, n, |i, j| c(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + 2 * j) % 5) as f64 - 2.0));
        let h = hermitian_part(g.as_ref());
        let via_eig = spectral_norm(h.as_ref());
        let via_svd = h.singular_values().unwrap()[0];
        assert!((via_eig - via_svd).abs() < 1e-11 * via_svd);
        let ah = scale(h.as_ref(), I);
        assert!((spectral_norm(ah.as_ref()) - via_svd).abs() < 1e-11 * via_svd);
        let general = spectral_norm(g.as_ref());
        assert!(general > 0.0);
    }

    #[test]
    fn lanczos_matches_dense_eigenvalues() {
        let n = 150;
        let g = Mat::from_fn(n, n, |i, j| {
            c(((i * 13 + j * 5) % 17) as f64 / 17.0 - 0.5, ((3 * i + j) % 7) as f64 / 7.0 - 0.5)
        });
        let h = hermitian_part(g.as_ref());
        let exact = spectral_norm(h.as_ref());
        let apply =
            |v: &[Complex64]| -> Vec<Complex64> { (0..n).map(|i| (0..n).map(|j| h[(i, j)] * v[j]).sum()).collect() };
        let approx = lanczos_max_abs(n, apply, 1e-13).unwrap();
        assert!((approx - exact).abs() < 1e-10 * exact, "{approx} vs {exact}");
    }

    #[test]
    fn sparse_commutator_matches_dense() {
        let n = 64;
        let dense = Mat::from_fn(n, n, |i, j| c(((i * 5 + j * 3) % 7) as f64 - 3.0, ((i + j) % 4) as f64));
        let sparse = Mat::from_fn(n, n, |i, j| if (i + 3 * j) % 97 == 0 { c(1.5, -(i as f64)) } else { ZERO });
        for (a, b) in [(&dense, &sparse), (&sparse, &dense), (&dense, &dense)] {
            let x = commutator_sparse(a.as_ref(), b.as_ref());
            let y = commutator(a.as_ref(), b.as_ref());
            let diff = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (x[(i, j)] - y[(i, j)]).norm());
            assert!(diff.fold(0.0, f64::max) < 1e-11);
        }
    }
}
