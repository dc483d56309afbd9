//! Small dense linear-algebra and numerics helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m).0[0]
}

/// Applies `f` to the eigenvalues of the symmetric matrix `m`.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d = DMatrix::from_diagonal(&vals.map(f));
    &vecs * d * vecs.transpose()
}

/// Symmetric square root with negative eigenvalues clipped to zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |x| x.max(0.0).sqrt())
}

/// Pseudo-inverse of the symmetric square root, cutting eigenvalues below
/// `rel_tol` times the largest one.
pub fn sym_pinv_sqrt(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (vals, _) = sym_eigen(m);
    let top = vals.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let cut = rel_tol * top;
    sym_fn(m, |x| if x > cut && x > 0.0 { 1.0 / x.sqrt() } else { 0.0 })
}

/// Factor `L` (possibly rank deficient) with `L Lᵀ = m`, clipping negative
/// eigenvalues.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let mut l = vecs;
    for (k, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        l.column_mut(k).scale_mut(s);
    }
    l
}

/// Moore-Penrose pseudo-inverse with singular values below `rel_tol` times the
/// largest treated as zero.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cut = rel_tol * top;
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let inv = svd.singular_values.map(|s| if s > cut && s > 0.0 { 1.0 / s } else { 0.0 });
    vt.transpose() * DMatrix::from_diagonal(&inv) * u.transpose()
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Orthogonal (Householder) matrix whose first column is the unit vector `c`.
pub fn householder_to(c: &DVector<f64>) -> DMatrix<f64> {
    let n = c.len();
    let mut w = -c.clone();
    w[0] += 1.0;
    let norm = w.norm();
    if norm < 1e-14 {
        return DMatrix::identity(n, n);
    }
    w /= norm;
    DMatrix::identity(n, n) - (&w * w.transpose()) * 2.0
}

/// Orthonormal basis (as columns) of the orthogonal complement of the unit
/// vector `u`.
pub fn orthogonal_complement(u: &DVector<f64>) -> DMatrix<f64> {
    let h = householder_to(u);
    h.columns(1, u.len() - 1).into_owned()
}

/// Solves `a N + N a = m` for symmetric positive definite `a`.
pub fn lyapunov_solve(a: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(a);
    let mt = vecs.transpose() * m * &vecs;
    let n = a.nrows();
    let nt = DMatrix::from_fn(n, n, |i, j| mt[(i, j)] / (vals[i] + vals[j]));
    &vecs * nt * vecs.transpose()
}

/// Value at `x = 0` of the interpolating polynomial through `(xs, ys)`
/// (Neville's scheme).
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let mut p = ys.to_vec();
    let n = xs.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (xs[i + k] * p[i] - xs[i] * p[i + 1]) / (xs[i + k] - xs[i]);
        }
    }
    p[0]
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`; the endpoints are also evaluated so a monotone
/// objective returns its boundary value.
pub fn golden_section_maximize(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - invphi * (hi - lo);
    let mut x2 = lo + invphi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iter = 0;
    while (hi - lo) > tol && iter < 200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = f(x1);
        }
        iter += 1;
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() as f64 - 1.0)
}
