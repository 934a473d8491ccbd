//! Dense kernels: Householder reflectors, column-pivoted QR least squares,
//! truncated SVD and a few small helpers shared by every solver.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::math;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Tolerance used when validating orthonormal factors handed in by callers.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Frobenius inner product `tr(aᵀ b)`.
pub fn frob_inner(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    dot(a.as_slice(), b.as_slice())
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .cloned()
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    s
}

/// `‖UᵀU − I‖_F`.
pub fn orthonormality_defect(u: &Mat) -> f64 {
    let g = u.tr_mul(u);
    let k = g.nrows();
    let mut acc = 0.0;
    for j in 0..k {
        for i in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = g[(i, j)] - target;
            acc += d * d;
        }
    }
    math::sqrt(acc)
}

/// Product `Q = H_0 H_1 ⋯ H_{k-1}` of Householder reflectors
/// `H_j = I − τ_j v_j v_jᵀ`, where `v_j` is zero above row `j` and one at row `j`.
#[derive(Debug, Clone)]
pub struct Reflectors {
    dim: usize,
    /// Column `j` holds the tail `v_j[j+1..]` in rows `j+1..`.
    vectors: Mat,
    taus: Vec<f64>,
}

impl Reflectors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    #[inline]
    fn reflect(&self, j: usize, col: &mut [f64]) {
        let tau = self.taus[j];
        if tau == 0.0 {
            return;
        }
        let tail = &self.vectors.as_slice()[j * self.dim + j + 1..(j + 1) * self.dim];
        let s = tau * (col[j] + dot(tail, &col[j + 1..]));
        col[j] -= s;
        axpy(-s, tail, &mut col[j + 1..]);
    }

    /// `m ← Qᵀ m`.
    pub fn apply_transpose(&self, m: &mut Mat) {
        debug_assert_eq!(m.nrows(), self.dim);
        let (rows, cols) = m.shape();
        let data = m.as_mut_slice();
        for c in 0..cols {
            let col = &mut data[c * rows..(c + 1) * rows];
            for j in 0..self.len() {
                self.reflect(j, col);
            }
        }
    }

    /// `m ← Q m`.
    pub fn apply(&self, m: &mut Mat) {
        debug_assert_eq!(m.nrows(), self.dim);
        let (rows, cols) = m.shape();
        let data = m.as_mut_slice();
        for c in 0..cols {
            let col = &mut data[c * rows..(c + 1) * rows];
            for j in (0..self.len()).rev() {
                self.reflect(j, col);
            }
        }
    }

    /// Same as [`Reflectors::apply_transpose`] for a single vector.
    pub fn apply_transpose_vec(&self, v: &mut [f64]) {
        for j in 0..self.len() {
            self.reflect(j, v);
        }
    }

    pub fn apply_vec(&self, v: &mut [f64]) {
        for j in (0..self.len()).rev() {
            self.reflect(j, v);
        }
    }
}

/// Builds the reflector that maps `x` onto `beta·e_0`; returns `(tau, beta)` and
/// overwrites `x[1..]` with the reflector tail.
fn make_reflector(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let tail_norm = math::sqrt(dot(&x[1..], &x[1..]));
    if tail_norm == 0.0 {
        for v in x[1..].iter_mut() {
            *v = 0.0;
        }
        return (0.0, alpha);
    }
    let mut beta = math::hypot(alpha, tail_norm);
    if alpha >= 0.0 {
        beta = -beta;
    }
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in x[1..].iter_mut() {
        *v *= scale;
    }
    x[0] = beta;
    (tau, beta)
}

/// Unpivoted Householder QR of a tall matrix (`nrows ≥ ncols`).
/// Returns the reflectors and the `ncols × ncols` upper-triangular factor.
pub fn householder_qr(a: &Mat) -> (Reflectors, Mat) {
    let (n, m) = a.shape();
    assert!(n >= m, "householder_qr expects a tall matrix");
    let mut work = a.clone();
    let mut taus = Vec::with_capacity(m);
    for k in 0..m {
        let (tau, _) = make_reflector(&mut work.as_mut_slice()[k * n + k..(k + 1) * n]);
        taus.push(tau);
        if tau != 0.0 {
            let (head, rest) = work.as_mut_slice().split_at_mut((k + 1) * n);
            let v = &head[k * n..];
            for c in 0..(m - k - 1) {
                let col = &mut rest[c * n..(c + 1) * n];
                let s = tau * (col[k] + dot(&v[k + 1..], &col[k + 1..]));
                col[k] -= s;
                axpy(-s, &v[k + 1..], &mut col[k + 1..]);
            }
        }
    }
    let mut r = Mat::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            r[(i, j)] = work[(i, j)];
        }
    }
    (
        Reflectors {
            dim: n,
            vectors: work,
            taus,
        },
        r,
    )
}

/// Thin QR with the sign convention `R_ii ≥ 0`. For a full-column-rank input the
/// factorization is unique.
pub fn thin_qr(a: &Mat) -> (Mat, Mat) {
    let (n, m) = a.shape();
    let (refl, mut r) = householder_qr(a);
    let mut q = Mat::zeros(n, m);
    for i in 0..m {
        q[(i, i)] = 1.0;
    }
    refl.apply(&mut q);
    for i in 0..m {
        if r[(i, i)] < 0.0 {
            for j in 0..m {
                r[(i, j)] = -r[(i, j)];
            }
            for k in 0..n {
                q[(k, i)] = -q[(k, i)];
            }
        }
    }
    (q, r)
}

/// Implicit orthonormal complement `U⊥` of an orthonormal `U`, stored as the
/// Householder reflectors of a full QR of `U`. Applying `U⊥` or `U⊥ᵀ` to a
/// `p × k` block costs `O(p·r·k)`.
#[derive(Debug, Clone)]
pub struct Complement {
    reflectors: Reflectors,
    rank: usize,
}

impl Complement {
    pub fn new(u: &Mat) -> Result<Self> {
        let (p, r) = u.shape();
        if r > p {
            return Err(Error::InvalidInput(alloc::format!(
                "basis has more columns ({r}) than rows ({p})"
            )));
        }
        let defect = orthonormality_defect(u);
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal(defect));
        }
        let (reflectors, _) = householder_qr(u);
        Ok(Complement { reflectors, rank: r })
    }

    /// Ambient dimension `p`.
    pub fn dim(&self) -> usize {
        self.reflectors.dim()
    }

    /// Number of columns of the complement, `p − r`.
    pub fn ncols(&self) -> usize {
        self.dim() - self.rank
    }

    /// `U⊥ᵀ m`.
    pub fn project(&self, m: &Mat) -> Mat {
        let mut w = m.clone();
        self.reflectors.apply_transpose(&mut w);
        w.rows(self.rank, self.ncols()).into_owned()
    }

    /// `U⊥ n` for `n` with `p − r` rows.
    pub fn lift(&self, n: &Mat) -> Mat {
        debug_assert_eq!(n.nrows(), self.ncols());
        let mut w = Mat::zeros(self.dim(), n.ncols());
        w.rows_mut(self.rank, self.ncols()).copy_from(n);
        self.reflectors.apply(&mut w);
        w
    }

    /// `U⊥ᵀ x` for a single vector.
    pub fn project_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut w = x.to_vec();
        self.reflectors.apply_transpose_vec(&mut w);
        w.split_off(self.rank)
    }

    /// `U⊥ z` for a single vector of length `p − r`.
    pub fn lift_vec(&self, z: &[f64]) -> Vec<f64> {
        let mut w = alloc::vec![0.0; self.dim()];
        w[self.rank..].copy_from_slice(z);
        self.reflectors.apply_vec(&mut w);
        w
    }

    /// Dense `p × (p − r)` complement.
    pub fn dense(&self) -> Mat {
        self.lift(&Mat::identity(self.ncols(), self.ncols()))
    }
}

/// Dense orthonormal complement of an orthonormal `U`; `[U U⊥]` is orthogonal.
pub fn orthonormal_complement(u: &Mat) -> Result<Mat> {
    Ok(Complement::new(u)?.dense())
}

/// Largest principal angle between the column spans of two orthonormal bases,
/// reported as `sin θ_max ∈ [0, 1]`.
pub fn sin_theta(u1: &Mat, u2: &Mat) -> f64 {
    debug_assert_eq!(u1.shape(), u2.shape());
    // ‖(I − U2U2ᵀ)U1‖₂ equals sin θ_max for equal-dimensional subspaces and
    // keeps full relative accuracy for small angles.
    let resid = u1 - u2 * u2.tr_mul(u1);
    spectral_norm(&resid).clamp(0.0, 1.0)
}

/// Singular triplets sorted by decreasing singular value.
pub(crate) fn sorted_svd(m: &Mat) -> (Mat, Vec<f64>, Mat) {
    let k = m.nrows().min(m.ncols());
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut us = Mat::zeros(m.nrows(), k);
    let mut vs = Mat::zeros(m.ncols(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &vt.row(src).transpose());
        s.push(svd.singular_values[src]);
    }
    (us, s, vs)
}

/// Flips singular-vector pairs so the first entry of each left vector that is
/// not negligible is positive.
pub(crate) fn fix_signs(u: &mut Mat, v: &mut Mat) {
    for j in 0..u.ncols() {
        let col = u.column(j);
        let scale = col.amax();
        let thresh = scale * 1e-12;
        if let Some(first) = col.iter().find(|x| math::abs(**x) > thresh) {
            if *first < 0.0 {
                u.column_mut(j).neg_mut();
                v.column_mut(j).neg_mut();
            }
        }
    }
}

/// Moore–Penrose pseudo-inverse of a small matrix; singular values below
/// `max(rows, cols)·ε·σ_max` count as zero. Returns the pseudo-inverse and the
/// numerical rank.
pub fn pinv(m: &Mat) -> (Mat, usize) {
    let rel = m.nrows().max(m.ncols()) as f64 * f64::EPSILON;
    pinv_rel(m, rel)
}

/// Pseudo-inverse treating singular values `≤ rel·σ_max` as zero.
pub fn pinv_rel(m: &Mat, rel: f64) -> (Mat, usize) {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return (Mat::zeros(cols, rows), 0);
    }
    let (u, s, v) = sorted_svd(m);
    let thresh = rel * s[0];
    let mut out = Mat::zeros(cols, rows);
    let mut rank = 0;
    for (k, &sk) in s.iter().enumerate() {
        if sk > thresh && sk > 0.0 {
            rank += 1;
            out += (v.column(k) * u.column(k).transpose()) / sk;
        }
    }
    (out, rank)
}

/// Outcome of a dense least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: Vector,
    pub rank: usize,
    /// True when the column-pivoted QR detected numerical rank deficiency and
    /// the minimum-norm solution was taken from an SVD instead.
    pub rank_deficient: bool,
}

/// Minimum-norm least-squares solution of `min ‖a x − b‖₂` by column-pivoted
/// Householder QR, falling back to an SVD pseudo-inverse when the pivoted
/// diagonal reveals rank deficiency.
pub fn lstsq(a: &Mat, b: &Vector) -> Result<LeastSquares> {
    let (n, m) = a.shape();
    crate::error::check_dim("lstsq rhs", n, b.len())?;
    if m == 0 {
        return Ok(LeastSquares {
            solution: Vector::zeros(0),
            rank: 0,
            rank_deficient: false,
        });
    }
    if n < m {
        return Ok(lstsq_svd(a, b));
    }
    let mut work = a.clone();
    let mut rhs = b.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut norms: Vec<f64> = (0..m)
        .map(|j| {
            let c = &work.as_slice()[j * n..(j + 1) * n];
            dot(c, c)
        })
        .collect();
    let mut ref_norms = norms.clone();
    let mut diag = Vec::with_capacity(m);
    let mut taus = Vec::with_capacity(m);
    let mut rank = m;
    let mut r00 = 0.0;
    let tol = n.max(m) as f64 * f64::EPSILON;
    for k in 0..m {
        let (piv, _) = norms[k..]
            .iter()
            .enumerate()
            .fold((k, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (k + i, v)
                } else {
                    (bi, bv)
                }
            });
        if piv != k {
            work.swap_columns(k, piv);
            norms.swap(k, piv);
            ref_norms.swap(k, piv);
            perm.swap(k, piv);
        }
        let (tau, beta) = make_reflector(&mut work.as_mut_slice()[k * n + k..(k + 1) * n]);
        if k == 0 {
            r00 = math::abs(beta);
        }
        if math::abs(beta) <= tol * r00 || r00 == 0.0 {
            rank = k;
            break;
        }
        diag.push(beta);
        taus.push(tau);
        let (head, rest) = work.as_mut_slice().split_at_mut((k + 1) * n);
        let v = &head[k * n..];
        for c in 0..(m - k - 1) {
            let col = &mut rest[c * n..(c + 1) * n];
            if tau != 0.0 {
                let s = tau * (col[k] + dot(&v[k + 1..], &col[k + 1..]));
                col[k] -= s;
                axpy(-s, &v[k + 1..], &mut col[k + 1..]);
            }
            let j = k + 1 + c;
            norms[j] -= col[k] * col[k];
            if norms[j] <= 1e-8 * ref_norms[j] {
                norms[j] = dot(&col[k + 1..], &col[k + 1..]);
                ref_norms[j] = norms[j];
            }
        }
        if tau != 0.0 {
            let y = rhs.as_mut_slice();
            let s = tau * (y[k] + dot(&v[k + 1..], &y[k + 1..]));
            y[k] -= s;
            axpy(-s, &v[k + 1..], &mut y[k + 1..]);
        }
    }
    if rank < m {
        let mut out = lstsq_svd(a, b);
        out.rank_deficient = true;
        return Ok(out);
    }
    // Back substitution on the upper triangle stored in `work`.
    let mut z = alloc::vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..m {
            s -= work[(i, j)] * z[j];
        }
        z[i] = s / diag[i];
    }
    let mut solution = Vector::zeros(m);
    for (k, &col) in perm.iter().enumerate() {
        solution[col] = z[k];
    }
    Ok(LeastSquares {
        solution,
        rank: m,
        rank_deficient: false,
    })
}

/// Minimum-norm least squares through the SVD.
pub fn lstsq_svd(a: &Mat, b: &Vector) -> LeastSquares {
    let (n, m) = a.shape();
    let (u, s, v) = sorted_svd(a);
    let thresh = n.max(m) as f64 * f64::EPSILON * s.first().cloned().unwrap_or(0.0);
    let mut solution = Vector::zeros(m);
    let mut rank = 0;
    for (k, &sk) in s.iter().enumerate() {
        if sk > thresh && sk > 0.0 {
            rank += 1;
            let coef = u.column(k).dot(b) / sk;
            solution.axpy(coef, &v.column(k), 1.0);
        }
    }
    LeastSquares {
        solution,
        rank,
        rank_deficient: rank < m,
    }
}

/// Leading eigenpair of a symmetric matrix.
pub fn top_eigenpair(m: &Mat) -> (f64, Vector) {
    let eig = SymmetricEigen::new(m.clone());
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Solves a symmetric positive definite system by Cholesky; `None` when the
/// matrix is not numerically positive definite.
pub fn solve_spd(m: &Mat, b: &Vector) -> Option<Vector> {
    let chol = nalgebra::Cholesky::new(m.clone())?;
    Some(chol.solve(b))
}
