//! Linear sensing maps `A: R^{p1×p2} → R^n` and their adjoints.
//!
//! Three structural variants are supported. Besides `apply`/`adjoint` on dense
//! matrices, each variant implements the low-rank entry points used by the
//! solvers (`apply_factors`, `adjoint_mul`, `adjoint_tmul`) so that structured
//! operators never materialize a `p1 × p2` matrix on the hot path.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrixView;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Mat, Vector};

/// Dense sensing: `[A(X)]_i = ⟨A_i, X⟩` for arbitrary `A_i ∈ R^{p1×p2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSensing {
    p1: usize,
    p2: usize,
    /// `(p1·p2) × n`; column `i` is the column-major vectorization of `A_i`.
    stacked: Mat,
}

impl DenseSensing {
    pub fn new(p1: usize, p2: usize, matrices: &[Mat]) -> Result<Self> {
        let mut stacked = Mat::zeros(p1 * p2, matrices.len());
        for (i, a) in matrices.iter().enumerate() {
            if a.shape() != (p1, p2) {
                return Err(Error::InvalidInput(format!(
                    "sensing matrix {i} has shape {:?}, expected ({p1}, {p2})",
                    a.shape()
                )));
            }
            stacked.column_mut(i).copy_from_slice(a.as_slice());
        }
        Ok(DenseSensing { p1, p2, stacked })
    }

    /// Builds the operator from a `(p1·p2) × n` matrix whose columns are the
    /// column-major vectorizations of the sensing matrices.
    pub fn from_stacked(p1: usize, p2: usize, stacked: Mat) -> Result<Self> {
        check_dim("stacked sensing rows", p1 * p2, stacked.nrows())?;
        Ok(DenseSensing { p1, p2, stacked })
    }

    pub fn stacked(&self) -> &Mat {
        &self.stacked
    }

    pub fn len(&self) -> usize {
        self.stacked.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// View of the `i`-th sensing matrix.
    pub fn matrix(&self, i: usize) -> DMatrixView<'_, f64> {
        let len = self.p1 * self.p2;
        DMatrixView::from_slice(&self.stacked.as_slice()[i * len..(i + 1) * len], self.p1, self.p2)
    }
}

/// Entry sampling: `[A(X)]_k = X[i_k, j_k]` over an ordered set of distinct indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EntrySampling {
    p1: usize,
    p2: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl EntrySampling {
    pub fn new(p1: usize, p2: usize, indices: &[(usize, usize)]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(i, j) in indices {
            if i >= p1 || j >= p2 {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) is outside a {p1}×{p2} matrix"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) sampled twice")));
            }
        }
        Ok(EntrySampling {
            p1,
            p2,
            rows: indices.iter().map(|e| e.0).collect(),
            cols: indices.iter().map(|e| e.1).collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().cloned().zip(self.cols.iter().cloned())
    }

    /// Restriction to the observations at the given positions (in order).
    pub fn subset(&self, keep: &[usize]) -> EntrySampling {
        EntrySampling {
            p1: self.p1,
            p2: self.p2,
            rows: keep.iter().map(|&k| self.rows[k]).collect(),
            cols: keep.iter().map(|&k| self.cols[k]).collect(),
        }
    }
}

/// Symmetric rank-one sensing: `[A(X)]_i = ⟨a_i a_iᵀ, X⟩ = a_iᵀ X a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneSensing {
    /// `n × p`; row `i` is `a_iᵀ`.
    vectors: Mat,
}

impl RankOneSensing {
    pub fn new(vectors: Mat) -> Self {
        RankOneSensing { vectors }
    }

    pub fn vectors(&self) -> &Mat {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensingOperator {
    Dense(DenseSensing),
    EntrySampling(EntrySampling),
    SymmetricRankOne(RankOneSensing),
}

impl From<DenseSensing> for SensingOperator {
    fn from(op: DenseSensing) -> Self {
        SensingOperator::Dense(op)
    }
}

impl From<EntrySampling> for SensingOperator {
    fn from(op: EntrySampling) -> Self {
        SensingOperator::EntrySampling(op)
    }
}

impl From<RankOneSensing> for SensingOperator {
    fn from(op: RankOneSensing) -> Self {
        SensingOperator::SymmetricRankOne(op)
    }
}

impl SensingOperator {
    /// `(p1, p2, n)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            SensingOperator::Dense(d) => (d.p1, d.p2, d.len()),
            SensingOperator::EntrySampling(e) => (e.p1, e.p2, e.len()),
            SensingOperator::SymmetricRankOne(s) => (s.dim(), s.dim(), s.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.dims().2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_matrix(&self, context: &'static str, x: &Mat) -> Result<()> {
        let (p1, p2, _) = self.dims();
        check_dim(context, p1, x.nrows())?;
        check_dim(context, p2, x.ncols())
    }

    /// `A(X)`.
    pub fn apply(&self, x: &Mat) -> Result<Vector> {
        self.check_matrix("apply", x)?;
        Ok(match self {
            SensingOperator::Dense(d) => {
                let v = nalgebra::DVectorView::from_slice(x.as_slice(), x.len());
                d.stacked.tr_mul(&v)
            }
            SensingOperator::EntrySampling(e) => {
                Vector::from_iterator(e.len(), e.indices().map(|(i, j)| x[(i, j)]))
            }
            SensingOperator::SymmetricRankOne(s) => {
                let ax = &s.vectors * x;
                row_dots(&ax, &s.vectors)
            }
        })
    }

    /// `A*(w)`.
    pub fn adjoint(&self, w: &Vector) -> Result<Mat> {
        let (p1, p2, n) = self.dims();
        check_dim("adjoint", n, w.len())?;
        Ok(match self {
            SensingOperator::Dense(d) => {
                let v = &d.stacked * w;
                Mat::from_vec(p1, p2, v.data.into())
            }
            SensingOperator::EntrySampling(e) => {
                let mut out = Mat::zeros(p1, p2);
                for ((i, j), wk) in e.indices().zip(w.iter()) {
                    out[(i, j)] += wk;
                }
                out
            }
            SensingOperator::SymmetricRankOne(s) => {
                let mut scaled = s.vectors.clone();
                for (mut row, wk) in scaled.row_iter_mut().zip(w.iter()) {
                    row *= *wk;
                }
                s.vectors.tr_mul(&scaled)
            }
        })
    }

    /// `A(Σ_k L_k R_kᵀ)` for factor pairs with `L_k: p1×c_k`, `R_k: p2×c_k`.
    pub fn apply_factors(&self, terms: &[(&Mat, &Mat)]) -> Result<Vector> {
        let mut madds = 0;
        self.apply_factors_counted(terms, &mut madds)
    }

    pub(crate) fn apply_factors_counted(
        &self,
        terms: &[(&Mat, &Mat)],
        madds: &mut u64,
    ) -> Result<Vector> {
        let (p1, p2, n) = self.dims();
        for (l, r) in terms {
            check_dim("apply_factors left rows", p1, l.nrows())?;
            check_dim("apply_factors right rows", p2, r.nrows())?;
            check_dim("apply_factors inner", l.ncols(), r.ncols())?;
        }
        match self {
            SensingOperator::Dense(_) => {
                let mut x = Mat::zeros(p1, p2);
                for (l, r) in terms {
                    x += *l * r.transpose();
                    *madds += (p1 * p2 * l.ncols()) as u64;
                }
                *madds += (n * p1 * p2) as u64;
                self.apply(&x)
            }
            SensingOperator::EntrySampling(e) => {
                let mut out = Vector::zeros(n);
                for (l, r) in terms {
                    let c = l.ncols();
                    let lt = l.transpose();
                    let rt = r.transpose();
                    let (ls, rs) = (lt.as_slice(), rt.as_slice());
                    for (k, (i, j)) in e.indices().enumerate() {
                        out[k] += dot(&ls[i * c..(i + 1) * c], &rs[j * c..(j + 1) * c]);
                    }
                    *madds += (n * c) as u64;
                }
                Ok(out)
            }
            SensingOperator::SymmetricRankOne(s) => {
                let mut out = Vector::zeros(n);
                for (l, r) in terms {
                    let al = &s.vectors * *l;
                    let ar = &s.vectors * *r;
                    out += row_dots(&al, &ar);
                    *madds += (2 * n * p1 * l.ncols() + n * l.ncols()) as u64;
                }
                Ok(out)
            }
        }
    }

    /// `A*(w) M` for `M: p2 × k`.
    pub fn adjoint_mul(&self, w: &Vector, m: &Mat) -> Result<Mat> {
        let mut madds = 0;
        self.adjoint_mul_counted(w, m, false, &mut madds)
    }

    /// `A*(w)ᵀ M` for `M: p1 × k`.
    pub fn adjoint_tmul(&self, w: &Vector, m: &Mat) -> Result<Mat> {
        let mut madds = 0;
        self.adjoint_mul_counted(w, m, true, &mut madds)
    }

    /// `(A*(w) V, A*(w)ᵀ U)`, forming `A*(w)` once for dense sensing.
    pub fn adjoint_mul_pair(&self, w: &Vector, v: &Mat, u: &Mat) -> Result<(Mat, Mat)> {
        match self {
            SensingOperator::Dense(_) => {
                let (p1, p2, _) = self.dims();
                check_dim("adjoint_mul factor rows", p2, v.nrows())?;
                check_dim("adjoint_mul factor rows", p1, u.nrows())?;
                let g = self.adjoint(w)?;
                Ok((&g * v, g.tr_mul(u)))
            }
            _ => Ok((self.adjoint_mul(w, v)?, self.adjoint_tmul(w, u)?)),
        }
    }

    pub(crate) fn adjoint_mul_counted(
        &self,
        w: &Vector,
        m: &Mat,
        transpose: bool,
        madds: &mut u64,
    ) -> Result<Mat> {
        let (p1, p2, n) = self.dims();
        check_dim("adjoint_mul weights", n, w.len())?;
        let (in_rows, out_rows) = if transpose { (p1, p2) } else { (p2, p1) };
        check_dim("adjoint_mul factor rows", in_rows, m.nrows())?;
        let k = m.ncols();
        match self {
            SensingOperator::Dense(_) => {
                let g = self.adjoint(w)?;
                *madds += (n * p1 * p2 + p1 * p2 * k) as u64;
                Ok(if transpose { g.tr_mul(m) } else { g * m })
            }
            SensingOperator::EntrySampling(e) => {
                let mt = m.transpose();
                let ms = mt.as_slice();
                let mut out_t = Mat::zeros(k, out_rows);
                let os = out_t.as_mut_slice();
                for ((i, j), wk) in e.indices().zip(w.iter()) {
                    let (src, dst) = if transpose { (i, j) } else { (j, i) };
                    crate::linalg::axpy(*wk, &ms[src * k..(src + 1) * k], &mut os[dst * k..(dst + 1) * k]);
                }
                *madds += (n * k) as u64;
                Ok(out_t.transpose())
            }
            SensingOperator::SymmetricRankOne(s) => {
                let mut am = &s.vectors * m;
                for (mut row, wk) in am.row_iter_mut().zip(w.iter()) {
                    row *= *wk;
                }
                *madds += (2 * n * p1 * k) as u64;
                Ok(s.vectors.tr_mul(&am))
            }
        }
    }

    /// Design with rows `vec(A_i V)ᵀ` (column-major `p1 × r` blocks), the
    /// covariates of `min_U ‖y − A(U Vᵀ)‖`.
    pub fn left_covariates(&self, v: &Mat) -> Result<Mat> {
        let (p1, p2, n) = self.dims();
        check_dim("left_covariates", p2, v.nrows())?;
        let r = v.ncols();
        let mut design = Mat::zeros(n, p1 * r);
        match self {
            SensingOperator::Dense(d) => {
                for i in 0..n {
                    let av = d.matrix(i) * v;
                    for (c, x) in av.iter().enumerate() {
                        design[(i, c)] = *x;
                    }
                }
            }
            SensingOperator::EntrySampling(e) => {
                for (k, (i, j)) in e.indices().enumerate() {
                    for c in 0..r {
                        design[(k, i + p1 * c)] = v[(j, c)];
                    }
                }
            }
            SensingOperator::SymmetricRankOne(s) => {
                let av = &s.vectors * v;
                for i in 0..n {
                    for c in 0..r {
                        for a in 0..p1 {
                            design[(i, a + p1 * c)] = s.vectors[(i, a)] * av[(i, c)];
                        }
                    }
                }
            }
        }
        Ok(design)
    }

    /// Design with rows `vec(A_iᵀ U)ᵀ` (column-major `p2 × r` blocks), the
    /// covariates of `min_V ‖y − A(U Vᵀ)‖`.
    pub fn right_covariates(&self, u: &Mat) -> Result<Mat> {
        let (p1, p2, n) = self.dims();
        check_dim("right_covariates", p1, u.nrows())?;
        let r = u.ncols();
        match self {
            SensingOperator::Dense(d) => {
                let mut design = Mat::zeros(n, p2 * r);
                for i in 0..n {
                    let atu = d.matrix(i).tr_mul(u);
                    for (c, x) in atu.iter().enumerate() {
                        design[(i, c)] = *x;
                    }
                }
                Ok(design)
            }
            SensingOperator::EntrySampling(e) => {
                let mut design = Mat::zeros(n, p2 * r);
                for (k, (i, j)) in e.indices().enumerate() {
                    for c in 0..r {
                        design[(k, j + p2 * c)] = u[(i, c)];
                    }
                }
                Ok(design)
            }
            // a_i a_iᵀ is symmetric
            SensingOperator::SymmetricRankOne(_) => self.left_covariates(u),
        }
    }
}

/// `out_i = ⟨a[i,:], b[i,:]⟩`.
fn row_dots(a: &Mat, b: &Mat) -> Vector {
    let mut out = Vector::zeros(a.nrows());
    for c in 0..a.ncols() {
        for (o, (x, y)) in out.iter_mut().zip(a.column(c).iter().zip(b.column(c).iter())) {
            *o += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_inner;
    use crate::rng::{gaussian_matrix, gaussian_vector, seeded};

    #[test]
    fn entry_sampling_selects_coordinates() {
        let op = EntrySampling::new(2, 3, &[(0, 0), (1, 2)]).unwrap();
        let mut x = Mat::zeros(2, 3);
        x[(0, 0)] = 5.0;
        x[(1, 2)] = -2.0;
        let y = SensingOperator::from(op).apply(&x).unwrap();
        assert_eq!(y.as_slice(), &[5.0, -2.0]);
    }

    #[test]
    fn dense_identity_gives_trace() {
        let op = DenseSensing::new(2, 2, &[Mat::identity(2, 2)]).unwrap();
        let x = Mat::from_diagonal(&Vector::from_vec(alloc::vec![3.0, 4.0]));
        let y = SensingOperator::from(op).apply(&x).unwrap();
        assert_eq!(y.as_slice(), &[7.0]);
    }

    #[test]
    fn rank_one_is_squared_projection() {
        let op = RankOneSensing::new(Mat::from_row_slice(1, 2, &[1.0, 1.0]));
        let x = Vector::from_vec(alloc::vec![1.0, 2.0]);
        let y = SensingOperator::from(op).apply(&(&x * x.transpose())).unwrap();
        assert!((y[0] - 9.0).abs() < 1e-14);
    }

    #[test]
    fn adjoint_of_zero_and_basis() {
        let op: SensingOperator = EntrySampling::new(3, 3, &[(0, 1), (2, 2)]).unwrap().into();
        assert_eq!(op.adjoint(&Vector::zeros(2)).unwrap(), Mat::zeros(3, 3));
        let a = op.adjoint(&Vector::from_vec(alloc::vec![0.0, 1.0])).unwrap();
        let mut expect = Mat::zeros(3, 3);
        expect[(2, 2)] = 1.0;
        assert_eq!(a, expect);
    }

    #[test]
    fn rejects_duplicate_and_out_of_range_entries() {
        assert!(EntrySampling::new(2, 2, &[(0, 0), (0, 0)]).is_err());
        assert!(EntrySampling::new(2, 2, &[(2, 0)]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let op: SensingOperator = EntrySampling::new(2, 2, &[(0, 0)]).unwrap().into();
        assert!(matches!(op.apply(&Mat::zeros(3, 2)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(op.adjoint(&Vector::zeros(2)), Err(Error::DimensionMismatch { .. })));
    }

    fn operators(seed: u64) -> Vec<SensingOperator> {
        let mut rng = seeded(seed);
        let mats: Vec<Mat> = (0..7).map(|_| gaussian_matrix(&mut rng, 4, 5)).collect();
        let idx = [(0, 0), (3, 4), (1, 2), (2, 2), (0, 4), (3, 0)];
        alloc::vec![
            DenseSensing::new(4, 5, &mats).unwrap().into(),
            EntrySampling::new(4, 5, &idx).unwrap().into(),
            RankOneSensing::new(gaussian_matrix(&mut rng, 9, 5)).into(),
        ]
    }

    #[test]
    fn low_rank_entry_points_match_dense_paths() {
        for op in operators(3) {
            let (p1, p2, n) = op.dims();
            let mut rng = seeded(4);
            let l = gaussian_matrix(&mut rng, p1, 2);
            let r = gaussian_matrix(&mut rng, p2, 2);
            let l2 = gaussian_matrix(&mut rng, p1, 1);
            let r2 = gaussian_matrix(&mut rng, p2, 1);
            let dense = &l * r.transpose() + &l2 * r2.transpose();
            let direct = op.apply(&dense).unwrap();
            let fact = op.apply_factors(&[(&l, &r), (&l2, &r2)]).unwrap();
            assert!((direct - fact).norm() < 1e-11);

            let w = gaussian_vector(&mut rng, n);
            let g = op.adjoint(&w).unwrap();
            let m2 = gaussian_matrix(&mut rng, p2, 3);
            let m1 = gaussian_matrix(&mut rng, p1, 3);
            assert!((op.adjoint_mul(&w, &m2).unwrap() - &g * &m2).norm() < 1e-11);
            assert!((op.adjoint_tmul(&w, &m1).unwrap() - g.tr_mul(&m1)).norm() < 1e-11);

            // covariate designs reproduce A(U Vᵀ)
            let y = op.apply(&(&l * r.transpose())).unwrap();
            let vec_l = Vector::from_column_slice(l.as_slice());
            let vec_r = Vector::from_column_slice(r.as_slice());
            assert!((op.left_covariates(&r).unwrap() * vec_l - &y).norm() < 1e-11);
            assert!((op.right_covariates(&l).unwrap() * vec_r - &y).norm() < 1e-11);
        }
    }

    #[test]
    fn adjoint_identity_on_random_probes() {
        for op in operators(5) {
            let (p1, p2, n) = op.dims();
            let mut rng = seeded(6);
            for _ in 0..10 {
                let z = gaussian_matrix(&mut rng, p1, p2);
                let w = gaussian_vector(&mut rng, n);
                let lhs = op.apply(&z).unwrap().dot(&w);
                let rhs = frob_inner(&z, &op.adjoint(&w).unwrap());
                let scale = op.apply(&z).unwrap().norm() * w.norm();
                assert!((lhs - rhs).abs() <= 1e-10 * scale);
            }
        }
    }
}
