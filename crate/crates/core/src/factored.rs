//! Rank-r matrices stored as `U C Vᵀ` with orthonormal `U`, `V`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{fix_signs, orthonormality_defect, sorted_svd, thin_qr, Mat, Vector};
use crate::math;

/// Orthonormality tolerance enforced on stored factors.
pub const FACTOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMatrix {
    u: Mat,
    core: Mat,
    v: Mat,
}

impl FactoredMatrix {
    pub fn new(u: Mat, core: Mat, v: Mat) -> Result<Self> {
        let r = u.ncols();
        check_dim("right factor columns", r, v.ncols())?;
        check_dim("core rows", r, core.nrows())?;
        check_dim("core columns", r, core.ncols())?;
        for f in [&u, &v] {
            let defect = orthonormality_defect(f);
            if defect > FACTOR_TOL {
                return Err(Error::NotOrthonormal(defect));
            }
        }
        Ok(FactoredMatrix { u, core, v })
    }

    pub(crate) fn from_parts(u: Mat, core: Mat, v: Mat) -> Self {
        debug_assert_eq!(u.ncols(), core.nrows());
        debug_assert_eq!(v.ncols(), core.ncols());
        FactoredMatrix { u, core, v }
    }

    /// Orthonormalizes arbitrary factors: `L Rᵀ = Q_L (R_L R_Rᵀ) Q_Rᵀ`.
    pub fn from_factors(left: &Mat, right: &Mat) -> Result<Self> {
        check_dim("factor columns", left.ncols(), right.ncols())?;
        let (ql, rl) = thin_qr(left);
        let (qr, rr) = thin_qr(right);
        Ok(FactoredMatrix::from_parts(ql, rl * rr.transpose(), qr))
    }

    /// The rank-r matrix with zero core on the leading coordinate frames.
    pub fn zeros(p1: usize, p2: usize, r: usize) -> Self {
        FactoredMatrix {
            u: Mat::identity(p1, r),
            core: Mat::zeros(r, r),
            v: Mat::identity(p2, r),
        }
    }

    pub fn u(&self) -> &Mat {
        &self.u
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }

    pub fn core(&self) -> &Mat {
        &self.core
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    pub fn to_dense(&self) -> Mat {
        &self.u * &self.core * self.v.transpose()
    }

    /// `‖X‖_F`, which equals `‖C‖_F`.
    pub fn norm(&self) -> f64 {
        self.core.norm()
    }

    /// Re-expresses the matrix with a diagonal, decreasing, nonnegative core
    /// and the sign convention of [`best_rank_r`].
    pub fn to_svd(&self) -> FactoredMatrix {
        let (a, s, b) = sorted_svd(&self.core);
        let mut u = &self.u * a;
        let mut v = &self.v * b;
        fix_signs(&mut u, &mut v);
        FactoredMatrix {
            u,
            core: Mat::from_diagonal(&Vector::from_vec(s)),
            v,
        }
    }

    pub fn singular_values(&self) -> Vec<f64> {
        sorted_svd(&self.core).1
    }

    /// True when the core is diagonal with nonnegative entries.
    pub fn has_svd_core(&self) -> bool {
        let r = self.rank();
        (0..r).all(|i| (0..r).all(|j| if i == j { self.core[(i, i)] >= 0.0 } else { self.core[(i, j)] == 0.0 }))
    }

    /// `‖self − other‖_F` without forming either matrix densely and without
    /// the cancellation of `‖X‖² + ‖Y‖² − 2⟨X, Y⟩`.
    pub fn distance(&self, other: &FactoredMatrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidInput(format!(
                "distance between {:?} and {:?} matrices",
                self.shape(),
                other.shape()
            )));
        }
        let (r1, r2) = (self.rank(), other.rank());
        let mut core = Mat::zeros(r1 + r2, r1 + r2);
        core.view_mut((0, 0), (r1, r1)).copy_from(&self.core);
        core.view_mut((r1, r1), (r2, r2)).copy_from(&(-&other.core));
        let (p1, p2) = self.shape();
        let (ru, rv) = if r1 + r2 <= p1.min(p2) {
            (thin_qr(&concat(&self.u, &other.u)).1, thin_qr(&concat(&self.v, &other.v)).1)
        } else {
            // stacked frames would be wide; fall back to explicit products
            (concat(&self.u, &other.u), concat(&self.v, &other.v))
        };
        Ok((ru * core * rv.transpose()).norm())
    }
}

fn concat(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Truncated SVD `(M)_{max(r)}` with diagonal core `Σ_r`.
pub fn best_rank_r(m: &Mat, r: usize) -> Result<FactoredMatrix> {
    let k = m.nrows().min(m.ncols());
    if r == 0 || r > k {
        return Err(Error::InvalidInput(format!(
            "rank {r} outside 1..={k} for a {}×{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let (u, s, v) = sorted_svd(m);
    let mut u = u.columns(0, r).into_owned();
    let mut v = v.columns(0, r).into_owned();
    fix_signs(&mut u, &mut v);
    let core = Mat::from_diagonal(&Vector::from_iterator(r, s.into_iter().take(r).map(math::abs)));
    Ok(FactoredMatrix { u, core, v })
}
