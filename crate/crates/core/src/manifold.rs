//! Tangent spaces of the manifold of rank-r matrices, the orthographic
//! retraction, and the Riemannian gradient and Hessian of the least-squares
//! objective.
//!
//! A tangent vector at `X = U C Vᵀ` is stored in block form
//!
//! ```text
//! Z = [U U⊥] [[Z_B, Z_D2ᵀ], [Z_D1, 0]] [V V⊥]ᵀ
//! ```
//!
//! and its intrinsic coordinates are `vec(Z_B), vec(Z_D1), vec(Z_D2ᵀ)`
//! (column-major), the ordering matching the sketched designs in `risro`.

use alloc::format;

use crate::error::{check_dim, Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::{frob_inner, pinv_rel, thin_qr, Complement, Mat, Vector};
use crate::problem::ProblemInstance;

pub(crate) mod cg;

pub use cg::{gauss_newton_cg, CgOutcome};

/// Block coordinates of a tangent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub b: Mat,
    pub d1: Mat,
    pub d2: Mat,
}

impl TangentVector {
    /// Squared Frobenius norm of the represented matrix.
    pub fn norm_squared(&self) -> f64 {
        self.b.norm_squared() + self.d1.norm_squared() + self.d2.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        crate::math::sqrt(self.norm_squared())
    }

    pub fn inner(&self, other: &TangentVector) -> f64 {
        frob_inner(&self.b, &other.b) + frob_inner(&self.d1, &other.d1) + frob_inner(&self.d2, &other.d2)
    }

    pub fn scale(&self, s: f64) -> TangentVector {
        TangentVector { b: &self.b * s, d1: &self.d1 * s, d2: &self.d2 * s }
    }

    pub fn add(&self, other: &TangentVector) -> TangentVector {
        TangentVector { b: &self.b + &other.b, d1: &self.d1 + &other.d1, d2: &self.d2 + &other.d2 }
    }
}

/// Reduced least-squares unknowns: the new core block `B` and the two
/// off-diagonal blocks, all expressed in the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchBlocks {
    pub b: Mat,
    pub d1: Mat,
    pub d2: Mat,
}

/// Result of a retraction.
#[derive(Debug, Clone)]
pub struct Retraction {
    pub point: FactoredMatrix,
    /// Numerical rank of `B` under the pseudo-inverse threshold.
    pub b_rank: usize,
}

impl Retraction {
    pub fn rank_deficient(&self) -> bool {
        self.b_rank < self.point.rank()
    }
}

/// Tangent space `T_X M_r` at a fixed point, with implicit complements.
#[derive(Debug, Clone)]
pub struct TangentSpace {
    base: FactoredMatrix,
    u_perp: Complement,
    v_perp: Complement,
}

impl TangentSpace {
    pub fn new(base: &FactoredMatrix) -> Result<Self> {
        Ok(TangentSpace {
            u_perp: Complement::new(base.u())?,
            v_perp: Complement::new(base.v())?,
            base: base.clone(),
        })
    }

    pub fn base(&self) -> &FactoredMatrix {
        &self.base
    }

    pub fn u(&self) -> &Mat {
        self.base.u()
    }

    pub fn v(&self) -> &Mat {
        self.base.v()
    }

    pub fn u_perp(&self) -> &Complement {
        &self.u_perp
    }

    pub fn v_perp(&self) -> &Complement {
        &self.v_perp
    }

    /// `(p1 + p2 − r)·r`.
    pub fn dim(&self) -> usize {
        let (p1, p2) = self.base.shape();
        let r = self.base.rank();
        (p1 + p2 - r) * r
    }

    pub fn zero(&self) -> TangentVector {
        let (p1, p2) = self.base.shape();
        let r = self.base.rank();
        TangentVector { b: Mat::zeros(r, r), d1: Mat::zeros(p1 - r, r), d2: Mat::zeros(p2 - r, r) }
    }

    /// Orthogonal projection `P_{T_X}(Z)`.
    pub fn project(&self, z: &Mat) -> Result<TangentVector> {
        let (p1, p2) = self.base.shape();
        check_dim("projected rows", p1, z.nrows())?;
        check_dim("projected columns", p2, z.ncols())?;
        let zv = z * self.v();
        let ztu = z.tr_mul(self.u());
        Ok(self.blocks_from_products(&zv, &ztu))
    }

    /// Blocks of `P_{T_X}(G)` from `G V` and `Gᵀ U`.
    pub(crate) fn blocks_from_products(&self, gv: &Mat, gtu: &Mat) -> TangentVector {
        TangentVector {
            b: self.u().tr_mul(gv),
            d1: self.u_perp.project(gv),
            d2: self.v_perp.project(gtu),
        }
    }

    /// Factor pairs `(L, V)` and `(U, R)` with `Z = L Vᵀ + U Rᵀ`.
    pub fn factors(&self, z: &TangentVector) -> (Mat, Mat) {
        let left = self.u() * &z.b + self.u_perp.lift(&z.d1);
        let right = self.v_perp.lift(&z.d2);
        (left, right)
    }

    pub fn to_dense(&self, z: &TangentVector) -> Mat {
        let (left, right) = self.factors(z);
        left * self.v().transpose() + self.u() * right.transpose()
    }

    /// `A(Z)` without forming `Z`.
    pub fn apply_operator(&self, prob: &ProblemInstance, z: &TangentVector) -> Result<Vector> {
        let (left, right) = self.factors(z);
        prob.operator().apply_factors(&[(&left, self.v()), (self.u(), &right)])
    }

    /// `P_{T_X}(A*(w))` without forming `A*(w)`.
    pub fn project_adjoint(&self, prob: &ProblemInstance, w: &Vector) -> Result<TangentVector> {
        let op = prob.operator();
        let (gv, gtu) = op.adjoint_mul_pair(w, self.v(), self.u())?;
        Ok(self.blocks_from_products(&gv, &gtu))
    }

    /// `grad f(X) = P_{T_X}(A*(A(X) − y))`.
    pub fn gradient(&self, prob: &ProblemInstance) -> Result<TangentVector> {
        let res = prob.residual(&self.base)?;
        self.project_adjoint(prob, &res)
    }

    /// Riemannian Hessian of `f(X) = ½‖y − A(X)‖²` applied to `Z`. The base
    /// point must carry a diagonal (SVD) core with positive entries.
    pub fn hessian_apply(&self, prob: &ProblemInstance, z: &TangentVector) -> Result<TangentVector> {
        if !self.base.has_svd_core() {
            return Err(Error::InvalidInput("Hessian requires an SVD-normalized core".into()));
        }
        let sigma = self.base.core().diagonal();
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Degenerate("singular core in Hessian".into()));
        }
        let aaz = self.apply_operator(prob, z)?;
        let mut out = self.project_adjoint(prob, &aaz)?;
        let res = prob.residual(&self.base)?;
        let op = prob.operator();
        let inv = Mat::from_diagonal(&sigma.map(|s| 1.0 / s));
        // U⊥ᵀ G V⊥ Z_D2 Σ⁻¹ and V⊥ᵀ Gᵀ U⊥ Z_D1 Σ⁻¹
        let vp = self.v_perp.lift(&z.d2);
        let up = self.u_perp.lift(&z.d1);
        out.d1 += self.u_perp.project(&op.adjoint_mul(&res, &vp)?) * &inv;
        out.d2 += self.v_perp.project(&op.adjoint_tmul(&res, &up)?) * &inv;
        Ok(out)
    }

    /// Intrinsic coordinates `[vec(Z_B); vec(Z_D1); vec(Z_D2ᵀ)]`.
    pub fn to_intrinsic(&self, z: &TangentVector) -> Vector {
        let mut out = Vector::zeros(self.dim());
        let s = out.as_mut_slice();
        let nb = z.b.len();
        let nd1 = z.d1.len();
        s[..nb].copy_from_slice(z.b.as_slice());
        s[nb..nb + nd1].copy_from_slice(z.d1.as_slice());
        s[nb + nd1..].copy_from_slice(z.d2.transpose().as_slice());
        out
    }

    pub fn from_intrinsic(&self, c: &Vector) -> Result<TangentVector> {
        check_dim("intrinsic coordinates", self.dim(), c.len())?;
        let (p1, p2) = self.base.shape();
        let r = self.base.rank();
        let s = c.as_slice();
        let nb = r * r;
        let nd1 = (p1 - r) * r;
        Ok(TangentVector {
            b: Mat::from_column_slice(r, r, &s[..nb]),
            d1: Mat::from_column_slice(p1 - r, r, &s[nb..nb + nd1]),
            d2: Mat::from_column_slice(r, p2 - r, &s[nb + nd1..]).transpose(),
        })
    }

    /// Reduced least-squares blocks of the point `X + η`.
    pub fn blocks_of_step(&self, eta: &TangentVector) -> SketchBlocks {
        SketchBlocks { b: self.base.core() + &eta.b, d1: eta.d1.clone(), d2: eta.d2.clone() }
    }

    /// Tangent step represented by reduced least-squares blocks.
    pub fn step_of_blocks(&self, blocks: &SketchBlocks) -> TangentVector {
        TangentVector { b: &blocks.b - self.base.core(), d1: blocks.d1.clone(), d2: blocks.d2.clone() }
    }

    /// Orthographic retraction: `X_U = U B + U⊥ D1`, `X_V = V Bᵀ + V⊥ D2`, new
    /// frames from their QR factors and `X⁺ = X_U B† X_Vᵀ`. Singular values of
    /// `B` at most `pinv_rel·σ_max(B)` are dropped by the pseudo-inverse.
    pub fn retract_blocks(&self, blocks: &SketchBlocks, pinv_rel_tol: f64) -> Result<Retraction> {
        let (p1, p2) = self.base.shape();
        let r = self.base.rank();
        check_dim("B rows", r, blocks.b.nrows())?;
        check_dim("B columns", r, blocks.b.ncols())?;
        check_dim("D1 rows", p1 - r, blocks.d1.nrows())?;
        check_dim("D2 rows", p2 - r, blocks.d2.nrows())?;
        let xu = self.u() * &blocks.b + self.u_perp.lift(&blocks.d1);
        let xv = self.v() * blocks.b.transpose() + self.v_perp.lift(&blocks.d2);
        let (qu, ru) = thin_qr(&xu);
        let (qv, rv) = thin_qr(&xv);
        let (b_pinv, b_rank) = pinv_rel(&blocks.b, pinv_rel_tol);
        let core = ru * b_pinv * rv.transpose();
        if core.iter().any(|x| !x.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite retraction core (rank of B {b_rank})")));
        }
        Ok(Retraction { point: FactoredMatrix::from_parts(qu, core, qv), b_rank })
    }

    /// `R(X, η)`.
    pub fn retract(&self, eta: &TangentVector) -> Result<Retraction> {
        let r = self.base.rank();
        self.retract_blocks(&self.blocks_of_step(eta), r as f64 * f64::EPSILON)
    }
}

/// `P_{T_X}(Z)` at the point `x`.
pub fn tangent_project(x: &FactoredMatrix, z: &Mat) -> Result<TangentVector> {
    TangentSpace::new(x)?.project(z)
}

pub fn riemannian_gradient(prob: &ProblemInstance, x: &FactoredMatrix) -> Result<TangentVector> {
    TangentSpace::new(x)?.gradient(prob)
}

/// Riemannian Hessian at `x`; a general core is normalized to SVD form first,
/// in which case `z` is interpreted in the frame of `x.to_svd()`.
pub fn riemannian_hessian_apply(prob: &ProblemInstance, x: &FactoredMatrix, z: &TangentVector) -> Result<TangentVector> {
    let base = if x.has_svd_core() { x.clone() } else { x.to_svd() };
    TangentSpace::new(&base)?.hessian_apply(prob, z)
}

pub fn orthographic_retract(x: &FactoredMatrix, blocks: &SketchBlocks) -> Result<Retraction> {
    let r = x.rank();
    TangentSpace::new(x)?.retract_blocks(blocks, r as f64 * f64::EPSILON)
}
