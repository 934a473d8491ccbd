//! Phase retrieval `y_i = ⟨a_i, x*⟩²` as rank-one symmetric recovery.
//!
//! With `X = λ uuᵀ` the sketch of `a_i a_iᵀ` has one coefficient `(a_iᵀu)²`
//! on `uuᵀ` and the two off-diagonal blocks coincide, so the reduced least
//! squares has `p` unknowns `(b, d)` with the duplicated covariate counted twice.

use alloc::format;

use crate::error::{Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::{lstsq, top_eigenpair, Complement, Mat, Vector};
use crate::math;
use crate::operator::SensingOperator;
use crate::problem::ProblemInstance;
use crate::risro::RisroOptions;
use crate::trace::{Recorder, SolveTrace, Verdict};

const UNIT_TOL: f64 = 1e-12;

/// `λ uuᵀ` with `‖u‖₂ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricFactoredMatrix {
    u: Vector,
    lambda: f64,
}

impl SymmetricFactoredMatrix {
    pub fn new(u: Vector, lambda: f64) -> Result<Self> {
        let defect = math::abs(u.norm() - 1.0);
        if !(defect <= UNIT_TOL) {
            return Err(Error::NotOrthonormal(defect));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("eigenvalue {lambda} is not finite")));
        }
        Ok(SymmetricFactoredMatrix { u, lambda })
    }

    /// `x xᵀ` for a nonzero `x`.
    pub fn from_vector(x: &Vector) -> Result<Self> {
        let n = x.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Degenerate("signal vector is zero or not finite".into()));
        }
        Ok(SymmetricFactoredMatrix { u: x / n, lambda: n * n })
    }

    pub fn u(&self) -> &Vector {
        &self.u
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `√λ u`, the signal up to global sign (requires `λ ≥ 0`).
    pub fn signal(&self) -> Vector {
        &self.u * math::sqrt(self.lambda.max(0.0))
    }

    pub fn to_dense(&self) -> Mat {
        &self.u * self.u.transpose() * self.lambda
    }

    pub fn to_factored(&self) -> FactoredMatrix {
        let u = Mat::from_column_slice(self.dim(), 1, self.u.as_slice());
        FactoredMatrix::from_parts(u.clone(), Mat::from_element(1, 1, self.lambda), u)
    }
}

fn unit_complement(u: &Vector) -> Result<Complement> {
    Complement::new(&Mat::from_column_slice(u.len(), 1, u.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrSketchSolution {
    /// Coefficient on `uuᵀ`.
    pub b: f64,
    /// Coefficients on `u⊥`, length `p − 1`.
    pub d: Vector,
    pub rank_deficient: bool,
}

/// Solves `min ‖y − A₁b − 2A₂d‖` with `(A₁)_i = (a_iᵀu)²` and row `i` of `A₂`
/// equal to `u⊥ᵀa_i a_iᵀu`.
pub fn pr_sketch_and_solve(a: &Mat, y: &Vector, u: &Vector) -> Result<PrSketchSolution> {
    let (n, p) = a.shape();
    crate::error::check_dim("measurement vector", n, y.len())?;
    crate::error::check_dim("frame vector", p, u.len())?;
    if p < 2 || n < p {
        return Err(Error::InvalidInput(format!("need p ≥ 2 and n ≥ p, got p = {p}, n = {n}")));
    }
    let comp = unit_complement(u)?;
    let s = a * u;
    // (p − 1) × n, column i is u⊥ᵀa_i
    let w = comp.project(&a.transpose());
    let mut design = Mat::zeros(n, p);
    for i in 0..n {
        design[(i, 0)] = s[i] * s[i];
        for k in 0..p - 1 {
            design[(i, k + 1)] = 2.0 * s[i] * w[(k, i)];
        }
    }
    let ls = lstsq(&design, y)?;
    Ok(PrSketchSolution {
        b: ls.solution[0],
        d: ls.solution.rows(1, p - 1).into_owned(),
        rank_deficient: ls.rank_deficient,
    })
}

/// Top eigenpair of `[u u⊥][[b, dᵀ], [d, 0]][u u⊥]ᵀ`.
///
/// The matrix lives on `span{u, u⊥d}` where it reads `[[b, δ], [δ, 0]]` with
/// `δ = ‖d‖`, so `λ₁ = (b + √(b² + 4δ²))/2` and `v₁ ∝ λ₁u + u⊥d`. Every other
/// eigenvalue is `≤ 0`, so a positive `λ₁` is never tied.
pub fn pr_rank2_eig_update(u: &Vector, b: f64, d: &Vector) -> Result<SymmetricFactoredMatrix> {
    crate::error::check_dim("off-diagonal block", u.len().saturating_sub(1), d.len())?;
    let comp = unit_complement(u)?;
    let w = Vector::from_vec(comp.lift_vec(d.as_slice()));
    let delta = d.norm();
    let disc = math::hypot(b, 2.0 * delta);
    // avoid cancellation in b + disc when b < 0
    let lambda = if b >= 0.0 { 0.5 * (b + disc) } else { 2.0 * delta * delta / (disc - b) };
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Degenerate(format!("leading eigenvalue {lambda:e} ≤ 0, signal lost")));
    }
    let v = u * lambda + w;
    SymmetricFactoredMatrix::from_vector(&v).map(|s| SymmetricFactoredMatrix { u: s.u, lambda })
}

/// RISRO for phase retrieval. `prob` must carry a symmetric rank-one operator
/// and rank 1; metrics use its ground truth when present.
pub fn pr_risro(
    prob: &ProblemInstance,
    init: &SymmetricFactoredMatrix,
    opts: &RisroOptions,
) -> Result<(SymmetricFactoredMatrix, SolveTrace)> {
    opts.validate()?;
    let SensingOperator::SymmetricRankOne(op) = prob.operator() else {
        return Err(Error::InvalidInput("phase retrieval needs a symmetric rank-one operator".into()));
    };
    if prob.rank() != 1 || init.dim() != op.dim() || !(init.lambda > 0.0) {
        return Err(Error::InvalidInput("phase retrieval needs rank 1 and a PSD initial point".into()));
    }
    let a = op.vectors();
    let mut rec = Recorder::new(prob, opts.stop_rule());
    let mut x = init.clone();
    if let Verdict::Stop = rec.record(0, &x.to_factored(), false)? {
        return Ok((x, rec.finish()));
    }
    let mut t = 0;
    loop {
        t += 1;
        let sol = pr_sketch_and_solve(a, prob.y(), &x.u)?;
        x = match pr_rank2_eig_update(&x.u, sol.b, &sol.d) {
            Ok(next) => next,
            Err(Error::Degenerate(msg)) => return Ok((x, rec.degenerate(msg))),
            Err(e) => return Err(e),
        };
        if let Verdict::Stop = rec.record(t, &x.to_factored(), sol.rank_deficient)? {
            return Ok((x, rec.finish()));
        }
    }
}

fn weighted_covariance(a: &Mat, weights: &Vector) -> Mat {
    let n = a.nrows() as f64;
    let mut scaled = a.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= weights[i];
    }
    a.tr_mul(&scaled) / n
}

/// Spectral initialization: with `Y = (1/n)Σ y_j a_j a_jᵀ` and leading
/// eigenpair `(λ₁, v₁)`, returns `x̃⁰x̃⁰ᵀ` for `x̃⁰ = √(λ₁/3) v₁`.
pub fn pr_spectral_init(a: &Mat, y: &Vector) -> Result<SymmetricFactoredMatrix> {
    crate::error::check_dim("measurement vector", a.nrows(), y.len())?;
    if a.nrows() == 0 {
        return Err(Error::InvalidInput("no measurements".into()));
    }
    let (lambda, v) = top_eigenpair(&weighted_covariance(a, y));
    if !(lambda > 0.0) {
        return Err(Error::Degenerate(format!("λ₁(Y) = {lambda:e} ≤ 0")));
    }
    SymmetricFactoredMatrix::new(&v / v.norm(), lambda / 3.0)
}

/// Truncated spectral initialization: measurements with
/// `y_j > α_y² · mean(y)` (`α_y = 3`) are dropped from `Y`, and the leading
/// eigenvector is scaled to the norm estimate `√mean(y)`.
pub fn pr_truncated_spectral_init(a: &Mat, y: &Vector) -> Result<SymmetricFactoredMatrix> {
    const ALPHA_Y: f64 = 3.0;
    crate::error::check_dim("measurement vector", a.nrows(), y.len())?;
    if a.nrows() == 0 {
        return Err(Error::InvalidInput("no measurements".into()));
    }
    let scale = y.mean();
    let cut = ALPHA_Y * ALPHA_Y * scale;
    let weights = y.map(|v| if math::abs(v) <= cut { v } else { 0.0 });
    let (lambda, v) = top_eigenpair(&weighted_covariance(a, &weights));
    if !(lambda > 0.0) || !(scale > 0.0) {
        return Err(Error::Degenerate(format!("λ₁(Y) = {lambda:e}, mean(y) = {scale:e}")));
    }
    SymmetricFactoredMatrix::new(&v / v.norm(), scale)
}

/// `g(x) = (1/4n) Σ ((a_jᵀx)² − y_j)²`.
pub fn pr_objective(a: &Mat, y: &Vector, x: &Vector) -> f64 {
    let ax = a * x;
    let n = a.nrows() as f64;
    ax.iter().zip(y.iter()).map(|(v, yj)| (v * v - yj) * (v * v - yj)).sum::<f64>() / (4.0 * n)
}

/// `∇g(x) = (1/n) Σ ((a_jᵀx)² − y_j)(a_jᵀx) a_j`.
pub fn pr_objective_gradient(a: &Mat, y: &Vector, x: &Vector) -> Vector {
    let ax = a * x;
    let n = a.nrows() as f64;
    let w = Vector::from_iterator(ax.len(), ax.iter().zip(y.iter()).map(|(v, yj)| (v * v - yj) * v));
    a.tr_mul(&w) / n
}

/// Spectral initialization refined by `t0` gradient steps on `g` with step
/// `c1 / (ln p · ‖x̃⁰‖²)`.
pub fn pr_gd_init(a: &Mat, y: &Vector, t0: usize, c1: f64) -> Result<SymmetricFactoredMatrix> {
    let spectral = pr_spectral_init(a, y)?;
    if t0 == 0 {
        return Ok(spectral);
    }
    let p = a.ncols();
    if p < 2 {
        return Err(Error::InvalidInput("gradient refinement needs p ≥ 2".into()));
    }
    let mut x = spectral.signal();
    let step = c1 / (math::ln(p as f64) * x.norm_squared());
    for _ in 0..t0 {
        let g = pr_objective_gradient(a, y, &x);
        x.axpy(-step, &g, 1.0);
    }
    SymmetricFactoredMatrix::from_vector(&x)
}
