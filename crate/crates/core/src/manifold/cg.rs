//! Gauss–Newton step by conjugate gradients on intrinsic coordinates.
//!
//! Solves `min_η ‖A(η) − (y − A(X))‖` over the tangent space, i.e. the normal
//! equations `B*A*A B v = −u` with `u` the intrinsic gradient, using the CGLS
//! recurrence. The operator is only touched through low-rank factor products,
//! so one iteration costs `O(n·r + p·r²)` for entry sampling.

use alloc::format;

use super::{TangentSpace, TangentVector};
use crate::error::{Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::Vector;
use crate::problem::ProblemInstance;

/// Iterations without a new smallest residual before the solve is declared
/// stuck, at least this many and at least the tangent dimension.
const MIN_STAGNATION_WINDOW: usize = 20;

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub step: TangentVector,
    pub iterations: usize,
    /// `‖B*A*(b − A B v)‖ / ‖B*A*(b)‖` at exit.
    pub relative_residual: f64,
    /// Multiply-adds spent in operator products and frame changes.
    pub madds: u64,
}

/// Gauss–Newton direction at `x` with relative normal-equation residual `tol`.
pub fn gauss_newton_cg(prob: &ProblemInstance, x: &FactoredMatrix, tol: f64, max_cg_iters: usize) -> Result<CgOutcome> {
    let space = TangentSpace::new(x)?;
    solve(&space, prob, tol, max_cg_iters)
}

struct Counted<'a> {
    space: &'a TangentSpace,
    prob: &'a ProblemInstance,
    madds: u64,
}

impl Counted<'_> {
    fn reflector_cost(&self, p: usize, k: usize) -> u64 {
        // r reflectors, each a rank-one update of a (p − j) × k block
        let r = self.space.base().rank();
        (0..r).map(|j| 2 * (p - j) * k).sum::<usize>() as u64
    }

    /// `A(Z)` for intrinsic `c`.
    fn forward(&mut self, c: &Vector) -> Result<Vector> {
        let z = self.space.from_intrinsic(c)?;
        let (p1, p2) = self.space.base().shape();
        let r = self.space.base().rank();
        let (left, right) = self.space.factors(&z);
        self.madds += (p1 * r * r) as u64 + self.reflector_cost(p1, r) + self.reflector_cost(p2, r);
        self.prob
            .operator()
            .apply_factors_counted(&[(&left, self.space.v()), (self.space.u(), &right)], &mut self.madds)
    }

    /// Intrinsic coordinates of `P_T(A*(w))`.
    fn backward(&mut self, w: &Vector) -> Result<Vector> {
        let op = self.prob.operator();
        let gv = op.adjoint_mul_counted(w, self.space.v(), false, &mut self.madds)?;
        let gtu = op.adjoint_mul_counted(w, self.space.u(), true, &mut self.madds)?;
        let (p1, p2) = self.space.base().shape();
        let r = self.space.base().rank();
        self.madds += (p1 * r * r) as u64 + self.reflector_cost(p1, r) + self.reflector_cost(p2, r);
        Ok(self.space.to_intrinsic(&self.space.blocks_from_products(&gv, &gtu)))
    }
}

pub(crate) fn solve(space: &TangentSpace, prob: &ProblemInstance, tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let mut ops = Counted { space, prob, madds: 0 };
    let dim = space.dim();
    let window = dim.max(MIN_STAGNATION_WINDOW);
    let mut resid = prob.y() - {
        let x = space.base();
        let left = x.u() * x.core();
        prob.operator().apply_factors_counted(&[(&left, x.v())], &mut ops.madds)?
    };
    let mut s = ops.backward(&resid)?;
    let mut gamma = s.norm_squared();
    let gamma0 = gamma;
    let mut v = Vector::zeros(dim);
    if gamma0 == 0.0 {
        return Ok(CgOutcome { step: space.zero(), iterations: 0, relative_residual: 0.0, madds: ops.madds });
    }
    let mut p = s.clone();
    let mut rel = 1.0;
    let mut best = rel;
    let mut best_iter = 0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let q = ops.forward(&p)?;
        let delta = q.norm_squared();
        if !(delta > 0.0) {
            break;
        }
        let alpha = gamma / delta;
        v.axpy(alpha, &p, 1.0);
        resid.axpy(-alpha, &q, 1.0);
        s = ops.backward(&resid)?;
        let gamma_new = s.norm_squared();
        rel = crate::math::sqrt(gamma_new / gamma0);
        if !rel.is_finite() {
            return Err(Error::Degenerate("non-finite conjugate-gradient residual".into()));
        }
        if rel <= tol {
            break;
        }
        if rel < best {
            best = rel;
            best_iter = iterations;
        } else if iterations - best_iter >= window {
            return Err(Error::Degenerate(format!(
                "conjugate gradients stagnated at relative residual {best:e} after {iterations} iterations"
            )));
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        p *= beta;
        p += &s;
    }
    Ok(CgOutcome { step: space.from_intrinsic(&v)?, iterations, relative_residual: rel, madds: ops.madds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::best_rank_r;
    use crate::linalg::{lstsq, Mat};
    use crate::operator::{DenseSensing, EntrySampling, SensingOperator};
    use crate::rng::{gaussian_matrix, gaussian_vector, seeded};
    use alloc::vec::Vec;
    use rand::seq::index::sample;

    fn dense_design(space: &TangentSpace, prob: &ProblemInstance) -> Mat {
        let (_, _, n) = prob.dims();
        let mut d = Mat::zeros(n, space.dim());
        for k in 0..space.dim() {
            let mut e = Vector::zeros(space.dim());
            e[k] = 1.0;
            let col = space.apply_operator(prob, &space.from_intrinsic(&e).unwrap()).unwrap();
            d.set_column(k, &col);
        }
        d
    }

    #[test]
    fn zero_gradient_gives_zero_step_immediately() {
        let mut rng = seeded(1);
        let mats: Vec<Mat> = (0..30).map(|_| gaussian_matrix(&mut rng, 5, 4)).collect();
        let op: SensingOperator = DenseSensing::new(5, 4, &mats).unwrap().into();
        let x = best_rank_r(&gaussian_matrix(&mut rng, 5, 4), 2).unwrap();
        let y = op.apply(&x.to_dense()).unwrap();
        let prob = ProblemInstance::new(op, y, 2).unwrap();
        let out = gauss_newton_cg(&prob, &x, 1e-12, 100).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.step.norm(), 0.0);
    }

    #[test]
    fn matches_dense_least_squares() {
        let mut rng = seeded(2);
        let (p, r, n) = (6, 2, 40);
        let mats: Vec<Mat> = (0..n).map(|_| gaussian_matrix(&mut rng, p, p)).collect();
        let op: SensingOperator = DenseSensing::new(p, p, &mats).unwrap().into();
        let prob = ProblemInstance::new(op, gaussian_vector(&mut rng, n), r).unwrap();
        let x = best_rank_r(&gaussian_matrix(&mut rng, p, p), r).unwrap();
        let space = TangentSpace::new(&x).unwrap();
        let out = solve(&space, &prob, 1e-13, 500).unwrap();
        let b = prob.y() - prob.operator().apply(&x.to_dense()).unwrap();
        let direct = lstsq(&dense_design(&space, &prob), &b).unwrap().solution;
        let got = space.to_intrinsic(&out.step);
        assert!((got - &direct).norm() <= 1e-8 * direct.norm());
    }

    fn completion_problem(seed: u64, p: usize, r: usize, n: usize) -> (ProblemInstance, FactoredMatrix) {
        let mut rng = seeded(seed);
        let idx: Vec<(usize, usize)> = sample(&mut rng, p * p, n).into_iter().map(|k| (k % p, k / p)).collect();
        let op: SensingOperator = EntrySampling::new(p, p, &idx).unwrap().into();
        let truth = gaussian_matrix(&mut rng, p, r) * gaussian_matrix(&mut rng, r, p);
        let y = op.apply(&truth).unwrap();
        let x = best_rank_r(&(truth + gaussian_matrix(&mut rng, p, p) * 0.1), r).unwrap();
        (ProblemInstance::new(op, y, r).unwrap(), x)
    }

    #[test]
    fn per_iteration_cost_is_linear_in_observations() {
        let r = 2;
        let per_iter = |p: usize, n: usize| {
            let (prob, x) = completion_problem(3, p, r, n);
            let space = TangentSpace::new(&x).unwrap();
            let a = solve(&space, &prob, 0.0, 3).unwrap_or_else(|_| panic!());
            let b = solve(&space, &prob, 0.0, 4).unwrap();
            b.madds - a.madds
        };
        let p = 60;
        let n = 8 * p * r;
        let base = per_iter(p, n);
        // 2 forward and 2 adjoint entry products of r columns per observation
        let operator_part = 4 * (n * r) as u64;
        let frame_part = base - operator_part;
        assert!(frame_part <= 12 * (p * r * r) as u64, "frame cost {frame_part}");
        assert_eq!(per_iter(p, 2 * n) - base, operator_part);
        // no dependence on p1·p2
        assert!(per_iter(2 * p, n) - base <= 12 * (p * r * r) as u64);
    }
}
