//! Per-iteration metrics shared by every solver.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::factored::FactoredMatrix;
use crate::linalg::{Mat, Vector};
use crate::math;
use crate::problem::ProblemInstance;

/// Source of wall-clock seconds. The core crate has no clock of its own;
/// callers with `std` can pass one in.
pub type Clock = fn() -> f64;

pub fn no_clock() -> f64 {
    0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIter,
    Degenerate,
}

/// Quantity compared against the tolerance to stop a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopMetric {
    /// `‖X^t − X*‖_F / ‖X*‖_F`; falls back to `RelChange` without ground truth.
    #[default]
    RelRmse,
    /// `‖X^t − X^{t−1}‖_F / ‖X^{t−1}‖_F`, an online proxy for the distance to
    /// the final iterate.
    RelChange,
    /// Frobenius norm of the Riemannian gradient.
    GradNorm,
}

/// Stopping rule and clock common to all solvers.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub max_iter: usize,
    pub tol: f64,
    pub metric: StopMetric,
    pub clock: Clock,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { max_iter: 300, tol: 1e-12, metric: StopMetric::RelRmse, clock: no_clock }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub wall_time_s: f64,
    /// `½‖y − A(X^t)‖²`.
    pub objective: f64,
    pub rel_rmse: Option<f64>,
    /// `‖X^t − X^{t_max}‖_F / ‖X^{t_max}‖_F`, filled once the solve ends.
    pub dist_to_final: Option<f64>,
    pub grad_norm: f64,
    /// The reduced least squares of the step producing this iterate was
    /// numerically rank deficient.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    /// Record 0 describes the initial point.
    pub records: Vec<IterRecord>,
    /// `iterates[k]` is the iterate of `records[k]`.
    pub iterates: Vec<FactoredMatrix>,
    pub status: Status,
    pub message: Option<String>,
    /// The objective blew up (more than `1e6×` its initial value).
    pub diverged: bool,
    /// The reduced system had fewer equations than unknowns.
    pub underdetermined: bool,
}

impl SolveTrace {
    fn empty() -> Self {
        SolveTrace {
            records: Vec::new(),
            iterates: Vec::new(),
            status: Status::MaxIter,
            message: None,
            diverged: false,
            underdetermined: false,
        }
    }

    /// Index of the last recorded iteration.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_rel_rmse(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.rel_rmse)
    }

    /// `rel_rmse` per iteration (empty without ground truth).
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.rel_rmse).collect()
    }

    /// First iteration whose relative error is at most `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.rel_rmse.is_some_and(|e| e <= tol)).map(|r| r.iter)
    }

    pub fn any_rank_deficient(&self) -> bool {
        self.records.iter().any(|r| r.rank_deficient)
    }

    /// Fills `dist_to_final` from the stored iterates.
    pub fn fill_dist_to_final(&mut self) {
        let Some(last) = self.iterates.last().cloned() else { return };
        let scale = last.norm();
        for (rec, x) in self.records.iter_mut().zip(self.iterates.iter()) {
            let d = x.distance(&last).unwrap_or(f64::NAN);
            rec.dist_to_final = Some(if scale > 0.0 { d / scale } else { d });
        }
    }
}

/// `(½‖r‖², ‖P_T(A*(r))‖_F)` for the residual `r = A(X) − y`.
pub(crate) fn objective_and_grad_norm(prob: &ProblemInstance, x: &FactoredMatrix) -> Result<(Vector, f64, f64)> {
    let res = prob.residual(x)?;
    let op = prob.operator();
    let (gv, gtu) = op.adjoint_mul_pair(&res, x.v(), x.u())?;
    let b = x.u().tr_mul(&gv);
    // ‖B‖² + ‖D1‖² = ‖GV‖²; ‖D2‖² = ‖(I − VVᵀ)GᵀU‖²
    let d2 = gtu - x.v() * b.transpose();
    let grad = math::sqrt(gv.norm_squared() + d2.norm_squared());
    let obj = 0.5 * res.norm_squared();
    Ok((res, obj, grad))
}

/// `‖P_T(G)‖_F` at `x` for a dense gradient `G = A*(A(X) − y)`.
pub(crate) fn grad_norm_from_adjoint(g: &Mat, x: &FactoredMatrix) -> f64 {
    let gv = g * x.v();
    let b = x.u().tr_mul(&gv);
    let d2 = g.tr_mul(x.u()) - x.v() * b.transpose();
    math::sqrt(gv.norm_squared() + d2.norm_squared())
}

/// Evaluates metrics per iterate, applies the stopping rule and builds the trace.
pub(crate) struct Recorder<'a> {
    prob: &'a ProblemInstance,
    rule: StopRule,
    t0: f64,
    initial_objective: f64,
    trace: SolveTrace,
}

pub(crate) enum Verdict {
    Continue,
    Stop,
}

impl<'a> Recorder<'a> {
    pub fn new(prob: &'a ProblemInstance, rule: StopRule) -> Self {
        let t0 = (rule.clock)();
        Recorder { prob, rule, t0, initial_objective: f64::NAN, trace: SolveTrace::empty() }
    }

    pub fn set_underdetermined(&mut self) {
        self.trace.underdetermined = true;
    }

    /// Records `x` as iteration `iter` and decides whether to stop; on stop
    /// the status is already set.
    pub fn record(&mut self, iter: usize, x: &FactoredMatrix, rank_deficient: bool) -> Result<Verdict> {
        let (_, objective, grad_norm) = objective_and_grad_norm(self.prob, x)?;
        self.record_with(iter, x, rank_deficient, objective, grad_norm)
    }

    pub fn record_with(
        &mut self,
        iter: usize,
        x: &FactoredMatrix,
        rank_deficient: bool,
        objective: f64,
        grad_norm: f64,
    ) -> Result<Verdict> {
        let prev_time = self.trace.records.last().map_or(0.0, |r| r.wall_time_s);
        let wall_time_s = ((self.rule.clock)() - self.t0).max(prev_time);
        let rel_rmse = self.prob.relative_error(x);
        let rel_change = match self.trace.iterates.last() {
            Some(prev) => {
                let d = prev.distance(x)?;
                let s = prev.norm();
                Some(if s > 0.0 { d / s } else { d })
            }
            None => None,
        };
        if iter == 0 {
            self.initial_objective = objective;
        }
        self.trace.records.push(IterRecord {
            iter,
            wall_time_s,
            objective,
            rel_rmse,
            dist_to_final: None,
            grad_norm,
            rank_deficient,
        });
        self.trace.iterates.push(x.clone());

        if !objective.is_finite() || !x.norm().is_finite() {
            self.trace.status = Status::Degenerate;
            self.trace.diverged = true;
            self.trace.message = Some("non-finite iterate".into());
            return Ok(Verdict::Stop);
        }
        if iter > 0 && objective > 1e6 * self.initial_objective.max(f64::MIN_POSITIVE) {
            self.trace.status = Status::Degenerate;
            self.trace.diverged = true;
            self.trace.message = Some("objective diverged".into());
            return Ok(Verdict::Stop);
        }
        let value = match self.rule.metric {
            StopMetric::RelRmse => rel_rmse.or(rel_change),
            StopMetric::RelChange => rel_change,
            StopMetric::GradNorm => Some(grad_norm),
        };
        if value.is_some_and(|v| v <= self.rule.tol) {
            self.trace.status = Status::Converged;
            return Ok(Verdict::Stop);
        }
        if iter >= self.rule.max_iter {
            self.trace.status = Status::MaxIter;
            return Ok(Verdict::Stop);
        }
        Ok(Verdict::Continue)
    }

    pub fn degenerate(mut self, message: String) -> SolveTrace {
        self.trace.status = Status::Degenerate;
        self.trace.message = Some(message);
        self.finish()
    }

    pub fn finish(mut self) -> SolveTrace {
        self.trace.fill_dist_to_final();
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{EntrySampling, SensingOperator};

    fn toy() -> (ProblemInstance, FactoredMatrix) {
        let idx: Vec<(usize, usize)> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
        let op: SensingOperator = EntrySampling::new(3, 3, &idx).unwrap().into();
        let x = FactoredMatrix::new(Mat::identity(3, 1), Mat::from_element(1, 1, 2.0), Mat::identity(3, 1)).unwrap();
        let y = op.apply(&x.to_dense()).unwrap();
        (ProblemInstance::new(op, y, 1).unwrap().with_truth(x.to_dense()).unwrap(), x)
    }

    #[test]
    fn converges_at_truth_immediately() {
        let (prob, x) = toy();
        let mut rec = Recorder::new(&prob, StopRule::default());
        assert!(matches!(rec.record(0, &x, false).unwrap(), Verdict::Stop));
        let trace = rec.finish();
        assert_eq!(trace.status, Status::Converged);
        assert_eq!(trace.records[0].grad_norm, 0.0);
        assert_eq!(trace.records[0].dist_to_final, Some(0.0));
    }

    #[test]
    fn max_iter_and_dist_to_final() {
        let (prob, _) = toy();
        let rule = StopRule { max_iter: 2, ..StopRule::default() };
        let mut rec = Recorder::new(&prob, rule);
        let z = FactoredMatrix::new(Mat::identity(3, 1), Mat::from_element(1, 1, 1.0), Mat::identity(3, 1)).unwrap();
        let w = FactoredMatrix::new(Mat::identity(3, 1), Mat::from_element(1, 1, 1.5), Mat::identity(3, 1)).unwrap();
        assert!(matches!(rec.record(0, &z, false).unwrap(), Verdict::Continue));
        assert!(matches!(rec.record(1, &z, false).unwrap(), Verdict::Continue));
        assert!(matches!(rec.record(2, &w, false).unwrap(), Verdict::Stop));
        let trace = rec.finish();
        assert_eq!(trace.status, Status::MaxIter);
        assert!((trace.records[0].dist_to_final.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((trace.records[0].rel_rmse.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(trace.iterations(), 2);
    }
}
