//! Comparison solvers: singular value projection, alternating minimization,
//! factored gradient descent, and the spectral initializer.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::factored::{best_rank_r, FactoredMatrix};
use crate::linalg::{lstsq, thin_qr, Mat, Vector};
use crate::math;
use crate::operator::SensingOperator;
use crate::problem::ProblemInstance;
use crate::risro::check_init;
use crate::trace::{grad_norm_from_adjoint, Clock, Recorder, SolveTrace, StopMetric, StopRule, Verdict};

/// `(A*(y))_{max(r)}` rescaled by the least-squares factor
/// `c = ⟨A(P), y⟩ / ‖A(P)‖²`, which undoes the `E[A*A]` scaling of
/// unnormalized ensembles. Returns the zero matrix when `y = 0`.
pub fn spectral_init_trace_regression(op: &SensingOperator, y: &Vector, r: usize) -> Result<FactoredMatrix> {
    let p = best_rank_r(&op.adjoint(y)?, r)?;
    let ap = op.apply_factors(&[(&(p.u() * p.core()), p.v())])?;
    let denom = ap.norm_squared();
    let c = if denom > 0.0 { ap.dot(y) / denom } else { 0.0 };
    Ok(FactoredMatrix::from_parts(p.u().clone(), p.core() * c, p.v().clone()))
}

#[derive(Debug, Clone)]
pub struct BaselineOptions {
    pub step_sizes: Vec<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub tol_metric: StopMetric,
    pub clock: Clock,
    /// Stops the step-size sweep at the first run whose final error is below
    /// this value instead of trying every step.
    pub grid_early_exit: Option<f64>,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        let rule = StopRule::default();
        BaselineOptions {
            step_sizes: vec![5e-3, 1e-3, 5e-4],
            max_iter: rule.max_iter,
            tol: rule.tol,
            tol_metric: rule.metric,
            clock: rule.clock,
            grid_early_exit: None,
        }
    }
}

impl BaselineOptions {
    fn stop_rule(&self) -> StopRule {
        StopRule { max_iter: self.max_iter, tol: self.tol, metric: self.tol_metric, clock: self.clock }
    }

    fn validate(&self) -> Result<()> {
        if self.step_sizes.is_empty() || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidInput("need a step size, tol > 0 and max_iter ≥ 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a step-size sweep: the best run and the step that produced it.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub estimate: FactoredMatrix,
    pub trace: SolveTrace,
    pub step_size: f64,
}

/// Final error used to rank runs: relative error when the truth is known,
/// objective otherwise; diverged runs rank last.
fn final_score(trace: &SolveTrace) -> f64 {
    let last = trace.records.last();
    let score = last.and_then(|r| r.rel_rmse).or(last.map(|r| r.objective)).unwrap_or(f64::NAN);
    if trace.diverged || score.is_nan() {
        f64::INFINITY
    } else {
        score
    }
}

fn best_of_grid<F>(opts: &BaselineOptions, mut run: F) -> Result<GridResult>
where
    F: FnMut(f64) -> Result<(FactoredMatrix, SolveTrace)>,
{
    opts.validate()?;
    let mut best: Option<(f64, GridResult)> = None;
    for &eta in &opts.step_sizes {
        let (estimate, trace) = run(eta)?;
        let score = final_score(&trace);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, GridResult { estimate, trace, step_size: eta }));
        }
        if opts.grid_early_exit.is_some_and(|cut| score < cut) {
            break;
        }
    }
    Ok(best.expect("nonempty grid").1)
}

/// One projected gradient step `(X − η A*(A(X) − y))_{max(r)}`.
pub fn svp_step(prob: &ProblemInstance, x: &FactoredMatrix, eta: f64) -> Result<FactoredMatrix> {
    let g = prob.operator().adjoint(&prob.residual(x)?)?;
    best_rank_r(&(x.to_dense() - g * eta), prob.rank())
}

pub fn svp_solve_with_step(
    prob: &ProblemInstance,
    init: &FactoredMatrix,
    eta: f64,
    opts: &BaselineOptions,
) -> Result<(FactoredMatrix, SolveTrace)> {
    check_init(prob, init)?;
    let mut rec = Recorder::new(prob, opts.stop_rule());
    let mut x = init.clone();
    let mut t = 0;
    loop {
        // one residual and one adjoint serve both the metrics and the step
        let res = prob.residual(&x)?;
        let g = prob.operator().adjoint(&res)?;
        let objective = 0.5 * res.norm_squared();
        if let Verdict::Stop = rec.record_with(t, &x, false, objective, grad_norm_from_adjoint(&g, &x))? {
            return Ok((x, rec.finish()));
        }
        t += 1;
        x = best_rank_r(&(x.to_dense() - g * eta), prob.rank())?;
    }
}

/// Singular value projection, best run over `opts.step_sizes`.
pub fn svp_solve(prob: &ProblemInstance, init: &FactoredMatrix, opts: &BaselineOptions) -> Result<GridResult> {
    best_of_grid(opts, |eta| svp_solve_with_step(prob, init, eta, opts))
}

/// Minimizer over `W` of `‖y − A(W fixedᵀ)‖` (`left`) or `‖y − A(fixed Wᵀ)‖`,
/// with the rank-deficiency flag.
fn factor_ls(op: &SensingOperator, y: &Vector, fixed: &Mat, left: bool) -> Result<(Mat, bool)> {
    let (design, rows) = if left {
        (op.left_covariates(fixed)?, op.dims().0)
    } else {
        (op.right_covariates(fixed)?, op.dims().1)
    };
    let ls = lstsq(&design, y)?;
    Ok((Mat::from_column_slice(rows, fixed.ncols(), ls.solution.as_slice()), ls.rank_deficient))
}

/// Alternating minimization: `V̌ = argmin ‖y − A(U V̌ᵀ)‖`, `V = QR(V̌)`, then
/// `Ǔ = argmin ‖y − A(Ǔ Vᵀ)‖`, `U = QR(Ǔ)`; the iterate is `Ǔ Vᵀ`.
pub fn altmin_solve(
    prob: &ProblemInstance,
    init: &FactoredMatrix,
    opts: &BaselineOptions,
) -> Result<(FactoredMatrix, SolveTrace)> {
    check_init(prob, init)?;
    let op = prob.operator();
    let mut rec = Recorder::new(prob, opts.stop_rule());
    let mut x = init.clone();
    let mut t = 0;
    let mut deficient = false;
    if op.dims().2 < prob.rank() * op.dims().0.max(op.dims().1) {
        rec.set_underdetermined();
    }
    while let Verdict::Continue = rec.record(t, &x, deficient)? {
        t += 1;
        let (v_check, d1) = factor_ls(op, prob.y(), x.u(), false)?;
        let (v, _) = thin_qr(&v_check);
        let (u_check, d2) = factor_ls(op, prob.y(), &v, true)?;
        let (u, ru) = thin_qr(&u_check);
        deficient = d1 || d2;
        x = FactoredMatrix::from_parts(u, ru, v);
    }
    Ok((x, rec.finish()))
}

/// `(∇_R g, ∇_L g)` for `g(R, L) = ½‖y − A(R Lᵀ)‖²`.
pub fn factored_gradient(prob: &ProblemInstance, left: &Mat, right: &Mat) -> Result<(Mat, Mat)> {
    let op = prob.operator();
    let res = op.apply_factors(&[(left, right)])? - prob.y();
    op.adjoint_mul_pair(&res, right, left)
}

/// Gradient descent on `g(R, L) = ½‖y − A(R Lᵀ)‖²` from the balanced factors
/// `R⁰ = U√Σ`, `L⁰ = V√Σ` of the initial point, with step `η / (2σ_1(X⁰))`
/// since both factors move at once.
pub fn factored_gd_solve_with_step(
    prob: &ProblemInstance,
    init: &FactoredMatrix,
    eta: f64,
    opts: &BaselineOptions,
) -> Result<(FactoredMatrix, SolveTrace)> {
    check_init(prob, init)?;
    let svd = init.to_svd();
    let root = svd.core().map(math::sqrt);
    let mut left = svd.u() * &root;
    let mut right = svd.v() * &root;
    let sigma1 = svd.core()[(0, 0)];
    let step = if sigma1 > 0.0 { eta / (2.0 * sigma1) } else { eta };
    let mut rec = Recorder::new(prob, opts.stop_rule());
    let mut x = init.clone();
    let mut t = 0;
    loop {
        let res = prob.operator().apply_factors(&[(&left, &right)])? - prob.y();
        let g = prob.operator().adjoint(&res)?;
        let objective = 0.5 * res.norm_squared();
        if let Verdict::Stop = rec.record_with(t, &x, false, objective, grad_norm_from_adjoint(&g, &x))? {
            return Ok((x, rec.finish()));
        }
        t += 1;
        let (gl, gr) = (&g * &right, g.tr_mul(&left));
        left -= gl * step;
        right -= gr * step;
        x = FactoredMatrix::from_factors(&left, &right)?;
    }
}

/// Factored gradient descent, best run over `opts.step_sizes`.
pub fn factored_gd_solve(prob: &ProblemInstance, init: &FactoredMatrix, opts: &BaselineOptions) -> Result<GridResult> {
    best_of_grid(opts, |eta| factored_gd_solve_with_step(prob, init, eta, opts))
}
