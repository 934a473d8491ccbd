//! Recursive importance sketching.
//!
//! Each iteration sketches every sensing matrix onto the current column and
//! row frames, solves the resulting `(p1 + p2 − r)·r`-dimensional least
//! squares for the blocks `(B, D1, D2)`, and moves to
//! `X⁺ = (U B + U⊥ D1) B† (V Bᵀ + V⊥ D2)ᵀ`.

use alloc::format;

use crate::error::{Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::{lstsq, Mat, Vector};
use crate::manifold::{cg, SketchBlocks, TangentSpace};
use crate::operator::SensingOperator;
use crate::problem::ProblemInstance;
use crate::trace::{Clock, Recorder, SolveTrace, StopMetric, StopRule, Verdict};

pub mod diagnostics;

/// How the reduced least squares is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LsBackend {
    /// Column-pivoted Householder QR of the explicit sketched design.
    #[default]
    DenseQR,
    /// Conjugate gradients on intrinsic coordinates, touching the operator
    /// only through low-rank products.
    IntrinsicCG,
}

#[derive(Debug, Clone, Copy)]
pub struct RisroOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub tol_metric: StopMetric,
    pub ls_backend: LsBackend,
    /// Singular values of `B` at most `pinv_threshold·σ_max(B)` are treated
    /// as zero; `None` uses `r·ε`.
    pub pinv_threshold: Option<f64>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub clock: Clock,
}

impl Default for RisroOptions {
    fn default() -> Self {
        let rule = StopRule::default();
        RisroOptions {
            max_iter: rule.max_iter,
            tol: rule.tol,
            tol_metric: rule.metric,
            ls_backend: LsBackend::DenseQR,
            pinv_threshold: None,
            cg_tol: 1e-12,
            cg_max_iter: 2000,
            clock: rule.clock,
        }
    }
}

impl RisroOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidInput(format!(
                "need tol > 0 and max_iter ≥ 1 (got {}, {})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }

    pub(crate) fn stop_rule(&self) -> StopRule {
        StopRule { max_iter: self.max_iter, tol: self.tol, metric: self.tol_metric, clock: self.clock }
    }

    pub(crate) fn pinv_rel(&self, r: usize) -> f64 {
        self.pinv_threshold.unwrap_or(r as f64 * f64::EPSILON)
    }
}

/// Sketched importance covariates. Row `i` is
/// `[vec(UᵀA_iV), vec(U⊥ᵀA_iV), vec(UᵀA_iV⊥)]`, so `design · c = A(Z)` for the
/// tangent-form matrix `Z` with intrinsic coordinates `c`.
#[derive(Debug, Clone)]
pub struct SketchDesign {
    pub matrix: Mat,
    pub space: TangentSpace,
}

/// Regroups an `n × (p·r)` covariate matrix (row `i` = column-major `p × r`
/// block) into `p × (n·r)` with block `i` in columns `i·r..(i+1)·r`.
fn blocks_side_by_side(cov: &Mat, p: usize, r: usize) -> Mat {
    let n = cov.nrows();
    let mut out = Mat::zeros(p, n * r);
    for c in 0..r {
        for a in 0..p {
            let src = cov.column(a + p * c);
            for i in 0..n {
                out[(a, i * r + c)] = src[i];
            }
        }
    }
    out
}

pub fn build_sketch_design(op: &SensingOperator, x: &FactoredMatrix) -> Result<SketchDesign> {
    build_in(op, TangentSpace::new(x)?)
}

pub(crate) fn build_in(op: &SensingOperator, space: TangentSpace) -> Result<SketchDesign> {
    let (p1, p2, n) = op.dims();
    let r = space.base().rank();
    let w = blocks_side_by_side(&op.left_covariates(space.v())?, p1, r);
    let z = blocks_side_by_side(&op.right_covariates(space.u())?, p2, r);
    let bw = space.u().tr_mul(&w);
    let d1w = space.u_perp().project(&w);
    // block i of d2w is (UᵀA_iV⊥)ᵀ
    let d2w = space.v_perp().project(&z);
    let (q1, q2) = (p1 - r, p2 - r);
    let off1 = r * r;
    let off2 = off1 + q1 * r;
    let mut matrix = Mat::zeros(n, space.dim());
    for i in 0..n {
        for c in 0..r {
            let col = i * r + c;
            for a in 0..r {
                matrix[(i, a + r * c)] = bw[(a, col)];
            }
            for a in 0..q1 {
                matrix[(i, off1 + a + q1 * c)] = d1w[(a, col)];
            }
            for b in 0..q2 {
                matrix[(i, off2 + c + r * b)] = d2w[(b, col)];
            }
        }
    }
    Ok(SketchDesign { matrix, space })
}

/// Reduced least-squares solution and its numerical flags.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub blocks: SketchBlocks,
    pub rank_deficient: bool,
    pub underdetermined: bool,
}

/// Minimum-norm least-squares blocks for `y ≈ design · c`.
pub fn solve_reduced_ls(design: &SketchDesign, y: &Vector) -> Result<ReducedSolution> {
    let ls = lstsq(&design.matrix, y)?;
    let t = design.space.from_intrinsic(&ls.solution)?;
    Ok(ReducedSolution {
        blocks: SketchBlocks { b: t.b, d1: t.d1, d2: t.d2 },
        rank_deficient: ls.rank_deficient,
        underdetermined: design.matrix.nrows() < design.matrix.ncols(),
    })
}

/// Reduced least squares at the point of `space` with the chosen backend.
pub(crate) fn reduced_step(
    prob: &ProblemInstance,
    space: &TangentSpace,
    opts: &RisroOptions,
) -> Result<ReducedSolution> {
    match opts.ls_backend {
        LsBackend::DenseQR => solve_reduced_ls(&build_in(prob.operator(), space.clone())?, prob.y()),
        LsBackend::IntrinsicCG => {
            let out = cg::solve(space, prob, opts.cg_tol, opts.cg_max_iter)?;
            let n = prob.dims().2;
            Ok(ReducedSolution {
                blocks: space.blocks_of_step(&out.step),
                rank_deficient: out.relative_residual > opts.cg_tol,
                underdetermined: n < space.dim(),
            })
        }
    }
}

/// What an observer sees after each step.
pub struct StepInfo<'a> {
    /// Index of the iterate produced by this step.
    pub iter: usize,
    /// Tangent space at the previous iterate.
    pub space: &'a TangentSpace,
    pub solution: &'a ReducedSolution,
    pub next: &'a FactoredMatrix,
}

pub fn risro_solve(
    prob: &ProblemInstance,
    init: &FactoredMatrix,
    opts: &RisroOptions,
) -> Result<(FactoredMatrix, SolveTrace)> {
    risro_solve_observed(prob, init, opts, &mut |_| {})
}

/// [`risro_solve`] calling `observer` after every step.
pub fn risro_solve_observed(
    prob: &ProblemInstance,
    init: &FactoredMatrix,
    opts: &RisroOptions,
    observer: &mut dyn FnMut(&StepInfo<'_>),
) -> Result<(FactoredMatrix, SolveTrace)> {
    opts.validate()?;
    check_init(prob, init)?;
    let mut rec = Recorder::new(prob, opts.stop_rule());
    let mut x = init.clone();
    if let Verdict::Stop = rec.record(0, &x, false)? {
        return Ok((x, rec.finish()));
    }
    let mut t = 0;
    loop {
        t += 1;
        let space = TangentSpace::new(&x)?;
        let (next, sol) = match advance(prob, &space, opts, t) {
            Ok(out) => out,
            Err(Error::Degenerate(msg)) => return Ok((x, rec.degenerate(msg))),
            Err(e) => return Err(e),
        };
        if sol.underdetermined {
            rec.set_underdetermined();
        }
        observer(&StepInfo { iter: t, space: &space, solution: &sol, next: &next });
        x = next;
        if let Verdict::Stop = rec.record(t, &x, sol.rank_deficient)? {
            return Ok((x, rec.finish()));
        }
    }
}

/// One step from the base point of `space`: reduced least squares, then the
/// retraction. A rank-deficient `B` is reported as [`Error::Degenerate`].
pub(crate) fn advance(
    prob: &ProblemInstance,
    space: &TangentSpace,
    opts: &RisroOptions,
    t: usize,
) -> Result<(FactoredMatrix, ReducedSolution)> {
    let r = space.base().rank();
    let sol = reduced_step(prob, space, opts)?;
    let ret = space.retract_blocks(&sol.blocks, opts.pinv_rel(r))?;
    if ret.rank_deficient() {
        return Err(Error::Degenerate(format!("B has numerical rank {} < {r} at iteration {t}", ret.b_rank)));
    }
    Ok((ret.point, sol))
}

pub(crate) fn check_init(prob: &ProblemInstance, init: &FactoredMatrix) -> Result<()> {
    let (p1, p2, _) = prob.dims();
    if init.shape() != (p1, p2) || init.rank() != prob.rank() {
        return Err(Error::InvalidInput(format!(
            "initial point is {:?} of rank {}, problem expects {:?} of rank {}",
            init.shape(),
            init.rank(),
            (p1, p2),
            prob.rank()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::best_rank_r;
    use crate::linalg::solve_spd;
    use crate::operator::{DenseSensing, EntrySampling, RankOneSensing};
    use crate::rng::{gaussian_matrix, gaussian_vector, random_orthonormal, seeded};
    use crate::trace::Status;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn dense_op(seed: u64, p1: usize, p2: usize, n: usize) -> SensingOperator {
        let mut rng = seeded(seed);
        let mats: Vec<Mat> = (0..n).map(|_| gaussian_matrix(&mut rng, p1, p2)).collect();
        DenseSensing::new(p1, p2, &mats).unwrap().into()
    }

    fn low_rank(seed: u64, p1: usize, p2: usize, r: usize) -> FactoredMatrix {
        let mut rng = seeded(seed);
        FactoredMatrix::from_factors(&gaussian_matrix(&mut rng, p1, r), &gaussian_matrix(&mut rng, p2, r)).unwrap()
    }

    #[test]
    fn aligned_rank_one_sensing_hits_b_entry() {
        let x = low_rank(1, 5, 4, 2);
        let a = x.u().column(0) * x.v().column(0).transpose();
        let op: SensingOperator = DenseSensing::new(5, 4, &[a]).unwrap().into();
        let d = build_sketch_design(&op, &x).unwrap();
        let row = d.matrix.row(0);
        assert!((row[0] - 1.0).abs() < 1e-14);
        assert!(row.iter().skip(1).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn entry_rows_are_kronecker_products() {
        let (p1, p2, r) = (5, 6, 2);
        let x = low_rank(2, p1, p2, r);
        let idx = [(0, 0), (3, 5), (4, 1)];
        let op: SensingOperator = EntrySampling::new(p1, p2, &idx).unwrap().into();
        let d = build_sketch_design(&op, &x).unwrap();
        let up = d.space.u_perp().dense();
        let vp = d.space.v_perp().dense();
        let kron = |a: nalgebra::RowDVector<f64>, b: nalgebra::RowDVector<f64>| {
            let mut out = Vec::new();
            for ai in a.iter() {
                for bi in b.iter() {
                    out.push(ai * bi);
                }
            }
            out
        };
        for (k, &(i, j)) in idx.iter().enumerate() {
            let mut expect = kron(x.v().row(j).into_owned(), x.u().row(i).into_owned());
            expect.extend(kron(x.v().row(j).into_owned(), up.row(i).into_owned()));
            expect.extend(kron(vp.row(j).into_owned(), x.u().row(i).into_owned()));
            let got: Vec<f64> = d.matrix.row(k).iter().cloned().collect();
            for (g, e) in got.iter().zip(expect.iter()) {
                assert!((g - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn design_reproduces_operator_on_tangent_matrices() {
        let mut rng = seeded(3);
        let x = low_rank(4, 6, 5, 2);
        let ops: Vec<SensingOperator> = alloc::vec![
            dense_op(5, 6, 5, 30),
            EntrySampling::new(6, 5, &[(0, 0), (5, 4), (2, 3), (1, 1)]).unwrap().into(),
        ];
        for op in ops {
            let d = build_sketch_design(&op, &x).unwrap();
            let c = gaussian_vector(&mut rng, d.space.dim());
            let z = d.space.to_dense(&d.space.from_intrinsic(&c).unwrap());
            assert!((&d.matrix * &c - op.apply(&z).unwrap()).norm() < 1e-10 * c.norm());
        }
        let sym = low_rank(6, 5, 5, 2);
        let op: SensingOperator = RankOneSensing::new(gaussian_matrix(&mut rng, 20, 5)).into();
        let d = build_sketch_design(&op, &sym).unwrap();
        let c = gaussian_vector(&mut rng, d.space.dim());
        let z = d.space.to_dense(&d.space.from_intrinsic(&c).unwrap());
        assert!((&d.matrix * &c - op.apply(&z).unwrap()).norm() < 1e-10 * c.norm());
    }

    #[test]
    fn reduced_ls_matches_normal_equations() {
        let mut rng = seeded(7);
        let op = dense_op(8, 6, 6, 80);
        let x = low_rank(9, 6, 6, 2);
        let d = build_sketch_design(&op, &x).unwrap();
        let y = gaussian_vector(&mut rng, 80);
        let sol = solve_reduced_ls(&d, &y).unwrap();
        let c = d.space.to_intrinsic(&d.space.step_of_blocks(&sol.blocks).add(&crate::manifold::TangentVector {
            b: x.core().clone(),
            d1: Mat::zeros(4, 2),
            d2: Mat::zeros(4, 2),
        }));
        let oracle = solve_spd(&d.matrix.tr_mul(&d.matrix), &d.matrix.tr_mul(&y)).unwrap();
        assert!((c - &oracle).norm() <= 1e-9 * oracle.norm());
    }

    #[test]
    fn aligned_truth_is_recovered_in_one_step() {
        let (p1, p2, r) = (7, 6, 2);
        let truth = low_rank(10, p1, p2, r);
        let op = dense_op(11, p1, p2, 60);
        let y = op.apply(&truth.to_dense()).unwrap();
        let prob = ProblemInstance::new(op, y, r).unwrap().with_truth(truth.to_dense()).unwrap();
        // same spans, different core
        let mut rng = seeded(12);
        let q = random_orthonormal(&mut rng, r, r);
        let init = FactoredMatrix::new(truth.u() * &q, Mat::identity(r, r), truth.v().clone()).unwrap();
        let design = build_sketch_design(prob.operator(), &init).unwrap();
        let sol = solve_reduced_ls(&design, prob.y()).unwrap();
        let tilde = design.space.project(&truth.to_dense()).unwrap();
        assert!((&sol.blocks.b - &tilde.b).norm() < 1e-10);
        assert!(sol.blocks.d1.norm() < 1e-10 && sol.blocks.d2.norm() < 1e-10);
        let opts = RisroOptions { max_iter: 1, ..Default::default() };
        let (x1, _) = risro_solve(&prob, &init, &opts).unwrap();
        assert!(x1.distance(&truth).unwrap() <= 1e-10 * truth.norm());
    }

    #[test]
    fn fixed_point_converges_at_iteration_zero() {
        let truth = low_rank(13, 6, 6, 2);
        let op = dense_op(14, 6, 6, 60);
        let y = op.apply(&truth.to_dense()).unwrap();
        let prob = ProblemInstance::new(op, y, 2).unwrap().with_truth(truth.to_dense()).unwrap();
        let (_, trace) = risro_solve(&prob, &truth, &RisroOptions::default()).unwrap();
        assert_eq!(trace.status, Status::Converged);
        assert!(trace.iterations() <= 1);
        assert!(trace.records.last().unwrap().objective <= 1e-24);
    }

    #[test]
    fn noiseless_dense_problem_converges() {
        let (p1, p2, r, n) = (10, 8, 2, 150);
        let truth = low_rank(15, p1, p2, r);
        let op = dense_op(16, p1, p2, n);
        let y = op.apply(&truth.to_dense()).unwrap();
        let prob = ProblemInstance::new(op, y, r).unwrap().with_truth(truth.to_dense()).unwrap();
        let init = best_rank_r(&(truth.to_dense() + gaussian_matrix(&mut seeded(17), p1, p2) * 0.05), r).unwrap();
        let (_, trace) = risro_solve(&prob, &init, &RisroOptions::default()).unwrap();
        assert_eq!(trace.status, Status::Converged);
        assert!(trace.iterations() <= 8, "{} iterations", trace.iterations());
        assert!(trace.records.windows(2).all(|w| w[0].iter < w[1].iter));
    }

    #[test]
    fn rejects_bad_options_and_init() {
        let truth = low_rank(18, 4, 4, 1);
        let op = dense_op(19, 4, 4, 20);
        let y = op.apply(&truth.to_dense()).unwrap();
        let prob = ProblemInstance::new(op, y, 1).unwrap();
        let bad = RisroOptions { tol: 0.0, ..Default::default() };
        assert!(risro_solve(&prob, &truth, &bad).is_err());
        assert!(risro_solve(&prob, &low_rank(20, 4, 4, 2), &RisroOptions::default()).is_err());
    }

    #[test]
    fn backends_produce_the_same_iterates() {
        let (p1, p2, r, n) = (6, 5, 2, 60);
        let truth = low_rank(21, p1, p2, r);
        let op = dense_op(22, p1, p2, n);
        let y = op.apply(&truth.to_dense()).unwrap();
        let prob = ProblemInstance::new(op, y, r).unwrap().with_truth(truth.to_dense()).unwrap();
        let init = best_rank_r(&(truth.to_dense() + gaussian_matrix(&mut seeded(23), p1, p2) * 0.3), r).unwrap();
        let qr = RisroOptions::default();
        let cgo = RisroOptions { ls_backend: LsBackend::IntrinsicCG, ..qr };
        let (_, t1) = risro_solve(&prob, &init, &qr).unwrap();
        let (_, t2) = risro_solve(&prob, &init, &cgo).unwrap();
        assert_eq!(t1.iterates.len(), t2.iterates.len());
        for (a, b) in t1.iterates.iter().zip(t2.iterates.iter()) {
            assert!(a.distance(b).unwrap() <= 1e-10 * a.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gauss_newton_certificate_and_descent(seed in 0u64..100_000) {
            let (p1, p2, r, n) = (6, 5, 2, 50);
            let op = dense_op(seed, p1, p2, n);
            let prob = ProblemInstance::new(op, gaussian_vector(&mut seeded(seed + 1), n), r).unwrap();
            let x = low_rank(seed + 2, p1, p2, r);
            let d = build_sketch_design(prob.operator(), &x).unwrap();
            let sol = solve_reduced_ls(&d, prob.y()).unwrap();
            let cert = diagnostics::gauss_newton_certificate(&prob, &d.space, &sol.blocks).unwrap();
            let scale = prob.operator().adjoint(prob.y()).unwrap().norm();
            prop_assert!(cert.projected_residual <= 1e-8 * scale);
            prop_assert!((cert.grad_dot_step + cert.step_energy).abs() <= 1e-9 * cert.step_energy.max(f64::MIN_POSITIVE));
        }
    }
}
