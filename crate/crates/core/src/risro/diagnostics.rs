//! Identities satisfied by every step, evaluated independently of the solver.

use crate::error::{Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::{solve_spd, Vector};
use crate::manifold::{SketchBlocks, TangentSpace, TangentVector};
use crate::problem::ProblemInstance;

use super::build_in;

fn blocks_as_tangent(blocks: &SketchBlocks) -> TangentVector {
    TangentVector { b: blocks.b.clone(), d1: blocks.d1.clone(), d2: blocks.d2.clone() }
}

/// Gauss–Newton optimality of a step and the descent identity.
#[derive(Debug, Clone, Copy)]
pub struct GaussNewtonCertificate {
    /// `‖P_T(A*(A(X + η) − y))‖_F`.
    pub projected_residual: f64,
    /// `⟨grad f(X), η⟩`.
    pub grad_dot_step: f64,
    /// `‖A(η)‖²`.
    pub step_energy: f64,
}

/// Evaluates the certificate for the step encoded by `blocks` at the point of `space`.
pub fn gauss_newton_certificate(
    prob: &ProblemInstance,
    space: &TangentSpace,
    blocks: &SketchBlocks,
) -> Result<GaussNewtonCertificate> {
    // X + η is the tangent-form matrix with blocks (B, D1, D2)
    let moved = space.apply_operator(prob, &blocks_as_tangent(blocks))? - prob.y();
    let projected_residual = space.project_adjoint(prob, &moved)?.norm();
    let eta = space.step_of_blocks(blocks);
    let grad = space.gradient(prob)?;
    let step_energy = space.apply_operator(prob, &eta)?.norm_squared();
    Ok(GaussNewtonCertificate { projected_residual, grad_dot_step: grad.inner(&eta), step_energy })
}

/// Both sides of the iteration-error decomposition around a rank-r reference
/// `x_bar`:
///
/// * left: `‖B − B̃‖² + ‖D1 − D̃1‖² + ‖D2 − D̃2‖²` with `(B̃, D̃1, D̃2)` the blocks
///   of `x_bar` in the frame of `x_t`;
/// * right: `‖(L*A*AL)⁻¹ L*A*(ε)‖²` with `ε = y − A(x_bar) + A(P_{U⊥} x_bar P_{V⊥})`,
///   evaluated through the normal equations.
pub fn iteration_error_decomposition(
    prob: &ProblemInstance,
    x_bar: &FactoredMatrix,
    x_t: &FactoredMatrix,
    blocks: &SketchBlocks,
) -> Result<(f64, f64)> {
    let space = TangentSpace::new(x_t)?;
    let bar = x_bar.to_dense();
    let tilde = space.project(&bar)?;
    let diff = blocks_as_tangent(blocks).add(&tilde.scale(-1.0));
    let lhs = diff.norm_squared();

    let normal_part = &bar - space.to_dense(&tilde);
    let op = prob.operator();
    let eps: Vector = prob.y() - op.apply(&bar)? + op.apply(&normal_part)?;
    let design = build_in(op, space)?.matrix;
    let gram = design.tr_mul(&design);
    let rhs_vec = solve_spd(&gram, &design.tr_mul(&eps))
        .ok_or_else(|| Error::Degenerate("reduced normal operator is singular".into()))?;
    Ok((lhs, rhs_vec.norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::operator::{DenseSensing, SensingOperator};
    use crate::risro::{build_sketch_design, solve_reduced_ls};
    use crate::rng::{gaussian_matrix, gaussian_vector, seeded};
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn instance(seed: u64, p1: usize, p2: usize, r: usize, n: usize, noise: f64) -> (ProblemInstance, FactoredMatrix) {
        let mut rng = seeded(seed);
        let mats: Vec<Mat> = (0..n).map(|_| gaussian_matrix(&mut rng, p1, p2)).collect();
        let op: SensingOperator = DenseSensing::new(p1, p2, &mats).unwrap().into();
        let bar = FactoredMatrix::from_factors(&gaussian_matrix(&mut rng, p1, r), &gaussian_matrix(&mut rng, p2, r)).unwrap();
        let y = op.apply(&bar.to_dense()).unwrap() + gaussian_vector(&mut rng, n) * noise;
        (ProblemInstance::new(op, y, r).unwrap(), bar)
    }

    #[test]
    fn aligned_frames_give_zero_on_both_sides() {
        let (prob, bar) = instance(1, 6, 6, 2, 50, 0.0);
        let d = build_sketch_design(prob.operator(), &bar).unwrap();
        let sol = solve_reduced_ls(&d, prob.y()).unwrap();
        let (l, r) = iteration_error_decomposition(&prob, &bar, &bar, &sol.blocks).unwrap();
        assert!(l < 1e-20 && r < 1e-20, "{l} {r}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]

        #[test]
        fn both_sides_agree(seed in 0u64..100_000, noise in 0.0f64..0.5) {
            let (prob, bar) = instance(seed, 6, 5, 2, 50, noise);
            let mut rng = seeded(seed + 7);
            let xt = FactoredMatrix::from_factors(
                &(bar.u() * bar.core() + gaussian_matrix(&mut rng, 6, 2) * 0.3),
                &(bar.v() + gaussian_matrix(&mut rng, 5, 2) * 0.3),
            ).unwrap();
            let d = build_sketch_design(prob.operator(), &xt).unwrap();
            let sol = solve_reduced_ls(&d, prob.y()).unwrap();
            let (l, r) = iteration_error_decomposition(&prob, &bar, &xt, &sol.blocks).unwrap();
            prop_assert!((l - r).abs() <= 1e-9 * l.max(r));
        }
    }
}
