//! Matrix completion: RISRO with an entry-sampling operator.

use crate::error::{Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::Vector;
use crate::operator::{EntrySampling, SensingOperator};
use crate::problem::ProblemInstance;
use crate::risro::{risro_solve, RisroOptions};
use crate::trace::SolveTrace;

/// Builds the completion instance for observations `y_k = Y[i_k, j_k]`.
pub fn completion_problem(
    p1: usize,
    p2: usize,
    omega: &[(usize, usize)],
    y: Vector,
    r: usize,
) -> Result<ProblemInstance> {
    if omega.is_empty() {
        return Err(Error::InvalidInput("no observed entries".into()));
    }
    let op: SensingOperator = EntrySampling::new(p1, p2, omega)?.into();
    ProblemInstance::new(op, y, r)
}

/// RISRO on an entry-sampling instance. The reduced least squares is the
/// minimum-norm solution, so fewer observations than `(p1 + p2 − r)r` still
/// produce a step; the trace is then flagged under-determined.
pub fn mc_risro(
    prob: &ProblemInstance,
    init: &FactoredMatrix,
    opts: &RisroOptions,
) -> Result<(FactoredMatrix, SolveTrace)> {
    match prob.operator() {
        SensingOperator::EntrySampling(e) if !e.is_empty() => risro_solve(prob, init, opts),
        SensingOperator::EntrySampling(_) => Err(Error::InvalidInput("no observed entries".into())),
        _ => Err(Error::InvalidInput("matrix completion needs an entry-sampling operator".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::spectral_init_trace_regression;
    use crate::factored::best_rank_r;
    use crate::gen::{gen_completion, McConfig};
    use crate::linalg::Mat;
    use crate::risro::LsBackend;
    use crate::rng::{gaussian_matrix, seeded};
    use alloc::vec::Vec;

    #[test]
    fn full_observation_recovers_in_one_step() {
        let mut rng = seeded(1);
        let (p1, p2, r) = (9, 7, 2);
        let truth = gaussian_matrix(&mut rng, p1, r) * gaussian_matrix(&mut rng, r, p2);
        let omega: Vec<(usize, usize)> = (0..p2).flat_map(|j| (0..p1).map(move |i| (i, j))).collect();
        let y = Vector::from_column_slice(truth.as_slice());
        let prob = completion_problem(p1, p2, &omega, y, r).unwrap().with_truth(truth.clone()).unwrap();
        let init = best_rank_r(&gaussian_matrix(&mut rng, p1, p2), r).unwrap();
        let (x, _) = mc_risro(&prob, &init, &RisroOptions { max_iter: 1, ..Default::default() }).unwrap();
        assert!((x.to_dense() - &truth).norm() <= 1e-10 * truth.norm());
    }

    #[test]
    fn too_few_entries_flags_underdetermined() {
        let mut rng = seeded(2);
        let (p, r) = (10, 2);
        let truth = gaussian_matrix(&mut rng, p, r) * gaussian_matrix(&mut rng, r, p);
        let omega: Vec<(usize, usize)> = (0..30).map(|k| (k % p, (k * 3 + k / p) % p)).collect();
        let y = Vector::from_iterator(omega.len(), omega.iter().map(|&(i, j)| truth[(i, j)]));
        let prob = completion_problem(p, p, &omega, y, r).unwrap();
        let init = best_rank_r(&(truth + gaussian_matrix(&mut rng, p, p) * 0.1), r).unwrap();
        let (_, trace) = mc_risro(&prob, &init, &RisroOptions { max_iter: 2, ..Default::default() }).unwrap();
        assert!(trace.underdetermined);
    }

    #[test]
    fn empty_or_wrong_operator_is_rejected() {
        assert!(completion_problem(3, 3, &[], Vector::zeros(0), 1).is_err());
        let dense: SensingOperator = crate::operator::DenseSensing::new(2, 2, &[Mat::identity(2, 2)]).unwrap().into();
        let prob = ProblemInstance::new(dense, Vector::zeros(1), 1).unwrap();
        assert!(mc_risro(&prob, &FactoredMatrix::zeros(2, 2, 1), &RisroOptions::default()).is_err());
    }

    #[test]
    fn backends_produce_the_same_iterates() {
        let c = gen_completion(&McConfig { p: 40, r: 2, kappa: 2.0, n_observed: 8 * 40 * 2, seed: 3 }).unwrap();
        let init = spectral_init_trace_regression(c.problem.operator(), c.problem.y(), 2).unwrap();
        let run = |ls_backend| {
            let opts = RisroOptions { max_iter: 6, ls_backend, ..Default::default() };
            mc_risro(&c.problem, &init, &opts).unwrap().1
        };
        let (qr, cg) = (run(LsBackend::DenseQR), run(LsBackend::IntrinsicCG));
        assert_eq!(qr.records.len(), cg.records.len());
        for (a, b) in qr.iterates.iter().zip(cg.iterates.iter()) {
            assert!(a.distance(b).unwrap() <= 1e-8 * a.norm());
        }
    }
}
