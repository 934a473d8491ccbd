use proptest::prelude::*;

use risro_core::gen::{gen_trace_regression, TraceRegressionConfig};
use risro_core::linalg::frob_inner;
use risro_core::manifold::TangentSpace;
use risro_core::risro::{risro_solve, RisroOptions};
use risro_core::rng::{gaussian_matrix, gaussian_vector, seeded};
use risro_core::{best_rank_r, DenseSensing, EntrySampling, Mat, ProblemInstance, RankOneSensing, SensingOperator};

fn dense_problem(seed: u64, p1: usize, p2: usize, r: usize, n: usize) -> (ProblemInstance, Mat) {
    let mut rng = seeded(seed);
    let mats: Vec<Mat> = (0..n).map(|_| gaussian_matrix(&mut rng, p1, p2)).collect();
    let op: SensingOperator = DenseSensing::new(p1, p2, &mats).unwrap().into();
    let y = gaussian_vector(&mut rng, n);
    (ProblemInstance::new(op, y, r).unwrap(), gaussian_matrix(&mut rng, p1, p2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjoint_identity_holds_for_every_operator(seed in 0u64..5000, p1 in 2usize..9, p2 in 2usize..9, n in 1usize..40) {
        let mut rng = seeded(seed);
        let mats: Vec<Mat> = (0..n).map(|_| gaussian_matrix(&mut rng, p1, p2)).collect();
        // distinct entries, at most every one
        let idx: Vec<(usize, usize)> = (0..n.min(p1 * p2)).map(|k| (k % p1, k / p1)).collect();
        let ops: Vec<SensingOperator> = vec![
            DenseSensing::new(p1, p2, &mats).unwrap().into(),
            EntrySampling::new(p1, p2, &idx).unwrap().into(),
            RankOneSensing::new(gaussian_matrix(&mut rng, n, p1)).into(),
        ];
        for op in ops {
            let (q1, q2, m) = op.dims();
            let x = gaussian_matrix(&mut rng, q1, q2);
            let w = gaussian_vector(&mut rng, m);
            let ax = op.apply(&x).unwrap();
            let lhs = ax.dot(&w);
            let rhs = frob_inner(&x, &op.adjoint(&w).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (ax.norm() * w.norm()).max(1.0));
        }
    }

    #[test]
    fn projection_is_idempotent(seed in 0u64..5000, p1 in 3usize..10, p2 in 3usize..10, r in 1usize..3) {
        let mut rng = seeded(seed);
        let x = best_rank_r(&gaussian_matrix(&mut rng, p1, p2), r).unwrap();
        let space = TangentSpace::new(&x).unwrap();
        let once = space.to_dense(&space.project(&gaussian_matrix(&mut rng, p1, p2)).unwrap());
        let twice = space.to_dense(&space.project(&once).unwrap());
        prop_assert!((&once - &twice).norm() <= 1e-12 * once.norm().max(1.0));
    }

    #[test]
    fn chart_round_trips(seed in 0u64..5000, p1 in 3usize..10, p2 in 3usize..10, r in 1usize..3) {
        let mut rng = seeded(seed);
        let x = best_rank_r(&gaussian_matrix(&mut rng, p1, p2), r).unwrap();
        let space = TangentSpace::new(&x).unwrap();
        prop_assert_eq!(space.dim(), (p1 + p2 - r) * r);
        let xi = space.project(&gaussian_matrix(&mut rng, p1, p2)).unwrap();
        let c = space.to_intrinsic(&xi);
        prop_assert!((c.norm() - xi.norm()).abs() <= 1e-12 * xi.norm());
        let back = space.from_intrinsic(&c).unwrap();
        prop_assert!((space.to_dense(&back) - space.to_dense(&xi)).norm() <= 1e-12 * xi.norm());
    }

    #[test]
    fn single_step_objectives_are_finite(seed in 0u64..5000) {
        let (prob, m) = dense_problem(seed, 6, 5, 2, 60);
        let init = best_rank_r(&m, 2).unwrap();
        let opts = RisroOptions { max_iter: 1, tol: 1e-300, ..Default::default() };
        let (_, trace) = risro_solve(&prob, &init, &opts).unwrap();
        prop_assert!(trace.records.iter().all(|r| r.objective.is_finite()));
    }
}

#[test]
fn noiseless_recovery_from_spectral_start() {
    let g = gen_trace_regression(&TraceRegressionConfig { p1: 20, p2: 15, r: 2, n: 400, kappa: 2.0, sigma: 0.0, seed: 3 })
        .unwrap();
    let init = risro_core::baselines::spectral_init_trace_regression(g.problem.operator(), g.problem.y(), 2).unwrap();
    let (x, trace) = risro_solve(&g.problem, &init, &RisroOptions { max_iter: 15, tol: 1e-13, ..Default::default() }).unwrap();
    assert!(x.distance(&g.truth).unwrap() <= 1e-10 * g.truth.norm());
    assert!(trace.iterations() <= 10);
}
