//! Seeded synthetic instances.

use alloc::format;
use alloc::vec::Vec;
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::{Mat, Vector};
use crate::math;
use crate::operator::{DenseSensing, EntrySampling, RankOneSensing, SensingOperator};
use crate::problem::ProblemInstance;
use crate::rng::{gaussian_matrix, gaussian_vector, normal, random_orthonormal, seeded};

/// Singular values `λ_1 = 3`, `λ_i = λ_1 / κ^{i/r}` for `i ≥ 2`.
pub fn singular_value_schedule(r: usize, kappa: f64) -> Vec<f64> {
    (1..=r)
        .map(|i| if i == 1 { 3.0 } else { 3.0 / math::powf(kappa, i as f64 / r as f64) })
        .collect()
}

/// `U* diag(λ) V*ᵀ` with Haar-like orthonormal factors.
fn low_rank_truth<R: Rng + ?Sized>(rng: &mut R, p1: usize, p2: usize, r: usize, kappa: f64) -> FactoredMatrix {
    let u = random_orthonormal(rng, p1, r);
    let v = random_orthonormal(rng, p2, r);
    let s = Vector::from_vec(singular_value_schedule(r, kappa));
    FactoredMatrix::from_parts(u, Mat::from_diagonal(&s), v)
}

fn check_rank(p1: usize, p2: usize, r: usize, kappa: f64) -> Result<()> {
    if r == 0 || r > p1.min(p2) {
        return Err(Error::InvalidInput(format!("rank {r} outside 1..={}", p1.min(p2))));
    }
    if !(kappa >= 1.0) {
        return Err(Error::InvalidInput(format!("condition parameter κ = {kappa} must be ≥ 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRegressionConfig {
    pub p1: usize,
    pub p2: usize,
    pub r: usize,
    pub n: usize,
    pub kappa: f64,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TraceRegression {
    /// Carries `X*` as ground truth.
    pub problem: ProblemInstance,
    pub truth: FactoredMatrix,
}

/// `y_i = ⟨A_i, X*⟩ + ε_i` with standard normal `A_i` entries and `ε_i ~ N(0, σ²)`.
pub fn gen_trace_regression(cfg: &TraceRegressionConfig) -> Result<TraceRegression> {
    check_rank(cfg.p1, cfg.p2, cfg.r, cfg.kappa)?;
    let mut rng = seeded(cfg.seed);
    let truth = low_rank_truth(&mut rng, cfg.p1, cfg.p2, cfg.r, cfg.kappa);
    let stacked = gaussian_matrix(&mut rng, cfg.p1 * cfg.p2, cfg.n);
    let op: SensingOperator = DenseSensing::from_stacked(cfg.p1, cfg.p2, stacked)?.into();
    let dense = truth.to_dense();
    let mut y = op.apply(&dense)?;
    if cfg.sigma > 0.0 {
        y += gaussian_vector(&mut rng, cfg.n) * cfg.sigma;
    }
    let problem = ProblemInstance::new(op, y, cfg.r)?.with_truth(dense)?;
    Ok(TraceRegression { problem, truth })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRetrievalConfig {
    pub p: usize,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PhaseRetrieval {
    /// `n × p`, row `i` is `a_iᵀ`.
    pub vectors: Mat,
    pub y: Vector,
    /// Unit-norm signal.
    pub x_star: Vector,
}

impl PhaseRetrieval {
    /// The rank-one instance `y = A(x* x*ᵀ)` with ground truth.
    pub fn problem(&self) -> Result<ProblemInstance> {
        let op: SensingOperator = RankOneSensing::new(self.vectors.clone()).into();
        let truth = &self.x_star * self.x_star.transpose();
        ProblemInstance::new(op, self.y.clone(), 1)?.with_truth(truth)
    }
}

/// `y_i = ⟨a_i, x*⟩²`, `a_i ~ N(0, I_p)`, `x*` uniform on the sphere.
pub fn gen_phase_retrieval(cfg: &PhaseRetrievalConfig) -> Result<PhaseRetrieval> {
    if cfg.p == 0 {
        return Err(Error::InvalidInput("dimension p must be positive".into()));
    }
    let mut rng = seeded(cfg.seed);
    let mut x_star = gaussian_vector(&mut rng, cfg.p);
    x_star /= x_star.norm();
    let vectors = gaussian_matrix(&mut rng, cfg.n, cfg.p);
    let ax = &vectors * &x_star;
    let y = ax.map(|v| v * v);
    Ok(PhaseRetrieval { vectors, y, x_star })
}

/// `n` distinct entries of a `p1 × p2` matrix, uniformly without replacement,
/// in column-major order.
pub fn sample_entries<R: Rng + ?Sized>(rng: &mut R, p1: usize, p2: usize, n: usize) -> Result<Vec<(usize, usize)>> {
    if n > p1 * p2 {
        return Err(Error::InvalidInput(format!("cannot observe {n} of {} entries", p1 * p2)));
    }
    let mut lin = sample(rng, p1 * p2, n).into_vec();
    lin.sort_unstable();
    Ok(lin.into_iter().map(|k| (k % p1, k / p1)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub p: usize,
    pub r: usize,
    pub kappa: f64,
    pub n_observed: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub problem: ProblemInstance,
    pub truth: FactoredMatrix,
}

/// Noiseless entries of a `p × p` rank-r matrix observed uniformly at random.
pub fn gen_completion(cfg: &McConfig) -> Result<Completion> {
    check_rank(cfg.p, cfg.p, cfg.r, cfg.kappa)?;
    let mut rng = seeded(cfg.seed);
    let truth = low_rank_truth(&mut rng, cfg.p, cfg.p, cfg.r, cfg.kappa);
    let omega = sample_entries(&mut rng, cfg.p, cfg.p, cfg.n_observed)?;
    let op: SensingOperator = EntrySampling::new(cfg.p, cfg.p, &omega)?.into();
    let dense = truth.to_dense();
    let y = op.apply(&dense)?;
    let problem = ProblemInstance::new(op, y, cfg.r)?.with_truth(dense)?;
    Ok(Completion { problem, truth })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpcaConfigGen {
    pub p: usize,
    pub r: usize,
    pub kappa: f64,
    /// Probability that an entry is corrupted.
    pub q: f64,
    /// Standard deviation of the corruptions.
    pub spike_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Rpca {
    /// `Y = X* + S*`, fully observed.
    pub y: Mat,
    pub sparse: Mat,
    pub truth: FactoredMatrix,
}

/// Low-rank plus sparse: each entry of `S*` is `N(0, spike_sigma²)` with
/// probability `q` and zero otherwise.
pub fn gen_rpca(cfg: &RpcaConfigGen) -> Result<Rpca> {
    check_rank(cfg.p, cfg.p, cfg.r, cfg.kappa)?;
    if !(0.0..=1.0).contains(&cfg.q) {
        return Err(Error::InvalidInput(format!("corruption probability {} outside [0, 1]", cfg.q)));
    }
    let mut rng = seeded(cfg.seed);
    let truth = low_rank_truth(&mut rng, cfg.p, cfg.p, cfg.r, cfg.kappa);
    let mut sparse = Mat::zeros(cfg.p, cfg.p);
    for x in sparse.iter_mut() {
        if rng.gen::<f64>() < cfg.q {
            *x = cfg.spike_sigma * normal(&mut rng);
        }
    }
    let y = truth.to_dense() + &sparse;
    Ok(Rpca { y, sparse, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;

    fn tr_cfg(kappa: f64, sigma: f64) -> TraceRegressionConfig {
        TraceRegressionConfig { p1: 8, p2: 7, r: 3, n: 40, kappa, sigma, seed: 5 }
    }

    #[test]
    fn unit_condition_gives_flat_spectrum() {
        let t = gen_trace_regression(&tr_cfg(1.0, 0.0)).unwrap();
        assert!((t.truth.core() - Mat::identity(3, 3) * 3.0).norm() == 0.0);
    }

    #[test]
    fn spectrum_follows_schedule() {
        let t = gen_trace_regression(&tr_cfg(50.0, 0.0)).unwrap();
        let s = singular_values(&t.truth.to_dense());
        for (i, expect) in [3.0, 3.0 / 50f64.powf(2.0 / 3.0), 3.0 / 50.0].iter().enumerate() {
            assert!((s[i] - expect).abs() <= 1e-12 * 3.0);
        }
    }

    #[test]
    fn noiseless_residual_vanishes_at_truth() {
        let t = gen_trace_regression(&tr_cfg(1.0, 0.0)).unwrap();
        assert!(t.problem.objective(&t.truth).unwrap() < 1e-24);
        let noisy = gen_trace_regression(&tr_cfg(1.0, 0.1)).unwrap();
        assert!(noisy.problem.objective(&noisy.truth).unwrap() > 0.0);
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let a = gen_trace_regression(&tr_cfg(5.0, 0.3)).unwrap();
        let b = gen_trace_regression(&tr_cfg(5.0, 0.3)).unwrap();
        assert_eq!(a.problem, b.problem);
        let mc = McConfig { p: 20, r: 2, kappa: 3.0, n_observed: 100, seed: 9 };
        assert_eq!(gen_completion(&mc).unwrap().problem, gen_completion(&mc).unwrap().problem);
        let rc = RpcaConfigGen { p: 20, r: 2, kappa: 1.0, q: 0.1, spike_sigma: 10.0, seed: 3 };
        assert_eq!(gen_rpca(&rc).unwrap().y, gen_rpca(&rc).unwrap().y);
    }

    #[test]
    fn phase_retrieval_signal_and_responses() {
        let pr = gen_phase_retrieval(&PhaseRetrievalConfig { p: 10, n: 10_000, seed: 1 }).unwrap();
        assert!((pr.x_star.norm() - 1.0).abs() < 1e-12);
        assert!(pr.y.iter().all(|v| *v >= 0.0));
        let mean = pr.y.mean();
        assert!((mean - 1.0).abs() <= 3.0 / (10_000f64).sqrt());
    }

    #[test]
    fn completion_observes_exactly_n_distinct_entries() {
        let c = gen_completion(&McConfig { p: 30, r: 2, kappa: 1.0, n_observed: 240, seed: 4 }).unwrap();
        let SensingOperator::EntrySampling(e) = c.problem.operator() else { panic!() };
        assert_eq!(e.len(), 240);
        assert!(gen_completion(&McConfig { p: 3, r: 1, kappa: 1.0, n_observed: 10, seed: 0 }).is_err());
    }

    #[test]
    fn corruption_count_is_binomial() {
        let (p, q) = (100, 0.02);
        let g = gen_rpca(&RpcaConfigGen { p, r: 3, kappa: 1.0, q, spike_sigma: 10.0, seed: 8 }).unwrap();
        let support = g.sparse.iter().filter(|v| **v != 0.0).count() as f64;
        let mean = q * (p * p) as f64;
        let sd = (mean * (1.0 - q)).sqrt();
        assert!((support - mean).abs() <= 4.0 * sd);
        assert!((&g.y - g.truth.to_dense() - &g.sparse).norm() < 1e-12);
    }
}
