//! Robust PCA: RISRO restricted to the observations that survive a
//! row/column percentile screen of the current residual.

use alloc::format;
use alloc::vec::Vec;

use crate::baselines::spectral_init_trace_regression;
use crate::error::{check_dim, Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::{Mat, Vector};
use crate::math;
use crate::manifold::TangentSpace;
use crate::operator::{EntrySampling, SensingOperator};
use crate::problem::ProblemInstance;
use crate::risro::{advance, check_init, RisroOptions};
use crate::trace::{Recorder, SolveTrace, Verdict};

#[derive(Debug, Clone, PartialEq)]
pub struct RpcaConfig {
    /// Fraction of each row and column treated as potential outliers.
    pub gamma: f64,
    pub observed: EntrySampling,
    pub rank: usize,
}

impl RpcaConfig {
    pub fn new(gamma: f64, observed: EntrySampling, rank: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidInput(format!("γ = {gamma} outside (0, 1)")));
        }
        let (p1, p2) = observed.shape();
        if rank == 0 || rank > p1.min(p2) {
            return Err(Error::InvalidInput(format!("rank {rank} outside 1..={}", p1.min(p2))));
        }
        Ok(RpcaConfig { gamma, observed, rank })
    }

    /// Every entry of a `p1 × p2` matrix observed, column-major.
    pub fn fully_observed(p1: usize, p2: usize, gamma: f64, rank: usize) -> Result<Self> {
        let all: Vec<(usize, usize)> = (0..p2).flat_map(|j| (0..p1).map(move |i| (i, j))).collect();
        Self::new(gamma, EntrySampling::new(p1, p2, &all)?, rank)
    }

    /// `Y_Ω` in observation order.
    pub fn observe(&self, y: &Mat) -> Result<Vector> {
        SensingOperator::EntrySampling(self.observed.clone()).apply(y)
    }
}

/// 1-based nearest rank `⌈(1 − γ)m⌉`, guarded against `(1 − γ)m` landing a
/// rounding error above an integer.
fn nearest_rank(m: usize, gamma: f64) -> usize {
    let x = (1.0 - gamma) * m as f64;
    (math::ceil(x - 1e-9) as usize).clamp(1, m)
}

/// Per-row and per-column `(1 − γ)` percentiles of `|values|` over the
/// observed entries; `∞` for a row or column without observations.
pub(crate) fn thresholds(cfg: &RpcaConfig, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (p1, p2) = cfg.observed.shape();
    let mut rows: Vec<Vec<f64>> = alloc::vec![Vec::new(); p1];
    let mut cols: Vec<Vec<f64>> = alloc::vec![Vec::new(); p2];
    for ((i, j), v) in cfg.observed.indices().zip(values) {
        rows[i].push(math::abs(*v));
        cols[j].push(math::abs(*v));
    }
    let pick = |mut g: Vec<f64>| {
        if g.is_empty() {
            return f64::INFINITY;
        }
        g.sort_unstable_by(f64::total_cmp);
        g[nearest_rank(g.len(), cfg.gamma) - 1]
    };
    (rows.into_iter().map(pick).collect(), cols.into_iter().map(pick).collect())
}

/// `true` for observations kept by the screen.
fn keep_mask(cfg: &RpcaConfig, values: &[f64], row_t: &[f64], col_t: &[f64]) -> Vec<bool> {
    cfg.observed
        .indices()
        .zip(values)
        .map(|((i, j), v)| {
            let a = math::abs(*v);
            !(a > row_t[i] && a > col_t[j])
        })
        .collect()
}

/// The screen `F`: an observed entry is zeroed iff its magnitude strictly
/// exceeds both its row's and its column's nearest-rank `(1 − γ)` percentile,
/// computed over observed entries. Unobserved entries pass through.
pub fn rpca_truncate(a: &Mat, cfg: &RpcaConfig) -> Result<Mat> {
    let (p1, p2) = cfg.observed.shape();
    check_dim("matrix rows", p1, a.nrows())?;
    check_dim("matrix columns", p2, a.ncols())?;
    let values: Vec<f64> = cfg.observed.indices().map(|(i, j)| a[(i, j)]).collect();
    let (row_t, col_t) = thresholds(cfg, &values);
    let mut out = a.clone();
    for ((i, j), keep) in cfg.observed.indices().zip(keep_mask(cfg, &values, &row_t, &col_t)) {
        if !keep {
            out[(i, j)] = 0.0;
        }
    }
    Ok(out)
}

/// Observations kept by `F` applied to `values`.
fn screened(cfg: &RpcaConfig, values: &[f64]) -> Vec<usize> {
    let (row_t, col_t) = thresholds(cfg, values);
    keep_mask(cfg, values, &row_t, &col_t)
        .into_iter()
        .enumerate()
        .filter_map(|(k, keep)| keep.then_some(k))
        .collect()
}

fn restricted(cfg: &RpcaConfig, y_obs: &Vector, keep: &[usize]) -> Result<ProblemInstance> {
    if keep.is_empty() {
        return Err(Error::Degenerate("every observation was truncated".into()));
    }
    let op: SensingOperator = cfg.observed.subset(keep).into();
    let y = Vector::from_iterator(keep.len(), keep.iter().map(|&k| y_obs[k]));
    ProblemInstance::new(op, y, cfg.rank)
}

/// Spectral initialization from the observations that survive `F(Y_Ω)`.
pub fn rpca_spectral_init(cfg: &RpcaConfig, y_obs: &Vector) -> Result<FactoredMatrix> {
    check_dim("observations", cfg.observed.len(), y_obs.len())?;
    let sub = restricted(cfg, y_obs, &screened(cfg, y_obs.as_slice()))?;
    spectral_init_trace_regression(sub.operator(), sub.y(), cfg.rank)
}

/// RISRO for robust PCA. Each step recomputes the kept set `Φ_t` from the
/// residual `Y_Ω − X^t_Ω` and solves the completion-style reduced least
/// squares on `Φ_t` only. Metrics use all observations, and `truth` if given.
pub fn rpca_risro(
    cfg: &RpcaConfig,
    y_obs: &Vector,
    truth: Option<&Mat>,
    init: &FactoredMatrix,
    opts: &RisroOptions,
) -> Result<(FactoredMatrix, SolveTrace)> {
    opts.validate()?;
    let mut prob = ProblemInstance::new(cfg.observed.clone().into(), y_obs.clone(), cfg.rank)?;
    if let Some(t) = truth {
        prob = prob.with_truth(t.clone())?;
    }
    check_init(&prob, init)?;
    let mut rec = Recorder::new(&prob, opts.stop_rule());
    let mut x = init.clone();
    if let Verdict::Stop = rec.record(0, &x, false)? {
        return Ok((x, rec.finish()));
    }
    let mut t = 0;
    loop {
        t += 1;
        let resid = prob.residual(&x)?;
        let step = restricted(cfg, y_obs, &screened(cfg, resid.as_slice())).and_then(|sub| {
            let space = TangentSpace::new(&x)?;
            advance(&sub, &space, opts, t)
        });
        let (next, sol) = match step {
            Ok(out) => out,
            Err(Error::Degenerate(msg)) => return Ok((x, rec.degenerate(msg))),
            Err(e) => return Err(e),
        };
        if sol.underdetermined {
            rec.set_underdetermined();
        }
        x = next;
        if let Verdict::Stop = rec.record(t, &x, sol.rank_deficient)? {
            return Ok((x, rec.finish()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{gen_rpca, sample_entries, RpcaConfigGen};
    use crate::rng::{gaussian_matrix, normal, seeded};
    use proptest::prelude::*;
    use rand::Rng;

    /// Smallest observed magnitude `v` with at least `(1 − γ)m` magnitudes `≤ v`.
    fn oracle_percentile(group: &[f64], gamma: f64) -> f64 {
        let need = (1.0 - gamma) * group.len() as f64 - 1e-9;
        let mut best = f64::INFINITY;
        for &v in group {
            let count = group.iter().filter(|w| **w <= v).count() as f64;
            if count >= need && v < best {
                best = v;
            }
        }
        best
    }

    fn brute_force(a: &Mat, omega: &[(usize, usize)], gamma: f64) -> Mat {
        let mut out = a.clone();
        for &(i, j) in omega {
            let row: Vec<f64> = omega.iter().filter(|e| e.0 == i).map(|e| a[*e].abs()).collect();
            let col: Vec<f64> = omega.iter().filter(|e| e.1 == j).map(|e| a[*e].abs()).collect();
            let v = a[(i, j)].abs();
            if v > oracle_percentile(&row, gamma) && v > oracle_percentile(&col, gamma) {
                out[(i, j)] = 0.0;
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_percentiles() {
        let mut rng = seeded(1);
        for trial in 0..40 {
            let mut a = gaussian_matrix(&mut rng, 10, 10);
            for v in a.iter_mut() {
                if rng.gen::<f64>() < 0.1 {
                    *v += 10.0 * normal(&mut rng);
                }
            }
            let n_obs = if trial % 2 == 0 { 100 } else { 70 };
            let omega = sample_entries(&mut rng, 10, 10, n_obs).unwrap();
            let gamma = [0.3, 0.1, 0.5, 0.25][trial % 4];
            let cfg = RpcaConfig::new(gamma, EntrySampling::new(10, 10, &omega).unwrap(), 2).unwrap();
            assert_eq!(rpca_truncate(&a, &cfg).unwrap(), brute_force(&a, &omega, gamma));
        }
    }

    #[test]
    fn vanishing_gamma_is_identity() {
        let mut rng = seeded(2);
        let a = gaussian_matrix(&mut rng, 6, 5);
        let cfg = RpcaConfig::fully_observed(6, 5, 1e-6, 1).unwrap();
        assert_eq!(rpca_truncate(&a, &cfg).unwrap(), a);
    }

    #[test]
    fn single_spike_is_removed() {
        let mut rng = seeded(3);
        let mut a = gaussian_matrix(&mut rng, 8, 8) * 0.01;
        a[(2, 5)] = 50.0;
        let cfg = RpcaConfig::fully_observed(8, 8, 0.3, 1).unwrap();
        let out = rpca_truncate(&a, &cfg).unwrap();
        let mut expect = a.clone();
        expect[(2, 5)] = 0.0;
        // small entries can still exceed both percentiles; only check the spike
        assert_eq!(out[(2, 5)], 0.0);
        let kept_small = out.iter().zip(a.iter()).filter(|(o, v)| **o == **v).count();
        assert!(kept_small >= 40);
        assert!(expect.iter().zip(out.iter()).all(|(e, o)| *o == *e || *o == 0.0));
    }

    #[test]
    fn unobserved_rows_pass_through() {
        let cfg = RpcaConfig::new(0.5, EntrySampling::new(3, 3, &[(0, 0), (0, 1), (1, 0)]).unwrap(), 1).unwrap();
        let mut a = Mat::zeros(3, 3);
        a[(2, 2)] = 1e9;
        a[(0, 0)] = 1.0;
        assert_eq!(rpca_truncate(&a, &cfg).unwrap()[(2, 2)], 1e9);
    }

    proptest! {
        #[test]
        fn screen_is_idempotent_for_fixed_thresholds(seed in 0u64..500, gamma in 0.05f64..0.95) {
            let mut rng = seeded(seed);
            let a = gaussian_matrix(&mut rng, 7, 6);
            let cfg = RpcaConfig::fully_observed(7, 6, gamma, 1).unwrap();
            let values: Vec<f64> = cfg.observed.indices().map(|e| a[e]).collect();
            let (row_t, col_t) = thresholds(&cfg, &values);
            let once: Vec<f64> = values
                .iter()
                .zip(keep_mask(&cfg, &values, &row_t, &col_t))
                .map(|(v, k)| if k { *v } else { 0.0 })
                .collect();
            let twice: Vec<f64> = once
                .iter()
                .zip(keep_mask(&cfg, &once, &row_t, &col_t))
                .map(|(v, k)| if k { *v } else { 0.0 })
                .collect();
            prop_assert_eq!(once, twice);
        }
    }

    fn run(g: &crate::gen::Rpca, max_iter: usize) -> SolveTrace {
        let p = g.y.nrows();
        let cfg = RpcaConfig::fully_observed(p, p, 0.3, g.truth.rank()).unwrap();
        let y_obs = cfg.observe(&g.y).unwrap();
        let init = rpca_spectral_init(&cfg, &y_obs).unwrap();
        let opts = RisroOptions { max_iter, tol: 1e-10, ..Default::default() };
        rpca_risro(&cfg, &y_obs, Some(&g.truth.to_dense()), &init, &opts).unwrap().1
    }

    #[test]
    fn recovers_sparse_corruption() {
        let g = gen_rpca(&RpcaConfigGen { p: 40, r: 2, kappa: 1.0, q: 0.02, spike_sigma: 10.0, seed: 4 }).unwrap();
        let trace = run(&g, 20);
        assert!(trace.final_rel_rmse().unwrap() <= 1e-8, "{:?}", trace.errors());
    }

    #[test]
    fn clean_input_behaves_like_completion() {
        let g = gen_rpca(&RpcaConfigGen { p: 30, r: 2, kappa: 1.0, q: 0.0, spike_sigma: 10.0, seed: 5 }).unwrap();
        assert!(run(&g, 10).final_rel_rmse().unwrap() <= 1e-10);
    }

    #[test]
    fn corrupted_row_does_not_diverge() {
        let mut g = gen_rpca(&RpcaConfigGen { p: 30, r: 2, kappa: 1.0, q: 0.02, spike_sigma: 10.0, seed: 6 }).unwrap();
        let mut rng = seeded(7);
        for j in 0..30 {
            g.y[(0, j)] += 10.0 * normal(&mut rng);
        }
        let trace = run(&g, 10);
        assert!(!trace.diverged);
        assert!(trace.records.iter().all(|r| r.objective.is_finite()));
    }
}
