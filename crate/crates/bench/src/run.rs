//! Experiment runner: generate, solve, write traces, aggregate.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;

use risro_core::apps::{mc_risro, pr_risro, pr_spectral_init, rpca_risro, rpca_spectral_init, RpcaConfig};
use risro_core::baselines::{
    altmin_solve, factored_gd_solve, spectral_init_trace_regression, svp_solve, BaselineOptions,
};
use risro_core::gen::{
    gen_completion, gen_phase_retrieval, gen_rpca, gen_trace_regression, McConfig, PhaseRetrievalConfig,
    RpcaConfigGen, TraceRegressionConfig,
};
use risro_core::rip::estimate_rip_spectrum;
use risro_core::risro::{risro_solve, LsBackend, RisroOptions};
use risro_core::trace::{no_clock, Clock};
use risro_core::{ProblemInstance, SensingOperator, SolveTrace};

use crate::error::{BenchError, Result};
use crate::plot::{line_chart, Axes, Series};
use crate::report::{self, AggregateRow, RipRow, SuccessRow, TraceRow};
use crate::spec::{Algorithm, Experiment, ExperimentSpec};

/// Final relative error below which a run counts as a success.
pub const SUCCESS_RMSE: f64 = 1e-2;
/// Random rank-k probes per RIP estimate.
pub const RIP_SAMPLES: usize = 200;

/// Seconds since first use.
pub fn wall_clock() -> f64 {
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed().as_secs_f64()
}

/// Solver settings shared by every algorithm in a run.
#[derive(Debug, Clone, Copy)]
pub struct SolveSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub ls_backend: LsBackend,
    pub clock: Clock,
    /// Stop baseline step-size sweeps once a run succeeds.
    pub grid_early_exit: Option<f64>,
}

impl SolveSettings {
    pub fn from_spec(spec: &ExperimentSpec) -> Self {
        SolveSettings {
            max_iter: spec.max_iter,
            tol: spec.tol,
            ls_backend: spec.ls_backend,
            clock: if spec.fixed_clock { no_clock } else { wall_clock },
            grid_early_exit: (spec.experiment == Experiment::SuccessRate).then_some(SUCCESS_RMSE),
        }
    }

    fn risro(&self) -> RisroOptions {
        RisroOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            ls_backend: self.ls_backend,
            clock: self.clock,
            ..Default::default()
        }
    }

    fn baseline(&self) -> BaselineOptions {
        BaselineOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            clock: self.clock,
            grid_early_exit: self.grid_early_exit,
            ..Default::default()
        }
    }
}

/// Runs `alg` on `prob` from the spectral initialization matching its
/// operator. Rank-one operators are phase retrieval and take RISRO only.
pub fn solve(prob: &ProblemInstance, alg: Algorithm, settings: &SolveSettings) -> Result<SolveTrace> {
    if let SensingOperator::SymmetricRankOne(op) = prob.operator() {
        if alg != Algorithm::Risro {
            return Err(BenchError::Usage(format!("phase retrieval supports only risro, not {alg}")));
        }
        let init = pr_spectral_init(op.vectors(), prob.y())?;
        return Ok(pr_risro(prob, &init, &settings.risro())?.1);
    }
    let init = spectral_init_trace_regression(prob.operator(), prob.y(), prob.rank())?;
    let trace = match alg {
        Algorithm::Risro if matches!(prob.operator(), SensingOperator::EntrySampling(_)) => {
            mc_risro(prob, &init, &settings.risro())?.1
        }
        Algorithm::Risro => risro_solve(prob, &init, &settings.risro())?.1,
        Algorithm::Svp => svp_solve(prob, &init, &settings.baseline())?.trace,
        Algorithm::AltMin => altmin_solve(prob, &init, &settings.baseline())?.1,
        Algorithm::Gd => factored_gd_solve(prob, &init, &settings.baseline())?.trace,
    };
    Ok(trace)
}

/// The instance of one trial for experiments with a [`ProblemInstance`].
pub fn instance(spec: &ExperimentSpec, n: usize, seed: u64) -> Result<ProblemInstance> {
    let p = spec.p1;
    Ok(match spec.experiment {
        Experiment::PhaseRetrieval => gen_phase_retrieval(&PhaseRetrievalConfig { p, n, seed })?.problem()?,
        Experiment::MatrixCompletion => {
            gen_completion(&McConfig { p, r: spec.r, kappa: spec.kappa, n_observed: n, seed })?.problem
        }
        Experiment::TraceRegression | Experiment::SuccessRate | Experiment::RipDiagnostic => {
            let cfg = TraceRegressionConfig {
                p1: spec.p1,
                p2: spec.p2,
                r: spec.r,
                n,
                kappa: spec.kappa,
                sigma: spec.sigma,
                seed,
            };
            gen_trace_regression(&cfg)?.problem
        }
        Experiment::Rpca => {
            return Err(BenchError::Usage("robust PCA instances have no single-operator form".into()));
        }
    })
}

fn rpca_trial(spec: &ExperimentSpec, seed: u64, settings: &SolveSettings) -> Result<SolveTrace> {
    let g = gen_rpca(&RpcaConfigGen {
        p: spec.p1,
        r: spec.r,
        kappa: spec.kappa,
        q: spec.q,
        spike_sigma: spec.spike_sigma,
        seed,
    })?;
    let cfg = RpcaConfig::fully_observed(spec.p1, spec.p2, spec.gamma, spec.r)?;
    let y = cfg.observe(&g.y)?;
    let init = rpca_spectral_init(&cfg, &y)?;
    Ok(rpca_risro(&cfg, &y, Some(&g.truth.to_dense()), &init, &settings.risro())?.1)
}

/// What a run left on disk.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// `(algorithm, trial, final rel_rmse)` for trace experiments.
    pub finals: Vec<(Algorithm, usize, Option<f64>)>,
    pub success: Vec<SuccessRow>,
}

/// Builds the pool that runs trials, capped by `RISRO_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("RISRO_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|t| *t > 0)
            .ok_or_else(|| BenchError::Usage(format!("RISRO_THREADS must be a positive integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BenchError::Usage(format!("cannot start thread pool: {e}")))
}

pub fn trial_file(out: &Path, alg: Algorithm, trial: usize) -> PathBuf {
    out.join(format!("{alg}_trial{trial}.csv"))
}

pub fn aggregate_file(out: &Path, alg: Algorithm) -> PathBuf {
    out.join(format!("{alg}_aggregate.csv"))
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunSummary> {
    create_dir(&spec.out)?;
    let pool = thread_pool()?;
    pool.install(|| match spec.experiment {
        Experiment::SuccessRate => success_rate(spec),
        Experiment::RipDiagnostic => rip_diagnostic(spec),
        _ => traces(spec),
    })
}

fn traces(spec: &ExperimentSpec) -> Result<RunSummary> {
    let settings = SolveSettings::from_spec(spec);
    let per_trial: Vec<Vec<(Algorithm, Vec<TraceRow>)>> = (0..spec.trials)
        .into_par_iter()
        .map(|k| {
            let seed = spec.trial_seed(k);
            let prob = match spec.experiment {
                Experiment::Rpca => None,
                _ => Some(instance(spec, spec.n, seed)?),
            };
            spec.algos
                .iter()
                .map(|&alg| {
                    let trace = match &prob {
                        Some(p) => solve(p, alg, &settings)?,
                        None => rpca_trial(spec, seed, &settings)?,
                    };
                    let rows = report::trace_rows(&trace, spec.fixed_clock);
                    report::write_trace_csv(&trial_file(&spec.out, alg, k), &rows)?;
                    Ok((alg, rows))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut summary = RunSummary::default();
    let mut series = Vec::new();
    for (j, &alg) in spec.algos.iter().enumerate() {
        let rows: Vec<Vec<TraceRow>> = per_trial.iter().map(|t| t[j].1.clone()).collect();
        for (k, r) in rows.iter().enumerate() {
            summary.files.push(trial_file(&spec.out, alg, k));
            summary.finals.push((alg, k, r.last().and_then(|x| x.rel_rmse)));
        }
        let agg = report::aggregate(&rows);
        let path = aggregate_file(&spec.out, alg);
        report::write_aggregate_csv(&path, &agg)?;
        summary.files.push(path);
        series.push(aggregate_series(alg.name(), &agg));
    }
    if spec.plot {
        let title = format!("{} (mean of {} trials)", spec.experiment, spec.trials);
        let metric = if series_use_objective(&series) { "objective" } else { "relative error" };
        let svg = line_chart(Axes { title: &title, x_label: "iteration", y_label: metric, log_y: true }, &series);
        summary.files.push(write_svg(&spec.out.join("convergence.svg"), &svg)?);
    }
    Ok(summary)
}

/// Relative error per iteration, or the objective when there is no truth.
fn aggregate_series(label: &str, agg: &[AggregateRow]) -> Series {
    let have_err = agg.iter().any(|r| r.rel_rmse.is_some());
    let points = agg
        .iter()
        .map(|r| (r.iter as f64, if have_err { r.rel_rmse.unwrap_or(f64::NAN) } else { r.objective }))
        .collect();
    Series { label: label.to_string(), points }
}

fn series_use_objective(series: &[Series]) -> bool {
    series.iter().all(|s| s.points.iter().all(|p| p.1.is_nan()))
}

fn write_svg(path: &Path, svg: &str) -> Result<PathBuf> {
    fs::write(path, svg).map_err(|e| BenchError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn success_rate(spec: &ExperimentSpec) -> Result<RunSummary> {
    let settings = SolveSettings::from_spec(spec);
    let grid = spec.n_grid.values(spec.p1.max(spec.p2) * spec.r)?;
    let jobs: Vec<(usize, usize)> = grid.iter().flat_map(|&n| (0..spec.trials).map(move |k| (n, k))).collect();
    let outcomes: Vec<Vec<bool>> = jobs
        .par_iter()
        .map(|&(n, k)| {
            let prob = instance(spec, n, spec.trial_seed(k))?;
            spec.algos
                .iter()
                .map(|&alg| {
                    let trace = solve(&prob, alg, &settings)?;
                    Ok(!trace.diverged && trace.final_rel_rmse().is_some_and(|e| e < SUCCESS_RMSE))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &n in &grid {
        for (j, &alg) in spec.algos.iter().enumerate() {
            let successes =
                jobs.iter().zip(&outcomes).filter(|((jn, _), ok)| *jn == n && ok[j]).count();
            rows.push(SuccessRow { n, algorithm: alg.name().to_string(), trials: spec.trials, successes });
        }
    }
    let path = spec.out.join("success.csv");
    report::write_success_csv(&path, &rows)?;
    let mut summary = RunSummary { files: vec![path], ..Default::default() };
    if spec.plot {
        let series: Vec<Series> = spec
            .algos
            .iter()
            .map(|alg| Series {
                label: alg.name().to_string(),
                points: rows.iter().filter(|r| r.algorithm == alg.name()).map(|r| (r.n as f64, r.fraction())).collect(),
            })
            .collect();
        let axes = Axes { title: "success rate", x_label: "n", y_label: "fraction", log_y: false };
        summary.files.push(write_svg(&spec.out.join("success.svg"), &line_chart(axes, &series))?);
    }
    summary.success = rows;
    Ok(summary)
}

fn rip_diagnostic(spec: &ExperimentSpec) -> Result<RunSummary> {
    let max_rank = spec.p1.min(spec.p2);
    let ranks: Vec<usize> = [spec.r, 2 * spec.r].into_iter().filter(|&k| k <= max_rank).collect();
    let rows: Vec<Vec<RipRow>> = (0..spec.trials)
        .into_par_iter()
        .map(|k| {
            let seed = spec.trial_seed(k);
            let prob = instance(spec, spec.n, seed)?;
            ranks
                .iter()
                .map(|&rank| {
                    let est = estimate_rip_spectrum(prob.operator(), rank, RIP_SAMPLES, seed)?;
                    // Normalized so a perfect isometry reads 1.
                    let scale = spec.n as f64;
                    Ok(RipRow {
                        trial: k,
                        n: spec.n,
                        rank,
                        samples: est.num_samples,
                        lower: est.empirical_lower / scale,
                        upper: est.empirical_upper / scale,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let path = spec.out.join("rip.csv");
    report::write_rip_csv(&path, &rows.concat())?;
    Ok(RunSummary { files: vec![path], ..Default::default() })
}

/// Solves a stored instance with each algorithm and writes
/// `{alg}_trial0.csv` into `out`.
pub fn replay(prob: &ProblemInstance, algos: &[Algorithm], settings: &SolveSettings, fixed_clock: bool, out: &Path) -> Result<RunSummary> {
    create_dir(out)?;
    let mut summary = RunSummary::default();
    for &alg in algos {
        let trace = solve(prob, alg, settings)?;
        let rows = report::trace_rows(&trace, fixed_clock);
        let path = trial_file(out, alg, 0);
        report::write_trace_csv(&path, &rows)?;
        summary.finals.push((alg, 0, trace.final_rel_rmse()));
        summary.files.push(path);
    }
    Ok(summary)
}

/// Draws every `*_aggregate.csv` in `dir` (or any single CSV) into
/// `<metric>.svg`.
pub fn plot_dir(dir: &Path, metric: &str) -> Result<PathBuf> {
    let mut inputs: Vec<PathBuf> = if dir.is_file() {
        vec![dir.to_path_buf()]
    } else {
        fs::read_dir(dir)
            .map_err(|e| BenchError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_aggregate.csv")))
            .collect()
    };
    inputs.sort();
    if inputs.is_empty() {
        return Err(BenchError::Usage(format!("no *_aggregate.csv files in {}", dir.display())));
    }
    let mut series = Vec::new();
    for path in &inputs {
        let table = report::read_table(path)?;
        let (Some(xi), Some(yi)) = (table.column("iter"), table.column(metric)) else {
            return Err(BenchError::Data(format!("{}:1: missing `iter` or `{metric}` column", path.display())));
        };
        let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series").trim_end_matches("_aggregate");
        let points = table.rows.iter().filter_map(|r| Some((r[xi]?, r[yi]?))).collect();
        series.push(Series { label: label.to_string(), points });
    }
    let out_dir = if dir.is_file() { dir.parent().unwrap_or(Path::new(".")) } else { dir };
    let axes = Axes { title: metric, x_label: "iteration", y_label: metric, log_y: true };
    write_svg(&out_dir.join(format!("{metric}.svg")), &line_chart(axes, &series))
}
