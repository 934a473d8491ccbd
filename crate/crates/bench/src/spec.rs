//! Experiment description, assembled from flags and an optional
//! `key = value` file. Flags win over the file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use risro_core::risro::LsBackend;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    TraceRegression,
    PhaseRetrieval,
    MatrixCompletion,
    Rpca,
    SuccessRate,
    RipDiagnostic,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::TraceRegression,
        Experiment::PhaseRetrieval,
        Experiment::MatrixCompletion,
        Experiment::Rpca,
        Experiment::SuccessRate,
        Experiment::RipDiagnostic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::TraceRegression => "trace-regression",
            Experiment::PhaseRetrieval => "phase-retrieval",
            Experiment::MatrixCompletion => "matrix-completion",
            Experiment::Rpca => "rpca",
            Experiment::SuccessRate => "success-rate",
            Experiment::RipDiagnostic => "rip-diagnostic",
        }
    }

    /// Experiments whose instances fit the binary container.
    pub fn dumpable(self) -> bool {
        matches!(self, Experiment::TraceRegression | Experiment::PhaseRetrieval | Experiment::MatrixCompletion)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
            format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algorithm {
    Risro,
    Svp,
    AltMin,
    Gd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Risro, Algorithm::Svp, Algorithm::AltMin, Algorithm::Gd];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Risro => "risro",
            Algorithm::Svp => "svp",
            Algorithm::AltMin => "altmin",
            Algorithm::Gd => "gd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected risro, svp, altmin or gd)"))
    }
}

/// Comma-separated algorithm list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgoList(pub Vec<Algorithm>);

impl FromStr for AlgoList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let a: Algorithm = part.parse()?;
            if !out.contains(&a) {
                out.push(a);
            }
        }
        if out.is_empty() {
            return Err("algorithm list is empty".into());
        }
        Ok(AlgoList(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backend(pub LsBackend);

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dense-qr" | "qr" => Ok(Backend(LsBackend::DenseQR)),
            "cg" | "intrinsic-cg" => Ok(Backend(LsBackend::IntrinsicCG)),
            _ => Err(format!("unknown ls backend `{s}` (expected dense-qr or cg)")),
        }
    }
}

/// One bound of an n-grid: a plain count or a multiple of `p·r`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum GridValue {
    Abs(usize),
    PerPr(f64),
}

impl GridValue {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some(k) = s.strip_suffix("pr") {
            let k = if k.is_empty() { 1.0 } else { k.parse::<f64>().map_err(|_| format!("bad grid value `{s}`"))? };
            return Ok(GridValue::PerPr(k));
        }
        s.parse().map(GridValue::Abs).map_err(|_| format!("bad grid value `{s}`"))
    }

    fn resolve(self, pr: usize) -> usize {
        match self {
            GridValue::Abs(v) => v,
            GridValue::PerPr(k) => (k * pr as f64).round() as usize,
        }
    }
}

/// `start:stop:step`, inclusive; each part may be written as a multiple of
/// `p·r`, e.g. `4pr:12pr:2pr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGrid {
    start: GridValue,
    stop: GridValue,
    step: GridValue,
}

impl NGrid {
    pub fn values(&self, pr: usize) -> Result<Vec<usize>> {
        let (a, b, s) = (self.start.resolve(pr), self.stop.resolve(pr), self.step.resolve(pr));
        if s == 0 || a == 0 || a > b {
            return Err(BenchError::Usage(format!("n-grid resolves to {a}:{b}:{s}, need 0 < start ≤ stop and step > 0")));
        }
        Ok((a..=b).step_by(s).collect())
    }
}

impl Default for NGrid {
    fn default() -> Self {
        NGrid { start: GridValue::PerPr(4.0), stop: GridValue::PerPr(12.0), step: GridValue::PerPr(2.0) }
    }
}

impl FromStr for NGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(format!("n-grid `{s}` is not start:stop:step"));
        };
        Ok(NGrid { start: GridValue::parse(a)?, stop: GridValue::parse(b)?, step: GridValue::parse(c)? })
    }
}

/// Everything a run needs, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub algos: Vec<Algorithm>,
    pub p1: usize,
    pub p2: usize,
    pub r: usize,
    pub n: usize,
    pub kappa: f64,
    pub sigma: f64,
    pub q: f64,
    pub gamma: f64,
    pub spike_sigma: f64,
    pub trials: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub ls_backend: LsBackend,
    pub out: PathBuf,
    pub plot: bool,
    pub n_grid: NGrid,
    /// Writes zero wall times so repeated runs give byte-identical files.
    pub fixed_clock: bool,
}

/// Raw, all-optional settings as they come from flags or the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub algos: Option<AlgoList>,
    pub p: Option<usize>,
    pub p1: Option<usize>,
    pub p2: Option<usize>,
    pub r: Option<usize>,
    pub n: Option<usize>,
    pub kappa: Option<f64>,
    pub sigma: Option<f64>,
    pub q: Option<f64>,
    pub gamma: Option<f64>,
    pub spike_sigma: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub ls_backend: Option<Backend>,
    pub out: Option<PathBuf>,
    pub plot: Option<bool>,
    pub n_grid: Option<NGrid>,
    pub fixed_clock: Option<bool>,
}

macro_rules! overlay {
    ($self:ident, $other:ident, $($field:ident),*) => {
        $( if $self.$field.is_none() { $self.$field = $other.$field; } )*
    };
}

impl Overrides {
    /// Fills unset fields from `fallback`.
    pub fn or(mut self, fallback: Overrides) -> Overrides {
        overlay!(self, fallback, experiment, algos, p, p1, p2, r, n, kappa, sigma, q, gamma, spike_sigma,
            trials, seed, max_iter, tol, ls_backend, out, plot, n_grid, fixed_clock);
        self
    }

    /// Parses a `key = value` file; `#` starts a comment, keys may use `-` or `_`.
    pub fn from_config_text(text: &str, origin: &Path) -> Result<Overrides> {
        let mut o = Overrides::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| BenchError::Usage(format!("{}:{}: {msg}", origin.display(), idx + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| at("expected `key = value`".into()))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            o.set(&key, value).map_err(at)?;
        }
        Ok(o)
    }

    pub fn from_config_file(path: &Path) -> Result<Overrides> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Overrides::from_config_text(&text, path)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn parse<T: FromStr>(key: &str, v: &str) -> std::result::Result<Option<T>, String>
        where
            T::Err: fmt::Display,
        {
            v.parse().map(Some).map_err(|e| format!("{key}: {e}"))
        }
        match key {
            "experiment" => self.experiment = parse(key, value)?,
            "algos" => self.algos = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "p1" => self.p1 = parse(key, value)?,
            "p2" => self.p2 = parse(key, value)?,
            "r" => self.r = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "kappa" => self.kappa = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "q" => self.q = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "spike-sigma" => self.spike_sigma = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max-iter" => self.max_iter = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "ls-backend" => self.ls_backend = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "plot" => self.plot = parse(key, value)?,
            "n-grid" => self.n_grid = parse(key, value)?,
            "fixed-clock" => self.fixed_clock = parse(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies per-experiment defaults and validates.
    pub fn resolve(self) -> Result<ExperimentSpec> {
        let experiment = self.experiment.unwrap_or(Experiment::TraceRegression);
        let usage = |m: String| Err(BenchError::Usage(m));

        let (def_p, def_r) = match experiment {
            Experiment::PhaseRetrieval => (200, 1),
            Experiment::MatrixCompletion => (150, 3),
            Experiment::SuccessRate => (60, 3),
            _ => (100, 3),
        };
        let p = self.p.unwrap_or(def_p);
        let p1 = self.p1.unwrap_or(p);
        let p2 = self.p2.unwrap_or(p);
        let r = self.r.unwrap_or(def_r);
        let square = !matches!(experiment, Experiment::TraceRegression | Experiment::RipDiagnostic | Experiment::SuccessRate);
        if square && p1 != p2 {
            return usage(format!("{experiment} needs a square problem, got {p1}×{p2}"));
        }
        if p1 == 0 || p2 == 0 || r == 0 || r > p1.min(p2) {
            return usage(format!("need 1 ≤ r ≤ min(p1, p2), got r = {r} for {p1}×{p2}"));
        }
        if experiment == Experiment::PhaseRetrieval && r != 1 {
            return usage("phase retrieval is rank one".into());
        }
        let n = self.n.unwrap_or(match experiment {
            Experiment::PhaseRetrieval => 10 * p1,
            Experiment::MatrixCompletion => 8 * p1 * r,
            _ => 5 * p1.max(p2) * r,
        });
        let q = self.q.unwrap_or(0.02);
        let algos = match self.algos {
            Some(AlgoList(a)) => a,
            None if experiment == Experiment::SuccessRate => Algorithm::ALL.to_vec(),
            None => vec![Algorithm::Risro],
        };
        if matches!(experiment, Experiment::PhaseRetrieval | Experiment::Rpca) && algos != [Algorithm::Risro] {
            return usage(format!("{experiment} supports only the risro algorithm"));
        }
        let spec = ExperimentSpec {
            experiment,
            algos,
            p1,
            p2,
            r,
            n,
            kappa: self.kappa.unwrap_or(if experiment == Experiment::SuccessRate { 5.0 } else { 1.0 }),
            sigma: self.sigma.unwrap_or(0.0),
            q,
            gamma: self.gamma.unwrap_or(15.0 * q),
            spike_sigma: self.spike_sigma.unwrap_or(10.0),
            trials: self.trials.unwrap_or(1),
            seed: self.seed.unwrap_or(0),
            max_iter: self.max_iter.unwrap_or(if experiment == Experiment::SuccessRate { 100 } else { 50 }),
            tol: self.tol.unwrap_or(if experiment == Experiment::SuccessRate { 5e-3 } else { 1e-12 }),
            ls_backend: self.ls_backend.map_or(
                match experiment {
                    Experiment::MatrixCompletion | Experiment::Rpca => LsBackend::IntrinsicCG,
                    _ => LsBackend::DenseQR,
                },
                |b| b.0,
            ),
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            plot: self.plot.unwrap_or(false),
            n_grid: self.n_grid.unwrap_or_default(),
            fixed_clock: self.fixed_clock.unwrap_or(false),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Usage(m.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.max_iter == 0 {
            return bad("max-iter must be at least 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.kappa >= 1.0) || !self.kappa.is_finite() {
            return bad("kappa must be a finite value ≥ 1");
        }
        if !(self.sigma >= 0.0) {
            return bad("sigma must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.q) {
            return bad("q must lie in [0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.experiment == Experiment::MatrixCompletion && self.n > self.p1 * self.p2 {
            return bad("cannot observe more entries than the matrix has");
        }
        if self.experiment == Experiment::SuccessRate {
            self.n_grid.values(self.p1.max(self.p2) * self.r)?;
        }
        Ok(())
    }

    /// Seed of trial `k`.
    pub fn trial_seed(&self, k: usize) -> u64 {
        self.seed.wrapping_add(k as u64)
    }
}
