//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{BenchError, Result, EXIT_OK, EXIT_USAGE};
use crate::instance::{dump_instance, load_instance};
use crate::run::{self, RunSummary, SolveSettings};
use crate::spec::{AlgoList, Backend, Experiment, ExperimentSpec, NGrid, Overrides};

#[derive(Debug, Parser)]
#[command(name = "risro", version, about = "Low-rank recovery experiments with recursive importance sketching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write CSV traces.
    Run(RunFlags),
    /// Generate trial 0 of an experiment and store it as a binary instance.
    Dump {
        path: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Solve a stored instance and write CSV traces.
    Replay {
        path: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Draw the `*_aggregate.csv` files of a directory as an SVG chart.
    Plot {
        dir: PathBuf,
        #[arg(long, default_value = "rel_rmse")]
        metric: String,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub experiment: Option<Experiment>,
    /// Comma-separated subset of risro, svp, altmin, gd.
    #[arg(long)]
    pub algos: Option<AlgoList>,
    /// Sets both p1 and p2.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub p1: Option<usize>,
    #[arg(long)]
    pub p2: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Corruption probability for robust PCA.
    #[arg(long)]
    pub q: Option<f64>,
    /// Truncation level for robust PCA; defaults to 15q.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub spike_sigma: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// dense-qr or cg.
    #[arg(long)]
    pub ls_backend: Option<Backend>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    pub plot: bool,
    /// `start:stop:step`, each optionally a multiple of p·r such as `4pr`.
    #[arg(long)]
    pub n_grid: Option<NGrid>,
    /// Record zero wall times so reruns are byte-identical.
    #[arg(long)]
    pub fixed_clock: bool,
}

impl RunFlags {
    pub fn resolve(self) -> Result<ExperimentSpec> {
        let file = match &self.config {
            Some(path) => Overrides::from_config_file(path)?,
            None => Overrides::default(),
        };
        let flags = Overrides {
            experiment: self.experiment,
            algos: self.algos,
            p: self.p,
            p1: self.p1,
            p2: self.p2,
            r: self.r,
            n: self.n,
            kappa: self.kappa,
            sigma: self.sigma,
            q: self.q,
            gamma: self.gamma,
            spike_sigma: self.spike_sigma,
            trials: self.trials,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            ls_backend: self.ls_backend,
            out: self.out,
            plot: self.plot.then_some(true),
            n_grid: self.n_grid,
            fixed_clock: self.fixed_clock.then_some(true),
        };
        flags.or(file).resolve()
    }
}

fn report(summary: &RunSummary) {
    for (alg, trial, err) in &summary.finals {
        match err {
            Some(e) => println!("{alg} trial {trial}: final rel_rmse {e:e}"),
            None => println!("{alg} trial {trial}: done"),
        }
    }
    for row in &summary.success {
        println!("n = {} {}: {}/{}", row.n, row.algorithm, row.successes, row.trials);
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(flags) => {
            let spec = flags.resolve()?;
            report(&run::run_experiment(&spec)?);
        }
        Command::Dump { path, flags } => {
            let spec = flags.resolve()?;
            if !spec.experiment.dumpable() {
                return Err(BenchError::Usage(format!("{} instances cannot be dumped", spec.experiment)));
            }
            let prob = run::instance(&spec, spec.n, spec.trial_seed(0))?;
            dump_instance(&prob, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Replay { path, flags } => {
            let spec = flags.resolve()?;
            let prob = load_instance(&path)?;
            let settings = SolveSettings::from_spec(&spec);
            report(&run::replay(&prob, &spec.algos, &settings, spec.fixed_clock, &spec.out)?);
        }
        Command::Plot { dir, metric } => {
            println!("wrote {}", run::plot_dir(&dir, &metric)?.display());
        }
    }
    Ok(())
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
