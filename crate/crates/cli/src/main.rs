//! `sis-lab`: batch front end for the stochastic SIS experiment engine.
//!
//! Exit status: 0 success, 2 usage, 3 validation, 4 I/O, 5 engine failure.

mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sis_sde::analysis::ReferenceMode;
use sis_sde::SchemeKind;

use config::{ExperimentKind, Format, Overrides, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "sis-lab", version, about = "Numerical experiments for the stochastic SIS epidemic model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample trajectories of the selected schemes on shared Wiener paths.
    Simulate(Flags),
    /// Strong error and fitted order over a dyadic chain of step sizes.
    Convergence(Flags),
    /// Pathwise difference between the semi-discrete and Gray-Yang schemes.
    Compare(Flags),
    /// Long-horizon extinction exponents against eta - sigma^2 K^2 / 2.
    Stability(Flags),
    /// Empirical moments of the odds against their theoretical envelopes.
    Moments(Flags),
    /// Fraction of paths leaving (0, K) for each scheme and step.
    Violations(Flags),
    /// Error and single-threaded CPU time per scheme and step.
    Bench(Flags),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Em,
    Gy,
    Sd,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Em => SchemeKind::EulerMaruyama,
            SchemeArg::Gy => SchemeKind::GrayYang,
            SchemeArg::Sd => SchemeKind::SemiDiscrete,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReferenceArg {
    #[value(name = "self")]
    SelfFinest,
    Gy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Population size.
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Initial number of infected, strictly inside (0, K).
    #[arg(long = "I0")]
    i0: Option<f64>,
    /// Time horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',')]
    dt_list: Option<Vec<f64>>,
    #[arg(long)]
    n_paths: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated schemes (simulate, convergence, bench).
    #[arg(long, value_enum, value_delimiter = ',')]
    scheme: Option<Vec<SchemeArg>>,
    #[arg(long, value_enum)]
    reference: Option<ReferenceArg>,
    /// Error norm exponent.
    #[arg(long)]
    q: Option<f64>,
    /// Comma-separated moment orders.
    #[arg(long, value_delimiter = ',')]
    p_list: Option<Vec<f64>>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write each path's Wiener increments as a binary dump (simulate).
    #[arg(long)]
    dump_noise: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl Flags {
    fn into_parts(self) -> (Option<PathBuf>, Overrides) {
        let o = Overrides {
            beta: self.beta,
            gamma: self.gamma,
            b: self.b,
            k: self.k,
            sigma: self.sigma,
            i0: self.i0,
            horizon: self.horizon,
            dt: self.dt,
            dt_list: self.dt_list,
            n_paths: self.n_paths,
            master_seed: self.seed,
            scheme: self.scheme.map(|v| v.into_iter().map(SchemeKind::from).collect()),
            reference: self.reference.map(|r| match r {
                ReferenceArg::SelfFinest => ReferenceMode::SelfFinest,
                ReferenceArg::Gy => ReferenceMode::CrossScheme,
            }),
            q: self.q,
            p_list: self.p_list,
            threads: self.threads,
            dump_noise: self.dump_noise.then_some(true),
            dir: self.out,
            format: self.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
                FormatArg::Both => Format::Both,
            }),
        };
        (self.config, o)
    }
}

fn dispatch(command: Command) -> Result<String, CliError> {
    let (kind, flags) = match command {
        Command::Simulate(f) => (ExperimentKind::Simulate, f),
        Command::Convergence(f) => (ExperimentKind::Convergence, f),
        Command::Compare(f) => (ExperimentKind::Compare, f),
        Command::Stability(f) => (ExperimentKind::Stability, f),
        Command::Moments(f) => (ExperimentKind::Moments, f),
        Command::Violations(f) => (ExperimentKind::Violations, f),
        Command::Bench(f) => (ExperimentKind::Bench, f),
    };
    let (config_path, overrides) = flags.into_parts();
    let file = match config_path {
        Some(path) => RunConfig::load(&path)?,
        None => RunConfig::default(),
    };
    let run = config::resolve(kind, file, overrides)?;
    run::execute(&run)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sis-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
