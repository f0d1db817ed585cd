use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use dgprice::report::{
    audit_file, computation_table, payments_table, prices_table, run, CaseReport, Mode,
    RunConfig, ScenarioSource,
};

/// Nash-equilibrium contract prices for DG units selling to a distribution company.
#[derive(Parser)]
#[command(name = "dgprice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write its reports.
    Run(RunArgs),
    /// Solve for an equilibrium and sweep each unit's price around it.
    Sweep(RunArgs),
    /// Check the arithmetic identities of a written report.csv.
    Audit {
        /// report.csv from a previous run (or the directory holding it).
        report: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Bundled name (3bus, 34bus, 34bus-case1..case4, ow1) or dataset file.
    #[arg(long, default_value = "3bus")]
    scenario: String,
    /// epec | diagonalize | disco-only | single-owner | sweep
    #[arg(long, default_value = "epec")]
    mode: String,
    /// KKT tolerance of the NLP solves.
    #[arg(long)]
    tol: Option<f64>,
    /// Number of EPEC starting points.
    #[arg(long)]
    multistart: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-iteration solver trace (needs --out).
    #[arg(long)]
    trace: bool,
}

impl RunArgs {
    fn config(&self, mode: Mode) -> RunConfig {
        let mut c = RunConfig::new(ScenarioSource::parse(&self.scenario), mode);
        if let Some(t) = self.tol {
            c.epec.nlp.tol = t;
        }
        if let Some(m) = self.multistart {
            c.epec.multistart = m;
        }
        c.seed = self.seed;
        c.out = self.out.clone();
        c.trace = self.trace;
        c
    }
}

fn print_report(r: &CaseReport) {
    print!("{}", prices_table(r));
    println!();
    print!("{}", payments_table(r));
    println!();
    print!("{}", computation_table(r));
}

fn execute(args: &RunArgs, mode: Mode) -> Result<bool> {
    let config = args.config(mode);
    info!("running {} in mode {}", config.scenario.name(), mode);
    let report = run(&config).with_context(|| format!("run of {} failed", args.scenario))?;
    print_report(&report);
    if !report.accepted {
        eprintln!("no accepted solution; see equilibrium.txt for the attempts");
    }
    Ok(report.success())
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let ok = match &cli.command {
        Command::Run(a) => {
            let mode: Mode = a.mode.parse()?;
            execute(a, mode)?
        }
        Command::Sweep(a) => execute(a, Mode::Sweep)?,
        Command::Audit { report } => {
            let path = if report.is_dir() {
                report.join("report.csv")
            } else {
                report.clone()
            };
            let a = audit_file(&path).with_context(|| format!("reading {}", path.display()))?;
            print!("{}", a.to_csv());
            a.pass()
        }
    };
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
