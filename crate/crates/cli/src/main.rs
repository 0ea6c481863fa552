//! Experiment driver: runs one experiment per invocation and writes a JSON
//! report. Exit codes: 0 success, 2 invalid input, 1 internal failure.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use report::CliError;

#[derive(Debug, Parser)]
#[command(name = "lemip", version, about = "Locality-explicit multi-prover proof experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Master seed; trial `i` runs with `splitmix64(seed ^ splitmix64(i))`.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Omit the timestamp so identical runs give identical reports.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide locality and no-signalling of a strategy.
    ClassifyStrategy(commands::ClassifyArgs),
    /// CHSH values of local strategies and the PR box.
    Chsh(commands::ChshArgs),
    /// One honest commit-and-unveil execution.
    CommitDemo(commands::CommitArgs),
    /// Double-unveiling tuples against an exhaustive scan of second keys.
    BindingScan(commands::BindingArgs),
    /// Box-assisted equivocation of the commitment.
    AttackDemo(commands::AttackArgs),
    /// Sumcheck on the square of a CNF arithmetization.
    SumcheckDemo(commands::SumcheckArgs),
    /// Two-prover oracle-3-SAT protocol.
    BflRun(commands::BflArgs),
    /// Committed zero-knowledge protocol with honest or cheating provers.
    ZkRun(commands::ZkRunArgs),
    /// Box-assisted simulators against a chosen verifier program.
    ZkSimulate(commands::ZkSimulateArgs),
    /// Simulators as no-signalling provers versus the best local cheater.
    ZkAttack(commands::ZkAttackArgs),
    /// 3-coloring protocols.
    ThreecolRun(commands::ThreecolRunArgs),
    /// Exact comparison of simulated and real views for the three-prover protocol.
    ThreecolSimulate(commands::ThreecolSimulateArgs),
}

fn dispatch(cli: &Cli) -> Result<(&'static str, serde_json::Value, serde_json::Value), CliError> {
    let c = &cli.common;
    let (name, out) = match &cli.command {
        Command::ClassifyStrategy(a) => ("classify-strategy", commands::classify_strategy(a)),
        Command::Chsh(a) => ("chsh", commands::chsh(a)),
        Command::CommitDemo(a) => ("commit-demo", commands::commit_demo(a, c)),
        Command::BindingScan(a) => ("binding-scan", commands::binding_scan(a, c)),
        Command::AttackDemo(a) => ("attack-demo", commands::attack_demo(a, c)),
        Command::SumcheckDemo(a) => ("sumcheck-demo", commands::sumcheck_demo(a, c)),
        Command::BflRun(a) => ("bfl-run", commands::bfl_run(a, c)),
        Command::ZkRun(a) => ("zk-run", commands::zk_run(a, c)),
        Command::ZkSimulate(a) => ("zk-simulate", commands::zk_simulate(a, c)),
        Command::ZkAttack(a) => ("zk-attack", commands::zk_attack(a, c)),
        Command::ThreecolRun(a) => ("threecol-run", commands::threecol_run(a, c)),
        Command::ThreecolSimulate(a) => ("threecol-simulate", commands::threecol_simulate(a, c)),
    };
    out.map(|(config, result)| (name, config, result))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = dispatch(&cli).and_then(|(command, config, result)| {
        let text = report::render(command, &cli.common, config, result)?;
        report::emit(&cli.common, &text)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
