use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ntn_twin::experiment::{run_experiment, train_command, ExperimentSpec, WeightsSource};
use ntn_twin::policy::PolicyKind;
use ntn_twin::scenario::{load_scenario, Scenario};
use ntn_twin::Error;

/// Digital-twin network slicing simulator for LEO satellite downlinks.
#[derive(Debug, Parser)]
#[command(name = "ntn-twin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// Scenario file (TOML). The built-in desk scenario is used when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, env = "NTN_TWIN_OUT", default_value = "out")]
    out: PathBuf,

    /// Policies to run, comma separated: orthogonal, oracle, dnn, dnn+repair.
    #[arg(long, global = true, value_delimiter = ',')]
    policy: Vec<PolicyKind>,

    /// Trained weights for the dnn policies.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,

    /// Constant-λ values (packets/slot), comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    lambdas: Vec<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the selected policies (default: orthogonal) once.
    Run,
    /// Train the allocator; writes weights.bin and loss.csv.
    Train,
    /// Evaluate trained weights with dnn and dnn+repair.
    Eval,
    /// Compare all four policies, training first unless --weights is given.
    Compare,
    /// Sweep λ over the scenario's sweep list (or --lambdas).
    Sweep,
}

fn scenario(global: &Global) -> Result<Scenario, Error> {
    let mut scenario = match &global.scenario {
        Some(path) => load_scenario(path)?,
        None => Scenario::desk_default(),
    };
    if let Some(seed) = global.seed {
        let mut file = scenario.file.clone();
        file.seed = seed;
        scenario = Scenario::from_file(file)?;
    }
    Ok(scenario)
}

fn weights(global: &Global, train_if_missing: bool) -> WeightsSource {
    match (&global.weights, train_if_missing) {
        (Some(p), _) => WeightsSource::File(p.clone()),
        (None, true) => WeightsSource::Train,
        (None, false) => WeightsSource::None,
    }
}

fn experiment(
    global: &Global,
    scenario: Scenario,
    default_policies: &[PolicyKind],
    lambdas: Vec<f64>,
    train_if_missing: bool,
) -> Result<(), Error> {
    let policies = if global.policy.is_empty() {
        default_policies.to_vec()
    } else {
        global.policy.clone()
    };
    let spec = ExperimentSpec {
        scenario,
        policies,
        lambdas,
        out_dir: global.out.clone(),
        weights: weights(global, train_if_missing),
    };
    let result = run_experiment(&spec)?;
    print_file(&result.comparison_path);
    Ok(())
}

fn print_file(path: &Path) {
    if let Ok(text) = std::fs::read_to_string(path) {
        print!("{text}");
    }
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    let scenario = scenario(g)?;
    match cli.command {
        Command::Run => experiment(
            g,
            scenario,
            &[PolicyKind::Orthogonal],
            g.lambdas.clone(),
            false,
        ),
        Command::Train => {
            let (_, report) = train_command(&scenario, &g.out)?;
            let first = report.losses.first().copied().unwrap_or(f64::NAN);
            let last = report.losses.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} epochs, loss {first:.4} -> {last:.4}; wrote {}",
                report.losses.len() - 1,
                g.out.join("weights.bin").display()
            );
            Ok(())
        }
        Command::Eval => {
            if g.weights.is_none() {
                return Err(Error::MissingWeights("dnn".to_string()));
            }
            let policies = [PolicyKind::Dnn, PolicyKind::DnnRepair];
            experiment(g, scenario, &policies, g.lambdas.clone(), false)
        }
        Command::Compare => experiment(g, scenario, &PolicyKind::ALL, g.lambdas.clone(), true),
        Command::Sweep => {
            let lambdas = if g.lambdas.is_empty() {
                scenario.sweep().to_vec()
            } else {
                g.lambdas.clone()
            };
            let policies = [PolicyKind::Orthogonal, PolicyKind::DnnRepair];
            experiment(g, scenario, &policies, lambdas, true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let config = e.is_config()
                || matches!(&e, Error::Io { path, .. } if Some(path) == cli.global.scenario.as_ref());
            ExitCode::from(if config { 2 } else { 3 })
        }
    }
}
