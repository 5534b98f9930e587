//! Command-line experiment runner. Exit codes: 0 success, 1 usage or
//! configuration error, 2 scenario check failed, 3 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use monotone_lab::runner::{run, ExperimentConfig, Scenario};

#[derive(Parser, Debug)]
#[command(
    name = "monotone-lab",
    version,
    about = "Numerical experiments on monotone maps for power-law transport costs"
)]
struct Cli {
    /// TOML experiment configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for report files (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Gauss-Legendre nodes per axis for dual-path integrals
    /// (overrides the config).
    #[arg(long, global = true)]
    quad_nodes: Option<usize>,

    /// Print the full default configuration as TOML and exit.
    #[arg(long, global = true)]
    print_defaults: bool,

    #[command(subcommand)]
    scenario: Option<ScenarioCommand>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum ScenarioCommand {
    /// Closed forms and bounds for the segment-average integrals.
    VerifyLemmas,
    /// Pairwise monotonicity audit of a sampled map.
    CheckMonotone,
    /// Build an exact optimal-assignment map and save it.
    OtGenerate,
    /// Two-branch sup bound against the empirical supremum.
    EstimateLinfty,
    /// Growth profiles of |Tx - Tx0| across shrinking balls.
    HolderScan,
    /// Deformation inequality against a smooth bump family.
    BdCheck,
    /// Polynomial-approximation profiles across shrinking balls.
    TkpScan,
    /// Residuals of the Green representation identity on balls.
    GreenCheck,
}

impl From<ScenarioCommand> for Scenario {
    fn from(cmd: ScenarioCommand) -> Self {
        match cmd {
            ScenarioCommand::VerifyLemmas => Scenario::VerifyLemmas,
            ScenarioCommand::CheckMonotone => Scenario::CheckMonotone,
            ScenarioCommand::OtGenerate => Scenario::OtGenerate,
            ScenarioCommand::EstimateLinfty => Scenario::EstimateLinfty,
            ScenarioCommand::HolderScan => Scenario::HolderScan,
            ScenarioCommand::BdCheck => Scenario::BdCheck,
            ScenarioCommand::TkpScan => Scenario::TkpScan,
            ScenarioCommand::GreenCheck => Scenario::GreenCheck,
        }
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(nodes) = cli.quad_nodes {
        if nodes < 2 {
            return Err("--quad-nodes must be at least 2".into());
        }
        config.quadrature.nodes_1d = nodes;
    }
    match (cli.scenario, config.scenario) {
        (Some(cmd), maybe) => {
            let from_cli: Scenario = cmd.into();
            if let Some(from_config) = maybe {
                if from_config != from_cli {
                    return Err(format!(
                        "scenario mismatch: config says {} but the command line says {}",
                        from_config.name(),
                        from_cli.name()
                    ));
                }
            }
            config.scenario = Some(from_cli);
        }
        (None, Some(_)) => {}
        (None, None) => return Err("no scenario: pass a subcommand or set it in the config".into()),
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and are not errors.
            let failure = e.use_stderr();
            let _ = e.print();
            return if failure { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };

    if cli.print_defaults {
        print!("{}", ExperimentConfig::default().to_toml());
        return ExitCode::SUCCESS;
    }

    let config = match build_config(&cli) {
        Ok(config) => config,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(1);
        }
    };

    match run(&config) {
        Ok(outcome) => {
            println!(
                "{}: {} rows, {} failures -> {}",
                outcome.scenario.name(),
                outcome.rows,
                outcome.failures,
                outcome.report_path.display()
            );
            if outcome.failures == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
