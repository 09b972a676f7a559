use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ltlab::baselines::{Manner, Rebalance};
use ltlab_cli::commands::{execute, Job};
use ltlab_cli::config::load_config;
use ltlab_cli::export::export_tables;
use ltlab_cli::CliError;

#[derive(Parser)]
#[command(name = "ltlab", version, about = "Long-tailed classification experiments on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML benchmark config; desk-scale defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// First seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Number of consecutive seeds, one run directory each.
    #[arg(long, global = true, default_value_t = 1)]
    seeds: u64,

    /// Root directory for run directories and exported tables.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training and balanced test splits.
    GenData,
    /// Train one baseline network end to end.
    TrainManner {
        /// CE, RW or RS.
        manner: Manner,
    },
    /// Train the bilateral-branch model with the configured schedule.
    TrainBbn,
    /// Representation manner × classifier manner error grid.
    DecoupleGrid,
    /// CE followed by deferred re-weighting or re-sampling.
    TwoStage {
        /// drw or drs.
        stage: Rebalance,
    },
    /// Uniform / balanced / reversed sampler in the re-balancing branch.
    AblateSampler,
    /// The six adaptor strategies.
    AblateAdaptor,
    /// Classifier retrained on frozen representations.
    FeatureQuality,
    /// Bilateral model against probability-averaging ensembles.
    Ensemble,
    /// Per-class classifier norms.
    AnalyzeNorms,
    /// Intra-class distance over the head classes.
    AnalyzeCompactness,
    /// Collect run results into CSV tables under `<out>/tables`.
    ExportTables {
        ids: Vec<String>,
    },
}

impl Command {
    fn job(&self) -> Option<Job> {
        Some(match *self {
            Command::GenData => Job::GenData,
            Command::TrainManner { manner } => Job::TrainManner(manner),
            Command::TrainBbn => Job::TrainBbn,
            Command::DecoupleGrid => Job::DecoupleGrid,
            Command::TwoStage { stage } => Job::TwoStage(stage),
            Command::AblateSampler => Job::AblateSampler,
            Command::AblateAdaptor => Job::AblateAdaptor,
            Command::FeatureQuality => Job::FeatureQuality,
            Command::Ensemble => Job::Ensemble,
            Command::AnalyzeNorms => Job::AnalyzeNorms,
            Command::AnalyzeCompactness => Job::AnalyzeCompactness,
            Command::ExportTables { .. } => return None,
        })
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::ExportTables { ids } = &cli.command {
        for path in export_tables(&cli.out, ids, &cli.out.join("tables"))? {
            println!("{}", path.display());
        }
        return Ok(());
    }
    let job = cli.command.job().expect("export handled above");
    let config = load_config(cli.config.as_deref())?;
    if cli.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    for seed in cli.seed..cli.seed + cli.seeds {
        let record = execute(job, &config, seed, &cli.out)?;
        println!("{} {} seed {}", record.run_id, record.command, seed);
        for row in &record.rows {
            println!("  {:<28} {}", row.method, row.error);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
