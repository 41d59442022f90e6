//! `clusterq`: cluster-based query reformulation for dense retrieval.
//!
//! ```bash
//! clusterq run --config clusterq.toml --dataset-dir data/trec-covid --cache-dir .cache
//! clusterq qerm build-dataset --dataset-dir data/train && clusterq qerm train
//! clusterq run --dataset-dir data/trec-covid --qerm out/qerm_model.json
//! clusterq ablate --kind w0 --dataset-dir data/trec-covid
//! ```

mod commands;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clusterq::config::AggregationStrategy;

#[derive(Parser, Debug)]
#[command(
    name = "clusterq",
    version,
    about = "Cluster-based query reformulation for dense retrieval"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML config; defaults apply when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// BEIR-layout dataset directory
    #[arg(long, global = true)]
    pub dataset_dir: Option<PathBuf>,

    /// Persistent response and embedding cache; in-memory when omitted
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,

    /// Where artifacts, runs and reports are written
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Aggregation strategy: DC, FW, SimDW or ScoreDW
    #[arg(long, global = true, value_parser = setup::parse_strategy)]
    pub strategy: Option<AggregationStrategy>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for per-query fan-out
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,

    /// Print each query's weighting decisions as JSONL on stdout
    #[arg(long, global = true)]
    pub explain: bool,

    /// Repeat for more log output
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample reformulations for every query
    Generate,
    /// Cluster generated reformulations into representatives
    Cluster {
        /// Defaults to <out-dir>/generated.jsonl
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score cluster representatives
    Score {
        /// Defaults to <out-dir>/clusters.jsonl
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fuse each query with its cluster representatives
    Aggregate {
        /// Defaults to <out-dir>/clusters.jsonl
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Needed for ScoreDW; defaults to <out-dir>/scores.jsonl
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Retrieve with fused query vectors and write a TREC run
    Retrieve {
        /// Defaults to <out-dir>/aggregates.jsonl
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "clusterq")]
        tag: String,
    },
    /// nDCG for one or more runs; paired t-tests against the first
    Evaluate {
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Defaults to the dataset's qrels
        #[arg(long)]
        qrels: Option<PathBuf>,
    },
    /// Full pipeline: generate, cluster, score, aggregate, retrieve, evaluate
    Run {
        /// Trained reward model; wraps each query in the regeneration loop
        #[arg(long = "qerm")]
        qerm: Option<PathBuf>,
        #[arg(long, default_value = "clusterq")]
        tag: String,
    },
    /// Sweep one hyperparameter and write a CSV table
    Ablate {
        /// w0, prompts, n_per_prompt, iterations, sim_threshold or score_threshold
        #[arg(long)]
        kind: String,
        /// "a,b,c" or "start:stop:step"; defaults to the standard grid
        #[arg(long)]
        grid: Option<String>,
        /// Reward model, required for the iterations sweep
        #[arg(long = "qerm")]
        qerm: Option<PathBuf>,
    },
    /// Reward model: training data, training and the feedback loop
    Qerm {
        #[command(subcommand)]
        command: QermCommand,
    },
    /// Judge-scored (query, reformulation) rows for fine-tuning
    ExportFinetune,
    /// Cluster count distribution and intra-set similarity
    ClusterStats {
        /// Defaults to <out-dir>/clusters.jsonl
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum QermCommand {
    /// Label first-pass features by nDCG threshold
    BuildDataset,
    /// Fit the logistic reward model
    Train {
        /// Defaults to <out-dir>/qerm_train.jsonl
        #[arg(long)]
        input: Option<PathBuf>,
        /// Defaults to <out-dir>/qerm_model.json
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Run the pipeline with reward-gated regeneration
    Loop {
        #[arg(long = "qerm")]
        qerm: PathBuf,
        #[arg(long, default_value = "clusterq-qerm")]
        tag: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let g = &cli.global;
    let result = match cli.command {
        Command::Generate => commands::generate(g),
        Command::Cluster { input } => commands::cluster(g, input),
        Command::Score { input } => commands::score(g, input),
        Command::Aggregate { clusters, scores } => commands::aggregate(g, clusters, scores),
        Command::Retrieve { input, tag } => commands::retrieve(g, input, &tag),
        Command::Evaluate { runs, qrels } => commands::evaluate(g, &runs, qrels),
        Command::Run { qerm, tag } => commands::run(g, qerm.as_deref(), &tag),
        Command::Ablate { kind, grid, qerm } => {
            commands::ablate(g, &kind, grid.as_deref(), qerm.as_deref())
        }
        Command::Qerm { command } => match command {
            QermCommand::BuildDataset => commands::qerm_build_dataset(g),
            QermCommand::Train { input, model_out } => commands::qerm_train(g, input, model_out),
            QermCommand::Loop { qerm, tag } => commands::run(g, Some(&qerm), &tag),
        },
        Command::ExportFinetune => commands::export_finetune(g),
        Command::ClusterStats { input } => commands::cluster_stats(g, input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", setup::describe(&e));
            ExitCode::FAILURE
        }
    }
}
