//! `pne` — train, evaluate, and query the personalized neural embedding
//! recommender from the command line.
//!
//! Exit codes: 0 on success, 1 on data or runtime errors, 2 on usage
//! errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pne", version, about = "Joint user/item/word embedding recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Interactions TSV: `user_key<TAB>item_key[<TAB>timestamp]`
    #[arg(long)]
    interactions: PathBuf,
    /// Item text TSV: `item_key<TAB>free text`
    #[arg(long)]
    text: Option<PathBuf>,
    /// Maximum vocabulary size
    #[arg(long, default_value_t = 8000)]
    vocab: usize,
    /// Maximum in-vocabulary tokens kept per item document
    #[arg(long = "doc-len", default_value_t = 300)]
    doc_len: usize,
    /// Seed for the leave-one-out split (and training, under `train`)
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Seed deriving per-user evaluation candidates; two models evaluated
    /// with the same value rank identical candidate lists
    #[arg(long = "eval-seed", default_value_t = 1)]
    eval_seed: u64,
    /// Sampled negatives per test user
    #[arg(long = "num-negatives", default_value_t = 99)]
    num_negatives: usize,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, manifest, id maps, and epoch log
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Per-entity embedding dimension
        #[arg(long, default_value_t = 75)]
        dim: usize,
        /// CF hidden layer width
        #[arg(long, default_value_t = 75)]
        hidden: usize,
        /// Learning rate
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        /// Mini-batch size
        #[arg(long, default_value_t = 128)]
        batch: usize,
        /// Negatives sampled per positive each epoch
        #[arg(long = "neg-ratio", default_value_t = 1)]
        neg_ratio: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        /// Disable the semantic branch (CF-only ablation)
        #[arg(long = "no-memnet")]
        no_memnet: bool,
        /// Final checkpoint path (default: <out-dir>/checkpoint.pne)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long = "out-dir", default_value = "pne_out")]
        out_dir: PathBuf,
    },
    /// Rank held-out items for every test user and write the report
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Report cutoffs
        #[arg(long, value_delimiter = ',', default_values_t = vec![5usize, 10, 20])]
        cutoffs: Vec<usize>,
        #[arg(long = "out-dir", default_value = "pne_out")]
        out_dir: PathBuf,
    },
    /// Print the top-K unconsumed items for one user
    Recommend {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// External user key
        #[arg(long)]
        user: String,
        #[arg(long = "top-k", default_value_t = 10)]
        top_k: usize,
    },
    /// Write word embeddings as projector-loadable TSV files
    ExportEmbeddings {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "out-dir", default_value = "pne_out")]
        out_dir: PathBuf,
        /// Print the cosine-nearest neighbors of this word
        #[arg(long)]
        nearest: Option<String>,
        /// Neighbor count for --nearest
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            data,
            eval,
            dim,
            hidden,
            lr,
            batch,
            neg_ratio,
            epochs,
            no_memnet,
            checkpoint,
            out_dir,
        } => commands::train(commands::TrainOptions {
            data,
            eval,
            dim,
            hidden,
            lr,
            batch,
            neg_ratio,
            epochs,
            no_memnet,
            checkpoint,
            out_dir,
        }),
        Command::Evaluate {
            data,
            eval,
            checkpoint,
            cutoffs,
            out_dir,
        } => commands::evaluate(data, eval, checkpoint, cutoffs, out_dir),
        Command::Recommend {
            data,
            checkpoint,
            user,
            top_k,
        } => commands::recommend(data, checkpoint, &user, top_k),
        Command::ExportEmbeddings {
            data,
            checkpoint,
            out_dir,
            nearest,
            n,
        } => commands::export_embeddings(data, checkpoint, out_dir, nearest.as_deref(), n),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(1)
        }
    }
}
