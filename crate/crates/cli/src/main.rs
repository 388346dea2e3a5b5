//! `embc`: compress word embeddings and evaluate the results.
//!
//! Exit status is 0 on success, 1 on an internal or numerical failure and 2
//! on a usage or input error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Defaults;

/// A problem with how the tool was invoked; always exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "embc",
    version,
    about = "Word-embedding compression and evaluation"
)]
struct Cli {
    /// `key=value` file supplying defaults; command-line flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Raise log verbosity (-v info, -vv debug). `RUST_LOG` also works.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit per-dimension Lloyd levels and write an LQE1 file.
    Quantize(QuantizeArgs),
    /// Expand an LQE1 file back to a dense embedding.
    Dequantize(DequantizeArgs),
    /// Train the sparse autoencoder and write its budgeted codes (SNE1).
    Train(TrainArgs),
    /// Encode an embedding with a trained checkpoint into an SNE1 file.
    Encode(EncodeArgs),
    /// Expand an SNE1 file to the reconstruction E* or the raw codes A.
    Decode(DecodeArgs),
    /// Spearman correlation against word-similarity datasets.
    EvalSim(SimArgs),
    /// Accuracy on word-analogy datasets.
    EvalAnalogy(AnalogyArgs),
    /// Either evaluation, selected by --task.
    Eval(EvalArgs),
    /// Hash an embedding to random-hyperplane signatures (LSH1).
    Lsh(LshArgs),
    /// List the strongest code dimensions of a word and their top words.
    Interpret(InterpretArgs),
}

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    /// Text or EMB1 embedding.
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Levels per dimension [default: 8].
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DequantizeArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Write the EMB1 binary cache instead of text.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Text or EMB1 embedding.
    pub input: PathBuf,
    /// SNE1 output.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Code dimensionality [default: 1024].
    #[arg(long)]
    pub k: Option<usize>,
    /// Per-word bit budget [default: 900].
    #[arg(long)]
    pub budget_bits: Option<usize>,
    /// Final sparsity; overrides the value derived from the budget.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// [default: 1000]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 16384]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Reconstruction E* as text [default: <output>.recon.txt].
    #[arg(long)]
    pub recon: Option<PathBuf>,
    /// Per-epoch training log [default: <output>.log].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Also save the trained model (WTA1) here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Text or EMB1 embedding.
    pub input: PathBuf,
    /// WTA1 checkpoint written by `train --checkpoint`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-word bit budget [default: 900].
    #[arg(long)]
    pub budget_bits: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Write the sparse codes A rather than E* = A D + b.
    #[arg(long)]
    pub raw_codes: bool,
    /// Write the EMB1 binary cache instead of text.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug, Clone)]
pub struct RepArgs {
    /// Text, EMB1, LQE1, SNE1 or LSH1 file.
    pub input: PathBuf,
    /// Dataset file; repeat for several.
    #[arg(long = "dataset", required = true)]
    pub datasets: Vec<PathBuf>,
    /// For SNE1 input, score the raw codes A instead of E*.
    #[arg(long)]
    pub raw_codes: bool,
    /// Lowercase dataset tokens before lookup.
    #[arg(long)]
    pub lowercase: bool,
    /// Print `task<TAB>metric<TAB>coverage<TAB>count` lines.
    #[arg(long)]
    pub tsv: bool,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    #[command(flatten)]
    pub rep: RepArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Add,
    Mul,
    Both,
}

impl std::str::FromStr for MethodChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args, Debug)]
pub struct AnalogyArgs {
    #[command(flatten)]
    pub rep: RepArgs,
    /// Scoring rule [default: both].
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// `sim` or `analogy`.
    #[arg(long)]
    pub task: String,
    #[command(flatten)]
    pub rep: RepArgs,
    /// Analogy scoring rule [default: both].
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
}

#[derive(Args, Debug)]
pub struct LshArgs {
    /// Text or EMB1 embedding.
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Signature length [default: 900].
    #[arg(long)]
    pub bits: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InterpretArgs {
    /// SNE1 file.
    pub input: PathBuf,
    #[arg(long)]
    pub word: String,
    /// Dimensions to list [default: 5].
    #[arg(long)]
    pub dims: Option<usize>,
    /// Words per dimension [default: 10].
    #[arg(long)]
    pub top: Option<usize>,
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("EMBC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        UsageError(format!(
            "EMBC_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let defaults = match &cli.config {
        Some(path) => Defaults::load(path)?,
        None => Defaults::default(),
    };
    match cli.command {
        Command::Quantize(a) => commands::quantize(&a, &defaults),
        Command::Dequantize(a) => commands::dequantize(&a),
        Command::Train(a) => commands::train(&a, &defaults),
        Command::Encode(a) => commands::encode(&a, &defaults),
        Command::Decode(a) => commands::decode(&a),
        Command::EvalSim(a) => commands::eval_sim(&a.rep),
        Command::EvalAnalogy(a) => commands::eval_analogy(&a.rep, a.method, &defaults),
        Command::Eval(a) => match a.task.as_str() {
            "sim" => commands::eval_sim(&a.rep),
            "analogy" => commands::eval_analogy(&a.rep, a.method, &defaults),
            other => {
                Err(UsageError(format!("unknown task {other:?}; expected sim or analogy")).into())
            }
        },
        Command::Lsh(a) => commands::lsh(&a, &defaults),
        Command::Interpret(a) => commands::interpret(&a, &defaults),
    }
}

/// 2 for anything the caller can fix (arguments, files, data), 1 otherwise.
fn exit_status(err: &anyhow::Error) -> u8 {
    use embcomp::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<E>() {
        Some(E::NonFinite(_) | E::Diverged { .. } | E::GradientCheck { .. }) => 1,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("embc: {err:#}");
            ExitCode::from(exit_status(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        let usage: anyhow::Error = UsageError("x".into()).into();
        assert_eq!(exit_status(&usage), 2);
        let oov: anyhow::Error = embcomp::Error::OutOfVocabulary("w".into()).into();
        assert_eq!(exit_status(&oov), 2);
        let div: anyhow::Error = embcomp::Error::Diverged {
            epoch: 3,
            detail: "nan".into(),
        }
        .into();
        assert_eq!(exit_status(&div), 1);
        let ctx = anyhow::Error::from(embcomp::Error::EmptyInput).context("reading x");
        assert_eq!(exit_status(&ctx), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
