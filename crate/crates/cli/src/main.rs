//! `dpal`: dictionary-preserving BPE, n-gram language models, active-learning
//! data selection and evaluation from the command line.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 backend or
//! protocol error. Logs go to stderr; results go to stdout or the named
//! output files.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dpal_core::corpus::DEFAULT_SEED;
use dpal_core::strategies::StrategyKind;
use dpal_core::ErrorKind;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "dpal",
    version,
    about = "Dictionary-preserving BPE and active-learning data selection"
)]
pub struct Cli {
    /// Worker threads for scoring and counting (default: logical cores).
    #[arg(long, short = 'j', global = true)]
    pub jobs: Option<usize>,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(long, short = 'v', action = ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Write `config.lock.json` describing this invocation into DIR.
    #[arg(long, global = true, value_name = "DIR")]
    pub lock_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Learn a BPE merge table.
    BpeLearn(BpeLearnArgs),
    /// Segment text with a merge table, optionally dictionary-preserving.
    BpeApply(BpeApplyArgs),
    /// Train an interpolated n-gram language model.
    LmTrain(LmTrainArgs),
    /// Per-sentence cross-entropy under a trained model.
    LmScore(LmScoreArgs),
    /// Score a pool with a selection strategy.
    Score(ScoreArgs),
    /// Run a full active-learning simulation from a JSON config.
    AlRun(AlRunArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    EvalBleu(EvalBleuArgs),
    /// Dictionary-word precision, recall and F1.
    EvalDict(EvalDictArgs),
    /// Randomly split a pool into two halves.
    SplitHalves(SplitHalvesArgs),
    /// Generate the synthetic word-substitution task.
    Synth(SynthArgs),
    /// Serve a mock translator over the JSON Lines protocol on stdin/stdout.
    ServeMock(ServeMockArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BpeLearnArgs {
    /// Training text (default: stdin).
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short = 'n')]
    pub merges: usize,
    /// Merge table destination (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Args, Serialize)]
pub struct BpeApplyArgs {
    /// Merge table (source side in `--parallel` mode).
    #[arg(long, short)]
    pub codes: PathBuf,
    /// Keep dictionary words that BPE would split as whole tokens in an
    /// extra encoding emitted before the standard one.
    #[arg(long, requires = "dict")]
    pub dp: bool,
    /// Bilingual dictionary, `source<TAB>target` per line.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Dictionary column matching the text in single-file mode.
    #[arg(long, value_enum, default_value = "source")]
    pub side: Side,
    /// Text to segment (default: stdin); the source side in `--parallel` mode.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Destination (default: stdout); the source side in `--parallel` mode.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Encode aligned source/target files together.
    #[arg(long, requires_all = ["input", "output", "target_input", "target_output", "target_codes"])]
    pub parallel: bool,
    #[arg(long)]
    pub target_input: Option<PathBuf>,
    #[arg(long)]
    pub target_output: Option<PathBuf>,
    #[arg(long)]
    pub target_codes: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LmOptions {
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Comma-separated interpolation weights, unigram first (default: uniform).
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
pub struct LmTrainArgs {
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
    #[command(flatten)]
    pub lm: LmOptions,
}

#[derive(Debug, Args, Serialize)]
pub struct LmScoreArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long, short)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: StrategyKind,
    /// Unlabelled pool, one sentence per line; ids are 0-based indices of non-blank lines.
    #[arg(long)]
    pub pool: PathBuf,
    /// Source side of the labelled data.
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Target side of the labelled data; trains the mock translator for rttl.
    #[arg(long, requires = "labeled")]
    pub labeled_target: Option<PathBuf>,
    /// Seed for random scores and the ce-diff split.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub round: usize,
    /// Print only the top B sentences, best first.
    #[arg(long, value_name = "B")]
    pub top: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
    #[arg(long)]
    pub normalize: bool,
    #[command(flatten)]
    pub lm: LmOptions,
    /// Uniform mock translator over V output words (rttl).
    #[arg(long, value_name = "V", conflicts_with_all = ["labeled_target", "backend"])]
    pub uniform_vocab: Option<usize>,
    /// External JSON Lines translator command (rttl).
    #[arg(long, conflicts_with = "labeled_target")]
    pub backend: Option<String>,
    #[arg(long = "backend-arg", requires = "backend", allow_hyphen_values = true)]
    pub backend_args: Vec<String>,
    /// Destination (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AlRunArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    /// Sum scores over rounds instead of rescoring from scratch.
    #[arg(long)]
    pub accumulate_scores: bool,
    /// Draw a new ce-diff split every round.
    #[arg(long)]
    pub resplit_each_round: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalBleuArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalDictArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    /// Dictionary column to match against.
    #[arg(long, value_enum, default_value = "target")]
    pub side: Side,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitHalvesArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 5_000)]
    pub pool_size: usize,
    #[arg(long, default_value_t = 500)]
    pub test_size: usize,
    /// Share of the pool made of exact copies of a few sentences.
    #[arg(long, default_value_t = 0.0)]
    pub duplicate_fraction: f64,
    /// Share of the pool drawn from an off-domain vocabulary.
    #[arg(long, default_value_t = 0.15)]
    pub noise_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeMockArgs {
    /// Source side of the training pairs.
    #[arg(long, requires = "target")]
    pub source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
    /// Untrained mock with uniform scores over V words.
    #[arg(
        long,
        value_name = "V",
        conflicts_with = "source",
        required_unless_present = "source"
    )]
    pub uniform_vocab: Option<usize>,
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: dpal_core::Error| e.to_string())
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] dpal_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Backend => 3,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let result = match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::dispatch(&cli)),
            Err(e) => Err(CliError::Usage(format!(
                "cannot start {n} worker threads: {e}"
            ))),
        },
        None => commands::dispatch(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
