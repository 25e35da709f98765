use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Financial-lexicon masked language modelling at desk scale.
#[derive(Parser, Debug)]
#[command(name = "finlm", version, arg_required_else_help = true)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic planted-phrase corpus, its vocabulary and dictionary.
    Synth(SynthArgs),
    /// Build a lexicon file from dictionary files and a vocabulary.
    BuildLexicon(BuildLexiconArgs),
    /// Mask a corpus into a JSON-lines dataset.
    Mask(MaskArgs),
    /// Pretrain the generator and discriminator and write a checkpoint.
    Pretrain(PretrainArgs),
    /// Validation perplexity of a checkpoint's generator on a corpus.
    EvalPpl(EvalPplArgs),
    /// Fine-tune a classifier on the checkpoint's discriminator encoder.
    Finetune(FinetuneArgs),
    /// Score predictions against gold labels.
    Score(ScoreArgs),
    /// Perplexity sweep over financial share or stage split.
    Sweep(SweepArgs),
    /// Run gradient checks, masking statistics and metric oracles.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    train_docs: Option<usize>,
    #[arg(long)]
    valid_docs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct BuildLexiconArgs {
    /// Dictionary file, one term per line; repeatable.
    #[arg(long = "dict", required = true)]
    dicts: Vec<PathBuf>,
    /// Vocabulary file, one token per line.
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct PolicyOverrides {
    /// Masking policy JSON; defaults apply when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    total_rate: Option<f64>,
    #[arg(long)]
    fin_share: Option<f64>,
    #[arg(long)]
    phrase_rate: Option<f64>,
    #[arg(long)]
    geo_p: Option<f64>,
    #[arg(long)]
    max_span: Option<usize>,
}

#[derive(Args, Debug)]
struct MaskArgs {
    /// Plain text (one document per line) or JSON-lines with "text" or "ids".
    #[arg(long)]
    corpus: PathBuf,
    /// Needed when the corpus holds text.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    lexicon: PathBuf,
    #[command(flatten)]
    policy: PolicyOverrides,
    /// Defaults to the policy's stage.
    #[arg(long, value_enum)]
    stage: Option<StageArg>,
    /// Defaults to the policy's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Truncation length for text documents, [CLS] and [SEP] included.
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
    /// Write masking statistics here instead of stdout.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StageArg {
    WordOnly,
    WordAndPhrase,
}

#[derive(Args, Debug, Clone)]
struct TrainOverrides {
    /// Pretraining config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    word_only_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ffn_dim: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Training corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Validation corpus; the last 10% of the training corpus otherwise.
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    policy: PolicyOverrides,
    #[command(flatten)]
    train: TrainOverrides,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Write the training report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalPplArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Validation masking seed; defaults to the checkpoint's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write each masked position's log-probabilities as JSON-lines.
    #[arg(long)]
    dump_logits: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PoolingArg {
    First,
    Mean,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// JSON-lines of {"id"?, "text" | "ids", "label"}.
    #[arg(long)]
    task_file: PathBuf,
    /// Defaults to the task file.
    #[arg(long)]
    eval_file: Option<PathBuf>,
    /// Fine-tuning config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cross-entropy share of the loss.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    #[arg(long)]
    freeze_encoder: bool,
    /// Number of classes; one more than the largest label otherwise.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON-lines of {"id", "pred"} for the eval file.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Cls,
    Reg,
    Rank,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Cutoff for nDCG@k and precision@k.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    FinShare,
    StageSplit,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep spec JSON.
    #[arg(long, conflicts_with = "axis", required_unless_present = "axis")]
    spec: Option<PathBuf>,
    /// Use the default values of this axis.
    #[arg(long, value_enum)]
    axis: Option<AxisArg>,
    /// Seeds per cell.
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    policy: PolicyOverrides,
    #[command(flatten)]
    train: TrainOverrides,
    /// JSON report.
    #[arg(long)]
    out: PathBuf,
    /// Text table; printed to stdout either way.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, hide = true)]
    inject_wrong_gradient: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
