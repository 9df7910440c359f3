//! `sdgmap`: classify aid project records against the 17 SDGs and follow
//! the labels through to budget allocation and trend reports.
//!
//! Exit codes, one per failure category so scripts can branch without
//! parsing messages:
//!   0  success
//!   2  usage error (unknown flag or malformed arguments)
//!   3  configuration invalid or contradictory
//!   4  file missing or unreadable
//!   5  data error (schema, row, label, or shape)
//!   6  provider failure (fixture cache miss or live transport)
//!   7  checkpoint rejected or not found
//!   8  numeric failure (non-finite loss, degenerate fit)

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdgmap_core::corpus::ColumnMap;
use sdgmap_core::llm::ProviderMode;
use sdgmap_core::{Error, Result};

use settings::Settings;

#[derive(Parser)]
#[command(
    name = "sdgmap",
    version,
    about = "SDG classification and budget analysis for aid project records"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML config file; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Shuffle and sampling seed [default: 42]
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Where LLM responses come from [default: fixture]
    #[arg(long, global = true, value_name = "MODE")]
    provider_mode: Option<ModeArg>,
    /// Directory for outputs and the run manifest [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Country codebook JSON [default: built-in table]
    #[arg(long, global = true, value_name = "PATH")]
    codebook: Option<PathBuf>,
    /// Goal definition JSON [default: built-in definitions]
    #[arg(long, global = true, value_name = "PATH")]
    goals: Option<PathBuf>,
    /// Fixture store backing the provider (response cache in live mode)
    #[arg(long, global = true, value_name = "PATH")]
    fixture_store: Option<PathBuf>,
    /// Identity under which prompts are hashed and cached [default: default]
    #[arg(long, global = true, value_name = "ID")]
    provider_id: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Fixture,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a delimited CRS export into canonical records
    Ingest(IngestArgs),
    /// Resolve country summaries and goal decisions through the provider
    FetchContext(FetchContextArgs),
    /// Train a classifier; writes checkpoints and an epoch loss log
    Train(TrainArgs),
    /// Score a checkpoint on labeled records
    Evaluate(EvaluateArgs),
    /// Train and score ablation variants from identical seeds
    Ablate(AblateArgs),
    /// Fill missing labels with model predictions
    Impute(ImputeArgs),
    /// Fit budget weights and write allocation and trend reports
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Delimited source file, comma or tab separated with a header row
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Column mapping override, repeatable: field=header
    #[arg(long = "map", value_name = "FIELD=HEADER")]
    map: Vec<String>,
}

#[derive(Args)]
struct FetchContextArgs {
    /// Canonical records file
    #[arg(long, value_name = "PATH")]
    records: PathBuf,
}

/// Training knobs shared by `train` and `ablate`. Defaults in the help
/// text are the published configuration; a flag left unset defers to the
/// config file and then to those defaults.
#[derive(Args)]
struct HyperArgs {
    /// Adam learning rate [default: 0.00001]
    #[arg(long, value_name = "X")]
    learning_rate: Option<f64>,
    /// Training epochs [default: 100]
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Weight of the goal-semantics contrastive loss [default: 0.1]
    #[arg(long, value_name = "X")]
    lambda1: Option<f64>,
    /// Shared weight of the country, decision, and usefulness losses [default: 0.1]
    #[arg(long, value_name = "X")]
    lambda2: Option<f64>,
    /// Token sampling threshold for positive samples [default: 0.01]
    #[arg(long, value_name = "X")]
    tau: Option<f64>,
    /// Gumbel-Softmax temperature [default: 1]
    #[arg(long, value_name = "X")]
    gumbel_temperature: Option<f64>,
    /// Records per batch [default: 32]
    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,
    /// Decision threshold on per-goal probabilities [default: 0.5]
    #[arg(long, value_name = "X")]
    threshold: Option<f64>,
    /// Checkpoint cadence in epochs; 0 keeps only the final model [default: 0]
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<usize>,
    /// Encoder width [default: 64]
    #[arg(long, value_name = "N")]
    d_h: Option<usize>,
    /// Feed-forward hidden width inside each encoder block [default: 64]
    #[arg(long, value_name = "N")]
    ffn_hidden: Option<usize>,
    /// Self-attention blocks in the encoder [default: 1]
    #[arg(long, value_name = "N")]
    num_blocks: Option<usize>,
    /// Weight-initialization seed [default: 1]
    #[arg(long, value_name = "N")]
    init_seed: Option<u64>,
    /// Module ablation: full, no_semantics, no_country, no_decision [default: full]
    #[arg(long, value_name = "VARIANT")]
    ablation: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Canonical records file
    #[arg(long, value_name = "PATH")]
    records: PathBuf,
    /// Hold out records for evaluation at this train:eval ratio, e.g. 3:1
    #[arg(long, value_name = "A:B")]
    split: Option<String>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Canonical records file with labels
    #[arg(long, value_name = "PATH")]
    records: PathBuf,
    /// Checkpoint to score
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Decision threshold on per-goal probabilities [default: 0.5]
    #[arg(long, value_name = "X")]
    threshold: Option<f64>,
    /// Module ablation applied at inference [default: full]
    #[arg(long, value_name = "VARIANT")]
    ablation: Option<String>,
    /// Serve decision queries under this provider id instead
    #[arg(long, value_name = "ID")]
    decision_provider: Option<String>,
    /// Separate fixture store for the swapped decision provider
    #[arg(long, value_name = "PATH")]
    decision_store: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Canonical records file
    #[arg(long, value_name = "PATH")]
    records: PathBuf,
    /// Variants to run, comma separated
    /// [default: full,no_semantics,no_country,no_decision]
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    variants: Option<Vec<String>>,
    /// Train:eval ratio [default: 3:1]
    #[arg(long, value_name = "A:B")]
    split: Option<String>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct ImputeArgs {
    /// Canonical records file; labeled records pass through untouched
    #[arg(long, value_name = "PATH")]
    records: PathBuf,
    /// Checkpoint that predicts the missing labels
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Decision threshold on per-goal probabilities [default: 0.5]
    #[arg(long, value_name = "X")]
    threshold: Option<f64>,
    /// Module ablation applied at inference [default: full]
    #[arg(long, value_name = "VARIANT")]
    ablation: Option<String>,
    /// Serve decision queries under this provider id instead
    #[arg(long, value_name = "ID")]
    decision_provider: Option<String>,
    /// Separate fixture store for the swapped decision provider
    #[arg(long, value_name = "PATH")]
    decision_store: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Fully labeled records file, typically the impute output
    #[arg(long, value_name = "PATH")]
    records: PathBuf,
    /// Checkpoint hash recorded as the provenance of the imputed labels
    #[arg(long, value_name = "HEX")]
    checkpoint_id: Option<String>,
}

fn apply_global(settings: &mut Settings, g: &GlobalArgs) {
    if let Some(seed) = g.seed {
        settings.train.seed = seed;
    }
    if let Some(mode) = g.provider_mode {
        settings.provider.mode = match mode {
            ModeArg::Live => ProviderMode::Live,
            ModeArg::Fixture => ProviderMode::Fixture,
        };
    }
    if let Some(out) = &g.out {
        settings.out = out.clone();
    }
    if let Some(path) = &g.codebook {
        settings.codebook = Some(path.clone());
    }
    if let Some(path) = &g.goals {
        settings.goals = Some(path.clone());
    }
    if let Some(path) = &g.fixture_store {
        settings.provider.fixture_path = Some(path.clone());
    }
    if let Some(id) = &g.provider_id {
        settings.provider.provider_id = id.clone();
    }
}

fn apply_hyper(settings: &mut Settings, h: &HyperArgs) {
    if let Some(v) = h.learning_rate {
        settings.train.learning_rate = v;
    }
    if let Some(v) = h.epochs {
        settings.train.epochs = v;
    }
    if let Some(v) = h.lambda1 {
        settings.train.lambda_1 = v;
    }
    if let Some(v) = h.lambda2 {
        settings.train.lambda_2 = v;
    }
    if let Some(v) = h.tau {
        settings.train.tau = v;
    }
    if let Some(v) = h.gumbel_temperature {
        settings.train.gumbel_temperature = v;
    }
    if let Some(v) = h.batch_size {
        settings.train.batch_size = v;
    }
    if let Some(v) = h.threshold {
        settings.train.prediction_threshold = v;
    }
    if let Some(v) = h.checkpoint_every {
        settings.train.checkpoint_every = v;
    }
    if let Some(v) = h.d_h {
        settings.model.encoder.d_h = v;
    }
    if let Some(v) = h.ffn_hidden {
        settings.model.encoder.ffn_hidden = v;
    }
    if let Some(v) = h.num_blocks {
        settings.model.encoder.num_blocks = v;
    }
    if let Some(v) = h.init_seed {
        settings.init_seed = v;
    }
    if let Some(v) = &h.ablation {
        settings.ablation = v.clone();
    }
}

fn parse_split(s: &str) -> Result<(u32, u32)> {
    let parse = |part: &str| {
        part.trim()
            .parse::<u32>()
            .map_err(|_| Error::Config(format!("split must look like 3:1, got '{s}'")))
    };
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("split must look like 3:1, got '{s}'")))?;
    Ok((parse(a)?, parse(b)?))
}

fn build_column_map(pairs: &[String]) -> Result<ColumnMap> {
    let mut map = ColumnMap::default();
    for pair in pairs {
        let (field, header) = pair.split_once('=').ok_or_else(|| {
            Error::Config(format!("--map needs field=header, got '{pair}'"))
        })?;
        map.set(field.trim(), header.trim())?;
    }
    Ok(map)
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::from_file(cli.global.config.as_deref())?;
    apply_global(&mut settings, &cli.global);

    match &cli.command {
        Command::Ingest(args) => {
            let map = build_column_map(&args.map)?;
            commands::cmd_ingest(&settings, &args.input, &map)
        }
        Command::FetchContext(args) => commands::cmd_fetch_context(&settings, &args.records),
        Command::Train(args) => {
            apply_hyper(&mut settings, &args.hyper);
            let split = args.split.as_deref().map(parse_split).transpose()?;
            commands::cmd_train(&settings, &args.records, split)
        }
        Command::Evaluate(args) => {
            if let Some(t) = args.threshold {
                settings.train.prediction_threshold = t;
            }
            if let Some(a) = &args.ablation {
                settings.ablation = a.clone();
            }
            commands::cmd_evaluate(
                &settings,
                &args.records,
                &args.checkpoint,
                args.decision_provider.as_deref(),
                args.decision_store.as_deref(),
            )
        }
        Command::Ablate(args) => {
            apply_hyper(&mut settings, &args.hyper);
            let ratio = match &args.split {
                Some(s) => parse_split(s)?,
                None => (3, 1),
            };
            let variants = args.variants.clone().unwrap_or_else(|| {
                ["full", "no_semantics", "no_country", "no_decision"]
                    .map(String::from)
                    .to_vec()
            });
            commands::cmd_ablate(&settings, &args.records, &variants, ratio)
        }
        Command::Impute(args) => {
            if let Some(t) = args.threshold {
                settings.train.prediction_threshold = t;
            }
            if let Some(a) = &args.ablation {
                settings.ablation = a.clone();
            }
            commands::cmd_impute(
                &settings,
                &args.records,
                &args.checkpoint,
                args.decision_provider.as_deref(),
                args.decision_store.as_deref(),
            )
        }
        Command::Analyze(args) => {
            commands::cmd_analyze(&settings, &args.records, args.checkpoint_id.as_deref())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Parameter(_)
        | Error::DefinitionSet(_)
        | Error::SplitSize(_)
        | Error::Batch(_)
        | Error::Template(_) => 3,
        Error::Io(_) => 4,
        Error::MissingColumn(_)
        | Error::Row { .. }
        | Error::LabelRange(_)
        | Error::Label(_)
        | Error::Shape(_)
        | Error::EmptyInput(_)
        | Error::EmptyPool(_)
        | Error::Csv(_)
        | Error::Json(_) => 5,
        Error::CacheMiss { .. } | Error::Provider(_) => 6,
        Error::Checkpoint(_) => 7,
        Error::Numeric(_) | Error::DegenerateFit(_) => 8,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
