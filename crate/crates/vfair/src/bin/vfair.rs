use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vfair::core::splits::TrainRecipe;
use vfair::core::trials::TestMode;
use vfair::pipeline::{Run, RunOptions, Stage};

/// Fairness benchmarking for speaker verification.
///
/// Each subcommand runs one pipeline stage and writes its artifacts under
/// `<out>/<config-hash>-seed<seed>/`. The `VFAIR_DATA_ROOT` environment
/// variable overrides the config's `data_root`.
#[derive(Parser, Debug)]
#[command(name = "vfair", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, default_value = "vfair.toml")]
    config: PathBuf,

    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Fold index, below `split.n_folds`.
    #[arg(long, global = true, default_value_t = 0)]
    fold: u32,

    /// Restrict trial, score, eval and report stages to one impostor rule.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    /// Restrict `split` to one training recipe.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    train_recipe: Option<u8>,

    /// Comma-separated subset of the configured languages.
    #[arg(long, global = true, value_delimiter = ',')]
    languages: Vec<String>,

    /// Output root; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Replace existing artifacts whose content differs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Test1,
    Test2,
    Test3,
}

impl From<ModeArg> for TestMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Test1 => TestMode::SameAge,
            ModeArg::Test2 => TestMode::SameGender,
            ModeArg::Test3 => TestMode::Random,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate manifests and write the normalized speaker index.
    Ingest,
    /// Select the fold's test roster and build the training files.
    Split,
    /// Generate trial files for every language and mode.
    Trials,
    /// Compute acoustic features of the roster's audio.
    Extract,
    /// Build the embedding store (baseline embedder or import).
    Embed,
    /// Score trial files against the embedding store.
    Score,
    /// Compute per-group error rates and disparities.
    Eval,
    /// Combine epoch-tagged score files into a per-slice EER series.
    Series {
        /// Score files, each tagged with a single epoch.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file name, without extension.
        #[arg(long, default_value = "series")]
        name: String,
    },
    /// Write synthetic embeddings, and synthetic scores when configured.
    Synth,
    /// Render result tables from evaluated score files.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, inputs, name) = match &cli.command {
        Command::Ingest => (Stage::Ingest, &[][..], ""),
        Command::Split => (Stage::Split, &[][..], ""),
        Command::Trials => (Stage::Trials, &[][..], ""),
        Command::Extract => (Stage::Extract, &[][..], ""),
        Command::Embed => (Stage::Embed, &[][..], ""),
        Command::Score => (Stage::Score, &[][..], ""),
        Command::Eval => (Stage::Eval, &[][..], ""),
        Command::Series { inputs, name } => (Stage::Series, inputs.as_slice(), name.as_str()),
        Command::Synth => (Stage::Synth, &[][..], ""),
        Command::Report => (Stage::Report, &[][..], ""),
    };
    let opts = RunOptions {
        config_path: cli.config.clone(),
        seed: cli.seed,
        fold: cli.fold,
        modes: cli.mode.map(TestMode::from).into_iter().collect(),
        recipes: cli
            .train_recipe
            .and_then(TrainRecipe::from_number)
            .into_iter()
            .collect(),
        languages: cli.languages.clone(),
        out: cli.out.clone(),
        force: cli.force,
        data_root: None,
    }
    .data_root_from_env();

    let run = match Run::open(&opts) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for w in run.warnings() {
        eprintln!("warning: {w}");
    }
    match run.execute(stage, inputs, name) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
