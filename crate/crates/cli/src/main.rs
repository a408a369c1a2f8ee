//! `repurpose`: staged driver for the antiviral repurposing experiments.
//!
//! Stages read and write plain files under `--out-dir` and record a
//! manifest each; see `repurpose <command> --help`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use repurpose_core::dataset::{BalanceRule, DedupKey, SplitMode};
use repurpose_core::labels::LabelVersion;
use repurpose_core::models::ModelKind;
use repurpose_core::Error;

use commands::Ctx;
use config::{RunConfig, Stage};

#[derive(Parser)]
#[command(name = "repurpose", version, about = "Deterministic antiviral drug-repurposing experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for every artifact and manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Master seed for balancing, splitting and (by default) training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Warn instead of failing when upstream artifacts were built under a different configuration.
    #[arg(long, global = true)]
    allow_config_mismatch: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Cnn,
    Lstm,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Cnn => ModelKind::Cnn,
            KindArg::Lstm => ModelKind::Lstm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Cnn,
    Lstm,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum DedupArg {
    SpeciesLength,
    ExactContent,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Ceiling,
    NearestSixHundred,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Random,
    BySpecies,
}

#[derive(Subcommand)]
enum Command {
    /// Join FASTA, metadata and the drug-virus table into merged.tsv.
    Ingest {
        /// FASTA file; repeatable.
        #[arg(long = "sequences")]
        sequences: Vec<PathBuf>,
        #[arg(long)]
        metadata: Option<PathBuf>,
        #[arg(long)]
        drugvirus: Option<PathBuf>,
        /// Extra `raw,canonical` species aliases.
        #[arg(long)]
        aliases: Option<PathBuf>,
        /// Fail on species missing from the drug table instead of dropping them.
        #[arg(long)]
        strict_species: bool,
    },
    /// Attach labels, deduplicate, drop rare species and balance.
    BuildDataset {
        #[arg(long)]
        label_version: Option<LabelVersion>,
        #[arg(long, value_enum)]
        dedup: Option<DedupArg>,
        #[arg(long, value_enum)]
        balance_rule: Option<RuleArg>,
        #[arg(long)]
        require_full_registry: bool,
    },
    /// Per-species counts of a dataset or merged table.
    Profile {
        /// Defaults to dataset.tsv in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write the table as TSV.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Split the balanced dataset into train.tsv and eval.tsv.
    Split {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Eval-only species; repeatable. Replaces the configured list.
        #[arg(long = "holdout")]
        holdouts: Vec<String>,
        #[arg(long)]
        n_random_holdouts: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Train one or more seeded runs and write checkpoints and curves.
    Train {
        #[arg(long, value_enum)]
        model: Option<KindArg>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// Master seed of the runs, independent of the data seed.
        #[arg(long)]
        train_seed: Option<u64>,
        #[arg(long)]
        no_class_weights: bool,
    },
    /// Micro-averaged metrics of trained runs on a dataset.
    Evaluate {
        /// Defaults to eval.tsv.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Only this run index.
        #[arg(long)]
        run: Option<usize>,
    },
    /// Candidate drug lists per sequence.
    Predict {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        run: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Save every intermediate activation of this accession.
        #[arg(long)]
        dump_activations: Option<String>,
    },
    /// Per-species drug ranking over all prediction files.
    Report {
        #[arg(long)]
        top_k: Option<usize>,
        /// Restrict to these species; repeatable.
        #[arg(long)]
        species: Vec<String>,
    },
    /// Finite-difference check of every primitive and the toy models.
    GradCheck {
        #[arg(long, value_enum, default_value = "all")]
        model: CheckArg,
        /// Write the reports as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Layer table and parameter count of a model.
    Inspect {
        #[arg(long, value_enum, default_value = "cnn")]
        model: KindArg,
        /// Reference CNN: 126 outputs, 256 filters per bank.
        #[arg(long = "paper_exact", visible_alias = "paper-exact")]
        paper_exact: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out_dim: Option<usize>,
    },
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest { .. } => Stage::Ingest,
            Command::BuildDataset { .. } => Stage::BuildDataset,
            Command::Split { .. } => Stage::Split,
            Command::Train { .. } => Stage::Train,
            Command::Evaluate { .. } => Stage::Evaluate,
            Command::Predict { .. } => Stage::Predict,
            Command::Report { .. } => Stage::Report,
            _ => return None,
        })
    }

    fn apply(&self, c: &mut RunConfig) {
        match self {
            Command::Ingest {
                sequences,
                metadata,
                drugvirus,
                aliases,
                strict_species,
            } => {
                if !sequences.is_empty() {
                    c.inputs.sequences = sequences.clone();
                }
                set(&mut c.inputs.metadata, metadata.clone().map(Some));
                set(&mut c.inputs.drugvirus, drugvirus.clone().map(Some));
                set(&mut c.inputs.aliases, aliases.clone().map(Some));
                c.inputs.strict_species |= strict_species;
            }
            Command::BuildDataset {
                label_version,
                dedup,
                balance_rule,
                require_full_registry,
            } => {
                set(&mut c.labels.version, *label_version);
                set(
                    &mut c.dataset.dedup,
                    dedup.map(|d| match d {
                        DedupArg::SpeciesLength => DedupKey::SpeciesLength,
                        DedupArg::ExactContent => DedupKey::ExactContent,
                    }),
                );
                set(
                    &mut c.dataset.balance.rule,
                    balance_rule.map(|r| match r {
                        RuleArg::Ceiling => BalanceRule::Ceiling,
                        RuleArg::NearestSixHundred => BalanceRule::NearestSixHundred,
                    }),
                );
                c.labels.require_full_registry |= require_full_registry;
            }
            Command::Split {
                mode,
                holdouts,
                n_random_holdouts,
                ratio,
            } => {
                set(
                    &mut c.split.mode,
                    mode.map(|m| match m {
                        ModeArg::Random => SplitMode::Random,
                        ModeArg::BySpecies => SplitMode::BySpecies,
                    }),
                );
                if !holdouts.is_empty() {
                    c.split.holdouts = holdouts.clone();
                }
                set(&mut c.split.n_random_holdouts, *n_random_holdouts);
                set(&mut c.split.ratio, *ratio);
            }
            Command::Train {
                model,
                epochs,
                lr,
                batch_size,
                runs,
                workers,
                train_seed,
                no_class_weights,
            } => {
                set(&mut c.model.kind.0, model.map(Into::into));
                set(&mut c.train.epochs, *epochs);
                set(&mut c.train.lr, lr.map(Some));
                set(&mut c.train.batch_size, *batch_size);
                set(&mut c.train.runs, *runs);
                set(&mut c.train.workers, *workers);
                set(&mut c.train.seed, train_seed.map(Some));
                if *no_class_weights {
                    c.train.class_weights = false;
                }
            }
            Command::Predict { threshold, .. } => set(&mut c.report.threshold, *threshold),
            Command::Report { top_k, .. } => set(&mut c.summary.top_k, top_k.map(Some)),
            _ => {}
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

enum Failure {
    Core(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = cli.global.config.as_deref().map(config::read_toml).transpose()?;
    let stage = cli.command.stage();
    // The output directory must be known before the upstream manifest can be read.
    let mut config = RunConfig::layered(None, None, file.as_ref())?;
    set(&mut config.out_dir, cli.global.out_dir.clone());
    let upstream = match stage {
        Some(s) => commands::upstream_manifest(&config.out_dir, s)?,
        None => None,
    };
    if let Some(m) = &upstream {
        let out_dir = config.out_dir.clone();
        config = RunConfig::layered(Some(m), stage.and_then(Stage::upstream), file.as_ref())?;
        config.out_dir = out_dir;
    }
    set(&mut config.seed, cli.global.seed);
    cli.command.apply(&mut config);
    if stage.is_some() {
        std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    }
    let ctx = Ctx {
        config,
        allow_mismatch: cli.global.allow_config_mismatch,
    };
    let up = upstream.as_ref();
    match &cli.command {
        Command::Ingest { .. } => commands::ingest(&ctx)?,
        Command::BuildDataset { .. } => commands::build_dataset(&ctx, up)?,
        Command::Profile { input, output } => {
            let input = input.clone().unwrap_or_else(|| ctx.config.out_dir.join("dataset.tsv"));
            commands::profile(&input, output.as_deref())?
        }
        Command::Split { .. } => commands::split(&ctx, up)?,
        Command::Train { .. } => commands::train(&ctx, up)?,
        Command::Evaluate { input, run } => commands::evaluate(&ctx, up, input.as_deref(), *run)?,
        Command::Predict {
            input, run, dump_activations, ..
        } => commands::predict(&ctx, up, input.as_deref(), *run, dump_activations.as_deref())?,
        Command::Report { species, .. } => commands::report(&ctx, up, species)?,
        Command::GradCheck { model, output } => {
            let kinds = match model {
                CheckArg::Cnn => vec![ModelKind::Cnn],
                CheckArg::Lstm => vec![ModelKind::Lstm],
                CheckArg::All => vec![ModelKind::Cnn, ModelKind::Lstm],
            };
            let outcome = commands::grad_check(&kinds, ctx.config.seed, output.as_deref())?;
            if !outcome.failed.is_empty() {
                return Err(Failure::Check(format!("{} of {} gradient checks failed: {}", outcome.failed.len(), outcome.checks, outcome.failed.join(", "))));
            }
        }
        Command::Inspect {
            model,
            paper_exact,
            checkpoint,
            out_dim,
        } => {
            commands::inspect((*model).into(), *paper_exact, checkpoint.as_deref(), *out_dim, &ctx.config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error[grad-check]: {msg}");
            ExitCode::FAILURE
        }
    }
}
