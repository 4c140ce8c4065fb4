//! `voxcrawl`: runs the corpus pipeline from one configuration file and
//! offers the individual tools (text LID, phrase mining, filtering, metrics,
//! the validation service) on explicit files.

mod tools;

use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use voxcrawl_core::config::Config;
use voxcrawl_core::pipeline::{Pipeline, PipelineError, Stage, StageReport, SEGMENTS, VIDEOS};
use voxcrawl_core::synth::fixture::{write_fixture, FixtureSpec};
use voxcrawl_service::{Catalog, LabelStore, ServiceConfig, TokenRegistry, ValidationService};

#[derive(Parser)]
#[command(name = "voxcrawl", version, about = "Build language-labeled speech corpora from web media")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, short, global = true, env = "VOXCRAWL_CONFIG")]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set filter.mcd_starts=200`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a contiguous range of pipeline stages.
    Run {
        #[arg(long, default_value = "ingest")]
        from: Stage,
        #[arg(long, default_value = "assemble")]
        to: Stage,
    },
    /// Parse page dumps into per-language article corpora.
    Ingest {
        #[arg(long)]
        dumps: Option<PathBuf>,
    },
    #[command(subcommand)]
    Phrases(PhrasesCommand),
    #[command(subcommand)]
    Lid(LidCommand),
    /// Search for videos with the mined phrases and keep matching metadata.
    Retrieve {
        /// `live` or `fixture:PATH`.
        #[arg(long)]
        provider: Option<String>,
    },
    /// Cut downloaded audio into speech segments.
    Segment {
        #[arg(long)]
        wav_dir: Option<PathBuf>,
        /// Also write one WAV per segment.
        #[arg(long)]
        extract: bool,
    },
    /// Compute one embedding per segment.
    Embed,
    #[command(subcommand)]
    Filter(FilterCommand),
    /// Split filtered segments into train and eval sets.
    Assemble {
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also keep shared channels out of train.
        #[arg(long)]
        channel_strict: bool,
    },
    /// Hours per language in a manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: Option<String>,
    },
    /// Compute a metric over a label or trial file; prints JSON.
    Eval {
        metric: Metric,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Start the crowd validation service over the segmented clips.
    Serve {
        /// `token<TAB>annotator_id` lines.
        #[arg(long)]
        tokens: PathBuf,
        /// Label log; defaults to `labels.ndjson` in the work directory.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 10)]
        batch_size: usize,
        /// Clips per batch reserved for second opinions.
        #[arg(long, default_value_t = 3)]
        reannotation_quota: usize,
        #[arg(long, default_value_t = 50)]
        label_flag_threshold: u64,
    },
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Write a small synthetic input set with a ready config.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        languages: usize,
        #[arg(long, default_value_t = 7)]
        videos: usize,
        #[arg(long, default_value_t = 30)]
        articles: usize,
    },
}

#[derive(Subcommand)]
enum PhrasesCommand {
    /// Mine search phrases from corpus files.
    Mine {
        /// `<language>.tsv` corpus files as written by ingest.
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        lid: PathBuf,
        #[arg(long, default_value_t = 50)]
        top_k: usize,
        /// Stop-word list, or a directory of `<language>.txt` lists.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LidCommand {
    /// Train a text identifier from `<language>.tsv` corpus files.
    Train {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify texts given as arguments, or stdin lines.
    Classify {
        #[arg(long)]
        model: PathBuf,
        /// Print whether each text matches this language instead.
        #[arg(long)]
        expected: Option<String>,
        text: Vec<String>,
    },
}

#[derive(Subcommand)]
enum FilterCommand {
    /// Fit the robust classifier and filter the pipeline's segments.
    Fit {
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Score a dataset with a fitted model.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        emb: PathBuf,
        /// `segment_id<TAB>language` lines.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the model's threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Subcommand)]
enum LabelsCommand {
    /// Write the labels in a service log as a label file.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Purity,
    Agreement,
    Error,
    Eer,
    Cavg,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn data(message: impl fmt::Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Self {
            code: e.kind.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

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
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli, extra: Vec<String>) -> Result<Config, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::usage("this command needs --config (or VOXCRAWL_CONFIG)"))?;
    let mut overrides = cli.set.clone();
    overrides.extend(extra);
    Config::load(path, &overrides).map_err(Failure::usage)
}

fn print_reports(reports: &[StageReport]) {
    for r in reports {
        println!("{}: {}", r.stage, r.summary);
        for o in &r.outputs {
            println!("  {}", o.display());
        }
    }
}

fn run_stages(cli: &Cli, from: Stage, to: Stage, extra: Vec<String>) -> CliResult {
    let config = load_config(cli, extra)?;
    let pipeline = Pipeline::new(config)?;
    let reports = pipeline.run(from, to)?;
    print_reports(&reports);
    Ok(())
}

/// Absolute, so that the config file's directory does not apply.
fn absolute(path: &std::path::Path) -> String {
    std::path::absolute(path)
        .unwrap_or_else(|_| path.to_path_buf())
        .display()
        .to_string()
}

fn path_override(key: &str, path: &Option<PathBuf>) -> Option<String> {
    path.as_deref().map(|p| format!("{key}={:?}", absolute(p)))
}

fn dispatch(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Run { from, to } => run_stages(&cli, *from, *to, Vec::new()),
        Command::Ingest { dumps } => {
            let extra = path_override("paths.dumps", dumps).into_iter().collect();
            run_stages(&cli, Stage::Ingest, Stage::Ingest, extra)
        }
        Command::Retrieve { provider } => {
            let extra = provider
                .iter()
                .map(|p| format!("retrieval.provider={:?}", p))
                .collect();
            run_stages(&cli, Stage::Retrieve, Stage::Retrieve, extra)
        }
        Command::Segment { wav_dir, extract } => {
            let mut extra: Vec<String> = path_override("paths.wav_dir", wav_dir).into_iter().collect();
            if *extract {
                extra.push("segment.extract=true".into());
            }
            run_stages(&cli, Stage::Segment, Stage::Segment, extra)
        }
        Command::Embed => run_stages(&cli, Stage::Embed, Stage::Embed, Vec::new()),
        Command::Filter(FilterCommand::Fit { emb, labels }) => {
            let mut extra: Vec<String> = path_override("paths.labels", labels).into_iter().collect();
            if let Some(emb) = emb {
                extra.push(format!("embed.source={:?}", format!("file:{}", absolute(emb))));
                run_stages(&cli, Stage::Embed, Stage::Filter, extra)
            } else {
                run_stages(&cli, Stage::Filter, Stage::Filter, extra)
            }
        }
        Command::Filter(FilterCommand::Apply {
            model,
            emb,
            dataset,
            out,
            threshold,
        }) => tools::filter_apply(model, emb, dataset, out, *threshold),
        Command::Assemble {
            labels,
            seed,
            channel_strict,
        } => {
            let mut extra: Vec<String> = path_override("paths.labels", labels).into_iter().collect();
            extra.extend(seed.map(|s| format!("seed={s}")));
            if *channel_strict {
                extra.push("assembly.channel_strict=true".into());
            }
            run_stages(&cli, Stage::Assemble, Stage::Assemble, extra)
        }
        Command::Phrases(PhrasesCommand::Mine {
            corpus,
            lid,
            top_k,
            stopwords,
            out,
        }) => tools::mine_phrases(corpus, lid, *top_k, stopwords.as_deref(), out.as_deref()),
        Command::Lid(LidCommand::Train { corpus, out }) => {
            let lid_config = match &cli.config {
                Some(_) => load_config(&cli, Vec::new())?.lid,
                None => Default::default(),
            };
            tools::train_lid(corpus, out, &lid_config)
        }
        Command::Lid(LidCommand::Classify { model, expected, text }) => {
            tools::classify(model, expected.as_deref(), text)
        }
        Command::Stats { manifest, split } => tools::manifest_stats(manifest, split.as_deref()),
        Command::Eval { metric, input } => tools::eval(*metric, input),
        Command::Serve {
            tokens,
            log,
            addr,
            batch_size,
            reannotation_quota,
            label_flag_threshold,
        } => {
            let config = load_config(&cli, Vec::new())?;
            let pipeline = Pipeline::new(config)?;
            let config = pipeline.config();
            let wav_dir = config.resolve(&config.paths.wav_dir);
            let catalog = Catalog::from_manifests(&pipeline.work_path(SEGMENTS), &pipeline.work_path(VIDEOS), &wav_dir)
                .map_err(Failure::data)?;
            let tokens = TokenRegistry::open(tokens).map_err(Failure::data)?;
            let log = log.clone().unwrap_or_else(|| config.work_dir().join("labels.ndjson"));
            let store = LabelStore::open(&log).map_err(Failure::data)?;
            let service = ValidationService::new(
                catalog,
                tokens,
                store,
                ServiceConfig {
                    batch_size: *batch_size,
                    reannotation_quota: *reannotation_quota,
                    seed: config.seed,
                    label_flag_threshold: *label_flag_threshold,
                },
            );
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(Failure::data)?;
            eprintln!("serving on http://{addr}, labels in {}", log.display());
            runtime
                .block_on(voxcrawl_service::serve(Arc::new(service), *addr))
                .map_err(Failure::data)
        }
        Command::Labels(LabelsCommand::Export { log, out }) => tools::export_labels(log, out.as_deref()),
        Command::Fixture {
            out,
            seed,
            languages,
            videos,
            articles,
        } => {
            let spec = FixtureSpec {
                seed: *seed,
                languages: *languages,
                videos_per_language: *videos,
                articles_per_language: *articles,
            };
            let summary = write_fixture(out, &spec).map_err(Failure::data)?;
            println!("config\t{}", summary.config_path.display());
            println!("languages\t{}", summary.languages.len());
            println!("videos\t{}", summary.videos);
            println!("segments\t{}", summary.segments);
            println!("labels\t{}", summary.labels);
            Ok(())
        }
    }
}
