//! Command-line front end. [`run_cli`] is what the binary calls; it never
//! exits the process itself so tests can drive it in-process.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::client::{BackendClient, BackendEndpoint, Role};
use crate::corpus::{load_corpus, load_results, write_corpus, CorpusError};
use crate::metrics::{
    evaluate, load_gold, load_judgments, load_scores, render_report, ReportFormat, ReportOptions, TiePolicy,
};
use crate::mockserve::{serve_mock, serve_mock_on, MockBehavior, MockServer};
use crate::pipeline::{Pipeline, PipelineConfig, RunOptions, MOCK_URL};
use crate::synthetic;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_INVALID_CORPUS: i32 = 3;

pub const CONFIG_ENV: &str = "TRILINGUA_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "trilingua", version, about = "Translate-generate-translate pipeline for multilingual dialogues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Plain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TiesArg {
    Loss,
    Exclude,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline over a corpus.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        /// Pipeline config (TOML or JSON). Falls back to $TRILINGUA_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stop after this many records (checkpoint kept, no final output).
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Score predictions against references.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Embedding backend base URL, or "mock" for the built-in hash embedder.
        #[arg(long)]
        embed_endpoint: Option<String>,
        /// Full report (per record and aggregate) as JSON.
        #[arg(long)]
        out: PathBuf,
        /// Aggregate rows as JSON lines, readable by `report --scores`.
        #[arg(long)]
        scores_out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Render win-rate and metric tables.
    Report {
        #[arg(long)]
        judgments: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[arg(long, value_enum, default_value = "loss")]
        ties: TiesArg,
    },
    /// Serve the deterministic mock backend.
    ServeMock {
        /// Preset name (identity, tag_prefix) or a TOML/JSON behavior file.
        #[arg(long, default_value = "identity")]
        behavior: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Check a corpus file without running anything.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the demo corpus and sample judgment/score files.
    DemoData {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn runtime(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }

    fn usage(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

fn corpus_failure(e: CorpusError) -> Failure {
    match e {
        CorpusError::Io { .. } => Failure::runtime(e),
        other => Failure {
            code: EXIT_INVALID_CORPUS,
            message: other.to_string(),
        },
    }
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(Failure::runtime)?;
    writeln!(out, "{text}").map_err(Failure::runtime)
}

fn load_behavior(name: &str) -> Result<MockBehavior, Failure> {
    if let Some(b) = MockBehavior::preset(name) {
        return Ok(b);
    }
    let path = Path::new(name);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("behavior {name:?} is neither a preset nor a readable file: {e}")))?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::usage(format!("{name}: {e}")))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Run {
            corpus,
            config,
            out: out_path,
            parallelism,
            checkpoint,
            stop_after,
            json,
        } => {
            let config_path = config
                .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
                .ok_or_else(|| Failure::usage(format!("--config is required (or set {CONFIG_ENV})")))?;
            let mut config = PipelineConfig::from_file(&config_path).map_err(Failure::usage)?;
            if let Some(p) = parallelism {
                config.parallelism = p;
            }
            if let Some(c) = checkpoint {
                config.checkpoint_path = Some(c);
            }
            let records = load_corpus(&corpus).map_err(corpus_failure)?;
            let _mock: Option<MockServer> = if config.uses_mock() {
                let server =
                    serve_mock(config.mock.clone().unwrap_or_default(), 0).map_err(Failure::runtime)?;
                config.bind_mock(&server.base_url());
                Some(server)
            } else {
                None
            };
            let pipeline = Pipeline::new(config).map_err(Failure::usage)?;
            let summary = pipeline
                .run_records(&records, &out_path, RunOptions { stop_after })
                .map_err(Failure::runtime)?;
            if json {
                print_json(out, &summary)?;
            } else {
                writeln!(
                    out,
                    "{} records: {} processed, {} skipped (checkpoint), {} failed{}",
                    summary.total,
                    summary.processed,
                    summary.skipped,
                    summary.failed,
                    if summary.interrupted { ", stopped early" } else { "" }
                )
                .map_err(Failure::runtime)?;
            }
            Ok(())
        }
        Command::Eval {
            pred,
            gold,
            embed_endpoint,
            out: out_path,
            scores_out,
            json,
        } => {
            let predictions = load_results(&pred).map_err(Failure::runtime)?;
            let references = load_gold(&gold).map_err(Failure::runtime)?;
            let mut _mock = None;
            let embedder = match embed_endpoint.as_deref() {
                None => None,
                Some(MOCK_URL) => {
                    let server = serve_mock(MockBehavior::default(), 0).map_err(Failure::runtime)?;
                    let url = server.base_url();
                    _mock = Some(server);
                    Some(BackendClient::new(BackendEndpoint::new(Role::Embed, url)))
                }
                Some(url) => {
                    let endpoint = BackendEndpoint::new(Role::Embed, url);
                    endpoint.validate().map_err(Failure::usage)?;
                    Some(BackendClient::new(endpoint))
                }
            };
            let report = evaluate(&predictions, &references, embedder.as_ref()).map_err(Failure::runtime)?;
            let text = serde_json::to_string_pretty(&report).map_err(Failure::runtime)?;
            std::fs::write(&out_path, text + "\n").map_err(Failure::runtime)?;
            if let Some(path) = scores_out {
                std::fs::write(&path, synthetic::to_jsonl(&report.rows)).map_err(Failure::runtime)?;
            }
            if json {
                print_json(out, &report.rows)?;
            } else {
                for row in &report.rows {
                    let bert = row.bert_f.map_or_else(|| "—".to_string(), |b| format!("{b:.3}"));
                    writeln!(out, "{} {}: F1 {:.3} / BERT {}", row.language, row.task, row.f1, bert)
                        .map_err(Failure::runtime)?;
                }
            }
            Ok(())
        }
        Command::Report {
            judgments,
            scores,
            format,
            ties,
        } => {
            if judgments.is_none() && scores.is_none() {
                return Err(Failure::usage("report needs --judgments and/or --scores"));
            }
            let judgments = judgments
                .map(load_judgments)
                .transpose()
                .map_err(Failure::runtime)?
                .unwrap_or_default();
            let scores = scores.map(load_scores).transpose().map_err(Failure::runtime)?.unwrap_or_default();
            let options = ReportOptions {
                format: match format {
                    FormatArg::Markdown => ReportFormat::Markdown,
                    FormatArg::Plain => ReportFormat::Plain,
                },
                ties: match ties {
                    TiesArg::Loss => TiePolicy::Loss,
                    TiesArg::Exclude => TiePolicy::Exclude,
                },
            };
            write!(out, "{}", render_report(&judgments, &scores, options)).map_err(Failure::runtime)
        }
        Command::ServeMock { behavior, port, host } => {
            let behavior = load_behavior(&behavior)?;
            let server = serve_mock_on(behavior, &format!("{host}:{port}")).map_err(Failure::runtime)?;
            writeln!(out, "listening on {}", server.base_url()).map_err(Failure::runtime)?;
            out.flush().map_err(Failure::runtime)?;
            server.wait();
            Ok(())
        }
        Command::Validate { corpus, json } => {
            let records = load_corpus(&corpus).map_err(corpus_failure)?;
            let warnings: Vec<String> = records
                .iter()
                .flat_map(|r| r.warnings().into_iter().map(move |w| format!("{}: {}", r.id, w.message)))
                .collect();
            if json {
                print_json(out, &serde_json::json!({"records": records.len(), "warnings": warnings}))?;
            } else {
                for w in &warnings {
                    writeln!(out, "warning: {w}").map_err(Failure::runtime)?;
                }
                writeln!(out, "{} records valid", records.len()).map_err(Failure::runtime)?;
            }
            Ok(())
        }
        Command::DemoData { out_dir } => {
            std::fs::create_dir_all(&out_dir).map_err(Failure::runtime)?;
            write_corpus(out_dir.join("demo_corpus.jsonl"), &synthetic::default_demo_corpus())
                .map_err(Failure::runtime)?;
            std::fs::write(out_dir.join("sample_judgments.jsonl"), synthetic::to_jsonl(&synthetic::sample_judgments()))
                .map_err(Failure::runtime)?;
            std::fs::write(out_dir.join("sample_scores.jsonl"), synthetic::to_jsonl(&synthetic::sample_scores()))
                .map_err(Failure::runtime)?;
            writeln!(out, "wrote demo data to {}", out_dir.display()).map_err(Failure::runtime)
        }
    }
}
