//! Operator commands over a normloom store.
//!
//! Exit codes: 0 clean, 1 when a job or baseline completion failed, 2 for configuration
//! and input errors.

pub mod args;
pub mod report;
pub mod seed;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use normloom::corpus::{Store, StoreError, SystemClock};
use normloom::llm::{BackendMode, ChatBackend, CompletionCache, Gateway, HttpBackend};
use normloom::metrics::MetricError;
use normloom::pipeline::{
    generate_simple_baseline, write_baseline, BaselineError, ConfigError, JobOutcome, JobState, Pipeline,
    PipelineConfig, PipelineError,
};
use normloom::review::{Pseudonyms, Quotas, ReviewDesk, ReviewKind, Reviewer, Role};
use serde::Deserialize;
use thiserror::Error;

use args::{Cli, Command, Format, QuarantineAction};
use report::ReportOptions;
use seed::SeedError;

/// File name of the simple-prompt corpus inside the store directory.
pub const BASELINE_FILE: &str = "baseline_simple.jsonl";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("tokens file {path}: {message}")]
    Tokens { path: PathBuf, message: String },
    #[error("backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Tokens { .. } | CliError::Backend(_) | CliError::Seed(_) => 2,
            _ => 1,
        }
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }
}

/// Configuration with command-line overrides applied, validated before any work.
pub fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(mode) = cli.mode {
        config.mode = mode.into();
    }
    if let Command::Advance { with_norms: true } = cli.command {
        config.stage0_enabled = true;
    }
    config.validate()?;
    Ok(config)
}

fn open_store(dir: &Path) -> Result<Arc<Store>, CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    Ok(Arc::new(Store::open(dir)?))
}

fn quotas(config: &PipelineConfig) -> Quotas {
    let mut q = Quotas::uniform(config.reviewers_per_item);
    q.0.insert(ReviewKind::LabelVerification, config.label_reviewers);
    q
}

fn gateway(config: &PipelineConfig, store_dir: &Path) -> Result<Gateway, CliError> {
    let cache_path = config.cache_path.clone().unwrap_or_else(|| store_dir.join("completions.jsonl"));
    let cache = CompletionCache::open(&cache_path).map_err(CliError::io(&cache_path))?;
    Ok(match config.mode {
        BackendMode::Replay => Gateway::replay(cache),
        BackendMode::Record => {
            let url = config.backend_url.clone().ok_or(ConfigError::NoBackendUrl)?;
            let key = std::env::var(&config.api_key_env).ok();
            let backend = HttpBackend::new(url, config.model.clone(), key, Duration::from_secs(config.timeout_secs))
                .map_err(|e| CliError::Backend(e.to_string()))?;
            Gateway::new(Some(Arc::new(backend) as Arc<dyn ChatBackend>), cache, BackendMode::Record)
        }
    })
}

struct Context {
    config: PipelineConfig,
    store_dir: PathBuf,
    desk: Arc<ReviewDesk>,
}

impl Context {
    fn open(cli: &Cli) -> Result<Self, CliError> {
        let config = load_config(cli)?;
        let store = open_store(&cli.store)?;
        let desk = Arc::new(ReviewDesk::new(store, Arc::new(SystemClock), quotas(&config)));
        Ok(Self { config, store_dir: cli.store.clone(), desk })
    }

    fn store(&self) -> &Arc<Store> {
        self.desk.store()
    }

    fn gateway(&self) -> Result<Gateway, CliError> {
        gateway(&self.config, &self.store_dir)
    }

    fn pipeline(&self) -> Result<Pipeline, CliError> {
        Ok(Pipeline::new(self.store().clone(), Arc::new(self.gateway()?), self.desk.clone(), self.config.clone())?)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TokensFile {
    reviewer: Vec<TokenEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenEntry {
    token: String,
    id: String,
    role: Role,
}

/// Bearer tokens for the review service.
pub fn load_tokens(path: &Path) -> Result<HashMap<String, Reviewer>, CliError> {
    let bad = |message: String| CliError::Tokens { path: path.to_path_buf(), message };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let file: TokensFile = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let mut tokens = HashMap::new();
    for e in file.reviewer {
        if e.token.trim().is_empty() {
            return Err(bad(format!("reviewer {} has an empty token", e.id)));
        }
        if tokens.insert(e.token, Reviewer { id: e.id.clone(), role: e.role }).is_some() {
            return Err(bad(format!("token of reviewer {} is not unique", e.id)));
        }
    }
    if tokens.is_empty() {
        return Err(bad("no reviewers".into()));
    }
    Ok(tokens)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(CliError::io(Path::new("<stdout>")))
}

fn outcome_text(o: &JobOutcome) -> String {
    let mut s = format!("{} {} {:?}", o.stage, o.job_id, o.state);
    if !o.output_ids.is_empty() {
        s += &format!(" outputs={}", o.output_ids.len());
    }
    if let Some(e) = &o.error {
        s += &format!(": {e}");
    }
    for w in &o.warnings {
        s += &format!("\n  warning: {w}");
    }
    s + "\n"
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("values serialize") + "\n"
}

/// Runs one command, writing its output to `out`. Returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    let ctx = Context::open(cli)?;
    match &cli.command {
        Command::Seed { file } => {
            let text = std::fs::read_to_string(file).map_err(CliError::io(file))?;
            let outcome = seed::load_seeds(ctx.store(), seed::parse_seed_file(&text)?)?;
            let text = match cli.format {
                Format::Text => format!("added {} seed norms, skipped {} already present\n", outcome.added, outcome.skipped),
                Format::Json => json(&serde_json::json!({"added": outcome.added, "skipped": outcome.skipped})),
            };
            emit(out, &text)?;
            Ok(0)
        }
        Command::Advance { .. } => {
            let report = ctx.pipeline()?.advance();
            let text = match cli.format {
                Format::Text => report.to_string(),
                Format::Json => json(&report),
            };
            emit(out, &text)?;
            Ok(u8::from(report.has_failures()))
        }
        Command::Serve { addr, tokens } => {
            let tokens = load_tokens(tokens)?;
            let runtime = tokio::runtime::Runtime::new().map_err(CliError::io(Path::new("<runtime>")))?;
            let addr_path = PathBuf::from(addr);
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr.as_str()).await.map_err(CliError::io(&addr_path))?;
                let bound = listener.local_addr().map_err(CliError::io(&addr_path))?;
                emit(out, &format!("review service listening on http://{bound}\n"))?;
                out.flush().map_err(CliError::io(&addr_path))?;
                normloom::review::serve(listener, normloom::review::router(ctx.desk.clone(), tokens))
                    .await
                    .map_err(CliError::io(&addr_path))
            })?;
            Ok(0)
        }
        Command::Report { kind, topics, top, iterations, seed } => {
            let opts = ReportOptions {
                languages: cli.languages(),
                topics: *topics,
                top: *top,
                iterations: *iterations,
                seed: *seed,
            };
            let report = report::build(*kind, &ctx.desk, &ctx.store_dir.join(BASELINE_FILE), &opts)?;
            let text = match cli.format {
                Format::Text => report.to_text(),
                Format::Json => report.to_json() + "\n",
            };
            emit(out, &text)?;
            Ok(0)
        }
        Command::ExportGold { out: path, deidentify } => {
            let export = ctx.desk.export_gold();
            let mut value = serde_json::to_value(&export).expect("export serializes");
            if *deidentify {
                let gold = value["gold"].as_array_mut().expect("gold is a list");
                for (set, record) in gold.iter_mut().zip(&export.gold) {
                    let names = match ctx.store().dialogue(&record.dialogue_id) {
                        Some(d) => Pseudonyms::new(d.speakers()),
                        None => Pseudonyms::new(record.norm_actors.iter().map(String::as_str)),
                    };
                    names.apply_json(set);
                }
            }
            let body = json(&value);
            match path {
                Some(p) => {
                    std::fs::write(p, &body).map_err(CliError::io(p))?;
                    emit(out, &format!("wrote {} gold label sets to {}\n", export.gold.len(), p.display()))?;
                }
                None => emit(out, &body)?,
            }
            Ok(0)
        }
        Command::Quarantine { action } => {
            let pipeline = ctx.pipeline()?;
            let outcome = match action {
                QuarantineAction::List => {
                    let jobs = pipeline.quarantined();
                    let text = match cli.format {
                        Format::Json => json(&jobs),
                        Format::Text if jobs.is_empty() => "no quarantined jobs\n".to_string(),
                        Format::Text => jobs
                            .iter()
                            .map(|j| {
                                let raw = j.raw_completion.as_deref().unwrap_or("").replace('\n', "\\n");
                                let raw: String = raw.chars().take(160).collect();
                                format!("{} {} {}\n  completion: {raw}\n", j.id, j.stage, j.error.as_deref().unwrap_or(""))
                            })
                            .collect(),
                    };
                    emit(out, &text)?;
                    return Ok(0);
                }
                QuarantineAction::Retry { job, seed_tag } => pipeline.retry_quarantined(&job.as_str().into(), seed_tag.clone())?,
                QuarantineAction::Edit { job, completion } => {
                    let text = if completion.as_os_str() == "-" {
                        let mut s = String::new();
                        std::io::stdin().read_to_string(&mut s).map_err(CliError::io(completion))?;
                        s
                    } else {
                        std::fs::read_to_string(completion).map_err(CliError::io(completion))?
                    };
                    pipeline.edit_quarantined(&job.as_str().into(), &text)?
                }
            };
            let text = match cli.format {
                Format::Text => outcome_text(&outcome),
                Format::Json => json(&outcome),
            };
            emit(out, &text)?;
            Ok(u8::from(outcome.state != JobState::Done))
        }
        Command::Baseline => {
            let run = generate_simple_baseline(ctx.store(), &ctx.gateway()?, &ctx.config)?;
            let path = ctx.store_dir.join(BASELINE_FILE);
            write_baseline(&path, &run.dialogues)?;
            let text = match cli.format {
                Format::Text => {
                    let mut s = format!("wrote {} dialogues to {}\n", run.dialogues.len(), path.display());
                    for (norm, polarity, reason) in &run.failures {
                        s += &format!("  failed {norm} {}: {reason}\n", polarity.as_str());
                    }
                    s
                }
                Format::Json => json(&serde_json::json!({
                    "dialogues": run.dialogues.len(),
                    "path": path,
                    "failures": run.failures.iter().map(|(n, p, r)| serde_json::json!({"norm_id": n, "polarity": p, "reason": r})).collect::<Vec<_>>(),
                })),
            };
            emit(out, &text)?;
            Ok(u8::from(!run.failures.is_empty()))
        }
    }
}
