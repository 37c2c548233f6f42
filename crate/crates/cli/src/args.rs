use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use normloom::corpus::Language;
use normloom::llm::BackendMode;

#[derive(Debug, Parser)]
#[command(name = "normloom", version, about = "Staged dialogue synthesis with human review gates")]
pub struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when absent.
    #[arg(long, env = "NORMLOOM_CONFIG", global = true)]
    pub config: Option<PathBuf>,

    /// Store directory; created when missing.
    #[arg(long, env = "NORMLOOM_STORE", default_value = "store", global = true)]
    pub store: PathBuf,

    /// Overrides the backend mode from the configuration.
    #[arg(long, value_enum, global = true)]
    pub mode: Option<ModeArg>,

    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,

    /// Restricts reports to one language. Both by default.
    #[arg(long, value_enum, global = true)]
    pub lang: Option<LangArg>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load expert norms from a JSON-Lines file. All lines are checked before anything is written.
    Seed { file: PathBuf },
    /// Plan and run every unblocked stage until nothing new can run.
    Advance {
        /// Also augment and transfer norms.
        #[arg(long)]
        with_norms: bool,
    },
    /// Run the review service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Reviewer tokens (TOML with `[[reviewer]]` tables of token, id and role).
        #[arg(long, env = "NORMLOOM_TOKENS")]
        tokens: PathBuf,
    },
    /// Print a metrics report.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
        /// Topic count for the topics report.
        #[arg(long, default_value_t = 30)]
        topics: usize,
        /// Tokens listed per topic.
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Gibbs sweeps for the topics report.
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write accepted gold label sets and agreement statistics as JSON.
    ExportGold {
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace speaker names with "Speaker A", "Speaker B", ...
        #[arg(long)]
        deidentify: bool,
    },
    /// Inspect and resolve quarantined jobs.
    Quarantine {
        #[command(subcommand)]
        action: QuarantineAction,
    },
    /// Generate the single-prompt comparison corpus used by the diversity report.
    Baseline,
}

#[derive(Debug, Subcommand)]
pub enum QuarantineAction {
    List,
    /// Re-run the job's prompt under a fresh seed tag.
    Retry {
        job: String,
        #[arg(long)]
        seed_tag: Option<String>,
    },
    /// Replace the job's completion with an operator-edited text and re-parse it.
    Edit {
        job: String,
        /// File holding the edited completion; `-` reads stdin.
        #[arg(long)]
        completion: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Diversity,
    Topics,
    Agreement,
    Detection,
    Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Record,
    Replay,
}

impl From<ModeArg> for BackendMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Record => BackendMode::Record,
            ModeArg::Replay => BackendMode::Replay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LangArg {
    Zh,
    En,
}

impl From<LangArg> for Language {
    fn from(l: LangArg) -> Self {
        match l {
            LangArg::Zh => Language::Zh,
            LangArg::En => Language::En,
        }
    }
}

impl Cli {
    pub fn languages(&self) -> Vec<Language> {
        match self.lang {
            Some(l) => vec![l.into()],
            None => vec![Language::Zh, Language::En],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_follow_the_subcommand() {
        let cli = Cli::try_parse_from(["normloom", "report", "topics", "--lang", "en", "--format", "json", "--topics", "5"]).unwrap();
        assert_eq!(cli.format, Format::Json);
        assert_eq!(cli.languages(), vec![Language::En]);
        assert!(matches!(cli.command, Command::Report { kind: ReportKind::Topics, topics: 5, top: 10, .. }));
    }
}
