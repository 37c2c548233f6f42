//! Dialogues generated straight from a norm, skipping scenarios and situations. Used only as
//! the comparison corpus for diversity reports; never enters the reviewed store.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::PipelineConfig;
use crate::corpus::{Language, Polarity, RecordId, SocialNorm, Store, Turn};
use crate::llm::{bindings, parse_dialogue, polarity_instruction, render_prompt, CompletionRequest, Gateway, RenderError, TemplateId};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Decode { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineDialogue {
    pub norm_id: RecordId,
    pub polarity: Polarity,
    pub language: Language,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaselineRun {
    pub dialogues: Vec<BaselineDialogue>,
    /// (norm, polarity, reason) for completions that could not be used.
    pub failures: Vec<(RecordId, Polarity, String)>,
}

/// One simple-prompt dialogue per accepted norm and polarity, in store order.
pub fn generate_simple_baseline(store: &Store, gateway: &Gateway, config: &PipelineConfig) -> Result<BaselineRun, BaselineError> {
    let norms: Vec<SocialNorm> = store
        .norms()
        .into_iter()
        .filter(|n| n.status.is_accepted() && config.cultures.contains(&n.culture))
        .collect();
    let mut run = BaselineRun::default();
    for n in norms {
        let language = n.culture.language();
        for polarity in Polarity::BOTH {
            let prompt = render_prompt(
                TemplateId::simple_dialogue_for(language),
                &bindings([
                    ("polarity_instruction", polarity_instruction(language, polarity)),
                    ("norm", n.description.as_str()),
                ]),
            )?;
            let mut req = CompletionRequest::new(prompt, config.generation_temperature, format!("simple|{}|{}", n.id, polarity.as_str()));
            req.max_tokens = config.max_tokens;
            let parsed = gateway
                .complete(&req)
                .map_err(|e| e.to_string())
                .and_then(|raw| parse_dialogue(&raw.text, language).map_err(|e| e.to_string()));
            match parsed {
                Ok(turns) => run.dialogues.push(BaselineDialogue { norm_id: n.id.clone(), polarity, language, turns }),
                Err(reason) => run.failures.push((n.id.clone(), polarity, reason)),
            }
        }
    }
    Ok(run)
}

pub fn write_baseline(path: &Path, dialogues: &[BaselineDialogue]) -> Result<(), BaselineError> {
    let io = |source| BaselineError::Io { path: path.display().to_string(), source };
    let mut out = fs::File::create(path).map_err(io)?;
    for d in dialogues {
        let line = serde_json::to_string(d).expect("baseline dialogue serializes");
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn read_baseline(path: &Path) -> Result<Vec<BaselineDialogue>, BaselineError> {
    let text = fs::read_to_string(path).map_err(|source| BaselineError::Io { path: path.display().to_string(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BaselineError::Decode {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline_simple.jsonl");
        let d = BaselineDialogue {
            norm_id: "norm-1".into(),
            polarity: Polarity::Violation,
            language: Language::En,
            turns: parse_dialogue("Dialogue\nA: hi\nB: bye\n[END]", Language::En).unwrap(),
        };
        write_baseline(&path, &[d.clone(), d.clone()]).unwrap();
        assert_eq!(read_baseline(&path).unwrap(), vec![d.clone(), d]);
        fs::write(&path, "{}\n").unwrap();
        assert!(matches!(read_baseline(&path), Err(BaselineError::Decode { line: 1, .. })));
    }
}
