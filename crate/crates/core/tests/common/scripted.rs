//! Scripted chat model, seed norms and a review shortcut. Shared by test and bench targets.
#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use normloom::corpus::*;
use normloom::llm::{BackendError, ChatBackend, CompletionRequest};
use normloom::review::{ReviewDesk, Reviewer};

pub const EPOCH: u64 = 1_700_000_000_000;

pub fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

const SETTINGS: [&str; 6] = ["in a tea house", "at a train station", "in an office", "at a wedding", "in a classroom", "at a market"];
const PEOPLE: [&str; 6] = ["two old friends", "a manager and an intern", "neighbors", "a vendor and a buyer", "classmates", "cousins"];
const ZH_NAMES: [(&str, &str); 4] = [("王明", "李华"), ("张伟", "刘芳"), ("陈静", "赵磊"), ("杨洋", "周敏")];
const EN_NAMES: [(&str, &str); 4] = [("Tom", "Ann"), ("Mike", "Sara"), ("Lucy", "Ben"), ("Omar", "Jill")];
const ZH_WORDS: [&str; 12] = ["谢谢", "您好", "不好意思", "辛苦了", "慢走", "请坐", "没关系", "太客气了", "麻烦您", "真棒", "改天见", "喝茶"];
const EN_WORDS: [&str; 12] = ["thanks", "hello", "sorry", "great", "see you", "please", "no worries", "appreciate", "welcome", "nice", "later", "cheers"];

fn count_after(prompt: &str, marker: &str) -> Option<usize> {
    let at = prompt.rfind(marker)? + marker.len();
    prompt[at..].split_whitespace().next()?.parse().ok()
}

fn last_query_line<'a>(prompt: &'a str, key: &str) -> &'a str {
    prompt.rfind(key).map_or("", |i| prompt[i + key.len()..].lines().next().unwrap_or("").trim())
}

/// Deterministic stand-in for the chat model. Recognizes each template by its wording and
/// produces a well-formed completion derived from the prompt text.
#[derive(Default)]
pub struct ScriptedBackend {
    pub calls: AtomicUsize,
    /// Items to drop from list completions, to provoke shortfalls.
    pub short_by: usize,
}

impl ScriptedBackend {
    pub fn respond(&self, prompt: &str) -> String {
        let h = fnv(prompt);
        if prompt.contains("Summarize the Norm in 5 words") {
            return label_completion(prompt, h);
        }
        if prompt.contains("American Culture Norm:") {
            let src = last_query_line(prompt, "Chinese Culture Norm:");
            return format!(
                "In American culture people also handle this situation directly, saying \"thank you\" or \"I appreciate it\" when {} (variant {}).",
                src.chars().take(24).collect::<String>(),
                h % 97
            );
        }
        if prompt.contains("new conversational social norms") {
            let n = count_after(prompt, "describe").unwrap_or(10).saturating_sub(self.short_by);
            return (1..=n)
                .map(|i| format!("{i}. 在正式场合应当礼貌回应，说“{}”以示尊重，规则{}-{}。\n", ZH_WORDS[(h as usize + i) % 12], h % 1000, i))
                .collect();
        }
        if prompt.contains("scenarios that a conversation") {
            let n = count_after(prompt, "imagine").unwrap_or(10).saturating_sub(self.short_by);
            let mut out = String::from("Scenario:\n");
            for i in 0..n {
                let k = (h as usize).wrapping_add(i * 7);
                out.push_str(&format!("{}. {}; {}\n", i + 1, SETTINGS[k % 6], PEOPLE[(k / 6) % 6]));
            }
            return out;
        }
        if prompt.contains("New Situation") {
            let scenario = last_query_line(prompt, "Situation:");
            return format!(
                "New Situation: During a busy afternoon {scenario} meet after a long time apart, and one of them must respond to the other in a way the norm describes. Detail {}.",
                h % 1009
            );
        }
        let zh = prompt.contains("对话脚本");
        let (a, b) = if zh { ZH_NAMES[(h % 4) as usize] } else { EN_NAMES[(h % 4) as usize] };
        let words = if zh { &ZH_WORDS } else { &EN_WORDS };
        let turns = 4 + (h % 3) as usize;
        let mut out = String::from(if zh { "对话\n" } else { "Dialogue\n" });
        for t in 0..turns {
            let speaker = if t % 2 == 0 { a } else { b };
            let w1 = words[(h as usize / 7 + t * 5) % 12];
            let w2 = words[(h as usize / 11 + t * 3) % 12];
            let sep = if zh { "，" } else { ", " };
            out.push_str(&format!("{speaker}: {w1}{sep}{w2} {t}\n"));
        }
        out.push_str(if zh { "[结束]" } else { "[END]" });
        out
    }
}

fn label_completion(prompt: &str, h: u64) -> String {
    let dialogue = prompt.rsplit("\nDialogue:\n").next().unwrap_or("");
    let lines: Vec<&str> = dialogue.lines().filter(|l| l.contains(": ")).collect();
    let first = lines.first().and_then(|l| l.split(": ").next()).unwrap_or("A");
    let mut out = format!("Norm Action: respond politely\nActor of the Norm:\n{first}: the polite one\n\nDialogue:\n");
    for (i, l) in lines.iter().enumerate() {
        let label = match (h as usize + i) % 3 {
            0 => "Adhered",
            1 => "Not Relevant",
            _ if i % 2 == 0 => "Violated",
            _ => "Not Relevant",
        };
        out.push_str(&format!("({l}): {label} | turn {i} judged against the norm\n"));
    }
    out
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn call(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.respond(&req.prompt))
    }
}

pub fn seed_norm(category: NormCategory, i: usize) -> SocialNorm {
    SocialNorm {
        id: RecordId::unassigned(),
        culture: Culture::Chinese,
        category,
        description: format!("在{}时，晚辈应当先开口，说“{}”表示礼貌，第{i}条。", category.display_name(), ZH_WORDS[i % 12]),
        verbal_evidence: vec![ZH_WORDS[i % 12].to_string()],
        origin: NormOrigin::ExpertSeed,
        source_norm_id: None,
        status: LifecycleStatus { state: LifecycleState::Accepted, decided_by: None },
    }
}

/// `n` accepted expert seeds, one per category in order.
pub fn seed(store: &Store, n: usize) -> Vec<RecordId> {
    let norms = (0..n).map(|i| Record::Norm(seed_norm(NormCategory::ALL[i % 10], i))).collect();
    store.append_all(norms).unwrap()
}

/// Fills every open task of `kind` with unanimous verdicts straight through the desk.
pub fn decide_open(desk: &ReviewDesk, kind: normloom::review::ReviewKind, accept: bool) -> usize {
    use normloom::review::{ReviewKind, TaskState};
    let tasks: Vec<_> = desk
        .store()
        .review_tasks()
        .into_iter()
        .filter(|t| t.kind == kind && t.state == TaskState::Open)
        .collect();
    for t in &tasks {
        let body = match kind {
            ReviewKind::NormVerification => serde_json::json!({
                "factually_correct": accept, "in_category": accept, "culture_specific": accept, "detailed": accept
            }),
            ReviewKind::SituationFaithfulness => serde_json::json!({"entails": accept}),
            ReviewKind::DialogueQuality => serde_json::json!({
                "on_topic": accept, "naturalness": 4, "nativeness": 4, "coherence": 4, "interestingness": 3
            }),
            ReviewKind::LabelVerification => {
                let d = desk.store().annotation(&t.item_id).unwrap();
                serde_json::json!({"turns": vec!["confirm"; d.labels.len()]})
            }
        };
        let have = desk.verdicts_for(&t.id).len();
        for i in have..t.required_verdicts {
            desk.submit_verdict(&Reviewer::annotator(format!("auto{i}")), &t.id, body.clone()).unwrap();
        }
    }
    tasks.len()
}
