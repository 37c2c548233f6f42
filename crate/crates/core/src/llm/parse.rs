//! Parsers for stage completions.
//!
//! Lenient about whitespace, numbering style and full-width punctuation; strict about
//! structure (field counts, label vocabulary, turn alignment). Every parser either returns
//! records that pass [`validate_record`](crate::corpus::validate_record) or a typed error.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::corpus::{
    AnnotationSource, Culture, Dialogue, Language, LifecycleStatus, NormCategory, NormOrigin,
    ObservanceLabel, RecordId, Scenario, SocialNorm, Turn, TurnAnnotationSet, TurnLabel,
    MAX_NORM_ACTION_WORDS,
};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no scenario lines of the form \"N. setting; participants\" in completion")]
    NoScenarios { raw: String },
    #[error("situation body is empty")]
    EmptySituation,
    #[error("no \"speaker: utterance\" lines in completion")]
    NoTurns,
    #[error("dialogue has {found} turns, at least 2 required")]
    TooFewTurns { found: usize },
    #[error("missing \"Norm Action:\" line")]
    MissingNormAction,
    #[error("norm action {0:?} is empty or longer than {MAX_NORM_ACTION_WORDS} words")]
    BadNormAction(String),
    #[error("norm actor {0:?} is not a speaker of the dialogue")]
    UnknownActor(String),
    #[error("{found} labeled turns for a {expected}-turn dialogue")]
    LabelCountMismatch { expected: usize, found: usize },
    #[error("line {line}: unknown label {token:?}")]
    UnknownLabel { line: usize, token: String },
    #[error("line {line}: label has no explanation")]
    MissingExplanation { line: usize },
    #[error("no norms found in completion")]
    NoNorms,
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

fn scenario_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(
        &RE,
        r"^\s*(?:(?i:scenarios?)\s*[:：]\s*)?[(（]?\d{1,3}\s*[.)）、．:：]\s*(?P<body>.+?)\s*$",
    )
}

/// Parses a numbered `N. setting; participants` list. Lines that do not match, or that do
/// not split into exactly two non-empty fields, are skipped.
pub fn parse_scenario_list(raw: &str, norm_id: &RecordId) -> Result<Vec<Scenario>, ParseError> {
    let mut out = Vec::new();
    for line in raw.lines() {
        let line = line.trim_end_matches('\r');
        let Some(caps) = scenario_re().captures(line) else {
            continue;
        };
        let fields: Vec<&str> = caps["body"].split([';', '；']).map(str::trim).collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            continue;
        }
        out.push(Scenario {
            id: RecordId::unassigned(),
            norm_id: norm_id.clone(),
            setting: fields[0].to_owned(),
            participants: fields[1].to_owned(),
            raw_line: line.to_owned(),
        });
    }
    if out.is_empty() {
        return Err(ParseError::NoScenarios { raw: raw.to_owned() });
    }
    Ok(out)
}

/// Strips a leading "New Situation:" / "New Situation." marker.
pub fn parse_situation(raw: &str) -> Result<String, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let marker = re(&RE, r"^(?i:new\s+situation)\s*[:：.。]?");
    let trimmed = raw.trim();
    let body = match marker.find(trimmed) {
        Some(m) => trimmed[m.end()..].trim(),
        None => trimmed,
    };
    if body.is_empty() {
        return Err(ParseError::EmptySituation);
    }
    Ok(body.to_owned())
}

/// Longest speaker label accepted before a colon, in characters.
const MAX_SPEAKER_CHARS: usize = 24;

fn dialogue_header(language: Language) -> &'static str {
    match language {
        Language::Zh => "对话",
        Language::En => "dialogue",
    }
}

fn terminator_re(language: Language) -> &'static Regex {
    static ZH: OnceLock<Regex> = OnceLock::new();
    static EN: OnceLock<Regex> = OnceLock::new();
    match language {
        Language::Zh => re(&ZH, r"[\[【［]\s*结束\s*[\]】］]"),
        Language::En => re(&EN, r"(?i)[\[【［]\s*end\s*[\]】］]"),
    }
}

fn split_speaker(line: &str) -> Option<(&str, &str)> {
    let pos = line.find([':', '：'])?;
    let speaker = line[..pos].trim();
    let colon_len = line[pos..].chars().next().map_or(1, char::len_utf8);
    let utterance = line[pos + colon_len..].trim();
    if speaker.is_empty()
        || utterance.is_empty()
        || speaker.chars().count() > MAX_SPEAKER_CHARS
        || speaker.starts_with(['(', '（'])
    {
        return None;
    }
    Some((speaker, utterance))
}

/// Parses `speaker: utterance` lines between the dialogue header and the end marker.
pub fn parse_dialogue(raw: &str, language: Language) -> Result<Vec<Turn>, ParseError> {
    let cut = terminator_re(language).find(raw).map_or(raw.len(), |m| m.start());
    let text = &raw[..cut];

    let lines: Vec<&str> = text.lines().collect();
    let is_header = |l: &str| {
        l.trim().trim_end_matches([':', '：']).trim().to_lowercase() == dialogue_header(language)
    };
    let start = lines.iter().position(|l| is_header(l)).map_or(0, |i| i + 1);

    let mut turns = Vec::new();
    for line in &lines[start..] {
        if let Some((speaker, utterance)) = split_speaker(line) {
            turns.push(Turn {
                index: turns.len(),
                speaker: speaker.to_owned(),
                utterance: utterance.to_owned(),
            });
        }
    }
    match turns.len() {
        0 => Err(ParseError::NoTurns),
        1 => Err(ParseError::TooFewTurns { found: 1 }),
        _ => Ok(turns),
    }
}

fn label_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(
        &RE,
        r"^\s*[(（](?P<turn>.*?)[)）]\s*[:：]\s*(?P<label>[^|｜]*?)\s*(?:[|｜]\s*(?P<expl>.*?))?\s*$",
    )
}

fn after_colon(line: &str) -> &str {
    match line.find([':', '：']) {
        Some(p) => {
            let len = line[p..].chars().next().map_or(1, char::len_utf8);
            line[p + len..].trim()
        }
        None => "",
    }
}

/// Parses the chain-of-thought labeling output for `dialogue`.
pub fn parse_turn_labels(raw: &str, dialogue: &Dialogue) -> Result<TurnAnnotationSet, ParseError> {
    static ACTION: OnceLock<Regex> = OnceLock::new();
    static ACTORS: OnceLock<Regex> = OnceLock::new();
    let action_re = re(&ACTION, r"^\s*(?i:norm\s+action)\s*[:：]");
    let actors_re = re(&ACTORS, r"^\s*(?i:actors?\s+of\s+the\s+norm)\s*[:：]");

    let lines: Vec<&str> = raw.lines().collect();
    let mut norm_action = None;
    let mut norm_actors: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut in_actors = false;

    for (i, line) in lines.iter().enumerate() {
        let line_no = i + 1;
        if action_re.is_match(line) {
            in_actors = false;
            norm_action = Some(after_colon(line).to_owned());
            continue;
        }
        if actors_re.is_match(line) {
            in_actors = true;
            let rest = after_colon(line);
            if !rest.is_empty() {
                if let Some((name, _)) = split_speaker(rest) {
                    norm_actors.push(name.to_owned());
                } else {
                    norm_actors.extend(
                        rest.split([',', '，', '、'])
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(str::to_owned),
                    );
                }
            }
            continue;
        }
        if let Some(caps) = label_line_re().captures(line) {
            in_actors = false;
            let token = caps["label"].trim();
            let label = ObservanceLabel::parse(token).ok_or_else(|| ParseError::UnknownLabel {
                line: line_no,
                token: token.to_owned(),
            })?;
            let explanation = caps.name("expl").map_or("", |m| m.as_str()).trim();
            if explanation.is_empty() {
                return Err(ParseError::MissingExplanation { line: line_no });
            }
            labels.push(TurnLabel {
                turn_index: labels.len(),
                label,
                explanation: explanation.to_owned(),
            });
            continue;
        }
        if in_actors {
            let t = line.trim();
            let header = t.trim_end_matches([':', '：']).trim().to_lowercase();
            if t.is_empty() || header == "dialogue" {
                in_actors = false;
                continue;
            }
            let name = split_speaker(t).map_or(t, |(s, _)| s);
            norm_actors.push(name.to_owned());
        }
    }

    let norm_action = norm_action.ok_or(ParseError::MissingNormAction)?;
    let words = norm_action.split_whitespace().count();
    if words == 0 || words > MAX_NORM_ACTION_WORDS {
        return Err(ParseError::BadNormAction(norm_action));
    }
    let mut seen = std::collections::HashSet::new();
    norm_actors.retain(|a| seen.insert(a.clone()));
    let speakers = dialogue.speakers();
    if let Some(bad) = norm_actors.iter().find(|a| !speakers.contains(&a.as_str())) {
        return Err(ParseError::UnknownActor(bad.clone()));
    }
    if labels.len() != dialogue.turns.len() {
        return Err(ParseError::LabelCountMismatch {
            expected: dialogue.turns.len(),
            found: labels.len(),
        });
    }
    Ok(TurnAnnotationSet {
        id: RecordId::unassigned(),
        dialogue_id: dialogue.id.clone(),
        norm_action,
        norm_actors,
        labels,
        source: AnnotationSource::Model,
        status: LifecycleStatus::draft(),
    })
}

fn numbered_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"^\s*(?:\*\*)?[(（]?\d{1,3}\s*[.)）、．]\s*(?:\*\*)?\s*(?P<body>.*)$")
}

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r#""([^"]+)"|“([^”]+)”|「([^」]+)」|『([^』]+)』"#)
}

/// Quoted spans in a norm description, in order, without duplicates.
pub fn verbal_evidence(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for caps in quoted_re().captures_iter(text) {
        let span = (1..=4)
            .find_map(|i| caps.get(i))
            .map(|m| m.as_str().trim().to_owned())
            .unwrap_or_default();
        if !span.is_empty() && !out.contains(&span) {
            out.push(span);
        }
    }
    out
}

/// Parses a numbered (or, failing that, blank-line separated) list of norm descriptions.
/// Chinese norms come back as `generated`; American ones as `transferred` with no source
/// link, which the caller fills in.
pub fn parse_norm_list(
    raw: &str,
    culture: Culture,
    category: NormCategory,
) -> Result<Vec<SocialNorm>, ParseError> {
    let mut items: Vec<String> = Vec::new();
    let numbered = raw.lines().any(|l| numbered_re().is_match(l));
    if numbered {
        let mut current: Option<String> = None;
        for line in raw.lines() {
            if let Some(c) = numbered_re().captures(line) {
                if let Some(done) = current.take() {
                    items.push(done);
                }
                current = Some(c["body"].trim().to_owned());
            } else if let Some(cur) = current.as_mut() {
                let t = line.trim();
                if !t.is_empty() {
                    cur.push(' ');
                    cur.push_str(t);
                }
            }
        }
        items.extend(current);
    } else {
        let mut para = String::new();
        for line in raw.lines().chain(std::iter::once("")) {
            let t = line.trim();
            if t.is_empty() {
                if !para.is_empty() {
                    items.push(std::mem::take(&mut para));
                }
            } else {
                if !para.is_empty() {
                    para.push(' ');
                }
                para.push_str(t);
            }
        }
    }
    let origin = match culture {
        Culture::Chinese => NormOrigin::Generated,
        Culture::American => NormOrigin::Transferred,
    };
    let norms: Vec<SocialNorm> = items
        .into_iter()
        .map(|d| d.trim().trim_matches('*').trim().to_owned())
        .filter(|d| !d.is_empty())
        .map(|description| SocialNorm {
            id: RecordId::unassigned(),
            culture,
            category,
            verbal_evidence: verbal_evidence(&description),
            description,
            origin,
            source_norm_id: None,
            status: LifecycleStatus::draft(),
        })
        .collect();
    if norms.is_empty() {
        return Err(ParseError::NoNorms);
    }
    Ok(norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{validate_record, Record};
    use crate::llm::templates::{
        COACH_DIALOGUE, COACH_LABEL_OUTPUT, DIALOGUE_EN_EXAMPLE_OUTPUT, DIALOGUE_ZH_EXAMPLE_OUTPUT,
        SCENARIO_EXAMPLE_OUTPUT, SITUATION_EXAMPLE_OUTPUT,
    };
    use proptest::prelude::*;

    fn coach_dialogue() -> Dialogue {
        Dialogue {
            id: "dlg-coach".into(),
            norm_id: "norm-criticism".into(),
            situation_id: "sit-coach".into(),
            language: Language::Zh,
            turns: parse_dialogue(COACH_DIALOGUE, Language::Zh).unwrap(),
            status: LifecycleStatus::draft(),
        }
    }

    #[test]
    fn ten_scenarios_from_the_example_list() {
        let s = parse_scenario_list(SCENARIO_EXAMPLE_OUTPUT, &"n".into()).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s[0].setting, "in a university");
        assert_eq!(s[0].participants, "college students");
        assert_eq!(s[9].setting, "in a family gathering");
        assert_eq!(s[9].raw_line, "10. in a family gathering; two cousins");
    }

    #[test]
    fn scenario_lines_without_semicolons_fail() {
        let err = parse_scenario_list("1. in a park\n2. at school", &"n".into()).unwrap_err();
        assert!(matches!(err, ParseError::NoScenarios { raw } if raw.contains("in a park")));
    }

    #[test]
    fn garbage_lines_are_skipped() {
        let s = parse_scenario_list("1. a; b\ngarbage\n2. c; d", &"n".into()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[1].setting.as_str(), s[1].participants.as_str()), ("c", "d"));
    }

    #[test]
    fn scenario_header_on_the_same_line_and_fullwidth_punctuation() {
        let s = parse_scenario_list("Scenario: 1. 在大学；大学生\n2）in a bar; friends", &"n".into())
            .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].setting, "在大学");
        assert_eq!(s[1].participants, "friends");
    }

    #[test]
    fn situation_marker_is_stripped() {
        let body = parse_situation(SITUATION_EXAMPLE_OUTPUT).unwrap();
        assert!(body.starts_with("A Chinese young man, 大伟"));
        assert_eq!(parse_situation("New Situation. Two friends meet.").unwrap(), "Two friends meet.");
    }

    #[test]
    fn situation_without_marker_is_unchanged() {
        let raw = "Two neighbors meet in the elevator.";
        assert_eq!(parse_situation(raw).unwrap(), raw);
    }

    #[test]
    fn bare_marker_is_empty() {
        assert_eq!(parse_situation("New Situation:"), Err(ParseError::EmptySituation));
        assert_eq!(parse_situation("   "), Err(ParseError::EmptySituation));
    }

    #[test]
    fn chinese_example_dialogue() {
        let turns = parse_dialogue(DIALOGUE_ZH_EXAMPLE_OUTPUT, Language::Zh).unwrap();
        assert_eq!(turns.len(), 8);
        assert_eq!(turns[0].speaker, "大伟和苏珊");
        assert_eq!(turns[0].utterance, "哎呀");
        assert_eq!(turns[1].utterance, "哎呦，对不起，没撞到您吧");
        assert_eq!(turns[5].utterance, "我刚才没碰到你吧?");
        assert!(turns.iter().enumerate().all(|(i, t)| t.index == i));
    }

    #[test]
    fn terminator_discards_later_turns() {
        let raw = "对话\n甲：你好\n乙：你好\n[结束]\n甲：这句不算";
        let turns = parse_dialogue(raw, Language::Zh).unwrap();
        assert_eq!(turns.len(), 2);
        let en = parse_dialogue(DIALOGUE_EN_EXAMPLE_OUTPUT, Language::En).unwrap();
        assert_eq!(en.len(), 5);
        assert_eq!(en[4].speaker, "Jake");
    }

    #[test]
    fn dialogue_without_colons_fails() {
        assert_eq!(parse_dialogue("对话\n你好\n再见", Language::Zh), Err(ParseError::NoTurns));
        assert_eq!(
            parse_dialogue("Dialogue\nA: hi", Language::En),
            Err(ParseError::TooFewTurns { found: 1 })
        );
    }

    #[test]
    fn preamble_before_header_is_ignored() {
        let raw = "Note: here is the script\nDialogue:\nAnn: Hi\nBob: Hello\n[END]";
        let turns = parse_dialogue(raw, Language::En).unwrap();
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[0].speaker, "Ann");
    }

    #[test]
    fn coach_labels() {
        use ObservanceLabel::{Adhered as A, NotRelevant as N};
        let d = coach_dialogue();
        let set = parse_turn_labels(COACH_LABEL_OUTPUT, &d).unwrap();
        assert_eq!(set.norm_action, "offer criticism");
        assert_eq!(set.norm_actors, vec!["张教练".to_owned()]);
        let labels: Vec<_> = set.labels.iter().map(|l| l.label).collect();
        assert_eq!(labels, vec![A, N, A, A, N, N, N, N]);
        assert_eq!(set.labels[6].explanation, "小陈 is not a criticizer");
        assert_eq!(set.source, AnnotationSource::Model);
    }

    #[test]
    fn deleted_label_line_is_a_count_mismatch() {
        let d = coach_dialogue();
        let raw: Vec<&str> = COACH_LABEL_OUTPUT.lines().filter(|l| !l.contains("去休息吧")).collect();
        let err = parse_turn_labels(&raw.join("\n"), &d).unwrap_err();
        assert_eq!(err, ParseError::LabelCountMismatch { expected: 8, found: 7 });
    }

    #[test]
    fn misspelled_label_is_reported_with_its_line() {
        let d = coach_dialogue();
        let raw = COACH_LABEL_OUTPUT.replacen("):  Adhered |", "):  Adhere |", 1);
        let err = parse_turn_labels(&raw, &d).unwrap_err();
        assert_eq!(err, ParseError::UnknownLabel { line: 6, token: "Adhere".into() });
    }

    #[test]
    fn missing_norm_action_line() {
        let d = coach_dialogue();
        let raw = COACH_LABEL_OUTPUT.replace("Norm Action: offer criticism\n", "");
        assert_eq!(parse_turn_labels(&raw, &d).unwrap_err(), ParseError::MissingNormAction);
    }

    #[test]
    fn numbered_norms() {
        let raw: String = (1..=10)
            .map(|i| format!("{i}. When greeting elders, say \"您好\" and bow slightly, rule {i}.\n"))
            .collect();
        let norms = parse_norm_list(&raw, Culture::Chinese, NormCategory::Greeting).unwrap();
        assert_eq!(norms.len(), 10);
        assert!(norms.iter().all(|n| n.category == NormCategory::Greeting
            && n.origin == NormOrigin::Generated
            && n.verbal_evidence == vec!["您好".to_owned()]));
    }

    #[test]
    fn single_paragraph_norm_with_quoted_evidence() {
        let raw = "When a person of lower status respond to the compliments of one of high status, one can say \"没有我还有很多不足,以后多向前辈请教和学习\" (I still have many shortcomings, I'll seek advice and learn from my seniors.)";
        let norms = parse_norm_list(raw, Culture::Chinese, NormCategory::ResponseToCompliment).unwrap();
        assert_eq!(norms.len(), 1);
        assert!(norms[0].verbal_evidence.iter().any(|p| p.contains("没有我还有很多不足")));
    }

    #[test]
    fn multi_line_items_are_joined() {
        let raw = "1. First norm\n   continues here.\n2. Second norm.";
        let norms = parse_norm_list(raw, Culture::American, NormCategory::Leave).unwrap();
        assert_eq!(norms[0].description, "First norm continues here.");
        assert_eq!(norms[1].origin, NormOrigin::Transferred);
    }

    #[test]
    fn blank_norm_list_fails() {
        assert_eq!(
            parse_norm_list("  \n\n ", Culture::Chinese, NormCategory::Apology),
            Err(ParseError::NoNorms)
        );
    }

    fn check_dialogue(turns: Vec<Turn>) -> bool {
        let d = Dialogue {
            id: "d".into(),
            norm_id: "n".into(),
            situation_id: "s".into(),
            language: Language::En,
            turns,
            status: LifecycleStatus::draft(),
        };
        let report = validate_record(&Record::Dialogue(d));
        // parser output may still have a single speaker; everything else must hold
        report.violations.iter().all(|v| v.message.contains("distinct speakers"))
    }

    proptest! {
        #[test]
        fn scenario_parser_is_total(raw in "(\\PC{0,20}[;；\\n.0-9 ]{0,4}){0,12}") {
            if let Ok(list) = parse_scenario_list(&raw, &"n".into()) {
                for s in list {
                    prop_assert!(validate_record(&Record::Scenario(s)).is_valid());
                }
            }
        }

        #[test]
        fn dialogue_parser_is_total(raw in "(\\PC{0,12}[:：\\n]{0,2}){0,16}") {
            for lang in [Language::Zh, Language::En] {
                if let Ok(turns) = parse_dialogue(&raw, lang) {
                    prop_assert!(turns.len() >= 2);
                    prop_assert!(check_dialogue(turns));
                }
            }
        }

        #[test]
        fn label_parser_is_total(
            keep in proptest::collection::vec(any::<bool>(), 8),
            noise in "\\PC{0,30}",
        ) {
            let d = coach_dialogue();
            let lines: Vec<String> = COACH_LABEL_OUTPUT
                .lines()
                .zip(keep.iter().chain(std::iter::repeat(&true)))
                .map(|(l, k)| if *k { l.to_owned() } else { format!("{l}{noise}") })
                .collect();
            if let Ok(set) = parse_turn_labels(&lines.join("\n"), &d) {
                prop_assert!(validate_record(&Record::Annotation(set.clone())).is_valid());
                prop_assert_eq!(set.labels.len(), 8);
            }
        }

        #[test]
        fn norm_parser_is_total(raw in "(\\PC{0,40}\\n{0,2}){0,6}") {
            if let Ok(norms) = parse_norm_list(&raw, Culture::Chinese, NormCategory::Request) {
                for n in norms {
                    prop_assert!(validate_record(&Record::Norm(n)).is_valid());
                }
            }
        }
    }
}
