use regex::Regex;

/// Replaces speaker names with "Speaker A", "Speaker B", ... in order of first appearance.
#[derive(Debug, Clone)]
pub struct Pseudonyms {
    names: Vec<(String, String)>,
    pattern: Option<Regex>,
}

const JOINERS: [&str; 6] = ["和", "与", "、", "&", " and ", ","];

/// Splits a joint speaker such as "大伟和苏珊" into its members.
fn members(speaker: &str) -> Vec<String> {
    let mut parts = vec![speaker.to_string()];
    for j in JOINERS {
        parts = parts
            .iter()
            .flat_map(|p| {
                let pieces: Vec<String> = p.split(j).map(|s| s.trim().to_string()).collect();
                // a joiner at either edge is part of the name itself, as in "和平"
                if pieces.len() > 1 && pieces.iter().all(|s| !s.is_empty()) {
                    pieces
                } else {
                    vec![p.clone()]
                }
            })
            .collect();
    }
    parts
}

fn token(i: usize) -> String {
    let mut label = String::new();
    let mut n = i;
    loop {
        label.insert(0, (b'A' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    format!("Speaker {label}")
}

impl Pseudonyms {
    pub fn new<'a>(speakers: impl IntoIterator<Item = &'a str>) -> Self {
        let mut names: Vec<(String, String)> = Vec::new();
        for speaker in speakers {
            let parts = members(speaker);
            // a joint speaker's members get their own tokens; the joint form is rewritten through them
            for name in parts {
                if !names.iter().any(|(n, _)| *n == name) {
                    let t = token(names.len());
                    names.push((name, t));
                }
            }
        }
        let mut by_len: Vec<&str> = names.iter().map(|(n, _)| n.as_str()).collect();
        by_len.sort_by_key(|n| std::cmp::Reverse(n.chars().count()));
        let alternatives: Vec<String> = by_len
            .iter()
            .map(|n| {
                let escaped = regex::escape(n);
                if n.is_ascii() {
                    format!(r"\b{escaped}\b")
                } else {
                    escaped
                }
            })
            .collect();
        let pattern = (!alternatives.is_empty())
            .then(|| Regex::new(&alternatives.join("|")).expect("escaped names form a valid pattern"));
        Self { names, pattern }
    }

    pub fn token_for(&self, name: &str) -> Option<&str> {
        self.names.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|(n, _)| n.as_str())
    }

    pub fn apply(&self, text: &str) -> String {
        match &self.pattern {
            None => text.to_string(),
            Some(re) => re
                .replace_all(text, |c: &regex::Captures| {
                    self.token_for(&c[0]).unwrap_or(&c[0]).to_string()
                })
                .into_owned(),
        }
    }

    /// Applies the mapping to every string inside a JSON value.
    pub fn apply_json(&self, value: &mut serde_json::Value) {
        match value {
            serde_json::Value::String(s) => *s = self.apply(s),
            serde_json::Value::Array(a) => a.iter_mut().for_each(|v| self.apply_json(v)),
            serde_json::Value::Object(o) => o.values_mut().for_each(|v| self.apply_json(v)),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_follow_first_appearance() {
        let p = Pseudonyms::new(["Jessica", "Mark", "Jessica"]);
        assert_eq!(p.token_for("Jessica"), Some("Speaker A"));
        assert_eq!(p.token_for("Mark"), Some("Speaker B"));
        assert_eq!(p.apply("Mark, thanks Jessica."), "Speaker B, thanks Speaker A.");
    }

    #[test]
    fn ascii_names_respect_word_boundaries() {
        let p = Pseudonyms::new(["Ann"]);
        assert_eq!(p.apply("Ann met Annabel"), "Speaker A met Annabel");
    }

    #[test]
    fn joint_speakers_decompose() {
        let p = Pseudonyms::new(["大伟", "苏珊", "大伟和苏珊"]);
        assert_eq!(p.apply("大伟和苏珊"), "Speaker A和Speaker B");
        let q = Pseudonyms::new(["大伟和苏珊", "苏珊"]);
        assert_eq!(q.token_for("苏珊"), Some("Speaker B"));
    }

    #[test]
    fn joiner_characters_inside_names_are_kept() {
        let p = Pseudonyms::new(["和平", "与与"]);
        assert_eq!(p.apply("和平对与与说"), "Speaker A对Speaker B说");
    }

    #[test]
    fn longer_names_win() {
        let p = Pseudonyms::new(["小陈", "小陈陈"]);
        assert_eq!(p.apply("小陈陈说"), "Speaker B说");
    }

    #[test]
    fn token_sequence_extends_past_z() {
        assert_eq!(token(0), "Speaker A");
        assert_eq!(token(25), "Speaker Z");
        assert_eq!(token(26), "Speaker AA");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn name() -> impl Strategy<Value = String> {
            prop_oneof!["[B-R][a-z]{2,6}", "[\\u{4e00}-\\u{4e3f}]{2,3}"]
        }

        proptest! {
            /// After the rewrite no original speaker name survives anywhere in the text.
            #[test]
            fn no_name_survives(
                names in proptest::collection::vec(name(), 1..5),
                picks in proptest::collection::vec((0usize..5, "[ ,.!?]([0-9]{0,2}[ ,.!?])?"), 1..20),
            ) {
                let text: String = picks.iter().map(|(i, filler)| format!("{}{filler}", names[i % names.len()])).collect();
                let p = Pseudonyms::new(names.iter().map(String::as_str));
                let out = p.apply(&text);
                for n in &names {
                    prop_assert!(!out.contains(n.as_str()), "{} survives in {}", n, out);
                }
                let mut value = serde_json::json!({"turns": [{"speaker": names[0], "utterance": text}]});
                p.apply_json(&mut value);
                let body = value.to_string();
                for n in &names {
                    prop_assert!(!body.contains(n.as_str()));
                }
            }
        }
    }
}
