//! Stage prompt templates.
//!
//! A template is an instruction body, a list of few-shot examples, and a query section.
//! Placeholders are written `{{name}}` and may appear in the body or the query; few-shot
//! text is inserted verbatim.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    NormAugmentZh,
    NormTransferEn,
    ScenarioGen,
    SituationElaborate,
    DialogueGenZh,
    DialogueGenEn,
    TurnLabelCot,
    /// Norm-only dialogue prompt used as the diversity baseline.
    DialogueSimpleZh,
    DialogueSimpleEn,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::NormAugmentZh,
        TemplateId::NormTransferEn,
        TemplateId::ScenarioGen,
        TemplateId::SituationElaborate,
        TemplateId::DialogueGenZh,
        TemplateId::DialogueGenEn,
        TemplateId::TurnLabelCot,
        TemplateId::DialogueSimpleZh,
        TemplateId::DialogueSimpleEn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::NormAugmentZh => "norm_augment_zh",
            TemplateId::NormTransferEn => "norm_transfer_en",
            TemplateId::ScenarioGen => "scenario_gen",
            TemplateId::SituationElaborate => "situation_elaborate",
            TemplateId::DialogueGenZh => "dialogue_gen_zh",
            TemplateId::DialogueGenEn => "dialogue_gen_en",
            TemplateId::TurnLabelCot => "turn_label_cot",
            TemplateId::DialogueSimpleZh => "dialogue_simple_zh",
            TemplateId::DialogueSimpleEn => "dialogue_simple_en",
        }
    }

    pub fn dialogue_for(language: Language) -> Self {
        match language {
            Language::Zh => TemplateId::DialogueGenZh,
            Language::En => TemplateId::DialogueGenEn,
        }
    }

    pub fn simple_dialogue_for(language: Language) -> Self {
        match language {
            Language::Zh => TemplateId::DialogueSimpleZh,
            Language::En => TemplateId::DialogueSimpleEn,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FewShot {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub language: Language,
    pub body: String,
    pub few_shot_examples: Vec<FewShot>,
    pub query: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("template {template} needs a binding for placeholder {{{{{name}}}}}")]
    MissingBinding { template: TemplateId, name: String },
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([a-z_]+)\}\}").expect("static regex"))
}

impl PromptTemplate {
    /// Placeholder names declared by the body and query, sorted.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let re = placeholder_re();
        [&self.body, &self.query]
            .into_iter()
            .flat_map(|t| re.captures_iter(t).map(|c| c[1].to_owned()))
            .collect()
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, RenderError> {
        if let Some(name) = self.placeholders().into_iter().find(|p| !bindings.contains_key(p)) {
            return Err(RenderError::MissingBinding { template: self.id, name });
        }
        let fill = |text: &str| {
            placeholder_re()
                .replace_all(text, |c: &regex::Captures| bindings[&c[1]].clone())
                .into_owned()
        };
        let mut out = fill(&self.body);
        for ex in &self.few_shot_examples {
            out.push_str("\n\n");
            out.push_str(&ex.input);
            out.push_str("\n\n");
            out.push_str(&ex.output);
        }
        out.push_str("\n\n");
        out.push_str(&fill(&self.query));
        Ok(out)
    }
}

pub fn template(id: TemplateId) -> &'static PromptTemplate {
    static TEMPLATES: OnceLock<BTreeMap<TemplateId, PromptTemplate>> = OnceLock::new();
    &TEMPLATES.get_or_init(|| TemplateId::ALL.into_iter().map(|id| (id, build(id))).collect())[&id]
}

pub fn render_prompt(id: TemplateId, bindings: &BTreeMap<String, String>) -> Result<String, RenderError> {
    template(id).render(bindings)
}

/// Builds a binding map from `(name, value)` pairs.
pub fn bindings<I, K, V>(pairs: I) -> BTreeMap<String, String>
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

const SOCIAL_NORMS_INTRO: &str =
    "Social norms are informal rules that govern behaviors in groups and societies.";

pub const APOLOGY_NORM_EN: &str = "It is socially preferred to apologize immediately if you disturb another person and give the affected person a chance to identify and specify if they are hurt";

pub const SCENARIO_EXAMPLE_OUTPUT: &str = "Scenario:
1. in a university; college students
2. on the street; strangers
3. in a company's office; colleagues
4. in a hospital; patient and doctors
5. in a restaurant; waiter and customers
6. in a cafe; two customers
7. in a shopping mall; sales associates and customers
8. in a park; a morning jogger and a lady
9. in a suburb neighborhood; two neighbors who know each other
10. in a family gathering; two cousins";

pub const SITUATION_EXAMPLE_OUTPUT: &str = "New Situation:  A Chinese young man, 大伟, on his way back home, bumped into a stranger named Susan on the street. Susan is from New York, America, and it is her first time coming to China looking for her friend, so she doesn’t speak fluent Chinese and is lost on the street.";

pub const DIALOGUE_ZH_EXAMPLE_INPUT: &str = "规范：如果你妨碍到了另一个人，你应该道歉并且询问对方以表示关心
情境：中国新年期间，一个中国小伙子大伟在王府井街上不小心撞到了纽约来找朋友的女人苏珊，大伟多次询问了苏珊是否受伤表示关心并且多次道歉。苏珊也同样地询问大伟是否被妨碍到，并且大伟因看到苏珊作为美国人说中文表示很新奇。";

pub const DIALOGUE_ZH_EXAMPLE_OUTPUT: &str = "对话
大伟和苏珊: 哎呀
大伟: 哎呦，对不起，没撞到您吧
苏珊: 没事没事，真对不起
大伟: 没想到您还说中国话呢，您好
苏珊: 你好
大伟: 我刚才没碰到你吧?
苏珊: 我很好，就是不会走路，你还好吗
大伟: 我没事，新年快乐，注意安全";

pub const DIALOGUE_EN_EXAMPLE_INPUT: &str = "Norm: If you disturb another person, you should apologize and ask whether they are alright to show concern
Situation: On a busy holiday weekend in New York, a young man named Jake accidentally bumps into Mei, a visitor looking for her friend on Fifth Avenue. Jake apologizes several times and asks whether she is hurt; Mei says she is fine, apologizes too, and asks whether he is okay.";

pub const DIALOGUE_EN_EXAMPLE_OUTPUT: &str = "Dialogue
Jake: Whoa, I'm so sorry! Are you okay?
Mei: I'm fine, don't worry. Sorry, I wasn't looking either.
Jake: No, that was totally my fault. You sure you're not hurt?
Mei: Really, I'm okay. Are you alright?
Jake: I'm good. Enjoy the holiday, and sorry again!
[END]";

pub const CRITICISM_NORM_EN: &str = "In a professional setting with higher status speaking to lower status, it is permitted to use direct language, a strong tone of voice, and display emotions when criticizing one's behavior, ideas, and work.";

pub const COACH_DIALOGUE: &str = "张教练: 小陈，进来坐。你今天比赛时的那个失误，不止是你自己比赛历史有了污点，也让我们队失去了比赛胜利的机会。
小陈: 我知道我做错了。
张教练: 而且我强调的不仅仅是你犯的错，而是你没有注意到你思想问题。
张教练: 小陈，你需要更多的多传球给你的队友，不能老是单打独斗。
小陈: 教练我会改正的
张教练: 你今天的投篮还是很不错的，继续努力。
小陈: 谢谢教练。我一定会好好听取你的建议。
张教练: 很好，去休息吧。";

pub const COACH_LABEL_OUTPUT: &str = "Norm Action: offer criticism
Actor of the Norm:
张教练:  coach, higher status, criticizer

Dialogue:
(张教练: 小陈，进来坐。你今天比赛时的那个失误，不止是你自己比赛历史有了污点，也让我们队失去了比赛胜利的机会。):  Adhered | 张教练 criticizes his player’s performance by using direct wordings including \"失误\", \"污点\", and \"让我们队伍失去\"
(小陈: 我知道我做错了。): Not Relevant | 小陈 is not acting the criticism norm
(张教练: 而且我强调的不仅仅是你犯的错，而是你没有注意到你思想问题。): Adhered | 张教练 criticizes 小陈’s ideas of how to play basketball by questioning him
(张教练: 小陈，你需要更多的多传球给你的队友，不能老是单打独斗。): Adhered | 张教练 offers a mild criticism by saying “不能老师单打独斗”
(小陈: 教练我会改正的):   Not Relevant | 小陈 is not an actor of criticism norm
(张教练: 你今天的投篮还是很不错的，继续努力。): Not Relevant | 张教练 does not criticize here
(小陈: 谢谢教练。我一定会好好听取你的建议。): Not Relevant ｜小陈 is not a criticizer
(张教练: 很好，去休息吧。): Not Relevant | not criticism statement";

fn build(id: TemplateId) -> PromptTemplate {
    let (language, body, few_shot_examples, query): (Language, String, Vec<FewShot>, &str) = match id {
        TemplateId::NormAugmentZh => (
            Language::En,
            format!(
                "{SOCIAL_NORMS_INTRO} Different conversational social norms are applicable to different conversation types. Imagine you are a culture-aware system that understands social norms in Chinese society. Using some examples provided, you are tasked to list down and describe {{{{count}}}} new conversational social norms that are related and specific to the conversation type given. While generating additional norms keep the following 3 instructions in mind:
1. Ensure that the norms generated are specific to the Chinese culture and are not generic moral or conversational norms.
2. Specify the context where the norm is to be followed, wherever required.
3. Mention verbal pieces of evidence in Chinese that should be used in conversation for the accompanying norms."
            ),
            vec![],
            "Conversation Type: {{category}}\n\nExamples:\n{{examples}}\n\nNew Norms:",
        ),
        TemplateId::NormTransferEn => (
            Language::En,
            format!(
                "{SOCIAL_NORMS_INTRO} Different conversational social norms are applicable to different conversation types. Imagine you are a culture-aware system that understands social norms in American society. You are tasked to check whether a given set of norms for the Chinese culture are aligned to the American culture as well, or if they differ.

For each of the Chinese norms, if there exists an aligned social norm in American culture, generate the equivalent norm. If the American norm differs from the Chinese norm, then, generate the difference in the norm. In the norm descriptions generated, also include verbal phrases of evidence from an American culture that support the norm, if any. Do not list these down separately, include them in the norm description itself."
            ),
            vec![],
            "Conversation Type: {{category}}\n\nChinese Culture Norm: {{chinese_norm}}\n\nAmerican Culture Norm:",
        ),
        TemplateId::ScenarioGen => (
            Language::En,
            format!(
                "{SOCIAL_NORMS_INTRO} You are given a social norm, and you are tasked to imagine {{{{count}}}} scenarios that a conversation that entails the Norm can take place in a real-life setting of {{{{society}}}} society.\n\nFormat: Start your response with “Scenario:”"
            ),
            vec![FewShot {
                input: format!("Norm: {APOLOGY_NORM_EN}"),
                output: SCENARIO_EXAMPLE_OUTPUT.to_owned(),
            }],
            "Norm: {{norm}}\n",
        ),
        TemplateId::SituationElaborate => (
            Language::En,
            format!(
                "{SOCIAL_NORMS_INTRO} You are given a situation and social norm, and you are tasked to create and include details to the real-life situation which takes place in {{{{society}}}} society.\n\nFormat: start with “New Situation.” \n\n{{{{polarity_instruction}}}}"
            ),
            vec![FewShot {
                input: format!(
                    "Norm: {APOLOGY_NORM_EN}\nSituation: On the street; a Chinese young man and a woman "
                ),
                output: SITUATION_EXAMPLE_OUTPUT.to_owned(),
            }],
            "Norm: {{norm}}\nSituation: {{scenario}}\n",
        ),
        TemplateId::DialogueGenZh => (
            Language::Zh,
            "每次请根据一个围绕着中国社会规范的生活情景，有创意地生成一段人物间真实自然的对话脚本。
要求:
1. 对话中提及情景中所有细节和内容
2. 只需要生成对话脚本不需要额外解释
3. 且请以“对话” 为开头生成对话，以“[结束]”标注对话结尾。
4. {{polarity_instruction}}"
                .to_owned(),
            vec![FewShot {
                input: DIALOGUE_ZH_EXAMPLE_INPUT.to_owned(),
                output: DIALOGUE_ZH_EXAMPLE_OUTPUT.to_owned(),
            }],
            "规范：{{norm}}\n情境：{{situation}}\n",
        ),
        TemplateId::DialogueGenEn => (
            Language::En,
            "Each time, based on a real-life situation around American social norms, creatively generate a realistic and natural dialogue script between characters.
Requirements:
1. Mention all details and content of the situation in the dialogue
2. Only generate the dialogue script without extra explanation
3. Start the dialogue with “Dialogue” and mark the end of the dialogue with “[END]”.
4. {{polarity_instruction}}"
                .to_owned(),
            vec![FewShot {
                input: DIALOGUE_EN_EXAMPLE_INPUT.to_owned(),
                output: DIALOGUE_EN_EXAMPLE_OUTPUT.to_owned(),
            }],
            "Norm: {{norm}}\nSituation: {{situation}}\n",
        ),
        TemplateId::TurnLabelCot => (
            Language::En,
            "Given a dialogue and a norm on which the dialogue is based upon, the task has 4 steps:

1. Summarize the Norm in 5 words as Norm Action
2. Indicate which character in the dialogue performs the Norm Action
3. Repeat every turn and only indicate 'Adhered' when the sentence closely aligns with the Norm. Otherwise, indicate 'Not Relevant'.
4. After each label, provide a short explanation for why the norm is strongly entailed  or not relevant at sentence level.

Format:
Repeat each turn in a bracket
Append Adhered or Not Relevant label for each turn
Use “|” to separate role, label and explanation if needed"
                .to_owned(),
            vec![FewShot {
                input: format!("Norm: {CRITICISM_NORM_EN}\n\nDialogue:\n{COACH_DIALOGUE}"),
                output: COACH_LABEL_OUTPUT.to_owned(),
            }],
            "If a turn goes against the Norm, indicate 'Violated' instead.\n\nNorm: {{norm}}\nSituation: {{situation}}\n\nDialogue:\n{{dialogue}}\n",
        ),
        TemplateId::DialogueSimpleZh => (
            Language::Zh,
            "请根据下面的中国社会规范，生成一段人物间真实自然的对话脚本。只需要生成对话脚本不需要额外解释，请以“对话”为开头生成对话，以“[结束]”标注对话结尾。\n{{polarity_instruction}}"
                .to_owned(),
            vec![],
            "规范：{{norm}}\n",
        ),
        TemplateId::DialogueSimpleEn => (
            Language::En,
            "Based on the American social norm below, generate a realistic and natural dialogue script between characters. Only generate the dialogue script without extra explanation. Start the dialogue with “Dialogue” and mark the end of the dialogue with “[END]”.\n{{polarity_instruction}}"
                .to_owned(),
            vec![],
            "Norm: {{norm}}\n",
        ),
    };
    PromptTemplate {
        id,
        language,
        body,
        few_shot_examples,
        query: query.to_owned(),
    }
}

/// Polarity instruction inserted into elaboration and dialogue prompts.
pub fn polarity_instruction(language: Language, polarity: crate::corpus::Polarity) -> &'static str {
    use crate::corpus::Polarity::*;
    match (language, polarity) {
        (Language::En, Adherence) => "The characters should adhere to the Norm.",
        (Language::En, Violation) => "The characters should violate the Norm.",
        (Language::Zh, Adherence) => "对话中的人物应遵守该规范。",
        (Language::Zh, Violation) => "对话中的人物应违反该规范。",
    }
}
