//! Prompt templates, completion parsing and the model gateway.

pub mod gateway;
pub mod parse;
pub mod templates;

pub use gateway::{
    BackendError, BackendMode, CacheEntry, CacheParams, ChatBackend, CompletionCache, CompletionRequest,
    Gateway, GatewayError, HttpBackend, RawCompletion, RetryPolicy,
};
pub use parse::{
    parse_dialogue, parse_norm_list, parse_scenario_list, parse_situation, parse_turn_labels, verbal_evidence,
    ParseError,
};
pub use templates::{bindings, polarity_instruction, render_prompt, template, FewShot, PromptTemplate, RenderError, TemplateId};
