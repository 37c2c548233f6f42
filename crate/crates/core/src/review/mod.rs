//! Human review: tasks, verdicts, aggregation rules and the HTTP service.

pub mod deid;
pub mod desk;
pub mod http;
pub mod model;
pub mod rules;

pub use deid::Pseudonyms;
pub use desk::*;
pub use model::*;
pub use rules::{aggregate, resolve_labels, RuleError};
pub use http::{router, serve};
