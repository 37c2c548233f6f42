pub mod corpus;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod review;
