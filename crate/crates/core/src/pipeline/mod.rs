pub mod audit;
pub mod baseline;
pub mod config;
pub mod job;
pub mod runner;

pub use audit::lineage_audit;
pub use baseline::*;
pub use config::*;
pub use job::*;
pub use runner::*;
