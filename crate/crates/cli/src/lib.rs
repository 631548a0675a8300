pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{fit_bath, run, Failure, RunSummary};
