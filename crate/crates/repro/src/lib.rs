//! Figure and noise-study reproduction on top of `cpf-core`.

pub mod config;
pub mod runs;
pub mod validate;

pub use config::RunConfig;
pub use runs::Dataset;
