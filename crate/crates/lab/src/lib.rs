//! Configuration-driven experiments on top of `neass-core`: config parsing,
//! experiment drivers, log-log fits and CSV/JSON artifacts.

// `!(x > 0.0)` is used on purpose so that NaN fails input checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod fit;
pub mod model;
pub mod output;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(#[from] config::ConfigError),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: neass_core::Error,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("fit: {0}")]
    Fit(#[from] fit::FitError),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
