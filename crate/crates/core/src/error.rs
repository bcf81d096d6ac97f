use thiserror::Error;

use crate::{arima, edr, evaluation, gbtree, ingest, pipeline};

/// Any error produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Edr(#[from] edr::EdrError),
    #[error(transparent)]
    Gbt(#[from] gbtree::GbtError),
    #[error(transparent)]
    Arima(#[from] arima::ArimaError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error(transparent)]
    Config(#[from] pipeline::ConfigError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
