//! Forecasting toolkit for annual country-indicator panels.
//!
//! The pipeline reads a wide-format indicator table, ranks candidate
//! predictors against a target series by Edit Distance on Real sequence,
//! tunes and fits a second-order gradient-boosted tree ensemble with
//! expanding-window cross-validation, scores it by MAPE on a temporal
//! holdout, extends the selected predictors with ARIMA point forecasts and
//! feeds those paths through the ensemble to forecast the target.
//!
//! Each stage lives in its own module and can be used on its own:
//!
//! - [`ingest`]: CSV parsing, gap filling, panel construction, z-scores
//! - [`edr`]: EDR distance and predictor ranking
//! - [`gbtree`]: boosted regression trees
//! - [`arima`]: ARIMA(p,d,q) fitting and forecasting
//! - [`evaluation`]: MAPE, accuracy bands, folds and grid search
//! - [`pipeline`]: configuration, per-country runs and artifact emission
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arima;
pub mod edr;
pub mod evaluation;
pub mod gbtree;
pub mod ingest;
pub mod pipeline;

mod error;

pub use error::{Error, Result};
