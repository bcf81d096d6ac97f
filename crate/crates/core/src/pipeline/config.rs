//! Run configuration in a flat `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! data_path   = data/indicators.csv
//! countries   = Oman, Qatar, Kuwait
//! target_code = PV.EST
//! grid.max_depth = 3, 5
//! ```
//!
//! One key per line. List values are comma-separated. Relative paths are
//! resolved against the directory holding the config file. Every key other
//! than `data_path`, `countries` and `target_code` has a default.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edr::EdrParams;
use crate::evaluation::{CvScheme, GbtGrid, SplitSpec, YearSpan, DEFAULT_MAPE_OFFSET};
use crate::ingest::DEFAULT_MAX_MISSING_FRACTION;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key {0:?}")]
    MissingKey(&'static str),
    #[error("line {line}: invalid value for {key}: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub countries: Vec<String>,
    pub target_code: String,
    pub year_range: YearSpan,
    pub edr: EdrParams,
    pub grid: GbtGrid,
    pub cv: CvScheme,
    pub split: SplitSpec,
    /// Number of future years to forecast.
    pub horizon: usize,
    pub mape_offset: f64,
    pub max_missing_fraction: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Draw Gaussian innovations when extending predictors instead of using
    /// point forecasts.
    pub stochastic_predictors: bool,
}

impl RunConfig {
    /// A configuration with every optional key at its default.
    pub fn new(
        data_path: impl Into<PathBuf>,
        countries: Vec<String>,
        target_code: impl Into<String>,
    ) -> Self {
        Self {
            data_path: data_path.into(),
            countries,
            target_code: target_code.into(),
            year_range: YearSpan::new(1996, 2023),
            edr: EdrParams::default(),
            grid: GbtGrid::default(),
            cv: CvScheme::default(),
            split: SplitSpec::default(),
            horizon: 5,
            mape_offset: DEFAULT_MAPE_OFFSET,
            max_missing_fraction: DEFAULT_MAX_MISSING_FRACTION,
            output_dir: PathBuf::from("output"),
            seed: 0,
            stochastic_predictors: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.data_path.as_os_str().is_empty() {
            return invalid("data_path is empty".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return invalid("output_dir is empty".into());
        }
        if self.countries.is_empty() {
            return invalid("countries is empty".into());
        }
        if self.countries.iter().any(|c| c.is_empty()) {
            return invalid("empty country name".into());
        }
        if self.target_code.is_empty() {
            return invalid("target_code is empty".into());
        }
        if self.horizon == 0 {
            return invalid("horizon must be at least 1".into());
        }
        if self.year_range.is_empty() {
            return invalid(format!("empty year range {}", self.year_range));
        }
        self.split
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.split.test.start != self.split.train.end + 1 {
            return invalid(format!(
                "test years must start right after the training years ({} then {})",
                self.split.train, self.split.test
            ));
        }
        if self.split.train.start < self.year_range.start
            || self.split.test.end > self.year_range.end
        {
            return invalid(format!(
                "split {} / {} falls outside year range {}",
                self.split.train, self.split.test, self.year_range
            ));
        }
        self.edr
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.cv
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.split.train.len() < self.cv.min_train_size + self.cv.fold_horizon {
            return invalid(format!(
                "{} training years cannot hold a {}+{} fold",
                self.split.train.len(),
                self.cv.min_train_size,
                self.cv.fold_horizon
            ));
        }
        self.grid
            .candidates(self.seed)
            .map_err(|e| ConfigError::Invalid(format!("grid: {e}")))?;
        if !self.mape_offset.is_finite() {
            return invalid("mape_offset must be finite".into());
        }
        if !(0.0..1.0).contains(&self.max_missing_fraction) {
            return invalid("max_missing_fraction must be in [0, 1)".into());
        }
        Ok(())
    }

    /// Parses config text; relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut data_path = None;
        let mut countries = None;
        let mut target_code = None;
        let mut cfg = RunConfig::new("", vec![], "");
        let mut output_dir = None;
        let mut seen = HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("expected `key = value`, found {content:?}"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.into(),
                });
            }
            let v = Value {
                line,
                key,
                raw: value,
            };
            match key {
                "data_path" => data_path = Some(PathBuf::from(v.text()?)),
                "countries" => countries = Some(v.list::<String>()?),
                "target_code" => target_code = Some(v.text()?.to_string()),
                "year_start" => cfg.year_range.start = v.scalar()?,
                "year_end" => cfg.year_range.end = v.scalar()?,
                "train_start" => cfg.split.train.start = v.scalar()?,
                "train_end" => cfg.split.train.end = v.scalar()?,
                "test_start" => cfg.split.test.start = v.scalar()?,
                "test_end" => cfg.split.test.end = v.scalar()?,
                "horizon" => cfg.horizon = v.scalar()?,
                "edr_epsilon" => cfg.edr.epsilon = v.scalar()?,
                "edr_k" => cfg.edr.k = v.scalar()?,
                "cv_min_train_size" => cfg.cv.min_train_size = v.scalar()?,
                "cv_fold_horizon" => cfg.cv.fold_horizon = v.scalar()?,
                "mape_offset" => cfg.mape_offset = v.scalar()?,
                "max_missing_fraction" => cfg.max_missing_fraction = v.scalar()?,
                "output_dir" => output_dir = Some(PathBuf::from(v.text()?)),
                "seed" => cfg.seed = v.scalar()?,
                "stochastic_predictors" => cfg.stochastic_predictors = v.scalar()?,
                "grid_preset" => {
                    let preset = match v.text()? {
                        "default" => GbtGrid::default(),
                        "typical_values" => GbtGrid::typical_values(),
                        other => return Err(v.error(format!("unknown preset {other:?}"))),
                    };
                    // Axes set earlier in the file keep their values.
                    cfg.grid = merge_preset(preset, &cfg.grid, &seen);
                }
                "grid.n_estimators" => cfg.grid.n_estimators = v.list()?,
                "grid.learning_rate" => cfg.grid.learning_rate = v.list()?,
                "grid.max_depth" => cfg.grid.max_depth = v.list()?,
                "grid.min_child_weight" => cfg.grid.min_child_weight = v.list()?,
                "grid.gamma" => cfg.grid.gamma = v.list()?,
                "grid.subsample" => cfg.grid.subsample = v.list()?,
                "grid.colsample_bytree" => cfg.grid.colsample_bytree = v.list()?,
                "grid.colsample_bylevel" => cfg.grid.colsample_bylevel = v.list()?,
                "grid.lambda" => cfg.grid.lambda = v.list()?,
                "grid.alpha" => cfg.grid.alpha = v.list()?,
                "grid.scale_pos_weight" => cfg.grid.scale_pos_weight = v.list()?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.into(),
                    })
                }
            }
        }

        let resolve = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        cfg.data_path = resolve(data_path.ok_or(ConfigError::MissingKey("data_path"))?);
        cfg.countries = countries.ok_or(ConfigError::MissingKey("countries"))?;
        cfg.target_code = target_code.ok_or(ConfigError::MissingKey("target_code"))?;
        cfg.output_dir = resolve(output_dir.unwrap_or_else(|| PathBuf::from("output")));
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge_preset(mut preset: GbtGrid, current: &GbtGrid, seen: &HashSet<String>) -> GbtGrid {
    macro_rules! keep {
        ($($axis:ident),*) => {$(
            if seen.contains(concat!("grid.", stringify!($axis))) {
                preset.$axis = current.$axis.clone();
            }
        )*};
    }
    keep!(
        n_estimators,
        learning_rate,
        max_depth,
        min_child_weight,
        gamma,
        subsample,
        colsample_bytree,
        colsample_bylevel,
        lambda,
        alpha,
        scale_pos_weight
    );
    preset
}

struct Value<'a> {
    line: usize,
    key: &'a str,
    raw: &'a str,
}

impl Value<'_> {
    fn error(&self, message: String) -> ConfigError {
        ConfigError::Value {
            line: self.line,
            key: self.key.into(),
            message,
        }
    }

    fn text(&self) -> Result<&str, ConfigError> {
        if self.raw.is_empty() {
            return Err(self.error("empty value".into()));
        }
        Ok(self.raw)
    }

    fn scalar<T: FromStr>(&self) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.text()?
            .parse()
            .map_err(|e: T::Err| self.error(format!("{:?}: {e}", self.raw)))
    }

    fn list<T: FromStr>(&self) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.text()?
            .split(',')
            .map(|item| {
                let item = item.trim();
                if item.is_empty() {
                    return Err(self.error("empty list item".into()));
                }
                item.parse()
                    .map_err(|e: T::Err| self.error(format!("{item:?}: {e}")))
            })
            .collect()
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    RunConfig::parse(&text, base)
}
