//! End-to-end runs: ingest, select, tune, fit, evaluate, extend predictors,
//! forecast, and write per-country artifacts.

mod chart;
mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{load_config, ConfigError, RunConfig};

use crate::arima::{self, PredictorPath};
use crate::edr::{rank_predictors, select_top_k, FeatureRanking};
use crate::evaluation::{design_matrix, grid_search, shifted_mape, EvalReport, LewisBand};
use crate::gbtree;
use crate::ingest::{build_panel_in_range, parse_wide_csv, IndicatorPanel, RawTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Select,
    Tune,
    Fit,
    Evaluate,
    Simulate,
    Forecast,
    Emit,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Ingest => "ingest",
            Stage::Select => "select",
            Stage::Tune => "tune",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
            Stage::Simulate => "simulate",
            Stage::Forecast => "forecast",
            Stage::Emit => "emit",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{country}: {stage} stage failed: {source}")]
    Stage {
        country: String,
        stage: Stage,
        #[source]
        source: Box<crate::Error>,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot render {file}: {message}")]
    Render { file: &'static str, message: String },
    #[error("every country failed ({0} attempted)")]
    NoSuccess(usize),
}

fn stage_err<E: Into<crate::Error>>(
    country: &str,
    stage: Stage,
) -> impl FnOnce(E) -> PipelineError + '_ {
    move |e| PipelineError::Stage {
        country: country.to_string(),
        stage,
        source: Box::new(e.into()),
    }
}

/// Whether to extend predictors and forecast past the observed years.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Full,
    EvaluateOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRow {
    pub year: i32,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureRow {
    pub year: i32,
    pub predicted: f64,
}

/// Everything produced for one country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBundle {
    pub country: String,
    pub target_code: String,
    pub ranking: FeatureRanking,
    pub selected_features: Vec<String>,
    pub fitted_train: Vec<FittedRow>,
    pub fitted_test: Vec<FittedRow>,
    pub future: Vec<FutureRow>,
    pub report: EvalReport,
    pub predictor_paths: Vec<PredictorPath>,
}

impl ForecastBundle {
    pub fn mean_future(&self) -> Option<f64> {
        (!self.future.is_empty()).then(|| {
            self.future.iter().map(|r| r.predicted).sum::<f64>() / self.future.len() as f64
        })
    }
}

/// Reads the data file named by the configuration.
pub fn load_table(config: &RunConfig) -> Result<RawTable, crate::Error> {
    Ok(parse_wide_csv(&config.data_path)?)
}

fn country_panel(
    config: &RunConfig,
    table: &RawTable,
    country: &str,
) -> Result<IndicatorPanel, crate::Error> {
    let panel = build_panel_in_range(
        table,
        country,
        &config.target_code,
        config.max_missing_fraction,
        (config.year_range.start, config.year_range.end),
    )?;
    Ok(panel.slice(config.split.train.start, config.split.test.end)?)
}

/// The panel over the training and test years, and a training panel built
/// from the training years alone. Gap filling in the training panel never
/// reads a test-year value; it keeps only predictors present in both.
fn split_panels(
    config: &RunConfig,
    table: &RawTable,
    country: &str,
) -> Result<(IndicatorPanel, IndicatorPanel), crate::Error> {
    let full = country_panel(config, table, country)?;
    let train_only = build_panel_in_range(
        table,
        country,
        &config.target_code,
        config.max_missing_fraction,
        (config.split.train.start, config.split.train.end),
    )?;
    let predictors = train_only
        .predictors()
        .iter()
        .filter(|(id, _)| full.predictor(id).is_some())
        .map(|(id, s)| (id.clone(), s.clone()))
        .collect();
    let train = IndicatorPanel::new(country, train_only.target().clone(), predictors)?;
    Ok((full, train))
}

/// EDR ranking of one country's predictors over the training years.
pub fn rank_country(
    config: &RunConfig,
    table: &RawTable,
    country: &str,
) -> Result<FeatureRanking, PipelineError> {
    let (_, train) =
        split_panels(config, table, country).map_err(stage_err(country, Stage::Ingest))?;
    rank_predictors(&train, &config.edr).map_err(stage_err(country, Stage::Select))
}

/// Loads the data file and runs one country.
pub fn run_country(
    config: &RunConfig,
    country: &str,
    mode: RunMode,
) -> Result<ForecastBundle, PipelineError> {
    let table = load_table(config).map_err(stage_err(country, Stage::Ingest))?;
    run_country_with_table(config, &table, country, mode)
}

/// Runs every stage for one country. Selection, tuning and fitting see the
/// training years only; predictor models see every observed year.
pub fn run_country_with_table(
    config: &RunConfig,
    table: &RawTable,
    country: &str,
    mode: RunMode,
) -> Result<ForecastBundle, PipelineError> {
    let split = config.split;
    let (panel, train) =
        split_panels(config, table, country).map_err(stage_err(country, Stage::Ingest))?;
    let test = panel
        .slice(split.test.start, split.test.end)
        .map_err(stage_err(country, Stage::Ingest))?;

    let ranking =
        rank_predictors(&train, &config.edr).map_err(stage_err(country, Stage::Select))?;
    let k = config.edr.k.min(ranking.len());
    if k < config.edr.k {
        log::warn!(
            "{country}: only {k} predictors available, wanted {}",
            config.edr.k
        );
    }
    let selected = select_top_k(&ranking, k).map_err(stage_err(country, Stage::Select))?;
    log::info!("{country}: selected {}", selected.join(", "));

    let search = grid_search(
        &train,
        &selected,
        &config.grid,
        &config.cv,
        config.mape_offset,
        config.seed,
    )
    .map_err(stage_err(country, Stage::Tune))?;
    log::info!(
        "{country}: best of {} candidates scores {:.3}",
        search.candidates.len(),
        search.best_score
    );

    let x_train = design_matrix(&train, &selected).map_err(stage_err(country, Stage::Fit))?;
    let model = gbtree::fit(&x_train, train.target().values(), &search.best_params)
        .map_err(stage_err(country, Stage::Fit))?;

    let eval = |part: &IndicatorPanel| -> Result<(Vec<FittedRow>, f64), crate::Error> {
        let x = design_matrix(part, &selected)?;
        let predicted = model.predict_matrix(&x)?;
        let actual = part.target().values();
        let score = shifted_mape(actual, &predicted, config.mape_offset)?;
        let rows = part
            .years()
            .iter()
            .zip(actual)
            .zip(&predicted)
            .map(|((&year, &actual), &predicted)| FittedRow {
                year,
                actual,
                predicted,
            })
            .collect();
        Ok((rows, score))
    };
    let (fitted_train, train_mape) = eval(&train).map_err(stage_err(country, Stage::Evaluate))?;
    let (fitted_test, test_mape) = eval(&test).map_err(stage_err(country, Stage::Evaluate))?;
    let report = EvalReport::new(train_mape, test_mape, config.mape_offset, &search)
        .map_err(stage_err(country, Stage::Evaluate))?;
    log::info!(
        "{country}: train MAPE {train_mape:.3}, test MAPE {test_mape:.3} ({})",
        report.band
    );

    let (predictor_paths, future) = match mode {
        RunMode::EvaluateOnly => (vec![], vec![]),
        RunMode::Full => {
            let paths = simulate_predictors(config, &panel, &selected)
                .map_err(stage_err(country, Stage::Simulate))?;
            let future = (0..config.horizon)
                .map(|h| {
                    let row: Vec<f64> = paths.iter().map(|p| p.values[h]).collect();
                    Ok(FutureRow {
                        year: paths
                            .first()
                            .map_or(split.test.end + 1 + h as i32, |p| p.years[h]),
                        predicted: model.predict(&row)?,
                    })
                })
                .collect::<Result<Vec<_>, gbtree::GbtError>>()
                .map_err(stage_err(country, Stage::Forecast))?;
            (paths, future)
        }
    };

    Ok(ForecastBundle {
        country: country.to_string(),
        target_code: config.target_code.clone(),
        ranking,
        selected_features: selected,
        fitted_train,
        fitted_test,
        future,
        report,
        predictor_paths,
    })
}

fn simulate_predictors(
    config: &RunConfig,
    panel: &IndicatorPanel,
    selected: &[String],
) -> Result<Vec<PredictorPath>, crate::Error> {
    let last_year = panel.year_range().1;
    let years: Vec<i32> = (1..=config.horizon as i32).map(|h| last_year + h).collect();
    selected
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let history = panel
                .predictor(id)
                .ok_or_else(|| crate::evaluation::EvalError::UnknownPredictor(id.clone()))?
                .values();
            let model = arima::auto_fit(history)?;
            let values = if config.stochastic_predictors {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(i as u64);
                arima::simulate(&model, history, config.horizon, &mut rng)?
            } else {
                arima::forecast(&model, history, config.horizon)?
            };
            Ok(PredictorPath {
                indicator_id: id.clone(),
                model,
                years: years.clone(),
                values,
            })
        })
        .collect()
}

/// A file written by [`emit_artifacts`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub bytes: u64,
}

/// Directory name used for a country's artifacts.
pub fn country_dir_name(country: &str) -> String {
    let slug: String = country
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    if slug.is_empty() {
        "_".into()
    } else {
        slug
    }
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    country: &'a str,
    target_code: &'a str,
    selected_features: &'a [String],
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn forecast_csv(bundle: &ForecastBundle) -> Result<Vec<u8>, csv::Error> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["year", "actual", "predicted", "segment"])?;
    for (segment, rows) in [
        ("train", &bundle.fitted_train),
        ("test", &bundle.fitted_test),
    ] {
        for r in rows {
            wtr.write_record([
                r.year.to_string(),
                r.actual.to_string(),
                r.predicted.to_string(),
                segment.to_string(),
            ])?;
        }
    }
    for r in &bundle.future {
        wtr.write_record([
            r.year.to_string(),
            String::new(),
            r.predicted.to_string(),
            "future".into(),
        ])?;
    }
    wtr.into_inner().map_err(|e| e.into_error().into())
}

fn chart_svg(bundle: &ForecastBundle) -> String {
    let actual: Vec<(i32, f64)> = bundle
        .fitted_train
        .iter()
        .chain(&bundle.fitted_test)
        .map(|r| (r.year, r.actual))
        .collect();
    let fitted = |rows: &[FittedRow]| rows.iter().map(|r| (r.year, r.predicted)).collect();
    // Start the forecast line at the last test prediction so the segments join.
    let future: Vec<(i32, f64)> = bundle
        .fitted_test
        .last()
        .filter(|_| !bundle.future.is_empty())
        .map(|r| (r.year, r.predicted))
        .into_iter()
        .chain(bundle.future.iter().map(|r| (r.year, r.predicted)))
        .collect();
    chart::render(
        &format!("{}: {}", bundle.country, bundle.target_code),
        &bundle.target_code,
        &[
            chart::Series {
                class: "actual",
                label: "actual",
                color: "#222222",
                dashed: false,
                points: actual,
            },
            chart::Series {
                class: "train",
                label: "train fit",
                color: "#1f77b4",
                dashed: false,
                points: fitted(&bundle.fitted_train),
            },
            chart::Series {
                class: "test",
                label: "test fit",
                color: "#ff7f0e",
                dashed: false,
                points: fitted(&bundle.fitted_test),
            },
            chart::Series {
                class: "future",
                label: "forecast",
                color: "#2ca02c",
                dashed: true,
                points: future,
            },
        ],
    )
}

/// Writes `forecast.csv`, `report.json`, `ranking.csv`, `predictors.csv` and
/// `chart.svg` under `output_dir/<country>/`.
pub fn emit_artifacts(
    bundle: &ForecastBundle,
    output_dir: &Path,
) -> Result<Vec<ManifestEntry>, PipelineError> {
    let files = render_artifacts(bundle)?;
    let dir = output_dir.join(country_dir_name(&bundle.country));
    fs::create_dir_all(&dir).map_err(|source| PipelineError::Write {
        path: dir.clone(),
        source,
    })?;
    files
        .into_iter()
        .map(|(name, bytes)| {
            let path = dir.join(name);
            match fs::write(&path, &bytes) {
                Ok(()) => Ok(ManifestEntry {
                    path,
                    bytes: bytes.len() as u64,
                }),
                Err(source) => Err(PipelineError::Write { path, source }),
            }
        })
        .collect()
}

fn render_artifacts(
    bundle: &ForecastBundle,
) -> Result<Vec<(&'static str, Vec<u8>)>, PipelineError> {
    let failed = |file| {
        move |e: &dyn std::error::Error| PipelineError::Render {
            file,
            message: e.to_string(),
        }
    };
    let forecast = forecast_csv(bundle).map_err(|e| failed("forecast.csv")(&e))?;
    let mut report = serde_json::to_vec_pretty(&ReportDocument {
        country: &bundle.country,
        target_code: &bundle.target_code,
        selected_features: &bundle.selected_features,
        report: &bundle.report,
    })
    .map_err(|e| failed("report.json")(&e))?;
    report.push(b'\n');
    let mut ranking = Vec::new();
    bundle
        .ranking
        .write_csv(&mut ranking)
        .map_err(|e| failed("ranking.csv")(&e))?;
    let mut predictors = Vec::new();
    arima::write_paths_csv(&bundle.predictor_paths, &mut predictors)
        .map_err(|e| failed("predictors.csv")(&e))?;
    Ok(vec![
        ("forecast.csv", forecast),
        ("report.json", report),
        ("ranking.csv", ranking),
        ("predictors.csv", predictors),
        ("chart.svg", chart_svg(bundle).into_bytes()),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub country: String,
    pub train_mape: Option<f64>,
    pub test_mape: Option<f64>,
    pub band: Option<LewisBand>,
    pub mean_future: Option<f64>,
    pub error: Option<String>,
}

impl SummaryRow {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
    pub manifest: Vec<ManifestEntry>,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.succeeded()).count()
    }

    /// CSV with columns `country,status,train_mape,test_mape,band,mean_future,error`.
    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "country",
            "status",
            "train_mape",
            "test_mape",
            "band",
            "mean_future",
            "error",
        ])?;
        for r in &self.rows {
            wtr.write_record([
                r.country.clone(),
                if r.succeeded() {
                    "ok".into()
                } else {
                    "error".into()
                },
                opt(r.train_mape),
                opt(r.test_mape),
                r.band.map(|b| b.to_string()).unwrap_or_default(),
                opt(r.mean_future),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        wtr.into_inner().map_err(|e| e.into_error().into())
    }
}

/// Runs every configured country independently, writes per-country
/// artifacts and `summary.csv`. Fails only when no country succeeds.
pub fn run_all(config: &RunConfig, mode: RunMode) -> Result<RunSummary, crate::Error> {
    config.validate()?;
    let table = load_table(config)?;
    let outcomes: Vec<Result<(ForecastBundle, Vec<ManifestEntry>), PipelineError>> = config
        .countries
        .par_iter()
        .map(|country| {
            let bundle = run_country_with_table(config, &table, country, mode)?;
            let manifest = emit_artifacts(&bundle, &config.output_dir)?;
            Ok((bundle, manifest))
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut manifest = Vec::new();
    for (country, outcome) in config.countries.iter().zip(outcomes) {
        match outcome {
            Ok((bundle, files)) => {
                rows.push(SummaryRow {
                    country: country.clone(),
                    train_mape: Some(bundle.report.train_mape),
                    test_mape: Some(bundle.report.test_mape),
                    band: Some(bundle.report.band),
                    mean_future: bundle.mean_future(),
                    error: None,
                });
                manifest.extend(files);
            }
            Err(e) => {
                log::error!("{e}");
                rows.push(SummaryRow {
                    country: country.clone(),
                    train_mape: None,
                    test_mape: None,
                    band: None,
                    mean_future: None,
                    error: Some(error_chain(&e)),
                });
            }
        }
    }
    let summary = RunSummary { rows, manifest };
    if summary.failures() == summary.rows.len() {
        return Err(PipelineError::NoSuccess(summary.rows.len()).into());
    }
    let path = config.output_dir.join("summary.csv");
    let bytes = summary
        .to_csv()
        .map_err(|e| std::io::Error::other(e.to_string()))
        .and_then(|b| {
            fs::create_dir_all(&config.output_dir)?;
            fs::write(&path, &b)?;
            Ok(b.len() as u64)
        })
        .map_err(|source| PipelineError::Write {
            path: path.clone(),
            source,
        })?;
    let mut summary = summary;
    summary.manifest.push(ManifestEntry { path, bytes });
    Ok(summary)
}

/// Per-country outcome of [`rank_all`].
pub type RankOutcome = (String, Result<FeatureRanking, PipelineError>);

/// Ranks predictors for every configured country and writes
/// `<output_dir>/<country>/ranking.csv`.
pub fn rank_all(config: &RunConfig) -> Result<Vec<RankOutcome>, crate::Error> {
    config.validate()?;
    let table = load_table(config)?;
    let out = config
        .countries
        .par_iter()
        .map(|country| {
            let result = rank_country(config, &table, country).and_then(|ranking| {
                let dir = config.output_dir.join(country_dir_name(country));
                let path = dir.join("ranking.csv");
                let mut buf = Vec::new();
                ranking
                    .write_csv(&mut buf)
                    .map_err(stage_err(country, Stage::Emit))?;
                fs::create_dir_all(&dir)
                    .and_then(|_| fs::write(&path, &buf))
                    .map_err(|source| PipelineError::Write { path, source })?;
                Ok(ranking)
            });
            (country.clone(), result)
        })
        .collect();
    Ok(out)
}

/// Joins an error with its sources, `outer: inner: ...`.
pub fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg
}
