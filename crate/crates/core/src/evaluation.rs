//! Forecast accuracy, temporal splits and hyperparameter search.

use std::fmt;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbtree::{self, FeatureMatrix, GbtError, GbtParams};
use crate::ingest::IndicatorPanel;

/// Smallest |actual| accepted by [`mape`].
pub const DEFAULT_DELTA: f64 = 1e-8;

/// Shift applied to the target before MAPE; moves an index living in
/// roughly [-2.5, 2.5] onto strictly positive values.
pub const DEFAULT_MAPE_OFFSET: f64 = 3.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("actual value {value} at index {index} is too close to zero for MAPE")]
    NearZeroActual { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid cross-validation scheme: {0}")]
    Scheme(String),
    #[error("unknown predictor {0}")]
    UnknownPredictor(String),
    #[error("grid search failed: {0}")]
    Search(String),
    #[error(transparent)]
    Gbt(#[from] GbtError),
}

/// Mean absolute percentage error in percent, rejecting actuals with
/// magnitude below [`DEFAULT_DELTA`].
pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<f64, EvalError> {
    mape_with_delta(actual, forecast, DEFAULT_DELTA)
}

pub fn mape_with_delta(actual: &[f64], forecast: &[f64], delta: f64) -> Result<f64, EvalError> {
    if actual.len() != forecast.len() {
        return Err(EvalError::Shape(format!(
            "{} actual values vs {} forecasts",
            actual.len(),
            forecast.len()
        )));
    }
    if actual.is_empty() {
        return Err(EvalError::Shape("MAPE of an empty sequence".into()));
    }
    if let Some((index, &value)) = actual.iter().enumerate().find(|(_, a)| !(a.abs() >= delta)) {
        return Err(EvalError::NearZeroActual { index, value });
    }
    let total: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(a, f)| ((a - f) / a).abs())
        .sum();
    Ok(total / actual.len() as f64 * 100.0)
}

/// MAPE after adding `offset` to both actuals and forecasts.
pub fn shifted_mape(actual: &[f64], forecast: &[f64], offset: f64) -> Result<f64, EvalError> {
    let a: Vec<f64> = actual.iter().map(|v| v + offset).collect();
    let f: Vec<f64> = forecast.iter().map(|v| v + offset).collect();
    mape(&a, &f)
}

/// Lewis interpretation of a MAPE value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LewisBand {
    HighlyAccurate,
    Good,
    Reasonable,
    Inaccurate,
}

impl fmt::Display for LewisBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LewisBand::HighlyAccurate => "highly_accurate",
            LewisBand::Good => "good",
            LewisBand::Reasonable => "reasonable",
            LewisBand::Inaccurate => "inaccurate",
        })
    }
}

/// `<10` highly accurate, `[10,20)` good, `[20,50)` reasonable, `>=50` inaccurate.
pub fn lewis_band(mape_value: f64) -> Result<LewisBand, EvalError> {
    if !(mape_value >= 0.0) {
        return Err(EvalError::Parameter(format!(
            "MAPE must be non-negative, got {mape_value}"
        )));
    }
    Ok(if mape_value < 10.0 {
        LewisBand::HighlyAccurate
    } else if mape_value < 20.0 {
        LewisBand::Good
    } else if mape_value < 50.0 {
        LewisBand::Reasonable
    } else {
        LewisBand::Inaccurate
    })
}

/// Inclusive range of years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearSpan {
    pub start: i32,
    pub end: i32,
}

impl YearSpan {
    pub fn new(start: i32, end: i32) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        usize::try_from(self.end - self.start + 1).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

impl fmt::Display for YearSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Temporal holdout: fit on `train`, score on the later `test` years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: YearSpan,
    pub test: YearSpan,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: YearSpan::new(1996, 2018),
            test: YearSpan::new(2019, 2023),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.train.is_empty() || self.test.is_empty() {
            return Err(EvalError::Parameter(format!(
                "empty split: train {} test {}",
                self.train, self.test
            )));
        }
        if self.train.end >= self.test.start {
            return Err(EvalError::Parameter(format!(
                "test start {} must come after train end {}",
                self.test.start, self.train.end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvScheme {
    pub min_train_size: usize,
    pub fold_horizon: usize,
}

impl Default for CvScheme {
    fn default() -> Self {
        Self {
            min_train_size: 15,
            fold_horizon: 2,
        }
    }
}

impl CvScheme {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.min_train_size < 8 {
            return Err(EvalError::Scheme(format!(
                "min_train_size must be at least 8, got {}",
                self.min_train_size
            )));
        }
        if self.fold_horizon == 0 {
            return Err(EvalError::Scheme("fold_horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// One expanding-window fold, as positions into the year axis and as years.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub train_years: YearSpan,
    pub validation_years: YearSpan,
}

/// Fold `i` trains on the first `min_train_size + i·fold_horizon` years and
/// validates on the following `fold_horizon` years. A final fold shorter
/// than `fold_horizon` takes whatever years remain.
pub fn expanding_folds(years: &[i32], scheme: &CvScheme) -> Result<Vec<Fold>, EvalError> {
    scheme.validate()?;
    if years.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::Scheme("years must be strictly ascending".into()));
    }
    if years.len() < scheme.min_train_size + scheme.fold_horizon {
        return Err(EvalError::Scheme(format!(
            "{} years cannot hold {} training plus {} validation years",
            years.len(),
            scheme.min_train_size,
            scheme.fold_horizon
        )));
    }
    let mut folds = Vec::new();
    let mut cut = scheme.min_train_size;
    while cut < years.len() {
        let end = (cut + scheme.fold_horizon).min(years.len());
        folds.push(Fold {
            train: 0..cut,
            validation: cut..end,
            train_years: YearSpan::new(years[0], years[cut - 1]),
            validation_years: YearSpan::new(years[cut], years[end - 1]),
        });
        cut = end;
    }
    Ok(folds)
}

/// Candidate values per booster hyperparameter. Candidates are enumerated
/// with `n_estimators` as the outermost loop and `scale_pos_weight` as the
/// innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtGrid {
    pub n_estimators: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub min_child_weight: Vec<f64>,
    pub gamma: Vec<f64>,
    pub subsample: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
    pub colsample_bylevel: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub scale_pos_weight: Vec<f64>,
}

impl Default for GbtGrid {
    /// 64 candidates drawn from the typical XGBoost ranges; small enough to
    /// cross-validate per country in seconds.
    fn default() -> Self {
        Self {
            n_estimators: vec![100],
            learning_rate: vec![0.1, 0.3],
            max_depth: vec![3, 5],
            min_child_weight: vec![1.0, 3.0],
            gamma: vec![0.0],
            subsample: vec![0.8, 1.0],
            colsample_bytree: vec![0.8, 1.0],
            colsample_bylevel: vec![1.0],
            lambda: vec![1.0, 5.0],
            alpha: vec![0.0],
            scale_pos_weight: vec![1.0],
        }
    }
}

impl GbtGrid {
    /// Every typical value for every hyperparameter (186,624 candidates).
    pub fn typical_values() -> Self {
        Self {
            n_estimators: vec![100, 500, 1000],
            learning_rate: vec![0.01, 0.1, 0.3],
            max_depth: vec![3, 5, 7, 10],
            min_child_weight: vec![1.0, 3.0, 5.0],
            gamma: vec![0.0, 0.1, 0.5, 1.0],
            subsample: vec![0.6, 0.8, 1.0],
            colsample_bytree: vec![0.6, 0.8, 1.0],
            colsample_bylevel: vec![0.6, 0.8, 1.0],
            lambda: vec![0.0, 1.0, 5.0, 10.0],
            alpha: vec![0.0, 1.0, 5.0, 10.0],
            scale_pos_weight: vec![1.0],
        }
    }

    /// A grid holding exactly one point.
    pub fn single(p: &GbtParams) -> Self {
        Self {
            n_estimators: vec![p.n_estimators],
            learning_rate: vec![p.learning_rate],
            max_depth: vec![p.max_depth],
            min_child_weight: vec![p.min_child_weight],
            gamma: vec![p.gamma],
            subsample: vec![p.subsample],
            colsample_bytree: vec![p.colsample_bytree],
            colsample_bylevel: vec![p.colsample_bylevel],
            lambda: vec![p.lambda],
            alpha: vec![p.alpha],
            scale_pos_weight: vec![p.scale_pos_weight],
        }
    }

    fn axis_lengths(&self) -> [usize; 11] {
        [
            self.n_estimators.len(),
            self.learning_rate.len(),
            self.max_depth.len(),
            self.min_child_weight.len(),
            self.gamma.len(),
            self.subsample.len(),
            self.colsample_bytree.len(),
            self.colsample_bylevel.len(),
            self.lambda.len(),
            self.alpha.len(),
            self.scale_pos_weight.len(),
        ]
    }

    pub fn len(&self) -> usize {
        self.axis_lengths().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product in enumeration order, each point validated.
    pub fn candidates(&self, seed: u64) -> Result<Vec<GbtParams>, EvalError> {
        let lens = self.axis_lengths();
        if lens.contains(&0) {
            return Err(EvalError::Parameter(
                "every grid axis needs at least one value".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.len());
        let mut idx = [0usize; 11];
        loop {
            let p = GbtParams {
                n_estimators: self.n_estimators[idx[0]],
                learning_rate: self.learning_rate[idx[1]],
                max_depth: self.max_depth[idx[2]],
                min_child_weight: self.min_child_weight[idx[3]],
                gamma: self.gamma[idx[4]],
                subsample: self.subsample[idx[5]],
                colsample_bytree: self.colsample_bytree[idx[6]],
                colsample_bylevel: self.colsample_bylevel[idx[7]],
                lambda: self.lambda[idx[8]],
                alpha: self.alpha[idx[9]],
                scale_pos_weight: self.scale_pos_weight[idx[10]],
                seed,
            };
            p.validate()?;
            out.push(p);
            // Odometer increment, last axis fastest.
            let mut axis = lens.len();
            loop {
                if axis == 0 {
                    return Ok(out);
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < lens[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

/// Feature matrix with one row per panel year and one column per selected
/// predictor, in selection order.
pub fn design_matrix(
    panel: &IndicatorPanel,
    selected: &[String],
) -> Result<FeatureMatrix, EvalError> {
    let columns = selected
        .iter()
        .map(|id| {
            panel
                .predictor(id)
                .map(|s| s.values())
                .ok_or_else(|| EvalError::UnknownPredictor(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = panel.years().len();
    let data = (0..n)
        .flat_map(|i| columns.iter().map(move |c| c[i]))
        .collect();
    Ok(FeatureMatrix::new(data, n, selected.len())?)
}

fn take_rows(x: &FeatureMatrix, rows: Range<usize>) -> FeatureMatrix {
    let n = rows.len();
    let data = rows.flat_map(|i| x.row(i).to_vec()).collect();
    FeatureMatrix::new(data, n, x.n_cols()).expect("rows of a valid matrix")
}

/// Held-out actuals and predictions of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub validation_years: YearSpan,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub params: GbtParams,
    /// Shifted MAPE per fold; empty when the candidate failed.
    pub fold_scores: Vec<f64>,
    /// Mean of `fold_scores`; `None` when the candidate failed.
    pub mean_score: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub fold_predictions: Vec<FoldPrediction>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_params: GbtParams,
    pub best_score: f64,
    pub best_index: usize,
    pub folds: Vec<Fold>,
    pub candidates: Vec<CandidateResult>,
}

impl GridSearchResult {
    pub fn best(&self) -> &CandidateResult {
        &self.candidates[self.best_index]
    }
}

fn evaluate_candidate(
    x: &FeatureMatrix,
    y: &[f64],
    folds: &[Fold],
    params: &GbtParams,
    offset: f64,
) -> Result<(Vec<f64>, Vec<FoldPrediction>), EvalError> {
    let mut scores = Vec::with_capacity(folds.len());
    let mut preds = Vec::with_capacity(folds.len());
    for fold in folds {
        let model = gbtree::fit(
            &take_rows(x, fold.train.clone()),
            &y[fold.train.clone()],
            params,
        )?;
        let predicted = model.predict_matrix(&take_rows(x, fold.validation.clone()))?;
        let actual = y[fold.validation.clone()].to_vec();
        scores.push(shifted_mape(&actual, &predicted, offset)?);
        preds.push(FoldPrediction {
            validation_years: fold.validation_years,
            actual,
            predicted,
        });
    }
    Ok((scores, preds))
}

/// Exhaustive search over `grid`, scoring each candidate by its mean
/// shifted MAPE across expanding-window folds of `panel`. The lowest score
/// wins; ties go to the earlier candidate in enumeration order.
pub fn grid_search(
    panel: &IndicatorPanel,
    selected: &[String],
    grid: &GbtGrid,
    scheme: &CvScheme,
    offset: f64,
    seed: u64,
) -> Result<GridSearchResult, EvalError> {
    let candidates = grid.candidates(seed)?;
    let folds = expanding_folds(panel.years(), scheme)?;
    let x = design_matrix(panel, selected)?;
    let y = panel.target().values();

    let results: Vec<CandidateResult> = candidates
        .par_iter()
        .map(
            |params| match evaluate_candidate(&x, y, &folds, params, offset) {
                Ok((fold_scores, fold_predictions)) => {
                    let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
                    CandidateResult {
                        params: *params,
                        fold_scores,
                        mean_score: Some(mean),
                        fold_predictions,
                        error: None,
                    }
                }
                Err(e) => CandidateResult {
                    params: *params,
                    fold_scores: vec![],
                    mean_score: None,
                    fold_predictions: vec![],
                    error: Some(e.to_string()),
                },
            },
        )
        .collect();
    for (i, r) in results.iter().enumerate() {
        match (&r.mean_score, &r.error) {
            (Some(s), _) => log::debug!("{}: candidate {i} score {s:.4}", panel.country()),
            (None, Some(e)) => log::debug!("{}: candidate {i} failed: {e}", panel.country()),
            _ => {}
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some(s) = r.mean_score {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    let (best_index, best_score) = best.ok_or_else(|| {
        EvalError::Search(format!(
            "all {} candidates failed; first error: {}",
            results.len(),
            results
                .first()
                .and_then(|r| r.error.clone())
                .unwrap_or_default()
        ))
    })?;
    Ok(GridSearchResult {
        best_params: results[best_index].params,
        best_score,
        best_index,
        folds,
        candidates: results,
    })
}

/// Summary of one grid point for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub params: GbtParams,
    pub mean_score: Option<f64>,
    pub fold_scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl From<&CandidateResult> for CandidateSummary {
    fn from(r: &CandidateResult) -> Self {
        Self {
            params: r.params,
            mean_score: r.mean_score,
            fold_scores: r.fold_scores.clone(),
            error: r.error.clone(),
        }
    }
}

/// Holdout accuracy of the tuned model plus the search that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_mape: f64,
    pub test_mape: f64,
    pub band: LewisBand,
    pub train_band: LewisBand,
    pub mape_offset: f64,
    pub best_params: GbtParams,
    pub cv_score: f64,
    pub fold_scores: Vec<f64>,
    pub folds: Vec<Fold>,
    pub grid: Vec<CandidateSummary>,
}

impl EvalReport {
    pub fn new(
        train_mape: f64,
        test_mape: f64,
        mape_offset: f64,
        search: &GridSearchResult,
    ) -> Result<Self, EvalError> {
        Ok(Self {
            train_mape,
            test_mape,
            band: lewis_band(test_mape)?,
            train_band: lewis_band(train_mape)?,
            mape_offset,
            best_params: search.best_params,
            cv_score: search.best_score,
            fold_scores: search.best().fold_scores.clone(),
            folds: search.folds.clone(),
            grid: search
                .candidates
                .iter()
                .map(CandidateSummary::from)
                .collect(),
        })
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::ingest::TimeSeries;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap(), 10.0);
        assert!(matches!(
            mape(&[1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]),
            Err(EvalError::NearZeroActual { index: 1, .. })
        ));
        assert!(matches!(
            mape(&[1.0], &[1.0, 2.0]),
            Err(EvalError::Shape(_))
        ));
        assert!(matches!(mape(&[], &[]), Err(EvalError::Shape(_))));
    }

    #[test]
    fn shifted_mape_examples() {
        assert_eq!(shifted_mape(&[-1.0], &[-1.0], 3.0).unwrap(), 0.0);
        let v = shifted_mape(&[0.0], &[0.3], 3.0).unwrap();
        assert!((v - 10.0).abs() < 1e-12, "{v}");
        assert!(matches!(
            shifted_mape(&[-0.5, 0.0, 0.5], &[0.0; 3], 0.0),
            Err(EvalError::NearZeroActual { index: 1, .. })
        ));
    }

    #[test]
    fn lewis_thresholds() {
        use LewisBand::*;
        let cases = [
            (0.0, HighlyAccurate),
            (5.0, HighlyAccurate),
            (10.0, Good),
            (15.0, Good),
            (20.0, Reasonable),
            (35.0, Reasonable),
            (50.0, Inaccurate),
            (1e9, Inaccurate),
        ];
        for (v, band) in cases {
            assert_eq!(lewis_band(v).unwrap(), band, "{v}");
        }
        assert!(lewis_band(-1.0).is_err());
        assert!(lewis_band(f64::NAN).is_err());
    }

    #[test]
    fn folds_for_training_window() {
        let years: Vec<i32> = (1996..=2018).collect();
        let folds = expanding_folds(
            &years,
            &CvScheme {
                min_train_size: 15,
                fold_horizon: 2,
            },
        )
        .unwrap();
        let validations: Vec<_> = folds
            .iter()
            .map(|f| (f.validation_years.start, f.validation_years.end))
            .collect();
        assert_eq!(
            validations,
            [(2011, 2012), (2013, 2014), (2015, 2016), (2017, 2018)]
        );
        assert_eq!(folds[0].train_years, YearSpan::new(1996, 2010));
        assert_eq!(folds[3].train, 0..21);
    }

    #[test]
    fn fold_edge_cases() {
        let years: Vec<i32> = (2000..2010).collect();
        let one = expanding_folds(
            &years,
            &CvScheme {
                min_train_size: 8,
                fold_horizon: 2,
            },
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        let partial = expanding_folds(
            &years,
            &CvScheme {
                min_train_size: 8,
                fold_horizon: 1,
            },
        )
        .unwrap();
        assert_eq!(partial.len(), 2);
        let short = expanding_folds(
            &(2000..2011).collect::<Vec<_>>(),
            &CvScheme {
                min_train_size: 8,
                fold_horizon: 2,
            },
        )
        .unwrap();
        assert_eq!(short.last().unwrap().validation.len(), 1);
        assert!(matches!(
            expanding_folds(
                &years,
                &CvScheme {
                    min_train_size: 9,
                    fold_horizon: 2
                }
            ),
            Err(EvalError::Scheme(_))
        ));
        assert!(matches!(
            expanding_folds(
                &years,
                &CvScheme {
                    min_train_size: 7,
                    fold_horizon: 1
                }
            ),
            Err(EvalError::Scheme(_))
        ));
    }

    #[test]
    fn grid_enumeration_order() {
        let grid = GbtGrid {
            learning_rate: vec![0.1, 0.3],
            lambda: vec![0.0, 1.0],
            ..GbtGrid::single(&GbtParams::default())
        };
        let c = grid.candidates(9).unwrap();
        let pairs: Vec<_> = c.iter().map(|p| (p.learning_rate, p.lambda)).collect();
        assert_eq!(pairs, [(0.1, 0.0), (0.1, 1.0), (0.3, 0.0), (0.3, 1.0)]);
        assert!(c.iter().all(|p| p.seed == 9));
        assert_eq!(GbtGrid::typical_values().len(), 186_624);
        assert_eq!(GbtGrid::default().len(), 64);
        let empty = GbtGrid {
            gamma: vec![],
            ..GbtGrid::default()
        };
        assert!(empty.candidates(0).is_err());
    }

    fn noisy_panel(seed: u64, n: usize) -> (IndicatorPanel, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let years: Vec<i32> = (1996..1996 + n as i32).collect();
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .map(|(a, b)| 0.8 * a - 0.3 * b + rng.random_range(-0.2..0.2))
            .collect();
        let mut preds = BTreeMap::new();
        preds.insert(
            "X1".to_string(),
            TimeSeries::new("X1", years.clone(), x1).unwrap(),
        );
        preds.insert(
            "X2".to_string(),
            TimeSeries::new("X2", years.clone(), x2).unwrap(),
        );
        let panel =
            IndicatorPanel::new("Test", TimeSeries::new("PV", years, y).unwrap(), preds).unwrap();
        (panel, vec!["X1".into(), "X2".into()])
    }

    #[test]
    fn singleton_grid_returns_its_point() {
        let (panel, sel) = noisy_panel(1, 20);
        let p = GbtParams {
            n_estimators: 20,
            max_depth: 2,
            ..GbtParams::default()
        };
        let res = grid_search(
            &panel,
            &sel,
            &GbtGrid::single(&p),
            &CvScheme {
                min_train_size: 12,
                fold_horizon: 2,
            },
            3.0,
            0,
        )
        .unwrap();
        assert_eq!(res.best_params, p);
        assert_eq!(res.candidates.len(), 1);
        assert_eq!(res.folds.len(), 4);
    }

    #[test]
    fn reported_score_matches_recomputation() {
        let (panel, sel) = noisy_panel(2, 24);
        let grid = GbtGrid {
            lambda: vec![0.0, 1e12],
            n_estimators: vec![30],
            ..GbtGrid::single(&GbtParams::default())
        };
        let res = grid_search(
            &panel,
            &sel,
            &grid,
            &CvScheme {
                min_train_size: 14,
                fold_horizon: 3,
            },
            3.0,
            0,
        )
        .unwrap();
        assert_eq!(res.candidates.len(), 2);
        for c in &res.candidates {
            let recomputed: Vec<f64> = c
                .fold_predictions
                .iter()
                .map(|f| shifted_mape(&f.actual, &f.predicted, 3.0).unwrap())
                .collect();
            let mean = recomputed.iter().sum::<f64>() / recomputed.len() as f64;
            assert!((mean - c.mean_score.unwrap()).abs() < 1e-10);
        }
        let scores: Vec<f64> = res
            .candidates
            .iter()
            .map(|c| c.mean_score.unwrap())
            .collect();
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(res.best_score, min);
        assert!((res.best_score - res.best().mean_score.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn two_by_two_grid_evaluates_four() {
        let (panel, sel) = noisy_panel(3, 20);
        let grid = GbtGrid {
            max_depth: vec![1, 2],
            learning_rate: vec![0.1, 0.3],
            n_estimators: vec![10],
            ..GbtGrid::single(&GbtParams::default())
        };
        let res = grid_search(
            &panel,
            &sel,
            &grid,
            &CvScheme {
                min_train_size: 12,
                fold_horizon: 4,
            },
            3.0,
            0,
        )
        .unwrap();
        assert_eq!(res.candidates.len(), 4);
        assert!(res.candidates.iter().all(|c| c.fold_scores.len() == 2));
    }

    #[test]
    fn all_failing_candidates_is_an_error() {
        let (panel, sel) = noisy_panel(4, 20);
        let grid = GbtGrid {
            n_estimators: vec![5],
            ..GbtGrid::single(&GbtParams::default())
        };
        // Shift so the first validation actual becomes exactly zero.
        let y0 = panel.target().values()[12];
        let err = grid_search(
            &panel,
            &sel,
            &grid,
            &CvScheme {
                min_train_size: 12,
                fold_horizon: 8,
            },
            -y0,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::Search(_)));
    }

    #[test]
    fn unknown_predictor() {
        let (panel, _) = noisy_panel(5, 20);
        assert!(matches!(
            design_matrix(&panel, &["NOPE".into()]),
            Err(EvalError::UnknownPredictor(_))
        ));
    }

    proptest! {
        #[test]
        fn mape_scale_invariant(
            pairs in proptest::collection::vec((0.1f64..100.0, -100.0f64..100.0), 1..30),
            c in 1e-3f64..1e3,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let f: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ca: Vec<f64> = a.iter().map(|v| v * c).collect();
            let cf: Vec<f64> = f.iter().map(|v| v * c).collect();
            let m1 = mape(&a, &f).unwrap();
            let m2 = mape(&ca, &cf).unwrap();
            prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));
        }

        #[test]
        fn shifted_mape_zero_iff_equal(
            a in proptest::collection::vec(-2.5f64..2.5, 1..20),
            bump in proptest::option::of((0usize..20, 1e-6f64..1.0)),
        ) {
            let mut f = a.clone();
            if let Some((i, d)) = bump {
                let i = i % f.len();
                f[i] += d;
            }
            let m = shifted_mape(&a, &f, 3.0).unwrap();
            prop_assert_eq!(m == 0.0, bump.is_none());
        }

        #[test]
        fn folds_never_leak(n in 9usize..60, min_train in 8usize..30, horizon in 1usize..8) {
            let years: Vec<i32> = (1990..1990 + n as i32).collect();
            let scheme = CvScheme { min_train_size: min_train, fold_horizon: horizon };
            match expanding_folds(&years, &scheme) {
                Ok(folds) => {
                    let mut covered = min_train;
                    for f in &folds {
                        prop_assert!(f.train_years.end < f.validation_years.start);
                        prop_assert_eq!(f.train.end, f.validation.start);
                        prop_assert_eq!(f.validation.start, covered);
                        covered = f.validation.end;
                    }
                    prop_assert_eq!(covered, n);
                }
                Err(_) => prop_assert!(n < min_train + horizon),
            }
        }

        #[test]
        fn lewis_band_monotone(a in 0.0f64..200.0, b in 0.0f64..200.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lewis_band(lo).unwrap() <= lewis_band(hi).unwrap());
        }
    }
}
