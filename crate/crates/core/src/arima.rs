//! ARIMA(p, d, q) models for extending predictor series.
//!
//! Orders are capped at 2. Coefficients come from the two-stage
//! Hannan–Rissanen least-squares procedure: a long autoregression supplies
//! innovation estimates, then the differenced series is regressed on its own
//! lags and the lagged innovation estimates. The model on the differenced
//! scale is
//!
//! ```text
//! w_t = c + Σ φ_i w_{t-i} + Σ θ_j e_{t-j} + e_t
//! ```

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ORDER: usize = 2;

/// Lag-1 autocorrelation below which a differenced series counts as stationary.
pub const STATIONARITY_ACF: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ArimaError {
    #[error("series too short: need {needed} values, got {got}")]
    Size { needed: usize, got: usize },
    #[error("invalid order ({p}, {d}, {q}): each must be at most {MAX_ORDER}")]
    Order { p: usize, d: usize, q: usize },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("failed to write model table: {0}")]
    Write(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self, ArimaError> {
        if p > MAX_ORDER || d > MAX_ORDER || q > MAX_ORDER {
            return Err(ArimaError::Order { p, d, q });
        }
        Ok(Self { p, d, q })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    /// Constant term on the differenced scale.
    pub intercept: f64,
    pub sigma2: f64,
    /// `None` for the random-walk fallback, which is not estimated.
    pub aic: Option<f64>,
    /// Set when every candidate fit failed and a random walk with drift was used.
    pub fallback: bool,
}

impl ArimaModel {
    fn validate(&self) -> Result<(), ArimaError> {
        let o = self.order;
        ArimaOrder::new(o.p, o.d, o.q)?;
        if self.ar_coeffs.len() != o.p || self.ma_coeffs.len() != o.q {
            return Err(ArimaError::Model(format!(
                "order ({}, {}, {}) with {} AR and {} MA coefficients",
                o.p,
                o.d,
                o.q,
                self.ar_coeffs.len(),
                self.ma_coeffs.len()
            )));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(ArimaError::Model(format!(
                "negative sigma2 {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// Mean of the (differenced) process, when the AR part allows one.
    pub fn process_mean(&self) -> Option<f64> {
        let denom = 1.0 - self.ar_coeffs.iter().sum::<f64>();
        (denom != 0.0).then(|| self.intercept / denom)
    }
}

/// Estimated ARMA part on an already stationary series.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaFit {
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    pub aic: f64,
    /// Number of residuals behind `sigma2`.
    pub n_obs: usize,
}

/// Applies first differences `d` times.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>, ArimaError> {
    if d >= series.len() {
        return Err(ArimaError::Size {
            needed: d + 1,
            got: series.len(),
        });
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Inverse of [`difference`]. `heads[k]` is the first value of the series
/// after `k` differences, for `k` in `0..d`.
pub fn undifference(diffs: &[f64], heads: &[f64]) -> Vec<f64> {
    let mut out = diffs.to_vec();
    for &head in heads.iter().rev() {
        let mut level = head;
        let mut next = Vec::with_capacity(out.len() + 1);
        next.push(level);
        for v in &out {
            level += v;
            next.push(level);
        }
        out = next;
    }
    out
}

/// Turns forecasts of the `d`-times differenced series back into levels,
/// continuing from the end of `history`.
fn integrate_forecast(history: &[f64], future_diffs: &[f64], d: usize) -> Vec<f64> {
    let stages: Vec<Vec<f64>> = (0..d)
        .map(|k| difference(history, k).expect("history longer than d"))
        .collect();
    let mut out = future_diffs.to_vec();
    for stage in stages.iter().rev() {
        let mut level = *stage.last().expect("non-empty stage");
        for v in out.iter_mut() {
            level += *v;
            *v = level;
        }
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let m = mean(x);
    let denom: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / denom
}

fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// Smallest `d` in 0..=2 whose differenced series has lag-1 autocorrelation
/// below 0.5; otherwise the `d` with the smallest variance.
pub fn select_d(series: &[f64]) -> Result<usize, ArimaError> {
    if series.len() < 6 {
        return Err(ArimaError::Size {
            needed: 6,
            got: series.len(),
        });
    }
    let candidates: Vec<Vec<f64>> = (0..=MAX_ORDER)
        .map(|d| difference(series, d))
        .collect::<Result<_, _>>()?;
    if let Some(d) = candidates
        .iter()
        .position(|w| lag1_autocorrelation(w) < STATIONARITY_ACF)
    {
        return Ok(d);
    }
    let (d, _) = candidates
        .iter()
        .map(|w| population_variance(w))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three candidates");
    Ok(d)
}

/// Ordinary least squares through the SVD; rejects numerically rank-deficient
/// designs. Returns coefficients and residuals.
fn least_squares(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ArimaError> {
    let svd = design.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    if !(s_max > 0.0) || s_min / s_max < 1e-10 {
        return Err(ArimaError::Fit(format!(
            "rank-deficient design (condition {:.3e})",
            s_max / s_min
        )));
    }
    let beta = svd
        .solve(response, 0.0)
        .map_err(|e| ArimaError::Fit(e.to_string()))?;
    let residuals = response - design * &beta;
    Ok((beta, residuals))
}

/// Regresses `y[t]` on a constant and `columns(t)` for `t` in `start..y.len()`.
fn lag_regression(
    y: &[f64],
    start: usize,
    n_regressors: usize,
    columns: impl Fn(usize, &mut Vec<f64>),
) -> Result<(DVector<f64>, DVector<f64>), ArimaError> {
    let rows = y.len() - start;
    if rows <= n_regressors + 1 {
        return Err(ArimaError::Fit(format!(
            "{rows} usable rows for {} parameters",
            n_regressors + 1
        )));
    }
    let mut data = Vec::with_capacity(rows * (n_regressors + 1));
    let mut row = Vec::with_capacity(n_regressors);
    for t in start..y.len() {
        row.clear();
        columns(t, &mut row);
        data.push(1.0);
        data.extend_from_slice(&row);
    }
    let design = DMatrix::from_row_slice(rows, n_regressors + 1, &data);
    let response = DVector::from_column_slice(&y[start..]);
    least_squares(&design, &response)
}

/// Order of the first-stage autoregression used to proxy innovations.
fn long_ar_order(n: usize, p: usize, q: usize) -> usize {
    let by_length = (n as f64).sqrt().floor() as usize;
    by_length.max(p + q).max(2 * p.max(q)).min((n - 1) / 3)
}

/// AR polynomial 1 - φ1 z - φ2 z² has all roots outside the unit circle.
fn ar_is_stationary(phi: &[f64]) -> bool {
    match *phi {
        [] => true,
        [a] => a.abs() < 1.0,
        [a, b] => b.abs() < 1.0 && a + b < 1.0 && b - a < 1.0,
        _ => false,
    }
}

/// MA polynomial 1 + θ1 z + θ2 z² has all roots outside the unit circle.
fn ma_is_invertible(theta: &[f64]) -> bool {
    let negated: Vec<f64> = theta.iter().map(|t| -t).collect();
    ar_is_stationary(&negated)
}

/// Hannan–Rissanen estimate of an ARMA(p, q) with intercept.
pub fn fit_arma(series: &[f64], p: usize, q: usize) -> Result<ArmaFit, ArimaError> {
    fit_arma_from(series, p, q, 0)
}

/// First index usable by the second-stage regression.
fn natural_start(n: usize, p: usize, q: usize) -> usize {
    if q == 0 {
        p
    } else {
        p.max(long_ar_order(n, p, q) + q)
    }
}

/// As [`fit_arma`], with the second-stage regression starting no earlier
/// than `min_start`, so that competing orders share an estimation window.
fn fit_arma_from(
    series: &[f64],
    p: usize,
    q: usize,
    min_start: usize,
) -> Result<ArmaFit, ArimaError> {
    ArimaOrder::new(p, 0, q)?;
    let n = series.len();
    let needed = 5 * (p + q + 1);
    if n < needed {
        return Err(ArimaError::Size { needed, got: n });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ArimaError::Fit("non-finite value in series".into()));
    }

    // Stage 1: innovation estimates from a long autoregression.
    let (innovations, start) = if q == 0 {
        (vec![0.0; n], p)
    } else {
        let m = long_ar_order(n, p, q);
        let (_, resid) = lag_regression(series, m, m, |t, row| {
            row.extend((1..=m).map(|i| series[t - i]));
        })?;
        let mut e = vec![0.0; n];
        e[m..].copy_from_slice(resid.as_slice());
        (e, natural_start(n, p, q))
    };
    let start = start.max(min_start);
    if start >= n {
        return Err(ArimaError::Size {
            needed: start + 1,
            got: n,
        });
    }

    // Stage 2: regression on own lags and lagged innovations.
    let (beta, resid) = lag_regression(series, start, p + q, |t, row| {
        row.extend((1..=p).map(|i| series[t - i]));
        row.extend((1..=q).map(|j| innovations[t - j]));
    })?;
    let ar_coeffs = beta.as_slice()[1..=p].to_vec();
    let ma_coeffs = beta.as_slice()[p + 1..].to_vec();
    if !ar_is_stationary(&ar_coeffs) {
        return Err(ArimaError::Fit(format!(
            "non-stationary AR part {ar_coeffs:?}"
        )));
    }
    if !ma_is_invertible(&ma_coeffs) {
        return Err(ArimaError::Fit(format!(
            "non-invertible MA part {ma_coeffs:?}"
        )));
    }

    let n_obs = resid.len();
    let sigma2 = resid.norm_squared() / n_obs as f64;
    let scale = series.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(sigma2 > 1e-12 * scale) {
        return Err(ArimaError::Fit("residual variance is zero".into()));
    }
    Ok(ArmaFit {
        intercept: beta[0],
        ar_coeffs,
        ma_coeffs,
        sigma2,
        aic: n_obs as f64 * sigma2.ln() + 2.0 * (p + q + 1) as f64,
        n_obs,
    })
}

/// Random walk with drift equal to the mean first difference.
fn drift_model(series: &[f64]) -> ArimaModel {
    let diffs = difference(series, 1).expect("caller checked length");
    ArimaModel {
        order: ArimaOrder { p: 0, d: 1, q: 0 },
        ar_coeffs: vec![],
        ma_coeffs: vec![],
        intercept: mean(&diffs),
        sigma2: population_variance(&diffs),
        aic: None,
        fallback: true,
    }
}

/// Chooses `d` with [`select_d`], then the (p, q) in {0,1,2}² with the lowest
/// AIC. Ties go to the smaller p + q, then the smaller p. Falls back to a
/// random walk with drift when no candidate can be fitted.
pub fn auto_fit(series: &[f64]) -> Result<ArimaModel, ArimaError> {
    if series.len() < 10 {
        return Err(ArimaError::Size {
            needed: 10,
            got: series.len(),
        });
    }
    let d = select_d(series)?;
    let w = difference(series, d)?;
    // Score every order on the same observations; otherwise orders with a
    // longer warm-up are judged on a different (shorter) sample.
    let common_start = (0..=MAX_ORDER)
        .flat_map(|p| (0..=MAX_ORDER).map(move |q| (p, q)))
        .filter(|&(p, q)| w.len() >= 5 * (p + q + 1))
        .map(|(p, q)| natural_start(w.len(), p, q))
        .max()
        .unwrap_or(0);
    let mut best: Option<(ArimaOrder, ArmaFit)> = None;
    for p in 0..=MAX_ORDER {
        for q in 0..=MAX_ORDER {
            let fit = match fit_arma_from(&w, p, q, common_start) {
                Ok(f) => f,
                Err(e) => {
                    log::trace!("ARIMA({p},{d},{q}) rejected: {e}");
                    continue;
                }
            };
            let better = best.as_ref().is_none_or(|(o, b)| {
                fit.aic
                    .total_cmp(&b.aic)
                    .then((p + q).cmp(&(o.p + o.q)))
                    .then(p.cmp(&o.p))
                    .is_lt()
            });
            if better {
                best = Some((ArimaOrder { p, d, q }, fit));
            }
        }
    }
    // Re-estimate the chosen order on all of its usable observations.
    let best = best.map(|(order, fit)| match fit_arma(&w, order.p, order.q) {
        Ok(full) => (order, full),
        Err(_) => (order, fit),
    });
    Ok(match best {
        Some((order, fit)) => ArimaModel {
            order,
            ar_coeffs: fit.ar_coeffs,
            ma_coeffs: fit.ma_coeffs,
            intercept: fit.intercept,
            sigma2: fit.sigma2,
            aic: Some(fit.aic),
            fallback: false,
        },
        None => {
            log::debug!("no ARIMA candidate fitted; using random walk with drift");
            drift_model(series)
        }
    })
}

fn project(
    model: &ArimaModel,
    history: &[f64],
    horizon: usize,
    mut shock: impl FnMut() -> f64,
) -> Result<Vec<f64>, ArimaError> {
    model.validate()?;
    if horizon == 0 {
        return Err(ArimaError::Horizon);
    }
    let (p, d, q) = (model.order.p, model.order.d, model.order.q);
    let mut w = difference(history, d)?;
    let n = w.len();

    // In-sample innovations, conditional on zero pre-sample shocks.
    let mut e = vec![0.0; n];
    for t in p..n {
        let ar: f64 = (1..=p).map(|i| model.ar_coeffs[i - 1] * w[t - i]).sum();
        let ma: f64 = (1..=q.min(t))
            .map(|j| model.ma_coeffs[j - 1] * e[t - j])
            .sum();
        e[t] = w[t] - model.intercept - ar - ma;
    }

    for t in n..n + horizon {
        let ar: f64 = (1..=p.min(t))
            .map(|i| model.ar_coeffs[i - 1] * w[t - i])
            .sum();
        let ma: f64 = (1..=q.min(t))
            .map(|j| model.ma_coeffs[j - 1] * e[t - j])
            .sum();
        let shock = shock();
        w.push(model.intercept + ar + ma + shock);
        e.push(shock);
    }
    Ok(integrate_forecast(history, &w[n..], d))
}

/// Point forecasts: the ARMA recursion with future innovations at zero,
/// integrated back to levels from the end of `history`.
pub fn forecast(
    model: &ArimaModel,
    history: &[f64],
    horizon: usize,
) -> Result<Vec<f64>, ArimaError> {
    project(model, history, horizon, || 0.0)
}

/// One sample path with Gaussian innovations of variance `sigma2`.
pub fn simulate<R: Rng>(
    model: &ArimaModel,
    history: &[f64],
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ArimaError> {
    let normal =
        Normal::new(0.0, model.sigma2.sqrt()).map_err(|e| ArimaError::Model(e.to_string()))?;
    project(model, history, horizon, || normal.sample(rng))
}

/// A fitted predictor model and its forecast path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorPath {
    pub indicator_id: String,
    pub model: ArimaModel,
    pub years: Vec<i32>,
    pub values: Vec<f64>,
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per predictor: `indicator_id,p,d,q,ar_coeffs,ma_coeffs,intercept,
/// sigma2,aic,fallback` followed by one column per forecast year.
/// Coefficient lists are `;`-separated.
pub fn write_paths_csv<W: Write>(paths: &[PredictorPath], writer: W) -> Result<(), ArimaError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let years = paths
        .first()
        .map(|p| p.years.as_slice())
        .unwrap_or_default();
    let mut header: Vec<String> = [
        "indicator_id",
        "p",
        "d",
        "q",
        "ar_coeffs",
        "ma_coeffs",
        "intercept",
        "sigma2",
        "aic",
        "fallback",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(years.iter().map(i32::to_string));
    wtr.write_record(&header)?;
    for path in paths {
        if path.years != years {
            return Err(ArimaError::Model(format!(
                "{} forecasts different years from the first predictor",
                path.indicator_id
            )));
        }
        let m = &path.model;
        let mut record = vec![
            path.indicator_id.clone(),
            m.order.p.to_string(),
            m.order.d.to_string(),
            m.order.q.to_string(),
            join(&m.ar_coeffs),
            join(&m.ma_coeffs),
            m.intercept.to_string(),
            m.sigma2.to_string(),
            m.aic.map(|a| a.to_string()).unwrap_or_default(),
            m.fallback.to_string(),
        ];
        record.extend(path.values.iter().map(f64::to_string));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, n: usize, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    }

    /// AR(1)/MA(1) generator with a 100-step burn-in.
    fn arma11(seed: u64, n: usize, phi: f64, theta: f64) -> Vec<f64> {
        let e = noise(seed, n + 101, 1.0);
        let mut x = vec![0.0; n + 101];
        for t in 1..x.len() {
            x[t] = phi * x[t - 1] + e[t] + theta * e[t - 1];
        }
        x[101..].to_vec()
    }

    fn model(
        order: (usize, usize, usize),
        ar: Vec<f64>,
        ma: Vec<f64>,
        intercept: f64,
    ) -> ArimaModel {
        ArimaModel {
            order: ArimaOrder::new(order.0, order.1, order.2).unwrap(),
            ar_coeffs: ar,
            ma_coeffs: ma,
            intercept,
            sigma2: 1.0,
            aic: Some(0.0),
            fallback: false,
        }
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference(&[1.0, 2.0, 3.0, 4.0], 1).unwrap(), vec![1.0; 3]);
        assert_eq!(difference(&[3.0, 1.0], 0).unwrap(), vec![3.0, 1.0]);
        assert_eq!(
            difference(&[1.0, 4.0, 9.0, 16.0], 2).unwrap(),
            vec![2.0, 2.0]
        );
        assert!(matches!(
            difference(&[1.0, 2.0], 2),
            Err(ArimaError::Size { .. })
        ));
    }

    #[test]
    fn order_bounds() {
        assert!(ArimaOrder::new(2, 2, 2).is_ok());
        assert!(matches!(
            ArimaOrder::new(3, 0, 0),
            Err(ArimaError::Order { .. })
        ));
    }

    #[test]
    fn select_d_cases() {
        assert_eq!(select_d(&noise(1, 60, 1.0)).unwrap(), 0);
        let trend: Vec<f64> = noise(2, 60, 0.3)
            .iter()
            .enumerate()
            .map(|(t, e)| 2.0 * t as f64 + e)
            .collect();
        assert_eq!(select_d(&trend).unwrap(), 1);
        let quad: Vec<f64> = noise(3, 60, 0.1)
            .iter()
            .enumerate()
            .map(|(t, e)| 0.5 * (t * t) as f64 + e)
            .collect();
        assert_eq!(select_d(&quad).unwrap(), 2);
        assert!(matches!(select_d(&[1.0; 5]), Err(ArimaError::Size { .. })));
    }

    #[test]
    fn recovers_ar1() {
        let estimates: Vec<f64> = (0..10)
            .map(|s| {
                fit_arma(&arma11(100 + s, 200, 0.8, 0.0), 1, 0)
                    .unwrap()
                    .ar_coeffs[0]
            })
            .collect();
        let avg = estimates.iter().sum::<f64>() / estimates.len() as f64;
        assert!((avg - 0.8).abs() < 0.1, "mean estimate {avg}");
    }

    #[test]
    fn recovers_ma1() {
        let estimates: Vec<f64> = (0..10)
            .map(|s| {
                fit_arma(&arma11(200 + s, 400, 0.0, 0.5), 0, 1)
                    .unwrap()
                    .ma_coeffs[0]
            })
            .collect();
        let avg = estimates.iter().sum::<f64>() / estimates.len() as f64;
        assert!((avg - 0.5).abs() < 0.15, "mean estimate {avg}");
    }

    #[test]
    fn mean_only_fit() {
        let x: Vec<f64> = noise(5, 50, 2.0).iter().map(|v| v + 10.0).collect();
        let fit = fit_arma(&x, 0, 0).unwrap();
        let m = mean(&x);
        assert!((fit.intercept - m).abs() < 1e-10);
        assert!((fit.sigma2 - population_variance(&x)).abs() < 1e-10);
        assert_eq!(fit.n_obs, 50);
    }

    #[test]
    fn fit_rejects_short_and_degenerate() {
        assert!(matches!(
            fit_arma(&[1.0; 14], 1, 1),
            Err(ArimaError::Size { needed: 15, .. })
        ));
        assert!(matches!(
            fit_arma(&[3.0; 30], 1, 0),
            Err(ArimaError::Fit(_))
        ));
        assert!(matches!(
            fit_arma(&[3.0; 30], 0, 0),
            Err(ArimaError::Fit(_))
        ));
    }

    #[test]
    fn auto_fit_cases() {
        let trend: Vec<f64> = noise(8, 40, 0.5)
            .iter()
            .enumerate()
            .map(|(t, e)| 1.5 * t as f64 + e)
            .collect();
        assert_eq!(auto_fit(&trend).unwrap().order.d, 1);

        let wn: Vec<f64> = noise(9, 80, 1.0).iter().map(|v| v + 3.0).collect();
        let m = auto_fit(&wn).unwrap();
        assert_eq!(m.order, ArimaOrder { p: 0, d: 0, q: 0 });
        let f = forecast(&m, &wn, 4).unwrap();
        assert!(f.iter().all(|v| (v - mean(&wn)).abs() < 1e-9));

        let flat = vec![7.0; 20];
        let m = auto_fit(&flat).unwrap();
        assert!(m.fallback);
        assert_eq!(m.order, ArimaOrder { p: 0, d: 1, q: 0 });
        assert_eq!(m.intercept, 0.0);
        assert_eq!(forecast(&m, &flat, 5).unwrap(), vec![7.0; 5]);

        assert!(matches!(auto_fit(&[1.0; 9]), Err(ArimaError::Size { .. })));
    }

    #[test]
    fn auto_fit_is_deterministic() {
        let x = arma11(77, 60, 0.6, 0.3);
        assert_eq!(auto_fit(&x).unwrap(), auto_fit(&x).unwrap());
    }

    #[test]
    fn forecast_examples() {
        let m = model((0, 0, 0), vec![], vec![], 4.2);
        assert_eq!(forecast(&m, &[1.0, 2.0, 3.0], 3).unwrap(), vec![4.2; 3]);

        let drift = model((0, 1, 0), vec![], vec![], 2.0);
        assert_eq!(
            forecast(&drift, &[4.0, 8.0, 10.0], 3).unwrap(),
            vec![12.0, 14.0, 16.0]
        );

        let ar = model((1, 0, 0), vec![0.5], vec![], 0.0);
        assert_eq!(
            forecast(&ar, &[1.0, -2.0, 4.0], 3).unwrap(),
            vec![2.0, 1.0, 0.5]
        );

        assert!(matches!(forecast(&ar, &[1.0], 0), Err(ArimaError::Horizon)));
        let broken = model((1, 0, 0), vec![], vec![], 0.0);
        assert!(matches!(
            forecast(&broken, &[1.0, 2.0], 1),
            Err(ArimaError::Model(_))
        ));
    }

    #[test]
    fn ma_forecast_uses_last_innovation() {
        // w = [0, 1]: e0 = 0 (pre-sample), e1 = 1 - 0.5·0 = 1, so the first
        // forecast is θ·e1 and the rest revert to the intercept.
        let m = model((0, 0, 1), vec![], vec![0.5], 0.0);
        assert_eq!(forecast(&m, &[0.0, 1.0], 3).unwrap(), vec![0.5, 0.0, 0.0]);
    }

    #[test]
    fn simulation_is_seeded() {
        let m = model((1, 1, 0), vec![0.3], vec![], 0.1);
        let hist = [1.0, 2.0, 2.5, 3.5];
        let a = simulate(&m, &hist, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = simulate(&m, &hist, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, forecast(&m, &hist, 5).unwrap());
    }

    #[test]
    fn paths_csv_layout() {
        let path = PredictorPath {
            indicator_id: "X".into(),
            model: ArimaModel {
                aic: None,
                fallback: true,
                ..model((1, 1, 0), vec![0.5], vec![], 2.0)
            },
            years: vec![2024, 2025],
            values: vec![1.5, 2.0],
        };
        let mut buf = Vec::new();
        write_paths_csv(&[path], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "indicator_id,p,d,q,ar_coeffs,ma_coeffs,intercept,sigma2,aic,fallback,2024,2025\n\
             X,1,1,0,0.5,,2,1,,true,1.5,2\n"
        );
    }

    proptest! {
        #[test]
        fn forecast_has_horizon_length(
            p in 0usize..=2, d in 0usize..=2, q in 0usize..=2, horizon in 1usize..12,
            hist in proptest::collection::vec(-10.0f64..10.0, 3..30),
        ) {
            let m = model((p, d, q), vec![0.2; p], vec![0.1; q], 0.3);
            prop_assert_eq!(forecast(&m, &hist, horizon).unwrap().len(), horizon);
        }

        #[test]
        fn undifference_round_trips(
            x in proptest::collection::vec(-1e3f64..1e3, 1..30),
            heads in proptest::collection::vec(-1e3f64..1e3, 1..=2),
        ) {
            let levels = undifference(&x, &heads);
            let back = difference(&levels, heads.len()).unwrap();
            prop_assert_eq!(back.len(), x.len());
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn ar1_forecasts_decay_geometrically(
            phi in -0.95f64..0.95, c in -5.0f64..5.0,
            hist in proptest::collection::vec(-10.0f64..10.0, 2..10),
        ) {
            prop_assume!(phi.abs() > 0.05);
            let m = model((1, 0, 0), vec![phi], vec![], c);
            let mu = m.process_mean().unwrap();
            let f = forecast(&m, &hist, 6).unwrap();
            let mut prev = hist[hist.len() - 1] - mu;
            for v in f {
                let centred = v - mu;
                prop_assume!(prev.abs() > 1e-3);
                prop_assert!((centred / prev - phi).abs() < 1e-9);
                prev = centred;
            }
        }
    }
}
