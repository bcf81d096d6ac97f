//! Edit Distance on Real sequence (EDR) and predictor ranking.
//!
//! Two elements match when they differ by at most `epsilon`. The distance is
//! the minimum number of insertions, deletions and substitutions needed to
//! align two sequences, where matched pairs cost nothing:
//!
//! ```text
//! D(i, 0) = i
//! D(0, j) = j
//! D(i, j) = min(D(i-1, j-1) + [|a_i - b_j| > eps], D(i-1, j) + 1, D(i, j-1) + 1)
//! ```
//!
//! Ranking z-scores every series first so that a single `epsilon` is
//! meaningful across indicators measured in wildly different units.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{zscore, IndicatorPanel};

pub const DEFAULT_EPSILON: f64 = 0.25;
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum EdrError {
    #[error("invalid EDR parameter: {0}")]
    Parameter(String),
    #[error("panel for {0} has no predictors")]
    EmptyPanel(String),
    #[error("cannot select {requested} predictors, only {available} ranked")]
    Selection { requested: usize, available: usize },
    #[error("cannot normalize {id}: {source}")]
    Normalize {
        id: String,
        #[source]
        source: crate::ingest::IngestError,
    },
    #[error("failed to write ranking: {0}")]
    Write(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdrParams {
    /// Match tolerance on z-scored values.
    pub epsilon: f64,
    /// Number of predictors to keep.
    pub k: usize,
}

impl Default for EdrParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            k: DEFAULT_TOP_K,
        }
    }
}

impl EdrParams {
    pub fn validate(&self) -> Result<(), EdrError> {
        check_epsilon(self.epsilon)?;
        if self.k == 0 {
            return Err(EdrError::Parameter("k must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), EdrError> {
    // NaN fails the comparison too.
    if !(epsilon > 0.0) {
        return Err(EdrError::Parameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

/// EDR distance between two sequences. Symmetric, and zero for identical
/// inputs. Runs in O(len(a)·len(b)) time with two rolling rows.
pub fn edr_distance(a: &[f64], b: &[f64], epsilon: f64) -> Result<usize, EdrError> {
    check_epsilon(epsilon)?;
    // Keep the shorter sequence along the row to minimise memory.
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev: Vec<usize> = (0..=inner.len()).collect();
    let mut curr = vec![0usize; inner.len() + 1];
    for (i, &x) in outer.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &y) in inner.iter().enumerate() {
            let subcost = usize::from((x - y).abs() > epsilon);
            curr[j + 1] = (prev[j] + subcost).min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[inner.len()])
}

/// `1 - distance / max(len_a, len_b)`; two empty sequences are fully similar.
pub fn similarity(distance: usize, len_a: usize, len_b: usize) -> f64 {
    let longest = len_a.max(len_b);
    if longest == 0 {
        1.0
    } else {
        1.0 - distance as f64 / longest as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPredictor {
    pub indicator_id: String,
    pub distance: usize,
    pub similarity: f64,
}

/// Predictors ordered by ascending EDR distance to the target, ties broken
/// by ascending indicator id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureRanking {
    entries: Vec<RankedPredictor>,
}

impl FeatureRanking {
    /// Sorts `entries` into ranking order.
    pub fn from_entries(mut entries: Vec<RankedPredictor>) -> Self {
        entries.sort_by(|a, b| {
            a.distance
                .cmp(&b.distance)
                .then_with(|| a.indicator_id.cmp(&b.indicator_id))
        });
        Self { entries }
    }

    pub fn entries(&self) -> &[RankedPredictor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.indicator_id.as_str())
    }

    /// 1-based rank of an indicator.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.ids().position(|x| x == id).map(|p| p + 1)
    }

    /// CSV with columns `indicator_id,distance,similarity,rank`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EdrError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["indicator_id", "distance", "similarity", "rank"])?;
        for (i, e) in self.entries.iter().enumerate() {
            wtr.write_record([
                e.indicator_id.clone(),
                e.distance.to_string(),
                e.similarity.to_string(),
                (i + 1).to_string(),
            ])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Ranks every predictor in the panel by EDR distance between its z-scored
/// values and the z-scored target.
pub fn rank_predictors(
    panel: &IndicatorPanel,
    params: &EdrParams,
) -> Result<FeatureRanking, EdrError> {
    params.validate()?;
    if panel.predictors().is_empty() {
        return Err(EdrError::EmptyPanel(panel.country().to_string()));
    }
    let normalize = |id: &str, values: &[f64]| {
        zscore(values).map_err(|source| EdrError::Normalize {
            id: id.to_string(),
            source,
        })
    };
    let target = normalize(panel.target().id(), panel.target().values())?;
    let series: Vec<_> = panel.predictors().values().collect();
    let entries = series
        .par_iter()
        .map(|s| {
            let z = normalize(s.id(), s.values())?;
            let distance = edr_distance(&z, &target, params.epsilon)?;
            Ok(RankedPredictor {
                indicator_id: s.id().to_string(),
                distance,
                similarity: similarity(distance, z.len(), target.len()),
            })
        })
        .collect::<Result<Vec<_>, EdrError>>()?;
    Ok(FeatureRanking::from_entries(entries))
}

/// The first `k` ids in ranking order.
pub fn select_top_k(ranking: &FeatureRanking, k: usize) -> Result<Vec<String>, EdrError> {
    if k > ranking.len() {
        return Err(EdrError::Selection {
            requested: k,
            available: ranking.len(),
        });
    }
    Ok(ranking.ids().take(k).map(String::from).collect())
}
