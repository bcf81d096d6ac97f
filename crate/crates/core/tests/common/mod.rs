//! Synthetic country panels with a known set of true predictors.
#![allow(dead_code)]

use panelcast::ingest::{RawRow, RawTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const TARGET_CODE: &str = "PV.EST";
pub const FIRST_YEAR: i32 = 1996;
pub const LAST_YEAR: i32 = 2023;
pub const N_PREDICTORS: usize = 40;
pub const COUNTRIES: [&str; 6] = [
    "Avalon",
    "Borduria",
    "Carpania",
    "Dorado",
    "Elbonia",
    "Freedonia",
];
/// Long-run target level per country, spanning the usual index range.
const LEVELS: [f64; 6] = [-0.4, 0.6, -1.0, 0.9, 0.2, -0.2];
/// Within-country standard deviation of the target.
const TARGET_SD: f64 = 0.35;

/// Predictors that drive the target, with their linear weights.
pub const TRUE_PREDICTORS: [(&str, f64); 5] = [
    ("X03", 0.9),
    ("X11", 0.7),
    ("X18", 0.6),
    ("X27", 0.5),
    ("X35", -0.4),
];

pub fn predictor_code(i: usize) -> String {
    format!("X{:02}", i + 1)
}

pub fn years() -> Vec<i32> {
    (FIRST_YEAR..=LAST_YEAR).collect()
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = normal.sample(rng) / (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        x = phi * x + normal.sample(rng);
        out.push(x);
    }
    out
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    v.iter().map(|x| (x - m) / sd).collect()
}

/// One country's standardized predictors (in code order) and target.
///
/// The true predictors load on a shared slowly varying factor, so they
/// co-move with the target; the remaining predictors are independent
/// AR(1) decoys. The target is a sparse linear combination plus a mild
/// nonlinearity, with noise at a signal-to-noise variance ratio of 10.
pub fn country_series(seed: u64, level: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = years().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = ar1(&mut rng, n, 0.8);
    let mut predictors = Vec::with_capacity(N_PREDICTORS);
    for i in 0..N_PREDICTORS {
        let code = predictor_code(i);
        let series = match TRUE_PREDICTORS.iter().find(|(c, _)| *c == code) {
            Some((_, w)) => {
                let own = ar1(&mut rng, n, 0.5);
                let sign = w.signum();
                factor
                    .iter()
                    .zip(&own)
                    .map(|(f, e)| sign * f + 0.35 * e)
                    .collect()
            }
            None => {
                let phi = rng.random_range(0.2..0.9);
                ar1(&mut rng, n, phi)
            }
        };
        predictors.push(standardize(&series));
    }

    let signal: Vec<f64> = (0..n)
        .map(|t| {
            let linear: f64 = TRUE_PREDICTORS
                .iter()
                .map(|(code, w)| w * predictors[code[1..].parse::<usize>().unwrap() - 1][t])
                .sum();
            let x = &predictors[2];
            linear + 0.25 * (x[t] * 1.5).sin()
        })
        .collect();
    let var = {
        let m = signal.iter().sum::<f64>() / n as f64;
        signal.iter().map(|s| (s - m).powi(2)).sum::<f64>() / n as f64
    };
    let noise = Normal::new(0.0, (var / 10.0).sqrt()).unwrap();
    let raw: Vec<f64> = signal.iter().map(|s| s + noise.sample(&mut rng)).collect();
    let target = standardize(&raw)
        .iter()
        .map(|z| level + TARGET_SD * z)
        .collect();
    (predictors, target)
}

/// A wide table for the given countries, with predictors rescaled to look
/// like raw indicator levels.
pub fn synthetic_table(seed: u64, countries: &[&str]) -> RawTable {
    let mut rows = Vec::new();
    for (c, country) in countries.iter().enumerate() {
        let level = LEVELS[c % LEVELS.len()];
        let (predictors, target) =
            country_series(seed.wrapping_mul(1000).wrapping_add(c as u64), level);
        rows.push(RawRow {
            country: country.to_string(),
            indicator_name: "Political Stability".into(),
            indicator_code: TARGET_CODE.into(),
            values: target.into_iter().map(Some).collect(),
        });
        for (i, series) in predictors.into_iter().enumerate() {
            let level = 10.0 + 7.0 * i as f64;
            let spread = 1.0 + (i % 7) as f64;
            rows.push(RawRow {
                country: country.to_string(),
                indicator_name: format!("Indicator {}", i + 1),
                indicator_code: predictor_code(i),
                values: series
                    .into_iter()
                    .map(|z| Some(level + spread * z))
                    .collect(),
            });
        }
    }
    RawTable::new(years(), rows).unwrap()
}

pub fn six_country_table(seed: u64) -> RawTable {
    synthetic_table(seed, &COUNTRIES)
}
