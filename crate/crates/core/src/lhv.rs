//! Classical local-hidden-variable baselines.
//!
//! A deterministic strategy preassigns all six values a, c, b1, b2, d1, d2 at
//! preparation time; stochastic hidden variables are convex mixtures of the
//! 64 deterministic strategies. Two point functions matter: the
//! no-post-selection combination, bounded by ±2, and the post-selected
//! combination, which reaches ±4 on a point spectrum {-4, -2, 0, 2, 4}.
//! Arithmetic stays in small integers so every bound check is exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LhvError {
    #[error("strategy value must be +1 or -1, got {0}")]
    BadValue(i8),
    #[error("preparation probability {0} is negative")]
    NegativeProbability(f64),
    #[error("preparation probabilities sum to {0}, expected 1")]
    BadNormalization(f64),
    #[error("preparation has no entries")]
    Empty,
}

pub type Result<T> = std::result::Result<T, LhvError>;

/// Deterministic value assignment: Alice's a, c and Bob's values b1, b2
/// (observable B under either evolution) and d1, d2 (observable D likewise).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LhvStrategy {
    pub a: i8,
    pub c: i8,
    pub b1: i8,
    pub b2: i8,
    pub d1: i8,
    pub d2: i8,
}

impl LhvStrategy {
    pub fn new(a: i8, c: i8, b1: i8, b2: i8, d1: i8, d2: i8) -> Result<Self> {
        for v in [a, c, b1, b2, d1, d2] {
            if v != 1 && v != -1 {
                return Err(LhvError::BadValue(v));
            }
        }
        Ok(Self { a, c, b1, b2, d1, d2 })
    }

    pub fn values(self) -> [i8; 6] {
        [self.a, self.c, self.b1, self.b2, self.d1, self.d2]
    }
}

/// All 2^6 deterministic strategies, in lexicographic sign order.
pub fn enumerate_all() -> Vec<LhvStrategy> {
    let sign = |bit: u8| if bit == 0 { 1i8 } else { -1i8 };
    (0u8..64)
        .map(|mask| LhvStrategy {
            a: sign(mask >> 5 & 1),
            c: sign(mask >> 4 & 1),
            b1: sign(mask >> 3 & 1),
            b2: sign(mask >> 2 & 1),
            d1: sign(mask >> 1 & 1),
            d2: sign(mask & 1),
        })
        .collect()
}

/// Value seen without post-selection, where Bob's effective values are the
/// averages bm = (b1+b2)/2 and dm = (d1+d2)/2 over his two evolutions:
/// (a+c)·bm + (c-a)·dm. Always one of {-2, 0, 2}.
pub fn ic_no_postselection(s: LhvStrategy) -> f64 {
    let [a, c, b1, b2, d1, d2] = s.values().map(i32::from);
    // numerator (a+c)(b1+b2) + (c-a)(d1+d2) is always even
    let twice = (a + c) * (b1 + b2) + (c - a) * (d1 + d2);
    f64::from(twice) / 2.0
}

/// Value seen after post-selection pairs each Alice choice with one Bob
/// evolution: a·b1 + c·b2 + c·d1 - a·d2. Always in {-4, -2, 0, 2, 4}.
pub fn ic_postselected(s: LhvStrategy) -> f64 {
    let [a, c, b1, b2, d1, d2] = s.values().map(i32::from);
    f64::from(a * b1 + c * b2 + c * d1 - a * d2)
}

/// Which point function to average.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcVariant {
    NoPostselection,
    Postselected,
}

fn point_value(variant: IcVariant, s: LhvStrategy) -> f64 {
    match variant {
        IcVariant::NoPostselection => ic_no_postselection(s),
        IcVariant::Postselected => ic_postselected(s),
    }
}

/// A distribution over deterministic strategies; the free parameter of the
/// classical model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LhvPreparation {
    entries: Vec<(LhvStrategy, f64)>,
}

impl LhvPreparation {
    /// Probabilities must be nonnegative and sum to 1 within 1e-12.
    pub fn new(entries: Vec<(LhvStrategy, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LhvError::Empty);
        }
        let mut total = 0.0;
        for (_, p) in &entries {
            if *p < 0.0 || !p.is_finite() {
                return Err(LhvError::NegativeProbability(*p));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(LhvError::BadNormalization(total));
        }
        Ok(Self { entries })
    }

    pub fn point_mass(s: LhvStrategy) -> Self {
        Self {
            entries: vec![(s, 1.0)],
        }
    }

    /// a and c independent uniform ±1 with Bob's values fixed; the classic
    /// zero-mean preparation uses b1 = b2 = d1 = +1 and d2 = -1.
    pub fn symmetric(b1: i8, b2: i8, d1: i8, d2: i8) -> Result<Self> {
        let mut entries = Vec::with_capacity(4);
        for a in [1i8, -1] {
            for c in [1i8, -1] {
                entries.push((LhvStrategy::new(a, c, b1, b2, d1, d2)?, 0.25));
            }
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(LhvStrategy, f64)] {
        &self.entries
    }
}

/// Probability-weighted mean of the chosen point function.
pub fn lhv_expectation(prep: &LhvPreparation, variant: IcVariant) -> f64 {
    prep.entries
        .iter()
        .map(|(s, p)| p * point_value(variant, *s))
        .sum()
}

/// Extremes and exact value histogram of one point function over all 64
/// strategies. Histogram keys are the attained values (all integers).
#[derive(Clone, Debug, Serialize)]
pub struct IcSummary {
    pub max: f64,
    pub min: f64,
    pub histogram: BTreeMap<i64, u64>,
}

/// Brute-force summary over the 64 deterministic strategies for both point
/// functions.
#[derive(Clone, Debug, Serialize)]
pub struct LhvReport {
    pub strategy_count: u64,
    pub no_postselection: IcSummary,
    pub postselected: IcSummary,
}

fn summarize(variant: IcVariant) -> IcSummary {
    let mut histogram = BTreeMap::new();
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for s in enumerate_all() {
        let v = point_value(variant, s);
        max = max.max(v);
        min = min.min(v);
        // both point functions take integer values only
        *histogram.entry(v as i64).or_insert(0u64) += 1;
    }
    IcSummary { max, min, histogram }
}

pub fn lhv_exhaustive_report() -> LhvReport {
    LhvReport {
        strategy_count: 64,
        no_postselection: summarize(IcVariant::NoPostselection),
        postselected: summarize(IcVariant::Postselected),
    }
}
