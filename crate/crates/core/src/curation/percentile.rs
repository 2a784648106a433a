use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::Stage;

/// Corpus-level cut points of one statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStatistic {
    pub stage: Stage,
    pub values: BTreeMap<String, f64>,
    pub low_cut: f64,
    pub high_cut: f64,
}

/// Empirical quantile of sorted data with linear interpolation between
/// order statistics (position `q·(n-1)`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Keeps ids whose value lies in `[q(low_pct/100), q(1 - high_pct/100)]`.
pub fn percentile_prune(values: &BTreeMap<String, f64>, stage: Stage, low_pct: f64, high_pct: f64) -> (BTreeSet<String>, CorpusStatistic) {
    let mut sorted: Vec<f64> = values.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let (low_cut, high_cut) = if sorted.is_empty() {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (quantile(&sorted, low_pct / 100.0), quantile(&sorted, 1.0 - high_pct / 100.0))
    };
    let kept = values
        .iter()
        .filter(|(_, v)| low_cut <= **v && **v <= high_cut)
        .map(|(k, _)| k.clone())
        .collect();
    let stat = CorpusStatistic {
        stage,
        values: values.clone(),
        low_cut,
        high_cut,
    };
    (kept, stat)
}
