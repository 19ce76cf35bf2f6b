use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::experiment::ResultRow;

/// Per-horizon aggregate of a result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSummary {
    pub horizon: usize,
    pub runs: usize,
    pub median_suboptimality: f64,
    pub q1_suboptimality: f64,
    pub q3_suboptimality: f64,
    pub iqr_suboptimality: f64,
    pub median_episodes: Option<f64>,
    pub median_batches: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn median_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

pub fn summarize(rows: &[ResultRow]) -> Vec<HorizonSummary> {
    let mut by_h: BTreeMap<usize, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_h.entry(r.horizon).or_default().push(r);
    }
    by_h.into_iter()
        .map(|(horizon, rs)| {
            let mut sub: Vec<f64> = rs.iter().map(|r| r.suboptimality).collect();
            sub.sort_by(f64::total_cmp);
            let (q1, q3) = (quantile(&sub, 0.25), quantile(&sub, 0.75));
            HorizonSummary {
                horizon,
                runs: rs.len(),
                median_suboptimality: quantile(&sub, 0.5),
                q1_suboptimality: q1,
                q3_suboptimality: q3,
                iqr_suboptimality: q3 - q1,
                median_episodes: median_of(rs.iter().filter_map(|r| r.episodes.map(|e| e as f64))),
                median_batches: median_of(rs.iter().filter_map(|r| r.batches)),
            }
        })
        .collect()
}

pub fn render_text(summary: &[HorizonSummary]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v}"));
    let mut s = format!(
        "{:>8} {:>6} {:>14} {:>14} {:>14} {:>14}\n",
        "horizon", "runs", "median_subopt", "iqr_subopt", "median_eps", "median_batches"
    );
    for h in summary {
        let _ = writeln!(
            s,
            "{:>8} {:>6} {:>14.6} {:>14.6} {:>14} {:>14}",
            h.horizon,
            h.runs,
            h.median_suboptimality,
            h.iqr_suboptimality,
            opt(h.median_episodes),
            opt(h.median_batches)
        );
    }
    s
}
