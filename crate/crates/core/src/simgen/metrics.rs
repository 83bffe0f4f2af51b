use serde::Serialize;

use crate::router::{QueryResult, QueryType};

/// `|estimate - gold| / gold`; infinite when only the gold cost is zero.
pub fn relative_error(estimate: f64, gold: f64) -> f64 {
    if gold == 0.0 {
        if estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (estimate - gold).abs() / gold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceOutcome {
    pub instance: usize,
    pub hit: bool,
    pub gamma: f64,
    pub wall_time_ms: f64,
    pub peak_ledger_entries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub instances: usize,
    pub hit_rate: f64,
    /// Mean and median over the finite errors.
    pub mean_gamma: f64,
    pub median_gamma: f64,
    /// Instances whose gold cost was zero while the estimate was not.
    pub infinite_gamma: usize,
}

impl Metrics {
    pub fn from_outcomes(outcomes: &[InstanceOutcome]) -> Self {
        let n = outcomes.len();
        let hits = outcomes.iter().filter(|o| o.hit).count();
        let mut finite: Vec<f64> = outcomes.iter().map(|o| o.gamma).filter(|g| g.is_finite()).collect();
        finite.sort_by(f64::total_cmp);
        let mean = if finite.is_empty() { 0.0 } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        let median = match finite.len() {
            0 => 0.0,
            k if k % 2 == 1 => finite[k / 2],
            k => (finite[k / 2 - 1] + finite[k / 2]) / 2.0,
        };
        Self {
            instances: n,
            hit_rate: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            mean_gamma: mean,
            median_gamma: median,
            infinite_gamma: n - finite.len(),
        }
    }
}

/// Pairs results with gold answers by position. A hit is an identical door
/// sequence; γ compares travel time for FPQ and contact for LCPQ.
pub fn evaluate(results: &[QueryResult], golds: &[QueryResult], qt: QueryType) -> (Vec<InstanceOutcome>, Metrics) {
    assert_eq!(results.len(), golds.len(), "results and gold answers must pair up");
    let outcomes: Vec<InstanceOutcome> = results
        .iter()
        .zip(golds)
        .enumerate()
        .map(|(i, (r, g))| InstanceOutcome {
            instance: i,
            hit: r.path.doors == g.path.doors,
            gamma: relative_error(r.totals.primary(qt), g.totals.primary(qt)),
            wall_time_ms: r.wall_time.as_secs_f64() * 1e3,
            peak_ledger_entries: r.memory_entries,
        })
        .collect();
    let metrics = Metrics::from_outcomes(&outcomes);
    (outcomes, metrics)
}
