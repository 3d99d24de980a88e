//! On-disk result formats.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use pivotmatch::evaluation::{percent, MetricsReport, Prediction};
use pivotmatch::Evaluation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutput {
    pub unpivot: UnpivotOut,
    pub matches: Vec<MatchOut>,
    pub reward: f64,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpivotOut {
    pub columns: Vec<String>,
    pub var_name: String,
    pub value_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOut {
    pub source: String,
    pub target: Option<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub llm_calls: usize,
    pub nodes: usize,
    pub elapsed_ms: u64,
}

impl MatchOutput {
    pub fn new(best: &Evaluation, stats: Stats) -> Self {
        MatchOutput {
            unpivot: UnpivotOut {
                columns: best.operator.unpivot_set.clone(),
                var_name: best.operator.var_name.clone(),
                value_name: best.operator.value_name.clone(),
            },
            matches: best
                .matching
                .pairs
                .iter()
                .map(|p| MatchOut {
                    source: p.source.clone(),
                    target: p.target.clone(),
                    score: p.score,
                })
                .collect(),
            reward: best.reward(),
            stats,
        }
    }

    pub fn prediction(&self) -> Prediction {
        Prediction {
            unpivot_set: self.unpivot.columns.clone(),
            var_name: self.unpivot.var_name.clone(),
            value_name: self.unpivot.value_name.clone(),
            matches: self
                .matches
                .iter()
                .map(|m| (m.source.clone(), m.target.clone()))
                .collect::<BTreeMap<_, _>>(),
        }
    }
}

/// Percentages with exactly two decimals, e.g. `"acc_e2e": 87.94`.
pub fn metrics_json(r: &MetricsReport) -> String {
    format!(
        "{{\n  \"acc_e2e\": {:.2},\n  \"acc_per_attr\": {:.2},\n  \"e2e_correct\": {},\n  \"e2e_denominator\": {},\n  \"correct_attributes\": {},\n  \"total_attributes\": {}\n}}\n",
        percent(r.acc_e2e),
        percent(r.acc_per_attr),
        r.e2e_correct,
        r.e2e_denominator,
        r.correct_set_size,
        r.attr_denominator
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_decimals() {
        let r = MetricsReport {
            acc_e2e: 0.5,
            acc_per_attr: 1.0,
            e2e_correct: 2,
            e2e_denominator: 4,
            correct_set_size: 10,
            attr_denominator: 10,
        };
        let text = metrics_json(&r);
        assert!(text.contains("\"acc_e2e\": 50.00,"));
        assert!(text.contains("\"acc_per_attr\": 100.00,"));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["acc_e2e"], 50.0);
    }
}
