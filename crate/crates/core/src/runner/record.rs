use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::model::Rows;

/// One trajectory row: the state of one component after one θ update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    pub component: usize,
    pub epsilon: f64,
    /// Loss estimate for the component from this iteration's samples
    /// (ratio-weighted for the importance-sampled update).
    pub mean_loss: f64,
    pub expected_complexity: f64,
    pub entropies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalArchitecture {
    pub component: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Complexity target, for random search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub labels: Vec<String>,
    pub choices: Vec<usize>,
    pub complexity: f64,
    /// Held-out loss after retraining.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// Final distribution of the component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Rows>,
}

/// Evaluator calls made by a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    /// Per-architecture weight gradients (λ per weight step).
    pub weight_gradients: u64,
    /// Architecture evaluations used to update θ or rank candidates.
    pub theta_evaluations: u64,
    pub retrains: u64,
}

impl CallCounts {
    pub fn search_total(&self) -> u64 {
        self.weight_gradients + self.theta_evaluations
    }
}

/// Wall-clock seconds per phase. Never part of a determinism comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub weight_stage: f64,
    pub theta_stage: f64,
    pub retrain: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    pub dim_names: Vec<String>,
    pub log: Vec<LogRow>,
    pub finals: Vec<FinalArchitecture>,
    pub calls: CallCounts,
    pub timings: Timings,
}

impl RunRecord {
    /// Equal in everything except timings.
    pub fn same_result(&self, other: &Self) -> bool {
        self.method == other.method
            && self.seed == other.seed
            && self.dim_names == other.dim_names
            && self.log == other.log
            && self.finals == other.finals
            && self.calls == other.calls
    }
}
