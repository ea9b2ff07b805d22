//! Loss evaluators.
//!
//! An evaluator maps an architecture to a loss. Weight-bearing evaluators also
//! train shared weights from a batch of sampled architectures and can retrain
//! a fixed architecture from scratch. Complexity is not an evaluator concern;
//! the cost model lives in [`crate::regularizer`].

mod pareto;
mod supernet;
mod table;

pub use pareto::{pareto_front, ParetoPoint, ENUMERATION_LIMIT};
pub use supernet::{
    retrain, OpWeights, SupernetEvaluator, SupernetSpec, SyntheticDataset, ToySupernet,
};
pub use table::{Coupling, TableObjective, TradeoffSpec};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Architecture, SearchSpace};
use crate::regularizer::CostModel;

/// Which data partition a mini-batch is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Weights,
    Theta,
}

/// Indices of the examples in one mini-batch. Empty for data-free evaluators.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MiniBatch(pub Vec<usize>);

/// Held-out metrics of a retrained architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

pub trait Evaluator {
    fn space(&self) -> &SearchSpace;

    /// Costs implied by the evaluator itself (e.g. parameter counts), if any.
    fn intrinsic_costs(&self) -> Option<CostModel> {
        None
    }

    fn has_weights(&self) -> bool {
        false
    }

    /// Fresh weights. No-op for weight-free evaluators.
    fn reset_weights(&mut self, _rng: &mut dyn RngCore) {}

    fn draw_batch(&self, _split: Split, _size: usize, _rng: &mut dyn RngCore) -> MiniBatch {
        MiniBatch::default()
    }

    fn evaluate(&self, arch: &Architecture, batch: &MiniBatch, rng: &mut dyn RngCore) -> f64;

    /// One averaged gradient step over `samples`. No-op for weight-free evaluators.
    fn train_step(&mut self, _samples: &[Architecture], _batch: &MiniBatch) -> Result<()> {
        Ok(())
    }

    /// Trains `arch` from scratch and reports held-out metrics.
    fn retrain(&self, arch: &Architecture, rng: &mut dyn RngCore) -> Result<Outcome>;
}
