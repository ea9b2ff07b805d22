use serde::{Deserialize, Serialize};

use super::TableObjective;
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::regularizer::{complexity, CostModel};
use crate::objectives::Evaluator;

/// Largest space [`pareto_front`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub loss: f64,
    pub complexity: f64,
    pub arch: Architecture,
}

/// Exact nondominated set over (noise-free loss, complexity), sorted by
/// increasing complexity. Points with identical coordinates are all kept.
pub fn pareto_front(obj: &TableObjective, cost: &CostModel) -> Result<Vec<ParetoPoint>> {
    let space = obj.space();
    if !cost.fits(space) {
        return Err(Error::ShapeMismatch("cost model does not match the space".into()));
    }
    let n = space.num_architectures();
    if n > ENUMERATION_LIMIT {
        return Err(Error::SpaceTooLarge(n));
    }
    let mut points = space
        .enumerate()
        .map(|arch| {
            Ok(ParetoPoint { loss: obj.deterministic(&arch), complexity: complexity(cost, &arch)?, arch })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.complexity.total_cmp(&b.complexity)));

    // Sweep by increasing loss; a point survives if nothing with strictly
    // lower loss is at least as cheap, and it is the cheapest of its loss group.
    let mut front = Vec::new();
    let mut best_before = f64::INFINITY;
    let mut i = 0;
    while i < points.len() {
        let loss = points[i].loss;
        let group_end = points[i..].iter().position(|p| p.loss != loss).map_or(points.len(), |j| i + j);
        let group_min = points[i].complexity;
        if group_min < best_before {
            front.extend(points[i..group_end].iter().filter(|p| p.complexity == group_min).cloned());
            best_before = group_min;
        }
        i = group_end;
    }
    front.sort_by(|a, b| {
        a.complexity.total_cmp(&b.complexity).then(a.loss.total_cmp(&b.loss)).then(a.arch.cmp(&b.arch))
    });
    Ok(front)
}
