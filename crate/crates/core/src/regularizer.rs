//! Complexity cost model R(M) = Σ_d c_{d,h_d} and its expectation under θ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Architecture, Distribution, Rows, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostScale {
    Raw,
    /// Divided by the largest entry, so the maximum cost is 1.
    #[default]
    GlobalMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    costs: Rows,
    scale: CostScale,
}

impl CostModel {
    /// Raw-scale cost table. Entries must be finite and nonnegative.
    pub fn new(costs: Rows) -> Result<Self> {
        for (d, row) in costs.iter().enumerate() {
            if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::ShapeMismatch(format!(
                    "cost row {d} has a negative or non-finite entry"
                )));
            }
        }
        Ok(Self { costs, scale: CostScale::Raw })
    }

    pub fn zeros(space: &SearchSpace) -> Self {
        let costs = space.cardinalities().iter().map(|&k| vec![0.0; k]).collect();
        Self { costs, scale: CostScale::Raw }
    }

    pub fn rows(&self) -> &Rows {
        &self.costs
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.costs[d]
    }

    pub fn scale(&self) -> CostScale {
        self.scale
    }

    pub fn fits(&self, space: &SearchSpace) -> bool {
        self.costs.len() == space.dims()
            && self.costs.iter().zip(space.cardinalities()).all(|(r, &k)| r.len() == k)
    }

    fn check_dist(&self, dist: &Distribution) -> Result<()> {
        let ok = self.costs.len() == dist.dims()
            && self.costs.iter().zip(dist.rows()).all(|(c, p)| c.len() == p.len());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("cost model and distribution differ in shape".into()))
        }
    }

    /// Smallest achievable complexity, Σ_d min_k c_{d,k}.
    pub fn min_complexity(&self) -> f64 {
        self.costs.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).sum()
    }

    pub fn max_complexity(&self) -> f64 {
        self.costs.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum()
    }
}

pub fn complexity(cost: &CostModel, arch: &Architecture) -> Result<f64> {
    if arch.dims() != cost.costs.len() {
        return Err(Error::ShapeMismatch(format!(
            "architecture has {} dimensions, cost model has {}",
            arch.dims(),
            cost.costs.len()
        )));
    }
    arch.choices()
        .iter()
        .zip(&cost.costs)
        .enumerate()
        .map(|(d, (&h, row))| {
            row.get(h).copied().ok_or_else(|| {
                Error::ShapeMismatch(format!("category {h} out of range in dimension {d}"))
            })
        })
        .sum()
}

/// E_θ[R(M)] = Σ_d Σ_k c_{d,k} θ_{d,k}.
pub fn expected_complexity(cost: &CostModel, dist: &Distribution) -> Result<f64> {
    cost.check_dist(dist)?;
    Ok(cost
        .costs
        .iter()
        .zip(dist.rows())
        .map(|(c, p)| dot(c, p))
        .sum())
}

/// Natural gradient of E_θ[R(M)] in full-vector form:
/// entry (d, k) is (c_{d,k} − Q_d)·θ_{d,k} with Q_d = Σ_k c_{d,k} θ_{d,k}.
pub fn nat_grad_expected_complexity(cost: &CostModel, dist: &Distribution) -> Result<Rows> {
    cost.check_dist(dist)?;
    Ok(cost
        .costs
        .iter()
        .zip(dist.rows())
        .map(|(c, p)| {
            let q = dot(c, p);
            c.iter().zip(p).map(|(ck, pk)| (ck - q) * pk).collect()
        })
        .collect())
}

/// Divides every entry by the global maximum.
pub fn normalize_costs(cost: &CostModel) -> Result<CostModel> {
    let max = cost.costs.iter().flatten().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::AllZeroCosts);
    }
    let costs = cost
        .costs
        .iter()
        .map(|r| r.iter().map(|c| c / max).collect())
        .collect();
    Ok(CostModel { costs, scale: CostScale::GlobalMax })
}

/// Applies the requested scale to a raw table.
pub fn scaled(cost: CostModel, scale: CostScale) -> Result<CostModel> {
    match scale {
        CostScale::Raw => Ok(cost),
        CostScale::GlobalMax => normalize_costs(&cost),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
