use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Evaluator, MiniBatch, Outcome};
use crate::error::{Error, Result};
use crate::model::{Architecture, Rows, SearchSpace};
use crate::regularizer::CostModel;

/// Extra loss `table[h_a][h_b]` added when dimensions `a` and `b` take
/// categories `h_a` and `h_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub dims: (usize, usize),
    pub table: Rows,
}

/// Loss Σ_d l_{d,h_d} + Σ couplings + N(0, σ²), a fresh noise draw per call.
#[derive(Debug, Clone, PartialEq)]
pub struct TableObjective {
    space: SearchSpace,
    losses: Rows,
    couplings: Vec<Coupling>,
    noise: f64,
}

impl TableObjective {
    pub fn new(space: SearchSpace, losses: Rows, couplings: Vec<Coupling>, noise: f64) -> Result<Self> {
        if losses.len() != space.dims()
            || losses.iter().zip(space.cardinalities()).any(|(r, &k)| r.len() != k)
        {
            return Err(Error::ShapeMismatch("loss table does not match the space".into()));
        }
        if losses.iter().flatten().any(|l| !l.is_finite()) {
            return Err(Error::Config("loss table has a non-finite entry".into()));
        }
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::Config(format!("noise must be finite and >= 0, got {noise}")));
        }
        for c in &couplings {
            let (a, b) = c.dims;
            if a >= space.dims() || b >= space.dims() || a == b {
                return Err(Error::Config(format!("bad coupling dimensions ({a}, {b})")));
            }
            if c.table.len() != space.cardinality(a)
                || c.table.iter().any(|r| r.len() != space.cardinality(b))
            {
                return Err(Error::ShapeMismatch(format!("coupling ({a}, {b}) has the wrong shape")));
            }
        }
        Ok(Self { space, losses, couplings, noise })
    }

    pub fn losses(&self) -> &Rows {
        &self.losses
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Loss without noise.
    pub fn deterministic(&self, arch: &Architecture) -> f64 {
        let h = arch.choices();
        let base: f64 = h.iter().enumerate().map(|(d, &k)| self.losses[d][k]).sum();
        let pairs: f64 = self
            .couplings
            .iter()
            .map(|c| c.table[h[c.dims.0]][h[c.dims.1]])
            .sum();
        base + pairs
    }

    pub fn table_evaluate<R: RngCore + ?Sized>(&self, arch: &Architecture, rng: &mut R) -> f64 {
        let mut loss = self.deterministic(arch);
        if self.noise > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            loss += self.noise * z;
        }
        loss
    }
}

impl Evaluator for TableObjective {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&self, arch: &Architecture, _batch: &MiniBatch, rng: &mut dyn RngCore) -> f64 {
        self.table_evaluate(arch, rng)
    }

    fn retrain(&self, arch: &Architecture, _rng: &mut dyn RngCore) -> Result<Outcome> {
        Ok(Outcome { loss: self.deterministic(arch), accuracy: None })
    }
}

/// Generated instance where cheaper categories have higher loss.
///
/// In every dimension the categories sit on a diminishing-returns curve:
/// cost grows with a hidden level t ∈ [0, 1] and loss falls as
/// `weight · (1 − t)²`. Dimension weights differ, so a growing complexity
/// penalty gives up the low-weight dimensions first. Category order is
/// shuffled per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffSpec {
    pub dims: usize,
    pub categories: usize,
    /// Std. dev. of the pairwise coupling entries; 0 keeps the loss separable.
    pub coupling: f64,
    /// Evaluation noise. Some noise matters: equal losses all get the worst
    /// utility, so a noise-free table keeps pushing away from a converged mode.
    pub noise: f64,
    /// Dimension weights are log-uniform in [min_weight, 1].
    pub min_weight: f64,
    pub seed: u64,
}

impl Default for TradeoffSpec {
    fn default() -> Self {
        Self { dims: 6, categories: 4, coupling: 0.0, noise: 0.05, min_weight: 0.01, seed: 0 }
    }
}

impl TradeoffSpec {
    /// Space, objective and raw cost table.
    pub fn build(&self) -> Result<(SearchSpace, TableObjective, CostModel)> {
        if self.dims == 0 || self.categories < 2 {
            return Err(Error::Config("trade-off instance needs dims >= 1 and categories >= 2".into()));
        }
        if !(self.min_weight > 0.0 && self.min_weight <= 1.0) {
            return Err(Error::Config("min_weight must lie in (0, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let k = self.categories;
        let mut losses = Vec::with_capacity(self.dims);
        let mut costs = Vec::with_capacity(self.dims);
        for _ in 0..self.dims {
            let weight = self.min_weight * self.min_weight.recip().powf(rng.random_range(0.0..1.0));
            let unit_cost = rng.random_range(0.5..1.5);
            let mut levels: Vec<f64> = (0..k)
                .map(|i| {
                    let jitter = if i == 0 || i == k - 1 { 0.0 } else { rng.random_range(-0.2..0.2) };
                    (i as f64 + jitter) / (k - 1) as f64
                })
                .collect();
            levels.shuffle(&mut rng);
            losses.push(levels.iter().map(|t| weight * (1.0 - t) * (1.0 - t)).collect::<Vec<_>>());
            costs.push(levels.iter().map(|t| unit_cost * (0.1 + t)).collect::<Vec<_>>());
        }
        let mut couplings = Vec::new();
        if self.coupling > 0.0 {
            for a in 0..self.dims.saturating_sub(1) {
                let table = (0..k)
                    .map(|_| {
                        (0..k)
                            .map(|_| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                self.coupling * z
                            })
                            .collect()
                    })
                    .collect();
                couplings.push(Coupling { dims: (a, a + 1), table });
            }
        }
        let space = SearchSpace::new(vec![k; self.dims])?;
        let objective = TableObjective::new(space.clone(), losses, couplings, self.noise)?;
        Ok((space, objective, CostModel::new(costs)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizer::complexity;

    fn two_by_two() -> TableObjective {
        let space = SearchSpace::new(vec![2, 2]).unwrap();
        TableObjective::new(space, vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![], 0.0).unwrap()
    }

    #[test]
    fn deterministic_examples() {
        let t = two_by_two();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(t.table_evaluate(&Architecture::new(vec![0, 0]), &mut rng), 0.0);
        assert_eq!(t.table_evaluate(&Architecture::new(vec![1, 1]), &mut rng), 2.0);
        let min = t
            .space()
            .enumerate()
            .map(|a| t.deterministic(&a))
            .fold(f64::INFINITY, f64::min);
        let sep: f64 = t.losses().iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).sum();
        assert_eq!(min, sep);
    }

    #[test]
    fn couplings_add_pair_terms() {
        let space = SearchSpace::new(vec![2, 3]).unwrap();
        let c = Coupling { dims: (0, 1), table: vec![vec![0.0, 0.5, 1.0], vec![2.0, 0.0, 0.0]] };
        let t = TableObjective::new(space, vec![vec![0.0, 1.0], vec![0.0, 0.0, 0.0]], vec![c], 0.0).unwrap();
        assert_eq!(t.deterministic(&Architecture::new(vec![0, 2])), 1.0);
        assert_eq!(t.deterministic(&Architecture::new(vec![1, 0])), 3.0);
    }

    #[test]
    fn noisy_mean_is_close_to_deterministic() {
        let space = SearchSpace::new(vec![2, 2]).unwrap();
        let t = TableObjective::new(space, vec![vec![0.3, 1.0], vec![0.2, 1.0]], vec![], 0.1).unwrap();
        let a = Architecture::new(vec![0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mean = (0..n).map(|_| t.table_evaluate(&a, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn validation() {
        let space = SearchSpace::new(vec![2, 2]).unwrap();
        assert!(TableObjective::new(space.clone(), vec![vec![0.0, 1.0]], vec![], 0.0).is_err());
        assert!(TableObjective::new(space.clone(), vec![vec![0.0, 1.0]; 2], vec![], -1.0).is_err());
        let bad = Coupling { dims: (0, 0), table: vec![vec![0.0; 2]; 2] };
        assert!(TableObjective::new(space, vec![vec![0.0, 1.0]; 2], vec![bad], 0.0).is_err());
    }

    #[test]
    fn tradeoff_instance_is_anticorrelated_and_reproducible() {
        let spec = TradeoffSpec { seed: 3, ..TradeoffSpec::default() };
        let (space, obj, cost) = spec.build().unwrap();
        assert_eq!(space.cardinalities(), &[4; 6]);
        for d in 0..6 {
            let mut pairs: Vec<(f64, f64)> =
                cost.row(d).iter().copied().zip(obj.losses()[d].iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert!(pairs.windows(2).all(|w| w[1].1 < w[0].1), "dim {d}: {pairs:?}");
        }
        let (_, obj2, cost2) = spec.build().unwrap();
        assert_eq!(obj, obj2);
        assert_eq!(cost, cost2);
        let cheapest = space
            .enumerate()
            .min_by(|a, b| complexity(&cost, a).unwrap().total_cmp(&complexity(&cost, b).unwrap()))
            .unwrap();
        let best = space
            .enumerate()
            .min_by(|a, b| obj.deterministic(a).total_cmp(&obj.deterministic(b)))
            .unwrap();
        assert_ne!(cheapest, best);
    }
}
