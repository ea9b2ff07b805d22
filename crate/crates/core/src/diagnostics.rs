//! Self-checks behind the `gradcheck` command: the regularization natural
//! gradient against an explicit inverse Fisher product, and the toy network's
//! weight gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{fim_inverse_block, Architecture, Distribution, SearchSpace};
use crate::objectives::{MiniBatch, SupernetSpec, SyntheticDataset, ToySupernet};
use crate::regularizer::{nat_grad_expected_complexity, CostModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSummary {
    pub cases: usize,
    /// Largest error seen (absolute for the Fisher check, relative for the
    /// finite-difference check).
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckSummary {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// Random interior distribution: entries bounded away from 0.
fn interior(space: &SearchSpace, rng: &mut ChaCha8Rng) -> Distribution {
    let rows = space
        .cardinalities()
        .iter()
        .map(|&k| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        })
        .collect();
    Distribution::from_rows(rows).expect("normalized rows")
}

/// Compares `(c̄_d − Q_d 1) ⊙ θ̄_d` with `F⁻¹ (c̄_d − c_{d,K} 1)` on the first
/// K_d − 1 coordinates, for `cases` random spaces with D ≤ 5 and K_d ≤ 6.
pub fn fisher_oracle(cases: usize, seed: u64) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..cases {
        let dims = rng.random_range(1..=5);
        let space = SearchSpace::new((0..dims).map(|_| rng.random_range(2..=6)).collect())?;
        let dist = interior(&space, &mut rng);
        let cost = CostModel::new(
            space
                .cardinalities()
                .iter()
                .map(|&k| (0..k).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect(),
        )?;
        let analytic = nat_grad_expected_complexity(&cost, &dist)?;
        for d in 0..space.dims() {
            let c = cost.row(d);
            let k = c.len();
            let vanilla = nalgebra::DVector::from_iterator(k - 1, c[..k - 1].iter().map(|x| x - c[k - 1]));
            let oracle = fim_inverse_block(&dist, d)? * vanilla;
            for i in 0..k - 1 {
                max_error = max_error.max((analytic[d][i] - oracle[i]).abs());
            }
        }
    }
    Ok(CheckSummary { cases, max_error, tolerance: 1e-10 })
}

/// Central differences of the mini-batch loss against the analytic gradient
/// on `cases` random small networks, with the relative error
/// |a − n| / max(|a|, |n|, 1e-6) per weight.
pub fn supernet_gradcheck(cases: usize, seed: u64) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..cases {
        let dims = rng.random_range(1..=3);
        let spec = SupernetSpec {
            features: rng.random_range(2..=5),
            classes: rng.random_range(2..=4),
            block_width: rng.random_range(1..=3),
            ranks: (0..dims).map(|_| (0..rng.random_range(2..=3)).map(|_| rng.random_range(0..=3)).collect()).collect(),
            weights_examples: 12,
            theta_examples: 12,
            valid_examples: 12,
            ..SupernetSpec::default()
        };
        let data = SyntheticDataset::generate(&spec, &mut rng);
        let mut net = ToySupernet::init(&spec, &mut rng);
        // a random classifier, so every selected weight has a gradient
        let flat: Vec<f64> = net.to_flat().iter().map(|&x| x + rng.random_range(-0.5..0.5)).collect();
        net.set_flat(&flat);
        let arch = Architecture::new(spec.ranks.iter().map(|r| rng.random_range(0..r.len())).collect());
        let batch = MiniBatch((0..8).map(|_| rng.random_range(0..data.len())).collect());

        let (_, grad) = net.gradient(&arch, &data, &batch)?;
        let analytic = grad.to_flat();
        let mut probe = net.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let mut w = flat.clone();
            w[i] = flat[i] + h;
            probe.set_flat(&w);
            let up = probe.supernet_loss(&arch, &data, &batch)?;
            w[i] = flat[i] - h;
            probe.set_flat(&w);
            let down = probe.supernet_loss(&arch, &data, &batch)?;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            max_error = max_error.max(rel);
        }
    }
    Ok(CheckSummary { cases, max_error, tolerance: 1e-5 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fisher_oracle_agrees() {
        let s = fisher_oracle(200, 1).unwrap();
        assert!(s.passed(), "{s:?}");
    }

    #[test]
    fn finite_differences_agree() {
        let s = supernet_gradcheck(10, 2).unwrap();
        assert!(s.passed(), "{s:?}");
    }
}
