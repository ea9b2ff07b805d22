//! Rank-based utilities and mixture likelihood ratios.
//!
//! Raw losses never enter the distribution update directly. Each sample gets
//! the (possibly importance-weighted) fraction of samples that did at least as
//! well, and a three-level step function maps that fraction to a utility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_prob, Architecture, Distribution};

/// Upper clamp applied to likelihood ratios.
pub const RATIO_CEILING: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityConfig {
    pub lower: f64,
    pub upper: f64,
    pub low: f64,
    pub mid: f64,
    pub high: f64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self { lower: 0.25, upper: 0.75, low: -2.0, mid: 0.0, high: 2.0 }
    }
}

impl UtilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lower && self.lower < self.upper && self.upper <= 1.0) {
            return Err(Error::Config(format!(
                "utility thresholds must satisfy 0 < lower < upper <= 1, got {} and {}",
                self.lower, self.upper
            )));
        }
        if !(self.low <= self.mid && self.mid <= self.high) {
            return Err(Error::Config("utility values must satisfy low <= mid <= high".into()));
        }
        Ok(())
    }
}

/// Losses paired with per-sample likelihood ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBatch {
    losses: Vec<f64>,
    ratios: Vec<f64>,
}

impl WeightedBatch {
    /// Unit ratios.
    pub fn new(losses: Vec<f64>) -> Self {
        let ratios = vec![1.0; losses.len()];
        Self { losses, ratios }
    }

    pub fn weighted(losses: Vec<f64>, ratios: Vec<f64>) -> Result<Self> {
        if losses.len() != ratios.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} losses but {} ratios",
                losses.len(),
                ratios.len()
            )));
        }
        if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::ShapeMismatch("ratios must be finite and nonnegative".into()));
        }
        Ok(Self { losses, ratios })
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

/// q̄_i = λ⁻¹ Σ_k r_k 𝟙{loss_k ≤ loss_i}.
pub fn quantile_levels(batch: &WeightedBatch) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let lambda = batch.len() as f64;
    Ok(batch
        .losses
        .iter()
        .map(|&li| {
            batch
                .losses
                .iter()
                .zip(&batch.ratios)
                .filter(|(&lk, _)| lk <= li)
                .map(|(_, &r)| r)
                .sum::<f64>()
                / lambda
        })
        .collect())
}

pub fn utility_from_quantile(q: f64, cfg: &UtilityConfig) -> f64 {
    if q <= cfg.lower {
        cfg.low
    } else if q <= cfg.upper {
        cfg.mid
    } else {
        cfg.high
    }
}

pub fn utilities(batch: &WeightedBatch, cfg: &UtilityConfig) -> Result<Vec<f64>> {
    Ok(quantile_levels(batch)?
        .into_iter()
        .map(|q| utility_from_quantile(q, cfg))
        .collect())
}

/// r_i = P_{θ⁽ⁿ⁾}(M_i) / (N⁻¹ Σ_j P_{θ⁽ʲ⁾}(M_i)), clamped to [`RATIO_CEILING`].
pub fn likelihood_ratios(
    dists: &[Distribution],
    samples: &[Architecture],
    n: usize,
) -> Result<Vec<f64>> {
    if n >= dists.len() {
        return Err(Error::ShapeMismatch(format!(
            "component {n} out of range ({} components)",
            dists.len()
        )));
    }
    samples
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let lps = dists.iter().map(|d| log_prob(d, m)).collect::<Result<Vec<_>>>()?;
            ratio_from_log_probs(&lps, n).ok_or(Error::ZeroMixtureMass { index: i })
        })
        .collect()
}

/// Ratios of every component for every sample, indexed `[component][sample]`.
pub fn mixture_ratios(dists: &[Distribution], samples: &[Architecture]) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::with_capacity(samples.len()); dists.len()];
    for (i, m) in samples.iter().enumerate() {
        let lps = dists.iter().map(|d| log_prob(d, m)).collect::<Result<Vec<_>>>()?;
        for (n, col) in out.iter_mut().enumerate() {
            col.push(ratio_from_log_probs(&lps, n).ok_or(Error::ZeroMixtureMass { index: i })?);
        }
    }
    Ok(out)
}

fn ratio_from_log_probs(lps: &[f64], n: usize) -> Option<f64> {
    let max = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return None;
    }
    let mass: f64 = lps.iter().map(|lp| (lp - max).exp()).sum();
    let r = lps.len() as f64 * (lps[n] - max).exp() / mass;
    Some(r.min(RATIO_CEILING))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample, SearchSpace};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> UtilityConfig {
        UtilityConfig::default()
    }

    #[test]
    fn quantile_examples() {
        let q = quantile_levels(&WeightedBatch::new(vec![3.0, 1.0, 2.0, 4.0])).unwrap();
        assert_eq!(q, vec![0.75, 0.25, 0.5, 1.0]);
        let q = quantile_levels(&WeightedBatch::new(vec![5.0; 3])).unwrap();
        assert_eq!(q, vec![1.0; 3]);
        let b = WeightedBatch::weighted(vec![1.0, 2.0], vec![2.0, 0.0]).unwrap();
        assert_eq!(quantile_levels(&b).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(quantile_levels(&WeightedBatch::new(vec![])), Err(Error::EmptyBatch)));
    }

    #[test]
    fn step_function_boundaries() {
        assert_eq!(utility_from_quantile(0.25, &cfg()), -2.0);
        assert_eq!(utility_from_quantile(0.5, &cfg()), 0.0);
        assert_eq!(utility_from_quantile(0.75, &cfg()), 0.0);
        assert_eq!(utility_from_quantile(1.0, &cfg()), 2.0);
        assert_eq!(utility_from_quantile(1.7, &cfg()), 2.0);
    }

    #[test]
    fn utilities_examples() {
        let u = utilities(&WeightedBatch::new(vec![2.0, 1.0, 3.0, 4.0]), &cfg()).unwrap();
        assert_eq!(u, vec![0.0, -2.0, 0.0, 2.0]);
        let u = utilities(&WeightedBatch::new(vec![0.1, 0.9]), &cfg()).unwrap();
        assert_eq!(u, vec![0.0, 2.0]);
        assert_eq!(utilities(&WeightedBatch::new(vec![7.0]), &cfg()).unwrap(), vec![2.0]);
    }

    #[test]
    fn utility_counts_follow_floor_formula() {
        for lambda in 1..=16usize {
            let losses: Vec<f64> = (0..lambda).map(|i| 1.5 * (lambda - i) as f64).collect();
            let u = utilities(&WeightedBatch::new(losses), &cfg()).unwrap();
            let lows = u.iter().filter(|&&x| x == -2.0).count();
            let highs = u.iter().filter(|&&x| x == 2.0).count();
            assert_eq!(lows, lambda / 4, "lambda = {lambda}");
            assert_eq!(highs, lambda - (3 * lambda) / 4, "lambda = {lambda}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(UtilityConfig { lower: 0.8, ..cfg() }.validate().is_err());
        assert!(UtilityConfig { upper: 1.2, ..cfg() }.validate().is_err());
        assert!(UtilityConfig { low: 1.0, ..cfg() }.validate().is_err());
    }

    #[test]
    fn weighted_batch_validation() {
        assert!(WeightedBatch::weighted(vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(WeightedBatch::weighted(vec![1.0], vec![-1.0]).is_err());
        assert!(WeightedBatch::weighted(vec![1.0], vec![f64::INFINITY]).is_err());
    }

    fn two_opposite() -> Vec<Distribution> {
        vec![
            Distribution::from_rows(vec![vec![0.8, 0.2]]).unwrap(),
            Distribution::from_rows(vec![vec![0.2, 0.8]]).unwrap(),
        ]
    }

    #[test]
    fn ratio_examples() {
        let d = two_opposite();
        let r = likelihood_ratios(&d, &[Architecture::new(vec![0])], 0).unwrap();
        assert_abs_diff_eq!(r[0], 1.6, epsilon = 1e-15);

        let s = SearchSpace::new(vec![3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = Distribution::from_rows(vec![vec![0.2, 0.5, 0.3], vec![0.9, 0.1]]).unwrap();
        let samples: Vec<_> = (0..20).map(|_| sample(&Distribution::uniform(&s), &mut rng)).collect();
        assert!(likelihood_ratios(&[one.clone()], &samples, 0).unwrap().iter().all(|&r| r == 1.0));
        let same = vec![one.clone(), one.clone(), one];
        for n in 0..3 {
            assert!(likelihood_ratios(&same, &samples, n).unwrap().iter().all(|&r| r == 1.0));
        }
    }

    #[test]
    fn zero_mixture_mass_is_an_error() {
        let d = vec![Distribution::from_rows(vec![vec![1.0, 0.0]]).unwrap()];
        assert!(matches!(
            likelihood_ratios(&d, &[Architecture::new(vec![1])], 0),
            Err(Error::ZeroMixtureMass { index: 0 })
        ));
    }

    #[test]
    fn ratios_are_clamped() {
        let lps = [0.0, -1000.0];
        assert_eq!(ratio_from_log_probs(&lps, 0).unwrap(), 2.0);
        let lps = [-1e-9, -1000.0, -1000.0];
        assert!(ratio_from_log_probs(&lps, 1).unwrap() < 1e-300);
        // exceeding the ceiling needs more than 1e6 components
        let mut lps = vec![-1000.0; 2_000_000];
        lps[0] = 0.0;
        assert_eq!(ratio_from_log_probs(&lps, 0).unwrap(), RATIO_CEILING);
    }

    #[test]
    fn ratios_are_unbiased_under_the_mixture() {
        let dists = vec![
            Distribution::from_rows(vec![vec![0.7, 0.2, 0.1], vec![0.5, 0.5]]).unwrap(),
            Distribution::from_rows(vec![vec![0.1, 0.1, 0.8], vec![0.05, 0.95]]).unwrap(),
            Distribution::from_rows(vec![vec![0.3, 0.4, 0.3], vec![0.9, 0.1]]).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let samples: Vec<_> = (0..100_000)
            .map(|_| {
                let c = rng.random_range(0..dists.len());
                sample(&dists[c], &mut rng)
            })
            .collect();
        let all = mixture_ratios(&dists, &samples).unwrap();
        for (n, col) in all.iter().enumerate() {
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert!((mean - 1.0).abs() < 0.02, "component {n}: mean ratio {mean}");
            assert_eq!(col, &likelihood_ratios(&dists, &samples, n).unwrap());
        }
    }

    #[test]
    fn ratio_invariant_to_reordering_other_components() {
        let d = two_opposite();
        let third = Distribution::from_rows(vec![vec![0.4, 0.6]]).unwrap();
        let a = vec![d[0].clone(), d[1].clone(), third.clone()];
        let b = vec![d[0].clone(), third, d[1].clone()];
        let samples = [Architecture::new(vec![0]), Architecture::new(vec![1])];
        let ra = likelihood_ratios(&a, &samples, 0).unwrap();
        let rb = likelihood_ratios(&b, &samples, 0).unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    proptest! {
        #[test]
        fn utilities_depend_only_on_ranks(
            losses in prop::collection::vec(-100.0f64..100.0, 1..24),
            scale in 0.01f64..50.0,
            shift in -10.0f64..10.0,
        ) {
            let base = utilities(&WeightedBatch::new(losses.clone()), &cfg()).unwrap();
            let affine: Vec<f64> = losses.iter().map(|l| scale * l + shift).collect();
            let cubed: Vec<f64> = losses.iter().map(|l| l * l * l + l).collect();
            let u_aff = utilities(&WeightedBatch::new(affine), &cfg()).unwrap();
            let u_cub = utilities(&WeightedBatch::new(cubed), &cfg()).unwrap();
            // an affine map can merge nearly-equal values after rounding; only compare when ranks survive
            let distinct = |v: &[f64]| { let mut s = v.to_vec(); s.sort_by(f64::total_cmp); s.windows(2).all(|w| w[0] < w[1]) };
            if distinct(&losses) {
                prop_assert_eq!(&base, &u_cub);
                if distinct(&losses.iter().map(|l| scale * l + shift).collect::<Vec<_>>()) {
                    prop_assert_eq!(&base, &u_aff);
                }
            }
        }
    }
}
