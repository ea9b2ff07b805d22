//! Distribution updates: the regularized natural-gradient step for a single
//! distribution, the importance-sampled step for an ensemble sharing one
//! batch of mixture samples, and the projection back onto the floored simplex.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample, Architecture, Distribution, Rows, SearchSpace};
use crate::regularizer::{expected_complexity, CostModel};
use crate::utility::{mixture_ratios, utilities, UtilityConfig, WeightedBatch};

/// η = 1 / Σ_d K_d.
pub fn default_learning_rate(space: &SearchSpace) -> f64 {
    1.0 / space.total_categories() as f64
}

/// θ_min = 1 / (20 Σ_d K_d). A row with one dominant category can still reach
/// a probability above 0.95.
pub fn default_floor(space: &SearchSpace) -> f64 {
    1.0 / (20.0 * space.total_categories() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSettings {
    pub learning_rate: f64,
    pub floor: f64,
    pub utility: UtilityConfig,
}

impl StepSettings {
    pub fn for_space(space: &SearchSpace) -> Self {
        Self {
            learning_rate: default_learning_rate(space),
            floor: default_floor(space),
            utility: UtilityConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::NonPositiveLearningRate(self.learning_rate));
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(Error::Config(format!("projection floor must be >= 0, got {}", self.floor)));
        }
        self.utility.validate()
    }
}

/// N distributions over one space, each paired with its regularization
/// coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    components: Vec<Distribution>,
    epsilons: Vec<f64>,
    settings: StepSettings,
}

impl Ensemble {
    pub fn new(components: Vec<Distribution>, epsilons: Vec<f64>, settings: StepSettings) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("an ensemble needs at least one component".into()));
        }
        if components.len() != epsilons.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} components but {} epsilons",
                components.len(),
                epsilons.len()
            )));
        }
        if epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Config("epsilons must be finite and nonnegative".into()));
        }
        let shape: Vec<usize> = components[0].rows().iter().map(Vec::len).collect();
        if components
            .iter()
            .any(|c| c.rows().iter().map(Vec::len).ne(shape.iter().copied()))
        {
            return Err(Error::ShapeMismatch("components differ in shape".into()));
        }
        settings.validate()?;
        Ok(Self { components, epsilons, settings })
    }

    /// Every component starts uniform.
    pub fn uniform(space: &SearchSpace, epsilons: Vec<f64>, settings: StepSettings) -> Result<Self> {
        let components = vec![Distribution::uniform(space); epsilons.len()];
        Self::new(components, epsilons, settings)
    }

    pub fn components(&self) -> &[Distribution] {
        &self.components
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn settings(&self) -> &StepSettings {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub complexity_before: Vec<f64>,
    pub complexity_after: Vec<f64>,
    pub max_change: f64,
    pub projections: usize,
}

/// θ_d − η(λ⁻¹ Σ_i u_i r_i (m_d⁽ⁱ⁾ − θ_d) + ε (c_d − Q_d 1) ⊙ θ_d), not projected.
///
/// With unit ratios this is the single-distribution rule; with mixture ratios
/// and ratio-weighted utilities it is the importance-sampled rule.
pub fn natural_gradient_step(
    dist: &Distribution,
    samples: &[Architecture],
    weights: &[f64],
    cost: &CostModel,
    epsilon: f64,
    learning_rate: f64,
) -> Result<Rows> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if samples.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples but {} weights",
            samples.len(),
            weights.len()
        )));
    }
    if !(learning_rate > 0.0) {
        return Err(Error::NonPositiveLearningRate(learning_rate));
    }
    if cost.rows().len() != dist.dims()
        || cost.rows().iter().zip(dist.rows()).any(|(c, p)| c.len() != p.len())
    {
        return Err(Error::ShapeMismatch("cost model and distribution differ in shape".into()));
    }
    for s in samples {
        if s.dims() != dist.dims()
            || s.choices().iter().zip(dist.rows()).any(|(&h, row)| h >= row.len())
        {
            return Err(Error::ShapeMismatch("sample does not fit the distribution".into()));
        }
    }

    let lambda = samples.len() as f64;
    let weight_sum: f64 = weights.iter().sum();
    let rows = dist
        .rows()
        .iter()
        .zip(cost.rows())
        .enumerate()
        .map(|(d, (theta, c))| {
            let mut hits = vec![0.0; theta.len()];
            for (s, w) in samples.iter().zip(weights) {
                hits[s.choices()[d]] += w;
            }
            let q: f64 = c.iter().zip(theta).map(|(ck, tk)| ck * tk).sum();
            theta
                .iter()
                .zip(c)
                .zip(&hits)
                .map(|((&t, &ck), &hit)| {
                    let loss_term = (hit - weight_sum * t) / lambda;
                    let reg_term = epsilon * (ck - q) * t;
                    t - learning_rate * (loss_term + reg_term)
                })
                .collect()
        })
        .collect();
    Ok(rows)
}

fn check_losses(losses: &[f64], samples: &[Architecture]) -> Result<()> {
    if losses.len() != samples.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples but {} losses",
            samples.len(),
            losses.len()
        )));
    }
    if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLoss(i));
    }
    Ok(())
}

/// Unprojected single-distribution step with unit-ratio utilities.
pub fn update_single_raw(
    dist: &Distribution,
    samples: &[Architecture],
    losses: &[f64],
    cost: &CostModel,
    epsilon: f64,
    settings: &StepSettings,
) -> Result<Rows> {
    check_losses(losses, samples)?;
    let u = utilities(&WeightedBatch::new(losses.to_vec()), &settings.utility)?;
    natural_gradient_step(dist, samples, &u, cost, epsilon, settings.learning_rate)
}

pub fn update_single(
    dist: &Distribution,
    samples: &[Architecture],
    losses: &[f64],
    cost: &CostModel,
    epsilon: f64,
    settings: &StepSettings,
) -> Result<Distribution> {
    settings.validate()?;
    let rows = update_single_raw(dist, samples, losses, cost, epsilon, settings)?;
    project(rows, settings.floor)
}

/// Unprojected importance-sampled step for every component, computed from the
/// pre-step ensemble.
pub fn update_is_raw(
    ens: &Ensemble,
    samples: &[Architecture],
    losses: &[f64],
    cost: &CostModel,
) -> Result<Vec<Rows>> {
    check_losses(losses, samples)?;
    let ratios = mixture_ratios(&ens.components, samples)?;
    ens.components
        .iter()
        .zip(&ens.epsilons)
        .zip(ratios)
        .map(|((dist, &eps), r)| {
            let batch = WeightedBatch::weighted(losses.to_vec(), r.clone())?;
            let u = utilities(&batch, &ens.settings.utility)?;
            let weights: Vec<f64> = u.iter().zip(&r).map(|(ui, ri)| ui * ri).collect();
            natural_gradient_step(dist, samples, &weights, cost, eps, ens.settings.learning_rate)
        })
        .collect()
}

/// Importance-sampled update of every component from one shared batch of
/// mixture samples. All components are computed from the pre-step ensemble
/// and committed together.
pub fn update_is(
    ens: &Ensemble,
    samples: &[Architecture],
    losses: &[f64],
    cost: &CostModel,
) -> Result<(Ensemble, StepReport)> {
    let raw = update_is_raw(ens, samples, losses, cost)?;
    let mut report = StepReport::default();
    let mut components = Vec::with_capacity(raw.len());
    for (old, rows) in ens.components.iter().zip(raw) {
        let (new, clamped) = project_counting(rows, ens.settings.floor)?;
        report.complexity_before.push(expected_complexity(cost, old)?);
        report.complexity_after.push(expected_complexity(cost, &new)?);
        report.max_change = report.max_change.max(max_abs_diff(old, &new));
        report.projections += clamped;
        components.push(new);
    }
    let next = Ensemble { components, epsilons: ens.epsilons.clone(), settings: ens.settings };
    Ok((next, report))
}

fn max_abs_diff(a: &Distribution, b: &Distribution) -> f64 {
    a.rows()
        .iter()
        .flatten()
        .zip(b.rows().iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Picks a component uniformly, then samples it; repeated λ times.
pub fn sample_mixture<R: Rng + ?Sized>(ens: &Ensemble, lambda: usize, rng: &mut R) -> Vec<Architecture> {
    (0..lambda)
        .map(|_| {
            let n = rng.random_range(0..ens.components.len());
            sample(&ens.components[n], rng)
        })
        .collect()
}

/// Clamps every entry to at least `floor` and rescales the remaining entries
/// so each row sums to 1.
pub fn project(rows: Rows, floor: f64) -> Result<Distribution> {
    project_counting(rows, floor).map(|(d, _)| d)
}

/// Like [`project`], also returning how many rows needed clamping.
pub fn project_counting(rows: Rows, floor: f64) -> Result<(Distribution, usize)> {
    let mut clamped_rows = 0;
    let mut out = Vec::with_capacity(rows.len());
    for (d, row) in rows.into_iter().enumerate() {
        let (row, clamped) = project_row(row, floor, d)?;
        clamped_rows += clamped as usize;
        out.push(row);
    }
    Ok((Distribution::from_rows_unchecked(out), clamped_rows))
}

fn project_row(mut row: Vec<f64>, floor: f64, d: usize) -> Result<(Vec<f64>, bool)> {
    if row.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { dim: d });
    }
    let k = row.len();
    if floor * k as f64 >= 1.0 {
        return Err(Error::InfeasibleFloor { floor, k });
    }
    let mut pinned = vec![false; k];
    let mut any = false;
    loop {
        let mut changed = false;
        for (x, p) in row.iter_mut().zip(pinned.iter_mut()) {
            if !*p && *x < floor {
                *p = true;
                *x = floor;
                changed = true;
            }
        }
        any |= changed;
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let free_mass: f64 = row.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(x, _)| x).sum();
        if free_mass <= 0.0 {
            return Err(Error::NonFinite { dim: d });
        }
        let scale = (1.0 - n_pinned as f64 * floor) / free_mass;
        for (x, &p) in row.iter_mut().zip(&pinned) {
            if !p {
                *x *= scale;
            }
        }
        if !row.iter().zip(&pinned).any(|(&x, &p)| !p && x < floor) {
            break;
        }
    }
    Ok((row, any))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::most_probable;
    use crate::regularizer::nat_grad_expected_complexity;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn settings(eta: f64, floor: f64) -> StepSettings {
        StepSettings { learning_rate: eta, floor, utility: UtilityConfig::default() }
    }

    fn arch(h: &[usize]) -> Architecture {
        Architecture::new(h.to_vec())
    }

    #[test]
    fn learning_rate_defaults() {
        let s = SearchSpace::new(vec![3, 4]).unwrap();
        assert_eq!(default_learning_rate(&s), 1.0 / 7.0);
        // cell space (Σ K_d = 180) and ImageNet space (Σ K_d = 141)
        let cells = SearchSpace::new(vec![9; 20]).unwrap();
        assert_eq!(default_learning_rate(&cells), 1.0 / 180.0);
        let mut k = vec![7; 19];
        k.extend([4, 4]);
        assert_eq!(default_learning_rate(&SearchSpace::new(k).unwrap()), 1.0 / 141.0);
    }

    #[test]
    fn single_step_pushes_away_from_worse_sample() {
        let d = Distribution::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        let c = CostModel::new(vec![vec![0.0, 1.0]]).unwrap();
        let out = update_single(&d, &[arch(&[0]), arch(&[1])], &[1.0, 2.0], &c, 0.0, &settings(0.1, 0.0)).unwrap();
        assert_abs_diff_eq!(out.row(0)[0], 0.55, epsilon = 1e-15);
        assert_abs_diff_eq!(out.row(0)[1], 0.45, epsilon = 1e-15);
    }

    #[test]
    fn zero_utilities_leave_distribution_unchanged() {
        // every utility level is zero
        let d = Distribution::from_rows(vec![vec![0.3, 0.7], vec![0.1, 0.2, 0.7]]).unwrap();
        let c = CostModel::new(vec![vec![1.0, 2.0], vec![0.0, 1.0, 3.0]]).unwrap();
        let mut st = settings(0.2, 0.0);
        st.utility = UtilityConfig { low: 0.0, mid: 0.0, high: 0.0, ..UtilityConfig::default() };
        let samples = [arch(&[0, 1]), arch(&[1, 2]), arch(&[1, 0])];
        let out = update_single(&d, &samples, &[3.0, 1.0, 2.0], &c, 0.0, &st).unwrap();
        for (a, b) in out.rows().iter().flatten().zip(d.rows().iter().flatten()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_costs_do_not_regularize() {
        let d = Distribution::from_rows(vec![vec![0.3, 0.7], vec![0.1, 0.2, 0.7]]).unwrap();
        let flat = CostModel::new(vec![vec![2.0, 2.0], vec![5.0, 5.0, 5.0]]).unwrap();
        let samples = [arch(&[0, 1]), arch(&[1, 2]), arch(&[1, 0]), arch(&[0, 0])];
        let losses = [0.4, 0.1, 0.9, 0.3];
        let st = settings(0.05, 0.001);
        let a = update_single(&d, &samples, &losses, &flat, 0.0, &st).unwrap();
        let b = update_single(&d, &samples, &losses, &flat, 0.7, &st).unwrap();
        for (x, y) in a.rows().iter().flatten().zip(b.rows().iter().flatten()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_importance_sampled_step() {
        // θ1 = (0.8, 0.2), θ2 = (0.2, 0.8); samples h = 0, 1 with losses 1, 2.
        // Mixture mass is 0.5 for both samples, so r⁽¹⁾ = (1.6, 0.4), r⁽²⁾ = (0.4, 1.6).
        // Component 1: q̄ = (0.8, 1.0) → s = (2, 2); Σ s r (m − θ) = 0, ε = 0 → unchanged.
        // Component 2: q̄ = (0.2, 1.0) → s = (−2, 2);
        //   λ⁻¹ Σ s r (m − θ) = ½[−0.8·(0.8, −0.8) + 3.2·(−0.2, 0.2)] = (−0.64, 0.64)
        //   Q = 0.8, ε(c − Q)θ = 0.5·(−0.16, 0.16) = (−0.08, 0.08)
        //   θ ← (0.2, 0.8) − 0.1·(−0.72, 0.72) = (0.272, 0.728)
        let ens = Ensemble::new(
            vec![
                Distribution::from_rows(vec![vec![0.8, 0.2]]).unwrap(),
                Distribution::from_rows(vec![vec![0.2, 0.8]]).unwrap(),
            ],
            vec![0.0, 0.5],
            settings(0.1, 0.01),
        )
        .unwrap();
        let c = CostModel::new(vec![vec![0.0, 1.0]]).unwrap();
        let (next, report) = update_is(&ens, &[arch(&[0]), arch(&[1])], &[1.0, 2.0], &c).unwrap();
        assert_abs_diff_eq!(next.components()[0].row(0)[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(next.components()[0].row(0)[1], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(next.components()[1].row(0)[0], 0.272, epsilon = 1e-12);
        assert_abs_diff_eq!(next.components()[1].row(0)[1], 0.728, epsilon = 1e-12);
        assert_eq!(report.projections, 0);
        assert_abs_diff_eq!(report.max_change, 0.072, epsilon = 1e-12);
        assert_abs_diff_eq!(report.complexity_after[1], 0.728, epsilon = 1e-12);
    }

    #[test]
    fn single_component_ensemble_matches_single_update() {
        let space = SearchSpace::new(vec![3, 2, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = CostModel::new(vec![vec![0.1, 0.5, 1.0], vec![0.3, 0.2], vec![0.0, 0.4, 0.9, 0.6]]).unwrap();
        let st = StepSettings::for_space(&space);
        let mut ens = Ensemble::uniform(&space, vec![0.3], st).unwrap();
        for _ in 0..200 {
            let samples = sample_mixture(&ens, 4, &mut rng);
            let losses: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let single = update_single(&ens.components()[0], &samples, &losses, &c, 0.3, &st).unwrap();
            let (next, _) = update_is(&ens, &samples, &losses, &c).unwrap();
            assert_eq!(next.components()[0], single);
            ens = next;
        }
    }

    #[test]
    fn identical_components_get_identical_updates() {
        let space = SearchSpace::new(vec![3, 3]).unwrap();
        let c = CostModel::new(vec![vec![0.1, 0.5, 1.0], vec![0.3, 0.2, 0.0]]).unwrap();
        let mut ens = Ensemble::uniform(&space, vec![0.2, 0.2], StepSettings::for_space(&space)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let samples = sample_mixture(&ens, 3, &mut rng);
            let losses: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            ens = update_is(&ens, &samples, &losses, &c).unwrap().0;
            assert_eq!(ens.components()[0], ens.components()[1]);
        }
    }

    #[test]
    fn raw_steps_preserve_row_sums() {
        let space = SearchSpace::new(vec![2, 5, 3]).unwrap();
        let c = CostModel::new(vec![vec![1.0, 0.0], vec![0.2, 0.4, 0.6, 0.8, 1.0], vec![0.5, 0.1, 0.9]]).unwrap();
        let mut ens = Ensemble::uniform(&space, vec![0.0, 0.3, 1.0], StepSettings::for_space(&space)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let samples = sample_mixture(&ens, 5, &mut rng);
            let losses: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            for rows in update_is_raw(&ens, &samples, &losses, &c).unwrap() {
                for row in rows {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
            ens = update_is(&ens, &samples, &losses, &c).unwrap().0;
        }
    }

    #[test]
    fn projection_examples() {
        let d = project(vec![vec![0.2, 0.3, 0.5]], 0.01).unwrap();
        for (a, b) in d.row(0).iter().zip([0.2, 0.3, 0.5]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let (d, n) = project_counting(vec![vec![-0.02, 1.02]], 1e-3).unwrap();
        assert_eq!(n, 1);
        assert_abs_diff_eq!(d.row(0)[0], 1e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(d.row(0)[1], 1.0 - 1e-3, epsilon = 1e-15);
        // cascading clamp: the first rescale drops 0.0105 below the floor
        let d = project(vec![vec![-0.5, 0.0105, 1.4895]], 0.01).unwrap();
        assert!(d.row(0).iter().all(|&x| x >= 0.01 - 1e-15));
        assert_abs_diff_eq!(d.row(0).iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(matches!(project(vec![vec![f64::NAN, 1.0]], 0.01), Err(Error::NonFinite { dim: 0 })));
        assert!(matches!(project(vec![vec![0.5, 0.5]], 0.5), Err(Error::InfeasibleFloor { .. })));
    }

    #[test]
    fn nonpositive_learning_rate_is_rejected() {
        let d = Distribution::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        let c = CostModel::new(vec![vec![0.0, 1.0]]).unwrap();
        let r = update_single(&d, &[arch(&[0])], &[1.0], &c, 0.0, &settings(0.0, 0.0));
        assert!(matches!(r, Err(Error::NonPositiveLearningRate(_))));
        let r = update_single(&d, &[arch(&[0])], &[f64::NAN], &c, 0.0, &settings(0.1, 0.0));
        assert!(matches!(r, Err(Error::NonFiniteLoss(0))));
    }

    #[test]
    fn mixture_of_opposite_degenerate_components() {
        let ens = Ensemble::new(
            vec![
                Distribution::from_rows(vec![vec![1.0, 0.0]]).unwrap(),
                Distribution::from_rows(vec![vec![0.0, 1.0]]).unwrap(),
            ],
            vec![0.0, 0.0],
            settings(0.1, 0.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let zeros = sample_mixture(&ens, n, &mut rng).iter().filter(|a| a.choices()[0] == 0).count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn mixture_joint_frequencies_match_enumeration() {
        let space = SearchSpace::new(vec![2, 3]).unwrap();
        let ens = Ensemble::new(
            vec![
                Distribution::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.3, 0.5]]).unwrap(),
                Distribution::from_rows(vec![vec![0.3, 0.7], vec![0.6, 0.3, 0.1]]).unwrap(),
            ],
            vec![0.0, 0.1],
            StepSettings::for_space(&space),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let draws = sample_mixture(&ens, n, &mut rng);
        for a in space.enumerate() {
            let expect: f64 = ens
                .components()
                .iter()
                .map(|c| crate::model::log_prob(c, &a).unwrap().exp())
                .sum::<f64>()
                / 2.0;
            let freq = draws.iter().filter(|x| **x == a).count() as f64 / n as f64;
            assert!((freq - expect).abs() < 0.01, "{a:?}: {freq} vs {expect}");
        }
    }

    fn separable_loss(table: &[Vec<f64>], a: &Architecture) -> f64 {
        a.choices().iter().enumerate().map(|(d, &h)| table[d][h]).sum()
    }

    #[test]
    fn best_category_gains_mass_without_regularization() {
        let table = vec![vec![0.3, 0.0, 0.9], vec![1.0, 0.2, 0.5, 0.0], vec![0.0, 0.4]];
        let best = [1usize, 3, 0];
        let space = SearchSpace::new(vec![3, 4, 2]).unwrap();
        let c = CostModel::zeros(&space);
        let st = StepSettings::for_space(&space);
        let mut mean = vec![0.0; 3];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut d = Distribution::uniform(&space);
            for _ in 0..500 {
                let samples: Vec<_> = (0..2).map(|_| sample(&d, &mut rng)).collect();
                let losses: Vec<f64> = samples.iter().map(|a| separable_loss(&table, a)).collect();
                d = update_single(&d, &samples, &losses, &c, 0.0, &st).unwrap();
            }
            for (dim, &b) in best.iter().enumerate() {
                mean[dim] += d.row(dim)[b] / 20.0;
            }
        }
        for (dim, &b) in best.iter().enumerate() {
            assert!(mean[dim] > 1.0 / space.cardinality(dim) as f64, "dim {dim} best {b}: {}", mean[dim]);
        }
    }

    #[test]
    fn constant_losses_with_regularization_move_toward_cheapest() {
        // Tied losses all get the high utility, so the loss term is zero-mean
        // noise. With every utility level at zero the step is the pure
        // regularization flow and must be monotone every step.
        let space = SearchSpace::new(vec![3, 2]).unwrap();
        let c = CostModel::new(vec![vec![0.5, 0.1, 1.0], vec![1.0, 0.0]]).unwrap();
        let cheapest = [1usize, 1];
        let mut st = StepSettings::for_space(&space);
        st.utility = UtilityConfig { low: 0.0, mid: 0.0, high: 0.0, ..UtilityConfig::default() };
        let mut d = Distribution::uniform(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..300 {
            let samples: Vec<_> = (0..2).map(|_| sample(&d, &mut rng)).collect();
            let next = update_single(&d, &samples, &[1.0, 1.0], &c, 0.5, &st).unwrap();
            for (dim, &k) in cheapest.iter().enumerate() {
                assert!(next.row(dim)[k] >= d.row(dim)[k]);
            }
            d = next;
        }
        assert_eq!(most_probable(&d).choices(), &cheapest);

        // default utilities: the cheapest category gains mass on average
        let st = StepSettings::for_space(&space);
        let mut mean = [0.0; 2];
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let mut d = Distribution::uniform(&space);
            for _ in 0..200 {
                let samples: Vec<_> = (0..2).map(|_| sample(&d, &mut rng)).collect();
                d = update_single(&d, &samples, &[1.0, 1.0], &c, 0.5, &st).unwrap();
            }
            for (dim, &k) in cheapest.iter().enumerate() {
                mean[dim] += d.row(dim)[k] / 50.0;
            }
        }
        assert!(mean[0] > 1.0 / 3.0 && mean[1] > 0.5, "{mean:?}");
    }

    #[test]
    fn zero_loss_signal_step_equals_regularization_gradient() {
        let d = Distribution::from_rows(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let c = CostModel::new(vec![vec![1.0, 0.0, 0.5]]).unwrap();
        let rows = natural_gradient_step(&d, &[arch(&[0])], &[0.0], &c, 2.0, 0.1).unwrap();
        let g = nat_grad_expected_complexity(&c, &d).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(rows[0][k], d.row(0)[k] - 0.1 * 2.0 * g[0][k], epsilon = 1e-15);
        }
    }

    #[test]
    fn affine_loss_transform_does_not_change_update() {
        let space = SearchSpace::new(vec![3, 3]).unwrap();
        let c = CostModel::zeros(&space);
        let st = StepSettings::for_space(&space);
        let d = Distribution::uniform(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let samples: Vec<_> = (0..6).map(|_| sample(&d, &mut rng)).collect();
            let losses: Vec<f64> = (0..6).map(|_| rng.random()).collect();
            let moved: Vec<f64> = losses.iter().map(|l| 3.5 * l - 2.0).collect();
            assert_eq!(
                update_single(&d, &samples, &losses, &c, 0.0, &st).unwrap(),
                update_single(&d, &samples, &moved, &c, 0.0, &st).unwrap()
            );
        }
    }
}
