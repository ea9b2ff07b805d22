//! Categorical search spaces and the factorized distribution over them.
//!
//! An architecture picks one category per dimension. The distribution keeps
//! one probability row per dimension and samples every dimension
//! independently, so the log-likelihood, its natural gradient and the inverse
//! Fisher blocks all decompose per row.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ragged matrix with one row per dimension; row `d` has `K_d` entries.
pub type Rows = Vec<Vec<f64>>;

/// Tolerance on row sums accepted by [`Distribution::from_rows`].
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    cardinalities: Vec<usize>,
    names: Vec<String>,
    labels: Vec<Vec<String>>,
}

impl SearchSpace {
    /// Space with generated names `d0, d1, ..` and labels `0, 1, ..`.
    pub fn new(cardinalities: Vec<usize>) -> Result<Self> {
        let names = (0..cardinalities.len()).map(|d| format!("d{d}")).collect();
        let labels = cardinalities
            .iter()
            .map(|&k| (0..k).map(|i| i.to_string()).collect())
            .collect();
        Self::with_labels(names, labels)
    }

    pub fn with_labels(names: Vec<String>, labels: Vec<Vec<String>>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidSpace("at least one dimension is required".into()));
        }
        if names.len() != labels.len() {
            return Err(Error::InvalidSpace(format!(
                "{} names for {} dimensions",
                names.len(),
                labels.len()
            )));
        }
        for (name, cats) in names.iter().zip(&labels) {
            if cats.len() < 2 {
                return Err(Error::InvalidSpace(format!(
                    "dimension `{name}` has {} categories, need at least 2",
                    cats.len()
                )));
            }
            for (i, l) in cats.iter().enumerate() {
                if cats[..i].contains(l) {
                    return Err(Error::InvalidSpace(format!(
                        "dimension `{name}` repeats label `{l}`"
                    )));
                }
            }
        }
        let cardinalities = labels.iter().map(Vec::len).collect();
        Ok(Self { cardinalities, names, labels })
    }

    pub fn dims(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, d: usize) -> usize {
        self.cardinalities[d]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self, d: usize) -> &[String] {
        &self.labels[d]
    }

    /// Σ_d K_d.
    pub fn total_categories(&self) -> usize {
        self.cardinalities.iter().sum()
    }

    /// Number of distinct architectures, saturating at `u128::MAX`.
    pub fn num_architectures(&self) -> u128 {
        self.cardinalities
            .iter()
            .fold(1u128, |acc, &k| acc.saturating_mul(k as u128))
    }

    /// Every architecture in mixed-radix order (last dimension fastest).
    pub fn enumerate(&self) -> Enumerate<'_> {
        Enumerate { space: self, next: Some(vec![0; self.dims()]) }
    }

    /// Maps category labels back to an architecture.
    pub fn architecture_from_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<Architecture> {
        if labels.len() != self.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} dimensions",
                labels.len(),
                self.dims()
            )));
        }
        let choices = labels
            .iter()
            .enumerate()
            .map(|(d, l)| {
                self.labels[d].iter().position(|x| x == l.as_ref()).ok_or_else(|| {
                    Error::InvalidSpace(format!(
                        "unknown label `{}` in dimension `{}`",
                        l.as_ref(),
                        self.names[d]
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Architecture::new(choices))
    }

    pub fn labels_of(&self, arch: &Architecture) -> Vec<String> {
        arch.choices()
            .iter()
            .enumerate()
            .map(|(d, &h)| self.labels[d][h].clone())
            .collect()
    }

    pub fn check_architecture(&self, arch: &Architecture) -> Result<()> {
        if arch.dims() != self.dims() {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {} dimensions, space has {}",
                arch.dims(),
                self.dims()
            )));
        }
        for (d, (&h, &k)) in arch.choices().iter().zip(&self.cardinalities).enumerate() {
            if h >= k {
                return Err(Error::ShapeMismatch(format!(
                    "category {h} out of range in dimension {d} (K = {k})"
                )));
            }
        }
        Ok(())
    }
}

pub struct Enumerate<'a> {
    space: &'a SearchSpace,
    next: Option<Vec<usize>>,
}

impl Iterator for Enumerate<'_> {
    type Item = Architecture;

    fn next(&mut self) -> Option<Architecture> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for d in (0..succ.len()).rev() {
            succ[d] += 1;
            if succ[d] < self.space.cardinalities[d] {
                self.next = Some(succ);
                break;
            }
            succ[d] = 0;
        }
        Some(Architecture::new(current))
    }
}

/// One category index per dimension (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Architecture {
    choices: Vec<usize>,
}

impl Architecture {
    pub fn new(choices: Vec<usize>) -> Self {
        Self { choices }
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn dims(&self) -> usize {
        self.choices.len()
    }

    pub fn one_hot(&self, space: &SearchSpace) -> Rows {
        self.choices
            .iter()
            .zip(space.cardinalities())
            .map(|(&h, &k)| {
                let mut row = vec![0.0; k];
                row[h] = 1.0;
                row
            })
            .collect()
    }

    /// Inverse of [`Architecture::one_hot`]; every row must hold exactly one 1.
    pub fn from_one_hot(rows: &Rows) -> Result<Self> {
        rows.iter()
            .enumerate()
            .map(|(d, row)| {
                let ones: Vec<usize> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m == 1.0)
                    .map(|(k, _)| k)
                    .collect();
                let zeros = row.iter().filter(|&&m| m == 0.0).count();
                match ones.as_slice() {
                    [k] if zeros + 1 == row.len() => Ok(*k),
                    _ => Err(Error::ShapeMismatch(format!("row {d} is not one-hot"))),
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

/// Factorized categorical distribution θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Rows,
}

impl Distribution {
    pub fn uniform(space: &SearchSpace) -> Self {
        let probs = space
            .cardinalities()
            .iter()
            .map(|&k| vec![1.0 / k as f64; k])
            .collect();
        Self { probs }
    }

    /// Validates every row: at least two entries, all in `[0, 1]`, summing
    /// to 1 within [`ROW_SUM_TOL`].
    pub fn from_rows(probs: Rows) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no rows".into()));
        }
        for (d, row) in probs.iter().enumerate() {
            if row.len() < 2 {
                return Err(Error::InvalidDistribution(format!("row {d} has fewer than 2 entries")));
            }
            if row.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite { dim: d });
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidDistribution(format!("row {d} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDistribution(format!("row {d} sums to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    /// Wraps rows without validation. Callers guarantee the invariants.
    pub(crate) fn from_rows_unchecked(probs: Rows) -> Self {
        Self { probs }
    }

    pub fn rows(&self) -> &Rows {
        &self.probs
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.probs[d]
    }

    pub fn dims(&self) -> usize {
        self.probs.len()
    }

    pub fn into_rows(self) -> Rows {
        self.probs
    }

    pub fn fits(&self, space: &SearchSpace) -> bool {
        self.dims() == space.dims()
            && self.probs.iter().zip(space.cardinalities()).all(|(r, &k)| r.len() == k)
    }

    fn check_arch(&self, arch: &Architecture) -> Result<()> {
        if arch.dims() != self.dims() {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {} dimensions, distribution has {}",
                arch.dims(),
                self.dims()
            )));
        }
        for (d, (&h, row)) in arch.choices().iter().zip(&self.probs).enumerate() {
            if h >= row.len() {
                return Err(Error::ShapeMismatch(format!(
                    "category {h} out of range in dimension {d} (K = {})",
                    row.len()
                )));
            }
        }
        Ok(())
    }

    /// Shannon entropy (nats) of each row.
    pub fn entropies(&self) -> Vec<f64> {
        self.probs
            .iter()
            .map(|row| row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum())
            .collect()
    }

    /// Largest probability in each row.
    pub fn max_probs(&self) -> Vec<f64> {
        self.probs
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Draws every dimension independently by inverse CDF.
pub fn sample<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> Architecture {
    let choices = dist.rows().iter().map(|row| sample_row(row, rng)).collect();
    Architecture::new(choices)
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (k, &p) in row.iter().enumerate() {
        cum += p;
        if u < cum {
            return k;
        }
    }
    // rounding left the cumulative sum just below u
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Σ_d ln θ_{d,h_d}; `-inf` if any selected category has probability 0.
pub fn log_prob(dist: &Distribution, arch: &Architecture) -> Result<f64> {
    dist.check_arch(arch)?;
    Ok(arch
        .choices()
        .iter()
        .zip(dist.rows())
        .map(|(&h, row)| row[h].ln())
        .sum())
}

/// Natural gradient of ln P_θ(M) in the full-vector form: row d is m_d − θ_d.
pub fn nat_grad_log_likelihood(dist: &Distribution, arch: &Architecture) -> Result<Rows> {
    dist.check_arch(arch)?;
    Ok(arch
        .choices()
        .iter()
        .zip(dist.rows())
        .map(|(&h, row)| {
            row.iter()
                .enumerate()
                .map(|(k, &p)| if k == h { 1.0 - p } else { -p })
                .collect()
        })
        .collect())
}

/// Inverse of the d-th Fisher block in the reduced parameterization
/// θ̄_d = (θ_{d,1}, .., θ_{d,K_d−1}): diag(θ̄_d) − θ̄_d θ̄_dᵀ.
pub fn fim_inverse_block(dist: &Distribution, d: usize) -> Result<DMatrix<f64>> {
    if d >= dist.dims() {
        return Err(Error::ShapeMismatch(format!(
            "dimension {d} out of range ({} rows)",
            dist.dims()
        )));
    }
    let row = dist.row(d);
    if row.iter().any(|&p| p <= 0.0 || p >= 1.0) {
        return Err(Error::SingularFisher { dim: d });
    }
    let n = row.len() - 1;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let outer = row[i] * row[j];
        if i == j {
            row[i] - outer
        } else {
            -outer
        }
    }))
}

/// Per-dimension argmax; ties go to the lowest index.
pub fn most_probable(dist: &Distribution) -> Architecture {
    let choices = dist
        .rows()
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    Architecture::new(choices)
}
