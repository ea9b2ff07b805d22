//! A small weight-sharing network over Gaussian-cluster data.
//!
//! Dimension d offers K_d operations. Operation (d, k) maps the input x to a
//! fixed-width block output z_d = Vᵀ tanh(Uᵀ x) through a hidden layer of
//! rank r_{d,k}; rank 0 is the empty operation. A shared linear softmax
//! classifier reads the concatenated block outputs. Every architecture that
//! selects operation (d, k) uses the same U, V storage, and the classifier
//! shape does not depend on the architecture.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Evaluator, MiniBatch, Outcome, Split};
use crate::error::{Error, Result};
use crate::model::{Architecture, Rows, SearchSpace};
use crate::regularizer::CostModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupernetSpec {
    pub features: usize,
    pub classes: usize,
    pub block_width: usize,
    /// Hidden rank of every operation, one row per dimension.
    pub ranks: Vec<Vec<usize>>,
    /// Std. dev. of the class means.
    pub separation: f64,
    pub weights_examples: usize,
    pub theta_examples: usize,
    pub valid_examples: usize,
    /// Scale of the N(0, scale²/fan_in) operation initialization.
    pub init_scale: f64,
    /// Step size α of the weight update.
    pub weight_lr: f64,
    pub retrain_steps: usize,
    pub retrain_batch: usize,
}

impl Default for SupernetSpec {
    fn default() -> Self {
        Self {
            features: 8,
            classes: 4,
            block_width: 2,
            ranks: vec![vec![0, 1, 2, 4]; 3],
            separation: 1.0,
            weights_examples: 512,
            theta_examples: 512,
            valid_examples: 512,
            init_scale: 1.0,
            weight_lr: 0.2,
            retrain_steps: 300,
            retrain_batch: 64,
        }
    }
}

impl SupernetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.classes < 2 || self.block_width == 0 {
            return Err(Error::Config("supernet needs features >= 1, classes >= 2, block_width >= 1".into()));
        }
        if self.weights_examples == 0 || self.theta_examples == 0 || self.valid_examples == 0 {
            return Err(Error::Config("every data partition must be nonempty".into()));
        }
        if !(self.weight_lr > 0.0 && self.weight_lr.is_finite()) {
            return Err(Error::Config("weight_lr must be positive".into()));
        }
        if !(self.separation.is_finite() && self.init_scale.is_finite()) {
            return Err(Error::Config("separation and init_scale must be finite".into()));
        }
        self.space().map(|_| ())
    }

    pub fn space(&self) -> Result<SearchSpace> {
        let names = (0..self.ranks.len()).map(|d| format!("block{d}")).collect();
        let labels = self
            .ranks
            .iter()
            .map(|row| row.iter().map(|r| format!("rank{r}")).collect())
            .collect();
        SearchSpace::with_labels(names, labels)
    }

    /// Weight-parameter count of every operation: F·r + r·B.
    pub fn param_counts(&self) -> Rows {
        self.ranks
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&r| (self.features * r + r * self.block_width) as f64)
                    .collect()
            })
            .collect()
    }
}

/// Gaussian clusters split into weight-training, θ-training and held-out
/// partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    inputs: DMatrix<f64>,
    labels: Vec<usize>,
    classes: usize,
    weights_split: Vec<usize>,
    theta_split: Vec<usize>,
    valid_split: Vec<usize>,
}

impl SyntheticDataset {
    pub fn generate<R: Rng + ?Sized>(spec: &SupernetSpec, rng: &mut R) -> Self {
        let f = spec.features;
        let means = DMatrix::from_fn(spec.classes, f, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            spec.separation * z
        });
        let n = spec.weights_examples + spec.theta_examples + spec.valid_examples;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.classes)).collect();
        let mut inputs = DMatrix::zeros(n, f);
        for (i, &y) in labels.iter().enumerate() {
            for j in 0..f {
                let z: f64 = StandardNormal.sample(rng);
                inputs[(i, j)] = means[(y, j)] + z;
            }
        }
        let a = spec.weights_examples;
        let b = a + spec.theta_examples;
        Self {
            inputs,
            labels,
            classes: spec.classes,
            weights_split: (0..a).collect(),
            theta_split: (a..b).collect(),
            valid_split: (b..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn weights_split(&self) -> &[usize] {
        &self.weights_split
    }

    pub fn theta_split(&self) -> &[usize] {
        &self.theta_split
    }

    pub fn valid_split(&self) -> &[usize] {
        &self.valid_split
    }

    /// D_W ∪ D_θ.
    pub fn train_indices(&self) -> Vec<usize> {
        self.weights_split.iter().chain(&self.theta_split).copied().collect()
    }

    fn gather(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.inputs.ncols(), |i, j| self.inputs[(idx[i], j)])
    }
}

/// Draws `size` distinct indices from `pool` (all of it if smaller).
fn draw_from<R: Rng + ?Sized>(pool: &[usize], size: usize, rng: &mut R) -> MiniBatch {
    let size = size.min(pool.len());
    MiniBatch(sample_indices(rng, pool.len(), size).into_iter().map(|i| pool[i]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpWeights {
    /// F × r
    pub u: DMatrix<f64>,
    /// r × B
    pub v: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySupernet {
    ops: Vec<Vec<OpWeights>>,
    /// One B × C block per dimension.
    classifier: Vec<DMatrix<f64>>,
    bias: DVector<f64>,
}

struct Forward {
    hidden: Vec<DMatrix<f64>>,
    blocks: Vec<DMatrix<f64>>,
    probs: DMatrix<f64>,
    loss: f64,
}

impl ToySupernet {
    /// All weights zero.
    pub fn zeros(spec: &SupernetSpec) -> Self {
        let (f, b, c) = (spec.features, spec.block_width, spec.classes);
        let ops = spec
            .ranks
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&r| OpWeights { u: DMatrix::zeros(f, r), v: DMatrix::zeros(r, b) })
                    .collect()
            })
            .collect();
        Self {
            ops,
            classifier: vec![DMatrix::zeros(b, c); spec.ranks.len()],
            bias: DVector::zeros(c),
        }
    }

    /// Gaussian operation weights; zero classifier, so the initial loss is ln C.
    pub fn init<R: Rng + ?Sized>(spec: &SupernetSpec, rng: &mut R) -> Self {
        let mut net = Self::zeros(spec);
        for op in net.ops.iter_mut().flatten() {
            let su = spec.init_scale / (op.u.nrows() as f64).sqrt();
            let sv = spec.init_scale / (op.v.nrows().max(1) as f64).sqrt();
            for x in op.u.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *x = su * z;
            }
            for x in op.v.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *x = sv * z;
            }
        }
        net
    }

    pub fn op(&self, d: usize, k: usize) -> &OpWeights {
        &self.ops[d][k]
    }

    pub fn op_mut(&mut self, d: usize, k: usize) -> &mut OpWeights {
        &mut self.ops[d][k]
    }

    pub fn classifier(&self, d: usize) -> &DMatrix<f64> {
        &self.classifier[d]
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn param_counts(&self) -> Rows {
        self.ops
            .iter()
            .map(|row| row.iter().map(|op| (op.u.len() + op.v.len()) as f64).collect())
            .collect()
    }

    /// Every weight in a fixed order: operations (U then V), classifier blocks, bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for op in self.ops.iter().flatten() {
            out.extend(op.u.iter());
            out.extend(op.v.iter());
        }
        for a in &self.classifier {
            out.extend(a.iter());
        }
        out.extend(self.bias.iter());
        out
    }

    /// Inverse of [`ToySupernet::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for op in self.ops.iter_mut().flatten() {
            op.u.iter_mut().chain(op.v.iter_mut()).for_each(|x| *x = it.next().unwrap());
        }
        for a in &mut self.classifier {
            a.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        self.bias.iter_mut().for_each(|x| *x = it.next().unwrap());
        debug_assert!(it.next().is_none());
    }

    fn forward(&self, arch: &Architecture, data: &SyntheticDataset, idx: &[usize]) -> Forward {
        let x = data.gather(idx);
        let n = idx.len();
        let mut logits = DMatrix::from_fn(n, self.bias.len(), |_, j| self.bias[j]);
        let mut hidden = Vec::with_capacity(self.ops.len());
        let mut blocks = Vec::with_capacity(self.ops.len());
        for (d, &k) in arch.choices().iter().enumerate() {
            let op = &self.ops[d][k];
            let h = (&x * &op.u).map(f64::tanh);
            let z = &h * &op.v;
            logits += &z * &self.classifier[d];
            hidden.push(h);
            blocks.push(z);
        }
        let mut probs = logits;
        let mut loss = 0.0;
        for (i, mut row) in probs.row_iter_mut().enumerate() {
            let max = row.max();
            let target = row[data.labels[idx[i]]];
            row.apply(|v| *v = (*v - max).exp());
            let sum = row.sum();
            row /= sum;
            loss += max + sum.ln() - target;
        }
        Forward { hidden, blocks, probs, loss: loss / n as f64 }
    }

    /// Mean cross-entropy over the batch using only the operations `arch` selects.
    pub fn supernet_loss(&self, arch: &Architecture, data: &SyntheticDataset, batch: &MiniBatch) -> Result<f64> {
        if batch.0.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(self.forward(arch, data, &batch.0).loss)
    }

    pub fn accuracy(&self, arch: &Architecture, data: &SyntheticDataset, idx: &[usize]) -> f64 {
        let fwd = self.forward(arch, data, idx);
        let hits = fwd
            .probs
            .row_iter()
            .zip(idx)
            .filter(|(row, &i)| row.transpose().argmax().0 == data.labels[i])
            .count();
        hits as f64 / idx.len() as f64
    }

    /// Loss and its gradient with respect to every weight; operations `arch`
    /// does not select get a zero gradient.
    pub fn gradient(
        &self,
        arch: &Architecture,
        data: &SyntheticDataset,
        batch: &MiniBatch,
    ) -> Result<(f64, ToySupernet)> {
        let idx = &batch.0;
        if idx.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let fwd = self.forward(arch, data, idx);
        let n = idx.len() as f64;
        let mut g = fwd.probs;
        for (i, &e) in idx.iter().enumerate() {
            g[(i, data.labels[e])] -= 1.0;
        }
        g /= n;

        let mut grad = self.zeros_like();
        grad.bias = g.row_sum().transpose();
        let x = data.gather(idx);
        for (d, &k) in arch.choices().iter().enumerate() {
            let a = &self.classifier[d];
            let op = &self.ops[d][k];
            let (h, z) = (&fwd.hidden[d], &fwd.blocks[d]);
            grad.classifier[d] = z.transpose() * &g;
            let dz = &g * a.transpose();
            let dpre = (&dz * op.v.transpose()).component_mul(&h.map(|t| 1.0 - t * t));
            grad.ops[d][k] = OpWeights { u: x.transpose() * dpre, v: h.transpose() * dz };
        }
        Ok((fwd.loss, grad))
    }

    fn zeros_like(&self) -> Self {
        Self {
            ops: self
                .ops
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|op| OpWeights {
                            u: DMatrix::zeros(op.u.nrows(), op.u.ncols()),
                            v: DMatrix::zeros(op.v.nrows(), op.v.ncols()),
                        })
                        .collect()
                })
                .collect(),
            classifier: self.classifier.iter().map(|a| DMatrix::zeros(a.nrows(), a.ncols())).collect(),
            bias: DVector::zeros(self.bias.len()),
        }
    }

    fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.ops.iter_mut().flatten().zip(other.ops.iter().flatten()) {
            a.u.zip_apply(&b.u, |x, y| *x += alpha * y);
            a.v.zip_apply(&b.v, |x, y| *x += alpha * y);
        }
        for (a, b) in self.classifier.iter_mut().zip(&other.classifier) {
            a.zip_apply(b, |x, y| *x += alpha * y);
        }
        self.bias.axpy(alpha, &other.bias, 1.0);
    }

    fn is_finite(&self) -> bool {
        self.ops.iter().flatten().all(|op| op.u.iter().chain(op.v.iter()).all(|x| x.is_finite()))
            && self.classifier.iter().all(|a| a.iter().all(|x| x.is_finite()))
            && self.bias.iter().all(|x| x.is_finite())
    }

    /// W ← W − α λ⁻¹ Σ_i ∇_W L(M_i, W, batch).
    pub fn supernet_train_step(
        &mut self,
        samples: &[Architecture],
        data: &SyntheticDataset,
        batch: &MiniBatch,
        step: f64,
    ) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut total = self.zeros_like();
        for arch in samples {
            let (_, g) = self.gradient(arch, data, batch)?;
            total.axpy(1.0, &g);
        }
        if !total.is_finite() {
            return Err(Error::NonFiniteGradient("supernet weights"));
        }
        self.axpy(-step / samples.len() as f64, &total);
        Ok(())
    }
}

/// Fresh weights for `arch`, trained on D_W ∪ D_θ for `steps` mini-batch
/// steps, then scored on the held-out split.
pub fn retrain<R: Rng + ?Sized>(
    spec: &SupernetSpec,
    arch: &Architecture,
    data: &SyntheticDataset,
    steps: usize,
    rng: &mut R,
) -> Result<(ToySupernet, Outcome)> {
    let mut net = ToySupernet::init(spec, rng);
    let pool = data.train_indices();
    let single = std::slice::from_ref(arch);
    for _ in 0..steps {
        let batch = draw_from(&pool, spec.retrain_batch, rng);
        net.supernet_train_step(single, data, &batch, spec.weight_lr)?;
    }
    let valid = MiniBatch(data.valid_split.clone());
    let loss = net.supernet_loss(arch, data, &valid)?;
    let accuracy = net.accuracy(arch, data, &valid.0);
    Ok((net, Outcome { loss, accuracy: Some(accuracy) }))
}

/// [`Evaluator`] backed by a [`ToySupernet`] and its dataset.
#[derive(Debug, Clone)]
pub struct SupernetEvaluator {
    spec: SupernetSpec,
    space: SearchSpace,
    data: SyntheticDataset,
    net: ToySupernet,
}

impl SupernetEvaluator {
    pub fn new(spec: SupernetSpec, data_rng: &mut dyn RngCore, init_rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        let space = spec.space()?;
        let data = SyntheticDataset::generate(&spec, data_rng);
        let net = ToySupernet::init(&spec, init_rng);
        Ok(Self { spec, space, data, net })
    }

    pub fn spec(&self) -> &SupernetSpec {
        &self.spec
    }

    pub fn data(&self) -> &SyntheticDataset {
        &self.data
    }

    pub fn net(&self) -> &ToySupernet {
        &self.net
    }
}

impl Evaluator for SupernetEvaluator {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn intrinsic_costs(&self) -> Option<CostModel> {
        CostModel::new(self.spec.param_counts()).ok()
    }

    fn has_weights(&self) -> bool {
        true
    }

    fn reset_weights(&mut self, rng: &mut dyn RngCore) {
        self.net = ToySupernet::init(&self.spec, rng);
    }

    fn draw_batch(&self, split: Split, size: usize, rng: &mut dyn RngCore) -> MiniBatch {
        let pool = match split {
            Split::Weights => &self.data.weights_split,
            Split::Theta => &self.data.theta_split,
        };
        draw_from(pool, size, rng)
    }

    fn evaluate(&self, arch: &Architecture, batch: &MiniBatch, _rng: &mut dyn RngCore) -> f64 {
        // batches drawn by draw_batch are never empty
        self.net.forward(arch, &self.data, &batch.0).loss
    }

    fn train_step(&mut self, samples: &[Architecture], batch: &MiniBatch) -> Result<()> {
        self.net.supernet_train_step(samples, &self.data, batch, self.spec.weight_lr)
    }

    fn retrain(&self, arch: &Architecture, rng: &mut dyn RngCore) -> Result<Outcome> {
        retrain(&self.spec, arch, &self.data, self.spec.retrain_steps, rng).map(|(_, o)| o)
    }
}
