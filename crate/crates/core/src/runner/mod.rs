//! Search procedures, configuration, logging and replay.
//!
//! Every procedure draws from its own seeded streams (see [`crate::rng`]):
//! the weight stage uses stream index 0, and per-component work (θ sampling,
//! evaluation, retraining, and Method 1's weight resets) uses the component
//! index. Equal configs give bit-identical records.

mod config;
mod emit;
mod record;

pub use config::{
    CategorySpec, CouplingSpec, DimSpec, EvaluatorSpec, Method, RandomSearchSpec, SearchConfig,
};
pub use emit::{
    emit_results, read_final, read_manifest, replay, write_trajectory, FinalDocument, Manifest,
    ReplayReport, StreamEntry, FINAL_FILE, MANIFEST_FILE, TIMINGS_FILE, TRAJECTORY_FILE,
};
pub use record::{CallCounts, FinalArchitecture, LogRow, RunRecord, Timings};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{most_probable, sample, Architecture, Distribution, SearchSpace};
use crate::objectives::{pareto_front, Evaluator, ParetoPoint, SupernetEvaluator, Split};
use crate::optimizer::{
    default_floor, default_learning_rate, sample_mixture, update_is, update_single, Ensemble,
    StepSettings,
};
use crate::regularizer::{complexity, expected_complexity, scaled, CostModel};
use crate::rng::{SeedStreams, Stream};
use crate::utility::mixture_ratios;

/// Space, scaled cost model and evaluator of one run.
pub struct Problem {
    pub space: SearchSpace,
    pub cost: CostModel,
    pub evaluator: Box<dyn Evaluator>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem").field("space", &self.space).field("cost", &self.cost).finish()
    }
}

/// Builds the evaluator and cost model. A weight-bearing evaluator starts
/// from weight-init stream 0.
pub fn build_problem(cfg: &SearchConfig) -> Result<Problem> {
    let streams = SeedStreams::new(cfg.seed);
    let (space, raw, evaluator): (SearchSpace, CostModel, Box<dyn Evaluator>) = match &cfg.evaluator {
        EvaluatorSpec::Table { noise, couplings } => {
            let (space, obj, cost) = cfg.table_problem(*noise, couplings)?;
            (space, cost, Box::new(obj))
        }
        EvaluatorSpec::Tradeoff(spec) => {
            let (space, obj, cost) = spec.build()?;
            (space, cost, Box::new(obj))
        }
        EvaluatorSpec::Supernet(spec) => {
            let mut data_rng = streams.rng(Stream::Dataset, 0);
            let mut init_rng = streams.rng(Stream::WeightInit, 0);
            let ev = SupernetEvaluator::new(spec.clone(), &mut data_rng, &mut init_rng)?;
            let cost = ev.intrinsic_costs().expect("supernet reports parameter counts");
            (ev.space().clone(), cost, Box::new(ev))
        }
    };
    // An all-zero table has nothing to normalize; it stays as is.
    let all_zero = raw.rows().iter().flatten().all(|&c| c == 0.0);
    let cost = if all_zero { raw } else { scaled(raw, cfg.cost_scale)? };
    Ok(Problem { space, cost, evaluator })
}

/// Exact Pareto front of a table or trade-off config, on the same scaled
/// costs the search uses.
pub fn pareto_oracle(cfg: &SearchConfig) -> Result<Vec<ParetoPoint>> {
    cfg.validate()?;
    let (obj, raw) = match &cfg.evaluator {
        EvaluatorSpec::Table { noise, couplings } => {
            let (_, obj, cost) = cfg.table_problem(*noise, couplings)?;
            (obj, cost)
        }
        EvaluatorSpec::Tradeoff(spec) => {
            let (_, obj, cost) = spec.build()?;
            (obj, cost)
        }
        EvaluatorSpec::Supernet(_) => {
            return Err(Error::Config("the Pareto oracle needs a table or tradeoff evaluator".into()))
        }
    };
    let all_zero = raw.rows().iter().flatten().all(|&c| c == 0.0);
    let cost = if all_zero { raw } else { scaled(raw, cfg.cost_scale)? };
    pareto_front(&obj, &cost)
}

pub fn step_settings(cfg: &SearchConfig, space: &SearchSpace) -> StepSettings {
    StepSettings {
        learning_rate: cfg.learning_rate.unwrap_or_else(|| default_learning_rate(space)),
        floor: cfg.floor.unwrap_or_else(|| default_floor(space)),
        utility: cfg.utility,
    }
}

/// Evaluator calls implied by the loop structure of a θ-search method.
/// Random search is budgeted per band instead and is not covered.
pub fn expected_calls(cfg: &SearchConfig, method: Method, has_weights: bool) -> Option<CallCounts> {
    let lambda = cfg.lambda as u64;
    let n = cfg.epsilons.len() as u64;
    let (tw, tt) = (cfg.t_w as u64, cfg.t_theta as u64);
    let w = if has_weights { 1 } else { 0 };
    let (weight_gradients, theta_evaluations) = match method {
        Method::Proposed => (w * tw * lambda, tt * lambda),
        Method::Method2 => (w * tw * lambda, n * tt * lambda),
        Method::Method1 => (w * n * tt * lambda, n * tt * lambda),
        Method::Random => return None,
    };
    let retrains = if cfg.retrain { n } else { 0 };
    Some(CallCounts { weight_gradients, theta_evaluations, retrains })
}

/// Runs the method named in the config.
pub fn run(cfg: &SearchConfig) -> Result<RunRecord> {
    match cfg.method {
        Method::Proposed => run_proposed(cfg),
        Method::Method1 => run_method1(cfg),
        Method::Method2 => run_method2(cfg),
        Method::Random => {
            let problem = build_problem(cfg)?;
            let targets = random_targets(cfg, &problem.cost);
            run_random_search_on(cfg, problem, &targets)
        }
    }
}

/// Two-stage search: uniform weight training, then all components updated
/// together from shared mixture samples.
pub fn run_proposed(cfg: &SearchConfig) -> Result<RunRecord> {
    let problem = build_problem(cfg)?;
    run_proposed_on(cfg, problem)
}

pub fn run_proposed_on(cfg: &SearchConfig, mut problem: Problem) -> Result<RunRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let streams = SeedStreams::new(cfg.seed);
    let mut rec = Recorder::new(Method::Proposed, cfg, &problem.space);

    let t0 = Instant::now();
    weight_stage(&mut problem, cfg, &streams, &mut rec.calls)?;
    rec.timings.weight_stage = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let settings = step_settings(cfg, &problem.space);
    let mut ens = Ensemble::uniform(&problem.space, cfg.epsilons.clone(), settings)?;
    let mut sample_rng = streams.rng(Stream::ThetaSampling, 0);
    let mut eval_rng = streams.rng(Stream::Evaluation, 0);
    for t in 1..=cfg.t_theta {
        let samples = sample_mixture(&ens, cfg.lambda, &mut sample_rng);
        let losses = evaluate(&*problem.evaluator, &samples, cfg.batch_theta, &mut eval_rng);
        rec.calls.theta_evaluations += samples.len() as u64;
        let ratios = mixture_ratios(ens.components(), &samples)?;
        let (next, report) = update_is(&ens, &samples, &losses, &problem.cost)?;
        for (n, dist) in next.components().iter().enumerate() {
            let weighted: f64 = ratios[n].iter().zip(&losses).map(|(r, l)| r * l).sum();
            rec.log.push(LogRow {
                iter: t,
                component: n,
                epsilon: cfg.epsilons[n],
                mean_loss: weighted / samples.len() as f64,
                expected_complexity: report.complexity_after[n],
                entropies: dist.entropies(),
            });
        }
        ens = next;
    }
    rec.timings.theta_stage = t0.elapsed().as_secs_f64();

    let dists = ens.components().to_vec();
    rec.finish(cfg, &problem, &dists, &streams, started)
}

/// Method 1: per ε, fresh weights and T = `t_theta` iterations that alternate
/// a weight step and a θ step, both sampling from that component.
pub fn run_method1(cfg: &SearchConfig) -> Result<RunRecord> {
    let problem = build_problem(cfg)?;
    run_method1_on(cfg, problem)
}

pub fn run_method1_on(cfg: &SearchConfig, mut problem: Problem) -> Result<RunRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let streams = SeedStreams::new(cfg.seed);
    let settings = step_settings(cfg, &problem.space);
    let mut rec = Recorder::new(Method::Method1, cfg, &problem.space);
    let mut dists = Vec::with_capacity(cfg.epsilons.len());
    let has_weights = problem.evaluator.has_weights();

    for (n, &eps) in cfg.epsilons.iter().enumerate() {
        let idx = n as u64;
        problem.evaluator.reset_weights(&mut streams.rng(Stream::WeightInit, idx));
        let mut dist = Distribution::uniform(&problem.space);
        let mut w_sample_rng = streams.rng(Stream::WeightSampling, idx);
        let mut w_batch_rng = streams.rng(Stream::WeightBatches, idx);
        let mut sample_rng = streams.rng(Stream::ThetaSampling, idx);
        let mut eval_rng = streams.rng(Stream::Evaluation, idx);
        for t in 1..=cfg.t_theta {
            if has_weights {
                let t0 = Instant::now();
                let samples: Vec<_> = (0..cfg.lambda).map(|_| sample(&dist, &mut w_sample_rng)).collect();
                let batch = problem.evaluator.draw_batch(Split::Weights, cfg.batch_w, &mut w_batch_rng);
                problem.evaluator.train_step(&samples, &batch)?;
                rec.calls.weight_gradients += samples.len() as u64;
                rec.timings.weight_stage += t0.elapsed().as_secs_f64();
            }
            let t0 = Instant::now();
            dist = theta_step(&problem, cfg, &settings, &dist, eps, &mut sample_rng, &mut eval_rng, t, n, &mut rec)?;
            rec.timings.theta_stage += t0.elapsed().as_secs_f64();
        }
        dists.push(dist);
    }
    rec.finish(cfg, &problem, &dists, &streams, started)
}

/// Method 2: one uniform weight stage, then an independent θ stage per ε.
pub fn run_method2(cfg: &SearchConfig) -> Result<RunRecord> {
    let problem = build_problem(cfg)?;
    run_method2_on(cfg, problem)
}

pub fn run_method2_on(cfg: &SearchConfig, mut problem: Problem) -> Result<RunRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let streams = SeedStreams::new(cfg.seed);
    let settings = step_settings(cfg, &problem.space);
    let mut rec = Recorder::new(Method::Method2, cfg, &problem.space);

    let t0 = Instant::now();
    weight_stage(&mut problem, cfg, &streams, &mut rec.calls)?;
    rec.timings.weight_stage = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mut dists = Vec::with_capacity(cfg.epsilons.len());
    for (n, &eps) in cfg.epsilons.iter().enumerate() {
        let mut dist = Distribution::uniform(&problem.space);
        let mut sample_rng = streams.rng(Stream::ThetaSampling, n as u64);
        let mut eval_rng = streams.rng(Stream::Evaluation, n as u64);
        for t in 1..=cfg.t_theta {
            dist = theta_step(&problem, cfg, &settings, &dist, eps, &mut sample_rng, &mut eval_rng, t, n, &mut rec)?;
        }
        dists.push(dist);
    }
    rec.timings.theta_stage = t0.elapsed().as_secs_f64();
    rec.finish(cfg, &problem, &dists, &streams, started)
}

/// Default random-search targets: one per ε, evenly spaced strictly inside
/// the complexity range, largest first (ε = 0 wants the largest model).
pub fn random_targets(cfg: &SearchConfig, cost: &CostModel) -> Vec<f64> {
    if !cfg.random.targets.is_empty() {
        return cfg.random.targets.clone();
    }
    let (lo, hi) = (cost.min_complexity(), cost.max_complexity());
    let n = cfg.epsilons.len();
    (0..n).map(|i| hi - (hi - lo) * (i + 1) as f64 / (n + 1) as f64).collect()
}

/// In-band evaluations per target.
pub fn random_budget(cfg: &SearchConfig, targets: usize) -> usize {
    if cfg.random.budget > 0 {
        cfg.random.budget
    } else {
        (cfg.lambda * cfg.t_theta / targets.max(1)).max(1)
    }
}

fn in_band(c: f64, target: f64, band: f64, max_complexity: f64) -> bool {
    let half = if target > 0.0 { band * target } else { band * max_complexity };
    (c - target).abs() <= half
}

/// Uniform sampling; per target, the best evaluated architecture whose
/// complexity lies within the band. Weight-bearing evaluators get the same
/// uniform weight stage as the two-stage search first.
pub fn run_random_search(cfg: &SearchConfig, targets: &[f64]) -> Result<RunRecord> {
    let problem = build_problem(cfg)?;
    run_random_search_on(cfg, problem, targets)
}

pub fn run_random_search_on(cfg: &SearchConfig, mut problem: Problem, targets: &[f64]) -> Result<RunRecord> {
    cfg.validate()?;
    if targets.is_empty() {
        return Err(Error::Config("random search needs at least one complexity target".into()));
    }
    if let Some(t) = targets.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Config(format!("complexity target {t} must be finite and >= 0")));
    }
    let started = Instant::now();
    let streams = SeedStreams::new(cfg.seed);
    let mut rec = Recorder::new(Method::Random, cfg, &problem.space);

    let t0 = Instant::now();
    weight_stage(&mut problem, cfg, &streams, &mut rec.calls)?;
    rec.timings.weight_stage = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let uniform = Distribution::uniform(&problem.space);
    let budget = random_budget(cfg, targets.len());
    let max_draws = budget.saturating_mul(cfg.random.max_draws_factor.max(1));
    let max_c = problem.cost.max_complexity();
    let mut picks = Vec::with_capacity(targets.len());
    for (n, &target) in targets.iter().enumerate() {
        let mut sample_rng = streams.rng(Stream::ThetaSampling, n as u64);
        let mut eval_rng = streams.rng(Stream::Evaluation, n as u64);
        let mut best: Option<(f64, Architecture)> = None;
        let mut evaluated = 0;
        let mut draws = 0;
        while evaluated < budget && draws < max_draws {
            draws += 1;
            let arch = sample(&uniform, &mut sample_rng);
            if !in_band(complexity(&problem.cost, &arch)?, target, cfg.random.band, max_c) {
                continue;
            }
            let loss = evaluate(&*problem.evaluator, std::slice::from_ref(&arch), cfg.batch_theta, &mut eval_rng)[0];
            rec.calls.theta_evaluations += 1;
            evaluated += 1;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(0));
            }
            if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, arch));
            }
        }
        let (_, arch) = best.ok_or(Error::EmptyBand { target })?;
        picks.push(arch);
    }
    rec.timings.theta_stage = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    for (n, arch) in picks.into_iter().enumerate() {
        let mut fa = rec.final_arch(cfg, &problem, n, arch, &streams)?;
        fa.target = Some(targets[n]);
        rec.finals.push(fa);
    }
    rec.timings.retrain = t0.elapsed().as_secs_f64();
    rec.timings.total = started.elapsed().as_secs_f64();
    Ok(rec.into_record())
}

/// `t_w` steps of λ uniform samples on weight mini-batches. Skipped for
/// weight-free evaluators.
fn weight_stage(
    problem: &mut Problem,
    cfg: &SearchConfig,
    streams: &SeedStreams,
    calls: &mut CallCounts,
) -> Result<()> {
    if !problem.evaluator.has_weights() {
        return Ok(());
    }
    let uniform = Distribution::uniform(&problem.space);
    let mut sample_rng = streams.rng(Stream::WeightSampling, 0);
    let mut batch_rng = streams.rng(Stream::WeightBatches, 0);
    for _ in 0..cfg.t_w {
        let samples: Vec<_> = (0..cfg.lambda).map(|_| sample(&uniform, &mut sample_rng)).collect();
        let batch = problem.evaluator.draw_batch(Split::Weights, cfg.batch_w, &mut batch_rng);
        problem.evaluator.train_step(&samples, &batch)?;
        calls.weight_gradients += samples.len() as u64;
    }
    Ok(())
}

/// Losses of `samples` on one shared θ mini-batch.
fn evaluate(
    evaluator: &dyn Evaluator,
    samples: &[Architecture],
    batch_size: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<f64> {
    let batch = evaluator.draw_batch(Split::Theta, batch_size, rng);
    samples.iter().map(|a| evaluator.evaluate(a, &batch, rng)).collect()
}

/// One single-component θ update, logged.
#[allow(clippy::too_many_arguments)]
fn theta_step(
    problem: &Problem,
    cfg: &SearchConfig,
    settings: &StepSettings,
    dist: &Distribution,
    eps: f64,
    sample_rng: &mut rand_chacha::ChaCha8Rng,
    eval_rng: &mut rand_chacha::ChaCha8Rng,
    t: usize,
    n: usize,
    rec: &mut Recorder,
) -> Result<Distribution> {
    let samples: Vec<_> = (0..cfg.lambda).map(|_| sample(dist, sample_rng)).collect();
    let losses = evaluate(&*problem.evaluator, &samples, cfg.batch_theta, eval_rng);
    rec.calls.theta_evaluations += samples.len() as u64;
    let next = update_single(dist, &samples, &losses, &problem.cost, eps, settings)?;
    rec.log.push(LogRow {
        iter: t,
        component: n,
        epsilon: eps,
        mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        expected_complexity: expected_complexity(&problem.cost, &next)?,
        entropies: next.entropies(),
    });
    Ok(next)
}

struct Recorder {
    method: Method,
    seed: u64,
    dim_names: Vec<String>,
    log: Vec<LogRow>,
    finals: Vec<FinalArchitecture>,
    calls: CallCounts,
    timings: Timings,
}

impl Recorder {
    fn new(method: Method, cfg: &SearchConfig, space: &SearchSpace) -> Self {
        Self {
            method,
            seed: cfg.seed,
            dim_names: space.names().to_vec(),
            log: Vec::new(),
            finals: Vec::new(),
            calls: CallCounts::default(),
            timings: Timings::default(),
        }
    }

    fn final_arch(
        &mut self,
        cfg: &SearchConfig,
        problem: &Problem,
        n: usize,
        arch: Architecture,
        streams: &SeedStreams,
    ) -> Result<FinalArchitecture> {
        let outcome = if cfg.retrain {
            self.calls.retrains += 1;
            Some(problem.evaluator.retrain(&arch, &mut streams.rng(Stream::Retrain, n as u64))?)
        } else {
            None
        };
        Ok(FinalArchitecture {
            component: n,
            epsilon: None,
            target: None,
            labels: problem.space.labels_of(&arch),
            complexity: complexity(&problem.cost, &arch)?,
            choices: arch.choices().to_vec(),
            loss: outcome.map(|o| o.loss),
            accuracy: outcome.and_then(|o| o.accuracy),
            theta: None,
        })
    }

    /// Extracts, retrains and checks the call budget.
    fn finish(
        mut self,
        cfg: &SearchConfig,
        problem: &Problem,
        dists: &[Distribution],
        streams: &SeedStreams,
        started: Instant,
    ) -> Result<RunRecord> {
        let t0 = Instant::now();
        for (n, dist) in dists.iter().enumerate() {
            let mut fa = self.final_arch(cfg, problem, n, most_probable(dist), streams)?;
            fa.epsilon = Some(cfg.epsilons[n]);
            fa.theta = Some(dist.rows().clone());
            self.finals.push(fa);
        }
        self.timings.retrain = t0.elapsed().as_secs_f64();
        self.timings.total = started.elapsed().as_secs_f64();
        let expected = expected_calls(cfg, self.method, problem.evaluator.has_weights());
        assert_eq!(Some(self.calls), expected, "evaluator calls differ from the loop structure");
        Ok(self.into_record())
    }

    fn into_record(self) -> RunRecord {
        RunRecord {
            method: self.method,
            seed: self.seed,
            dim_names: self.dim_names,
            log: self.log,
            finals: self.finals,
            calls: self.calls,
            timings: self.timings,
        }
    }
}
