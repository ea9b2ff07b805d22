//! Browser demo: a generated trade-off instance, its exact Pareto front, a
//! live multi-ε search on it, and the regularization flow on one simplex.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no bindings beyond `JSON.parse`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use mixnas::model::{most_probable, sample, Distribution};
use mixnas::objectives::{pareto_front, Evaluator, MiniBatch, TableObjective, TradeoffSpec};
use mixnas::optimizer::{sample_mixture, update_is, update_single, Ensemble, StepSettings};
use mixnas::regularizer::{complexity, expected_complexity, nat_grad_expected_complexity, scaled, CostModel, CostScale};

#[derive(Debug, Serialize)]
pub struct Point {
    pub complexity: f64,
    pub loss: f64,
}

#[derive(Debug, Serialize)]
pub struct Landscape {
    pub all: Vec<Point>,
    pub front: Vec<Point>,
}

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub epsilons: Vec<f64>,
    /// `complexity[n][t]`: expected complexity of component n after step t.
    pub complexity: Vec<Vec<f64>>,
    pub finals: Vec<Point>,
    pub evaluations: usize,
}

#[derive(Debug, Serialize)]
pub struct Arrow {
    /// Barycentric point (θ1, θ2, θ3).
    pub at: [f64; 3],
    /// Natural-gradient step −ε (c − Q) ⊙ θ.
    pub step: [f64; 3],
}

fn instance(seed: u64) -> Result<(TableObjective, CostModel), String> {
    let spec = TradeoffSpec { seed, ..TradeoffSpec::default() };
    let (_, obj, raw) = spec.build().map_err(|e| e.to_string())?;
    let cost = scaled(raw, CostScale::GlobalMax).map_err(|e| e.to_string())?;
    Ok((obj, cost))
}

pub fn landscape(seed: u64) -> Result<Landscape, String> {
    let (obj, cost) = instance(seed)?;
    let all = obj
        .space()
        .enumerate()
        .map(|m| Point { complexity: complexity(&cost, &m).unwrap_or(f64::NAN), loss: obj.deterministic(&m) })
        .collect();
    let front = pareto_front(&obj, &cost)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| Point { complexity: p.complexity, loss: p.loss })
        .collect();
    Ok(Landscape { all, front })
}

/// `shared = true` runs the importance-sampled update on one shared sample
/// stream; otherwise each ε gets its own independent search.
pub fn search(
    instance_seed: u64,
    seed: u64,
    epsilons: &[f64],
    lambda: usize,
    iterations: usize,
    shared: bool,
) -> Result<Trajectory, String> {
    if epsilons.is_empty() || lambda == 0 {
        return Err("need at least one epsilon and lambda >= 1".into());
    }
    let (obj, cost) = instance(instance_seed)?;
    let space = obj.space().clone();
    let settings = StepSettings::for_space(&space);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = MiniBatch::default();
    let mut curves = vec![Vec::with_capacity(iterations); epsilons.len()];
    let mut evaluations = 0;
    let err = |e: mixnas::Error| e.to_string();

    let finals: Vec<Distribution> = if shared {
        let mut ens = Ensemble::uniform(&space, epsilons.to_vec(), settings).map_err(err)?;
        for _ in 0..iterations {
            let samples = sample_mixture(&ens, lambda, &mut rng);
            let losses: Vec<f64> = samples.iter().map(|m| obj.evaluate(m, &batch, &mut rng)).collect();
            evaluations += lambda;
            let (next, report) = update_is(&ens, &samples, &losses, &cost).map_err(err)?;
            for (curve, r) in curves.iter_mut().zip(report.complexity_after) {
                curve.push(r);
            }
            ens = next;
        }
        ens.components().to_vec()
    } else {
        let mut out = Vec::new();
        for (curve, &eps) in curves.iter_mut().zip(epsilons) {
            let mut dist = Distribution::uniform(&space);
            for _ in 0..iterations {
                let samples: Vec<_> = (0..lambda).map(|_| sample(&dist, &mut rng)).collect();
                let losses: Vec<f64> = samples.iter().map(|m| obj.evaluate(m, &batch, &mut rng)).collect();
                evaluations += lambda;
                dist = update_single(&dist, &samples, &losses, &cost, eps, &settings).map_err(err)?;
                curve.push(expected_complexity(&cost, &dist).map_err(err)?);
            }
            out.push(dist);
        }
        out
    };

    let finals = finals
        .iter()
        .map(|d| {
            let m = most_probable(d);
            Ok(Point { complexity: complexity(&cost, &m).map_err(err)?, loss: obj.deterministic(&m) })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(Trajectory { epsilons: epsilons.to_vec(), complexity: curves, finals, evaluations })
}

/// Regularization step field on the 3-category simplex, sampled on a
/// triangular grid with `steps` subdivisions.
pub fn flow_field(costs: [f64; 3], epsilon: f64, steps: usize) -> Result<Vec<Arrow>, String> {
    let cost = CostModel::new(vec![costs.to_vec()]).map_err(|e| e.to_string())?;
    let n = steps.max(2);
    let mut arrows = Vec::new();
    for i in 1..n {
        for j in 1..n - i {
            let a = i as f64 / n as f64;
            let b = j as f64 / n as f64;
            let theta = [a, b, 1.0 - a - b];
            let dist = Distribution::from_rows(vec![theta.to_vec()]).map_err(|e| e.to_string())?;
            let g = nat_grad_expected_complexity(&cost, &dist).map_err(|e| e.to_string())?;
            arrows.push(Arrow { at: theta, step: [-epsilon * g[0][0], -epsilon * g[0][1], -epsilon * g[0][2]] });
        }
    }
    Ok(arrows)
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let v = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = landscape)]
pub fn landscape_json(seed: u32) -> Result<String, JsError> {
    to_json(landscape(seed as u64))
}

/// `epsilons` is a comma-separated list.
#[wasm_bindgen(js_name = search)]
pub fn search_json(
    instance_seed: u32,
    seed: u32,
    epsilons: &str,
    lambda: u32,
    iterations: u32,
    shared: bool,
) -> Result<String, JsError> {
    let eps = epsilons
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad epsilon {s:?}")))
        .collect::<Result<Vec<_>, _>>();
    to_json(eps.and_then(|eps| {
        search(instance_seed as u64, seed as u64, &eps, lambda as usize, iterations as usize, shared)
    }))
}

#[wasm_bindgen(js_name = flowField)]
pub fn flow_field_json(c1: f64, c2: f64, c3: f64, epsilon: f64, steps: u32) -> Result<String, JsError> {
    to_json(flow_field([c1, c2, c3], epsilon, steps as usize))
}
