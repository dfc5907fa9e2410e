//! Reproducible random-model sampler for the verification batteries.
//!
//! Distribution: dispatcher and server counts uniform on `1..=max`, each
//! possible edge included with probability `edge_prob` conditioned on no
//! isolated nodes, rates log-uniform on `[rate_lo, rate_hi]`, resampled until
//! the model is ergodic with margin at least `min_margin` and worst subset
//! load at most `max_bottleneck_load`. The load cap keeps the truncated state
//! spaces (and hence the boundary mass achievable within the state budget)
//! small enough for exact solving; without it a near-critical dedicated pair
//! can require queue caps in the hundreds.

use flexnet::exact::bottleneck_load;
use flexnet::model::{BipartiteGraph, DispatcherId, NetworkModel, RateSpec, ServerId};
use flexnet::stability::{check_ergodic, StabilityStatus};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub max_dispatchers: usize,
    pub max_servers: usize,
    pub edge_prob: f64,
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub min_margin: f64,
    pub max_bottleneck_load: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            max_dispatchers: 3,
            max_servers: 3,
            edge_prob: 0.5,
            rate_lo: 0.2,
            rate_hi: 2.0,
            min_margin: 0.05,
            max_bottleneck_load: 0.55,
        }
    }
}

/// Draws one model from the documented distribution. Deterministic given the
/// RNG state; panics if 100k attempts fail, which no reasonable configuration
/// reaches.
pub fn sample_ergodic_model(rng: &mut ChaCha8Rng, config: &SamplerConfig) -> NetworkModel {
    for _ in 0..100_000 {
        let nd = rng.gen_range(1..=config.max_dispatchers);
        let ns = rng.gen_range(1..=config.max_servers);
        let dispatchers: Vec<DispatcherId> =
            (1..=nd).map(|i| DispatcherId(format!("d{i}"))).collect();
        let servers: Vec<ServerId> = (1..=ns).map(|i| ServerId(format!("u{i}"))).collect();
        let mut edges = Vec::new();
        for d in &dispatchers {
            for u in &servers {
                if rng.gen_bool(config.edge_prob) {
                    edges.push((d.clone(), u.clone()));
                }
            }
        }
        let Ok(graph) = BipartiteGraph::new(dispatchers, servers, edges) else {
            continue;
        };
        let log_lo = config.rate_lo.ln();
        let log_hi = config.rate_hi.ln();
        let rates = RateSpec::new(
            graph
                .dispatchers()
                .iter()
                .map(|d| (d.clone(), rng.gen_range(log_lo..log_hi).exp()))
                .collect(),
            graph
                .servers()
                .iter()
                .map(|u| (u.clone(), rng.gen_range(log_lo..log_hi).exp()))
                .collect(),
        )
        .expect("sampled rates are positive");
        let Ok(model) = NetworkModel::with_singleton_partition(graph, rates) else {
            continue;
        };
        let verdict = check_ergodic(&model).expect("sampled models are tiny");
        if verdict.status != StabilityStatus::Ergodic || verdict.margin < config.min_margin {
            continue;
        }
        if bottleneck_load(&model) > config.max_bottleneck_load {
            continue;
        }
        return model;
    }
    panic!("sampler failed to produce an ergodic model in 100000 attempts");
}
