//! Flexibility metrics of a compatibility graph, in exact rational arithmetic.
//!
//! `alpha` averages, over the servers, the degree of the least-flexible
//! compatible dispatcher; `beta` is the plain dispatcher-average degree. The
//! weighted variant `theta_metric` replaces each server's minimum by a convex
//! combination of its compatible dispatchers' degrees and therefore never
//! falls below `alpha`.

use std::collections::HashMap;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BipartiteGraph, DispatcherId, ServerId};

/// Exact rational metric value.
pub type Rat = Ratio<i64>;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("weight on non-edge ({0}, {1})")]
    WeightOffEdge(String, String),
    #[error("weight {2} out of [0, 1] on edge ({0}, {1})")]
    WeightOutOfRange(String, String, Rat),
    #[error("weights for server {0} sum to {1}, expected 1")]
    WeightSumNotOne(String, Rat),
}

/// Per-edge weights in `[0, 1]` that sum to one over each server's compatible
/// dispatchers. Stored sparsely by (dispatcher index, server index).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    weights: HashMap<(usize, usize), Rat>,
}

impl WeightFunction {
    /// Validates support, range and the per-server sum-to-one invariant.
    pub fn new(
        graph: &BipartiteGraph,
        weights: impl IntoIterator<Item = ((DispatcherId, ServerId), Rat)>,
    ) -> Result<Self, MetricsError> {
        let mut table = HashMap::new();
        for ((d, u), w) in weights {
            let (Some(di), Some(ui)) = (graph.dispatcher_index(&d), graph.server_index(&u)) else {
                return Err(MetricsError::WeightOffEdge(d.0, u.0));
            };
            if !graph.has_edge(&d, &u) {
                return Err(MetricsError::WeightOffEdge(d.0, u.0));
            }
            if w < Rat::zero() || w > Rat::one() {
                return Err(MetricsError::WeightOutOfRange(d.0, u.0, w));
            }
            if !w.is_zero() {
                table.insert((di, ui), w);
            }
        }
        let wf = WeightFunction { weights: table };
        wf.check_sums(graph)?;
        Ok(wf)
    }

    fn check_sums(&self, graph: &BipartiteGraph) -> Result<(), MetricsError> {
        for ui in 0..graph.n_servers() {
            let sum: Rat = graph
                .dispatchers_of(ui)
                .iter()
                .map(|&di| self.get(di, ui))
                .sum();
            if sum != Rat::one() {
                return Err(MetricsError::WeightSumNotOne(
                    graph.servers()[ui].0.clone(),
                    sum,
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, di: usize, ui: usize) -> Rat {
        self.weights.get(&(di, ui)).copied().unwrap_or_else(Rat::zero)
    }

    /// Uniform weights `1 / deg(u)` over each server's compatible dispatchers.
    pub fn uniform(graph: &BipartiteGraph) -> Self {
        let mut weights = HashMap::new();
        for ui in 0..graph.n_servers() {
            let deg = graph.server_degree(ui) as i64;
            for &di in graph.dispatchers_of(ui) {
                weights.insert((di, ui), Rat::new(1, deg));
            }
        }
        WeightFunction { weights }
    }
}

/// Server-average of the minimum compatible dispatcher degree.
pub fn alpha(graph: &BipartiteGraph) -> Rat {
    let total: i64 = (0..graph.n_servers())
        .map(|ui| {
            graph
                .dispatchers_of(ui)
                .iter()
                .map(|&di| graph.dispatcher_degree(di) as i64)
                .min()
                .expect("no isolated servers")
        })
        .sum();
    Rat::new(total, graph.n_servers() as i64)
}

/// Dispatcher-average degree.
pub fn beta(graph: &BipartiteGraph) -> Rat {
    let total: i64 = (0..graph.n_dispatchers())
        .map(|di| graph.dispatcher_degree(di) as i64)
        .sum();
    Rat::new(total, graph.n_dispatchers() as i64)
}

/// Weighted dispatcher-degree average
/// `(1/|S|) sum_u sum_{d in N(u)} theta(d, u) deg(d)`; always >= `alpha`.
pub fn theta_metric(graph: &BipartiteGraph, theta: &WeightFunction) -> Result<Rat, MetricsError> {
    theta.check_sums(graph)?;
    let mut total = Rat::zero();
    for ui in 0..graph.n_servers() {
        for &di in graph.dispatchers_of(ui) {
            total += theta.get(di, ui) * Rat::from_integer(graph.dispatcher_degree(di) as i64);
        }
    }
    Ok(total / Rat::from_integer(graph.n_servers() as i64))
}

/// The weight function that concentrates each server's weight uniformly on
/// its minimum-degree compatible dispatchers, achieving
/// `theta_metric = alpha`.
pub fn min_weight(graph: &BipartiteGraph) -> WeightFunction {
    let mut weights = HashMap::new();
    for ui in 0..graph.n_servers() {
        let degrees: Vec<usize> = graph
            .dispatchers_of(ui)
            .iter()
            .map(|&di| graph.dispatcher_degree(di))
            .collect();
        let min = *degrees.iter().min().expect("no isolated servers");
        let ties = degrees.iter().filter(|&&d| d == min).count() as i64;
        for (&di, &deg) in graph.dispatchers_of(ui).iter().zip(degrees.iter()) {
            if deg == min {
                weights.insert((di, ui), Rat::new(1, ties));
            }
        }
    }
    WeightFunction { weights }
}

/// Rational rendered for JSON output, with a float convenience field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalJson {
    pub num: i64,
    pub den: i64,
    pub float: f64,
}

impl From<Rat> for RationalJson {
    fn from(r: Rat) -> Self {
        RationalJson {
            num: *r.numer(),
            den: *r.denom(),
            float: rat_to_f64(r),
        }
    }
}

/// Rational to floating point.
pub fn rat_to_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{family_g1, family_g2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn graph(d: &[&str], s: &[&str], e: &[(&str, &str)]) -> BipartiteGraph {
        BipartiteGraph::new(
            d.iter().map(|x| (*x).into()).collect(),
            s.iter().map(|x| (*x).into()).collect(),
            e.iter().map(|(a, b)| ((*a).into(), (*b).into())).collect(),
        )
        .unwrap()
    }

    fn complete_1xk(k: usize) -> BipartiteGraph {
        let servers: Vec<String> = (0..k).map(|i| format!("u{i}")).collect();
        graph(
            &["d"],
            &servers.iter().map(String::as_str).collect::<Vec<_>>(),
            &servers
                .iter()
                .map(|u| ("d", u.as_str()))
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn alpha_beta_hand_cases() {
        let g = graph(&["d", "e"], &["u", "w"], &[("d", "u"), ("e", "u"), ("e", "w")]);
        assert_eq!(alpha(&g), Rat::new(3, 2));
        assert_eq!(beta(&g), Rat::new(3, 2));
    }

    #[test]
    fn complete_graph_metrics_equal_server_count() {
        for k in 1..=6 {
            let g = complete_1xk(k);
            assert_eq!(alpha(&g), Rat::from_integer(k as i64));
            assert_eq!(beta(&g), Rat::from_integer(k as i64));
            // single dispatcher forces theta == 1 on every edge
            let theta = WeightFunction::uniform(&g);
            assert_eq!(theta_metric(&g, &theta).unwrap(), Rat::from_integer(k as i64));
        }
    }

    #[test]
    fn family_closed_forms_exact() {
        for n in 1..=50usize {
            let g1 = family_g1(n).unwrap();
            assert_eq!(alpha(g1.graph()), Rat::one(), "g1 alpha at n={n}");
            assert_eq!(beta(g1.graph()), Rat::new(n as i64 + 1, 2), "g1 beta at n={n}");
            let g2 = family_g2(n).unwrap();
            assert_eq!(alpha(g2.graph()), Rat::new(n as i64 + 1, 2), "g2 alpha at n={n}");
            assert_eq!(
                beta(g2.graph()),
                Rat::new(2 * n as i64, n as i64 + 1),
                "g2 beta at n={n}"
            );
        }
    }

    #[test]
    fn g2_examples() {
        let g = family_g2(2).unwrap();
        assert_eq!(alpha(g.graph()), Rat::new(3, 2));
        assert_eq!(beta(g.graph()), Rat::new(4, 3));
        let g = family_g2(10).unwrap();
        assert_eq!(alpha(g.graph()), Rat::new(11, 2));
        assert_eq!(beta(g.graph()), Rat::new(20, 11));
    }

    #[test]
    fn theta_hand_case() {
        let g = graph(&["d", "e"], &["u", "w"], &[("d", "u"), ("e", "u"), ("e", "w")]);
        let theta = WeightFunction::new(
            &g,
            [
                (("d".into(), "u".into()), Rat::new(1, 2)),
                (("e".into(), "u".into()), Rat::new(1, 2)),
                (("e".into(), "w".into()), Rat::one()),
            ],
        )
        .unwrap();
        assert_eq!(theta_metric(&g, &theta).unwrap(), Rat::new(7, 4));
    }

    #[test]
    fn min_weight_achieves_alpha() {
        let g = graph(&["d", "e"], &["u", "w"], &[("d", "u"), ("e", "u"), ("e", "w")]);
        let mw = min_weight(&g);
        assert_eq!(mw.get(0, 0), Rat::one()); // (d, u): deg(d)=1 < deg(e)=2
        assert_eq!(mw.get(1, 0), Rat::zero());
        assert_eq!(mw.get(1, 1), Rat::one()); // (e, w) forced
        assert_eq!(theta_metric(&g, &mw).unwrap(), alpha(&g));
    }

    #[test]
    fn min_weight_splits_ties_uniformly() {
        let g = graph(&["d", "e"], &["u"], &[("d", "u"), ("e", "u")]);
        let mw = min_weight(&g);
        assert_eq!(mw.get(0, 0), Rat::new(1, 2));
        assert_eq!(mw.get(1, 0), Rat::new(1, 2));
    }

    #[test]
    fn weight_validation_errors() {
        let g = graph(&["d", "e"], &["u", "w"], &[("d", "u"), ("e", "u"), ("e", "w")]);
        // weight off edge
        assert!(WeightFunction::new(&g, [(("d".into(), "w".into()), Rat::one())]).is_err());
        // sums violated
        assert!(WeightFunction::new(
            &g,
            [
                (("d".into(), "u".into()), Rat::new(1, 2)),
                (("e".into(), "u".into()), Rat::new(1, 4)),
                (("e".into(), "w".into()), Rat::one()),
            ],
        )
        .is_err());
    }

    /// Random connected-enough bipartite graph without isolated nodes.
    fn random_graph(rng: &mut impl Rng) -> BipartiteGraph {
        loop {
            let nd = rng.gen_range(1..=4usize);
            let ns = rng.gen_range(1..=4usize);
            let dispatchers: Vec<DispatcherId> =
                (0..nd).map(|i| DispatcherId(format!("d{i}"))).collect();
            let servers: Vec<ServerId> = (0..ns).map(|i| ServerId(format!("u{i}"))).collect();
            let mut edges = Vec::new();
            for d in &dispatchers {
                for u in &servers {
                    if rng.gen_bool(0.5) {
                        edges.push((d.clone(), u.clone()));
                    }
                }
            }
            if let Ok(g) = BipartiteGraph::new(dispatchers, servers, edges) {
                return g;
            }
        }
    }

    fn random_theta(rng: &mut impl Rng, graph: &BipartiteGraph) -> WeightFunction {
        let mut weights = Vec::new();
        for ui in 0..graph.n_servers() {
            let parts: Vec<i64> = graph
                .dispatchers_of(ui)
                .iter()
                .map(|_| rng.gen_range(0..=4i64))
                .collect();
            let total: i64 = parts.iter().sum();
            if total == 0 {
                // fall back to everything on the first dispatcher
                let di = graph.dispatchers_of(ui)[0];
                weights.push((
                    (
                        graph.dispatchers()[di].clone(),
                        graph.servers()[ui].clone(),
                    ),
                    Rat::one(),
                ));
                continue;
            }
            for (&di, &p) in graph.dispatchers_of(ui).iter().zip(parts.iter()) {
                weights.push((
                    (
                        graph.dispatchers()[di].clone(),
                        graph.servers()[ui].clone(),
                    ),
                    Rat::new(p, total),
                ));
            }
        }
        WeightFunction::new(graph, weights).unwrap()
    }

    #[test]
    fn theta_dominates_alpha_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a1fa);
        for _ in 0..1000 {
            let g = random_graph(&mut rng);
            let theta = random_theta(&mut rng, &g);
            let t = theta_metric(&g, &theta).unwrap();
            let a = alpha(&g);
            assert!(t >= a, "theta {t} < alpha {a}");
        }
    }

    #[test]
    fn metric_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let g = random_graph(&mut rng);
            let a = alpha(&g);
            let b = beta(&g);
            let max_deg = (0..g.n_dispatchers())
                .map(|di| g.dispatcher_degree(di))
                .max()
                .unwrap() as i64;
            assert!(a >= Rat::one() && a <= Rat::from_integer(max_deg));
            assert!(b >= Rat::one() && b <= Rat::from_integer(g.n_servers() as i64));
        }
    }
}
