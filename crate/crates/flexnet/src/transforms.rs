//! Monotone network transformations.
//!
//! Arrival-rate decrease, service-rate increase and edge simplification all
//! produce a network whose stationary queue lengths are stochastically
//! dominated by the original's; the composite constructions below chain edge
//! simplifications into the fully simplified network (disjoint single
//! dispatcher stars with coupled departure blocks) and the gamma-split used to
//! isolate the low-degree part of a network.
//!
//! Every operation returns a fresh model plus a [`TransformRecord`] describing
//! the edit and the server-identity mapping it induces (new server id to the
//! originating server id), which downstream stationary-tail comparisons
//! consume.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{beta, rat_to_f64};
use crate::model::{
    BipartiteGraph, DeparturePartition, DispatcherId, ModelError, NetworkModel, RateSpec, ServerId,
};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("arrival rate for {0} would increase ({1} -> {2})")]
    ArrivalIncrease(String, f64, f64),
    #[error("service rate for {0} would decrease ({1} -> {2})")]
    ServiceDecrease(String, f64, f64),
    #[error("new rate for {0} is not positive: {1}")]
    NonPositive(String, f64),
    #[error("rate map key {0} is not in the model")]
    UnknownNode(String),
    #[error("rate map is missing {0}")]
    MissingNode(String),
    #[error("new service rates are not constant on block {{{0}}}")]
    BlockConstancy(String),
    #[error("edge ({0}, {1}) is not in the model")]
    NoSuchEdge(String, String),
    #[error("gamma {0} must exceed beta {1}")]
    GammaTooSmall(f64, f64),
    #[error("no dispatcher has degree below gamma = {0}")]
    GammaEmpty(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    ArrivalDecrease,
    ServiceIncrease,
    EdgeSimplify { dispatcher: DispatcherId, server: ServerId },
    FullSimplify,
    GammaSplit { gamma: f64 },
}

/// Description of an applied transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub kind: TransformKind,
    /// Output server id -> originating server id; total on the output server
    /// set (identity where unchanged). For the gamma split this describes the
    /// simplified network; the induced subnetwork maps identically.
    pub mapping: IndexMap<ServerId, ServerId>,
    pub removed_edges: Vec<(DispatcherId, ServerId)>,
    pub added_edges: Vec<(DispatcherId, ServerId)>,
    /// True when the operation was a no-op (degree-one edge simplification,
    /// or a gamma split with every dispatcher below gamma).
    pub identity: bool,
}

fn identity_mapping(model: &NetworkModel) -> IndexMap<ServerId, ServerId> {
    model
        .graph()
        .servers()
        .iter()
        .map(|u| (u.clone(), u.clone()))
        .collect()
}

/// Decreases arrival rates pointwise. `new_lambda` must cover every
/// dispatcher with a positive rate no larger than the current one.
pub fn decrease_arrivals(
    model: &NetworkModel,
    new_lambda: &IndexMap<DispatcherId, f64>,
) -> Result<(NetworkModel, TransformRecord), TransformError> {
    let graph = model.graph();
    for d in new_lambda.keys() {
        if graph.dispatcher_index(d).is_none() {
            return Err(TransformError::UnknownNode(d.0.clone()));
        }
    }
    let mut lambda = IndexMap::with_capacity(graph.n_dispatchers());
    for (di, d) in graph.dispatchers().iter().enumerate() {
        let old = model.lambda(di);
        let new = *new_lambda
            .get(d)
            .ok_or_else(|| TransformError::MissingNode(d.0.clone()))?;
        if new > old {
            return Err(TransformError::ArrivalIncrease(d.0.clone(), old, new));
        }
        if !(new > 0.0) {
            return Err(TransformError::NonPositive(d.0.clone(), new));
        }
        lambda.insert(d.clone(), new);
    }
    let rates = RateSpec::new(lambda, model.rates().mu)?;
    let out = NetworkModel::new(graph.clone(), rates, model.partition())?;
    let record = TransformRecord {
        kind: TransformKind::ArrivalDecrease,
        mapping: identity_mapping(&out),
        removed_edges: Vec::new(),
        added_edges: Vec::new(),
        identity: (0..graph.n_dispatchers()).all(|di| out.lambda(di) == model.lambda(di)),
    };
    Ok((out, record))
}

/// Increases service rates pointwise, keeping them constant on each departure
/// block.
pub fn increase_service(
    model: &NetworkModel,
    new_mu: &IndexMap<ServerId, f64>,
) -> Result<(NetworkModel, TransformRecord), TransformError> {
    let graph = model.graph();
    for u in new_mu.keys() {
        if graph.server_index(u).is_none() {
            return Err(TransformError::UnknownNode(u.0.clone()));
        }
    }
    let mut mu = IndexMap::with_capacity(graph.n_servers());
    for (ui, u) in graph.servers().iter().enumerate() {
        let old = model.mu(ui);
        let new = *new_mu
            .get(u)
            .ok_or_else(|| TransformError::MissingNode(u.0.clone()))?;
        if new < old {
            return Err(TransformError::ServiceDecrease(u.0.clone(), old, new));
        }
        if !(new > 0.0 && new.is_finite()) {
            return Err(TransformError::NonPositive(u.0.clone(), new));
        }
        mu.insert(u.clone(), new);
    }
    for block in model.block_indices() {
        let first = mu[&graph.servers()[block[0]]];
        if block.iter().any(|&ui| mu[&graph.servers()[ui]] != first) {
            let names: Vec<&str> = block
                .iter()
                .map(|&ui| graph.servers()[ui].as_str())
                .collect();
            return Err(TransformError::BlockConstancy(names.join(",")));
        }
    }
    let rates = RateSpec::new(model.rates().lambda, mu)?;
    let out = NetworkModel::new(graph.clone(), rates, model.partition())?;
    let record = TransformRecord {
        kind: TransformKind::ServiceIncrease,
        mapping: identity_mapping(&out),
        removed_edges: Vec::new(),
        added_edges: Vec::new(),
        identity: (0..graph.n_servers()).all(|ui| out.mu(ui) == model.mu(ui)),
    };
    Ok((out, record))
}

/// Derives a fresh server id from the origin and dispatcher, with a numeric
/// suffix on collision.
fn fresh_server_id(taken: &HashSet<String>, origin: &ServerId, d: &DispatcherId) -> ServerId {
    let base = format!("{origin}@{d}");
    if !taken.contains(&base) {
        return ServerId(base);
    }
    let mut k = 2usize;
    loop {
        let candidate = format!("{base}#{k}");
        if !taken.contains(&candidate) {
            return ServerId(candidate);
        }
        k += 1;
    }
}

/// Removes the compatibility relation `(d, u)` and adds a fresh server,
/// compatible only with `d`, that shares `u`'s departure block and service
/// rate. When `u` has degree one the operation is the identity (removing its
/// only edge would isolate it while the rest of the network is unchanged).
pub fn edge_simplify(
    model: &NetworkModel,
    dispatcher: &DispatcherId,
    server: &ServerId,
) -> Result<(NetworkModel, TransformRecord), TransformError> {
    let graph = model.graph();
    if !graph.has_edge(dispatcher, server) {
        return Err(TransformError::NoSuchEdge(
            dispatcher.0.clone(),
            server.0.clone(),
        ));
    }
    let ui = graph.server_index(server).expect("edge checked");
    if graph.server_degree(ui) == 1 {
        let record = TransformRecord {
            kind: TransformKind::EdgeSimplify {
                dispatcher: dispatcher.clone(),
                server: server.clone(),
            },
            mapping: identity_mapping(model),
            removed_edges: Vec::new(),
            added_edges: Vec::new(),
            identity: true,
        };
        return Ok((model.clone(), record));
    }

    let taken: HashSet<String> = graph.servers().iter().map(|u| u.0.clone()).collect();
    let fresh = fresh_server_id(&taken, server, dispatcher);

    let mut servers = graph.servers().to_vec();
    servers.push(fresh.clone());
    let mut edges: Vec<(DispatcherId, ServerId)> = graph
        .edges()
        .filter(|(d, u)| !(*d == dispatcher && *u == server))
        .map(|(d, u)| (d.clone(), u.clone()))
        .collect();
    edges.push((dispatcher.clone(), fresh.clone()));
    let new_graph = BipartiteGraph::new(graph.dispatchers().to_vec(), servers, edges)?;

    let mut rates = model.rates();
    rates.mu.insert(fresh.clone(), model.mu(ui));

    let mut partition = model.partition();
    let home = model.block_of(ui);
    partition.blocks[home].push(fresh.clone());

    let out = NetworkModel::new(new_graph, RateSpec::new(rates.lambda, rates.mu)?, partition)?;
    let mut mapping = identity_mapping(&out);
    mapping.insert(fresh.clone(), server.clone());
    let record = TransformRecord {
        kind: TransformKind::EdgeSimplify {
            dispatcher: dispatcher.clone(),
            server: server.clone(),
        },
        mapping,
        removed_edges: vec![(dispatcher.clone(), server.clone())],
        added_edges: vec![(dispatcher.clone(), fresh)],
        identity: false,
    };
    Ok((out, record))
}

/// Simplifies every edge at once, directly constructing the result: one copy
/// `u@d` of each server per incident edge, each compatible only with its
/// dispatcher, with the copies of a server sharing one departure block.
/// Dispatcher degrees are preserved.
pub fn full_simplify(
    model: &NetworkModel,
) -> Result<(NetworkModel, TransformRecord), TransformError> {
    let graph = model.graph();
    let mut taken: HashSet<String> = HashSet::new();
    let mut servers = Vec::with_capacity(graph.n_edges());
    let mut edges = Vec::with_capacity(graph.n_edges());
    let mut blocks = Vec::with_capacity(graph.n_servers());
    let mut mu = IndexMap::with_capacity(graph.n_edges());
    let mut mapping = IndexMap::with_capacity(graph.n_edges());

    for (ui, u) in graph.servers().iter().enumerate() {
        let mut block = Vec::with_capacity(graph.server_degree(ui));
        for &di in graph.dispatchers_of(ui) {
            let d = &graph.dispatchers()[di];
            let copy = fresh_server_id(&taken, u, d);
            taken.insert(copy.0.clone());
            servers.push(copy.clone());
            edges.push((d.clone(), copy.clone()));
            block.push(copy.clone());
            mu.insert(copy.clone(), model.mu(ui));
            mapping.insert(copy, u.clone());
        }
        blocks.push(block);
    }

    let new_graph = BipartiteGraph::new(graph.dispatchers().to_vec(), servers, edges.clone())?;
    let rates = RateSpec::new(model.rates().lambda, mu)?;
    let out = NetworkModel::new(new_graph, rates, DeparturePartition { blocks })?;

    let removed_edges: Vec<(DispatcherId, ServerId)> = graph
        .edges()
        .map(|(d, u)| (d.clone(), u.clone()))
        .collect();
    let record = TransformRecord {
        kind: TransformKind::FullSimplify,
        mapping,
        removed_edges,
        added_edges: edges,
        identity: false,
    };
    Ok((out, record))
}

/// Splits the network at degree threshold `gamma > beta`.
///
/// Simplifies every edge between a dispatcher of degree `>= gamma` and the
/// server set reachable from the low-degree dispatchers, returning both the
/// simplified network (with the added server copies retained for auditing)
/// and the induced subnetwork on the low-degree part with singleton
/// departures, which is what bound verification consumes.
pub fn gamma_split(
    model: &NetworkModel,
    gamma: f64,
) -> Result<(NetworkModel, NetworkModel, TransformRecord), TransformError> {
    let graph = model.graph();
    let beta_g = rat_to_f64(beta(graph));
    if !(gamma > beta_g) {
        return Err(TransformError::GammaTooSmall(gamma, beta_g));
    }
    let low: Vec<bool> = (0..graph.n_dispatchers())
        .map(|di| (graph.dispatcher_degree(di) as f64) < gamma)
        .collect();
    if low.iter().all(|&b| !b) {
        return Err(TransformError::GammaEmpty(gamma));
    }

    let mut reachable = vec![false; graph.n_servers()];
    for (di, &is_low) in low.iter().enumerate() {
        if is_low {
            for &ui in graph.servers_of(di) {
                reachable[ui] = true;
            }
        }
    }

    // Edges from high-degree dispatchers into the reachable server set, in
    // the graph's edge order.
    let doomed: Vec<(DispatcherId, ServerId)> = graph
        .edges()
        .filter(|(d, u)| {
            let di = graph.dispatcher_index(d).expect("own edge");
            let ui = graph.server_index(u).expect("own edge");
            !low[di] && reachable[ui]
        })
        .map(|(d, u)| (d.clone(), u.clone()))
        .collect();

    let mut simplified = model.clone();
    let mut mapping = identity_mapping(model);
    let mut removed = Vec::with_capacity(doomed.len());
    let mut added = Vec::with_capacity(doomed.len());
    for (d, u) in &doomed {
        let (next, record) = edge_simplify(&simplified, d, u)?;
        simplified = next;
        for (new_id, origin) in record.mapping {
            if new_id != origin {
                // resolve through the chain so the mapping targets an
                // original server
                let root = mapping.get(&origin).cloned().unwrap_or(origin);
                mapping.insert(new_id, root);
            }
        }
        removed.extend(record.removed_edges);
        added.extend(record.added_edges);
    }
    // extend identity mapping to any servers added above
    for u in simplified.graph().servers() {
        mapping.entry(u.clone()).or_insert_with(|| u.clone());
    }

    // Induced subnetwork on the low-degree part.
    let sub_dispatchers: Vec<DispatcherId> = graph
        .dispatchers()
        .iter()
        .enumerate()
        .filter(|(di, _)| low[*di])
        .map(|(_, d)| d.clone())
        .collect();
    let sub_servers: Vec<ServerId> = graph
        .servers()
        .iter()
        .enumerate()
        .filter(|(ui, _)| reachable[*ui])
        .map(|(_, u)| u.clone())
        .collect();
    let sub_edges: Vec<(DispatcherId, ServerId)> = graph
        .edges()
        .filter(|(d, u)| {
            let di = graph.dispatcher_index(d).expect("own edge");
            let ui = graph.server_index(u).expect("own edge");
            low[di] && reachable[ui]
        })
        .map(|(d, u)| (d.clone(), u.clone()))
        .collect();
    let sub_graph = BipartiteGraph::new(sub_dispatchers.clone(), sub_servers.clone(), sub_edges)?;
    let all_rates = model.rates();
    let sub_rates = RateSpec::new(
        sub_dispatchers
            .iter()
            .map(|d| (d.clone(), all_rates.lambda[d]))
            .collect(),
        sub_servers
            .iter()
            .map(|u| (u.clone(), all_rates.mu[u]))
            .collect(),
    )?;
    let induced = NetworkModel::with_singleton_partition(sub_graph, sub_rates)?;

    let identity = doomed.is_empty();
    let record = TransformRecord {
        kind: TransformKind::GammaSplit { gamma },
        mapping,
        removed_edges: removed,
        added_edges: added,
        identity,
    };
    Ok((simplified, induced, record))
}

/// Canonical form of a fully simplified network (every server has degree one):
/// the dispatcher rate table plus the multiset of departure blocks, each block
/// summarized by its service rate and the sorted dispatcher ids its members
/// are attached to. Two fully simplified networks are isomorphic as
/// partitioned rate-labeled graphs exactly when their canonical forms match.
pub fn canonical_simplified_form(model: &NetworkModel) -> Result<String, TransformError> {
    let graph = model.graph();
    for ui in 0..graph.n_servers() {
        if graph.server_degree(ui) != 1 {
            return Err(TransformError::NoSuchEdge(
                "canonical form requires degree-one servers; found".to_owned(),
                graph.servers()[ui].0.clone(),
            ));
        }
    }
    let mut dispatchers: Vec<String> = graph
        .dispatchers()
        .iter()
        .enumerate()
        .map(|(di, d)| format!("{}:{}", d, model.lambda(di)))
        .collect();
    dispatchers.sort();
    let mut blocks: Vec<String> = model
        .block_indices()
        .iter()
        .map(|block| {
            let mut members: Vec<String> = block
                .iter()
                .map(|&ui| {
                    let di = graph.dispatchers_of(ui)[0];
                    graph.dispatchers()[di].0.clone()
                })
                .collect();
            members.sort();
            format!("{}:[{}]", model.mu(block[0]), members.join(","))
        })
        .collect();
    blocks.sort();
    Ok(format!("D{{{}}} B{{{}}}", dispatchers.join(";"), blocks.join(";")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::stability::{check_ergodic, StabilityStatus};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn two_dispatchers_one_server() -> NetworkModel {
        parse_model(
            r#"{
                "dispatchers": [{"id": "d", "rate": 0.3}, {"id": "e", "rate": 0.3}],
                "servers": [{"id": "u", "rate": 1.0}],
                "edges": [["d", "u"], ["e", "u"]]
            }"#,
        )
        .unwrap()
    }

    fn complete_2x2() -> NetworkModel {
        parse_model(
            r#"{
                "dispatchers": [{"id": "d", "rate": 0.5}, {"id": "e", "rate": 0.5}],
                "servers": [{"id": "u", "rate": 1.0}, {"id": "v", "rate": 1.0}],
                "edges": [["d", "u"], ["d", "v"], ["e", "u"], ["e", "v"]]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn arrival_decrease_accepts_pointwise_decrease() {
        let m = complete_2x2();
        let new: IndexMap<DispatcherId, f64> =
            [("d".into(), 0.5), ("e".into(), 0.25)].into_iter().collect();
        let (out, record) = decrease_arrivals(&m, &new).unwrap();
        assert_eq!(out.lambda_of(&"e".into()).unwrap(), 0.25);
        assert!(!record.identity);
        assert_eq!(out.graph(), m.graph());
    }

    #[test]
    fn arrival_decrease_rejects_increase() {
        let m = complete_2x2();
        let new: IndexMap<DispatcherId, f64> =
            [("d".into(), 0.6), ("e".into(), 0.5)].into_iter().collect();
        assert!(matches!(
            decrease_arrivals(&m, &new),
            Err(TransformError::ArrivalIncrease(..))
        ));
    }

    #[test]
    fn arrival_decrease_identity() {
        let m = complete_2x2();
        let new: IndexMap<DispatcherId, f64> =
            [("d".into(), 0.5), ("e".into(), 0.5)].into_iter().collect();
        let (out, record) = decrease_arrivals(&m, &new).unwrap();
        assert!(record.identity);
        assert_eq!(out, m);
    }

    #[test]
    fn service_increase_respects_blocks() {
        let m = parse_model(
            r#"{
                "dispatchers": [{"id": "d", "rate": 0.5}],
                "servers": [{"id": "u", "rate": 1.0}, {"id": "v", "rate": 1.0}],
                "edges": [["d", "u"], ["d", "v"]],
                "partition": [["u", "v"]]
            }"#,
        )
        .unwrap();
        let uneven: IndexMap<ServerId, f64> =
            [("u".into(), 2.0), ("v".into(), 1.0)].into_iter().collect();
        assert!(matches!(
            increase_service(&m, &uneven),
            Err(TransformError::BlockConstancy(_))
        ));
        let scaled: IndexMap<ServerId, f64> =
            [("u".into(), 1.5), ("v".into(), 1.5)].into_iter().collect();
        let (out, _) = increase_service(&m, &scaled).unwrap();
        assert_eq!(out.mu_of(&"u".into()).unwrap(), 1.5);
        // decrease rejected
        let dec: IndexMap<ServerId, f64> =
            [("u".into(), 0.5), ("v".into(), 0.5)].into_iter().collect();
        assert!(matches!(
            increase_service(&m, &dec),
            Err(TransformError::ServiceDecrease(..))
        ));
    }

    #[test]
    fn edge_simplify_two_dispatcher_example() {
        let m = two_dispatchers_one_server();
        let (out, record) = edge_simplify(&m, &"d".into(), &"u".into()).unwrap();
        let g = out.graph();
        assert_eq!(g.n_servers(), 2);
        assert!(g.has_edge(&"e".into(), &"u".into()));
        assert!(g.has_edge(&"d".into(), &"u@d".into()));
        assert!(!g.has_edge(&"d".into(), &"u".into()));
        assert_eq!(out.block_indices().len(), 1);
        assert_eq!(out.block_indices()[0].len(), 2);
        assert_eq!(record.mapping[&ServerId("u@d".into())], ServerId("u".into()));
        assert_eq!(out.mu_of(&"u@d".into()).unwrap(), 1.0);
    }

    #[test]
    fn edge_simplify_degree_one_is_identity() {
        let m = parse_model(
            r#"{
                "dispatchers": [{"id": "d", "rate": 0.5}],
                "servers": [{"id": "u", "rate": 1.0}],
                "edges": [["d", "u"]]
            }"#,
        )
        .unwrap();
        let (out, record) = edge_simplify(&m, &"d".into(), &"u".into()).unwrap();
        assert!(record.identity);
        assert_eq!(out, m);
    }

    #[test]
    fn edge_simplify_missing_edge() {
        let m = two_dispatchers_one_server();
        assert!(matches!(
            edge_simplify(&m, &"d".into(), &"nope".into()),
            Err(TransformError::NoSuchEdge(..))
        ));
    }

    #[test]
    fn edge_simplify_preserves_dispatcher_degrees() {
        let m = complete_2x2();
        let before: Vec<usize> = (0..2).map(|di| m.graph().dispatcher_degree(di)).collect();
        let (out, _) = edge_simplify(&m, &"d".into(), &"u".into()).unwrap();
        let after: Vec<usize> = (0..2).map(|di| out.graph().dispatcher_degree(di)).collect();
        assert_eq!(before, after);
        assert_eq!(out.graph().n_servers(), m.graph().n_servers() + 1);
    }

    #[test]
    fn sequential_simplify_of_complete_2x2() {
        let m = complete_2x2();
        let mut cur = m.clone();
        for (d, u) in m.graph().edges().map(|(d, u)| (d.clone(), u.clone())).collect::<Vec<_>>() {
            let (next, _) = edge_simplify(&cur, &d, &u).unwrap();
            cur = next;
        }
        let g = cur.graph();
        assert_eq!(g.n_servers(), 4);
        assert_eq!(g.n_edges(), 4);
        for ui in 0..4 {
            assert_eq!(g.server_degree(ui), 1);
        }
        // two blocks of two servers, pairing the copies of each original server
        let mut sizes: Vec<usize> = cur.block_indices().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2]);
        // matches the direct construction up to renaming
        let (direct, _) = full_simplify(&m).unwrap();
        assert_eq!(
            canonical_simplified_form(&cur).unwrap(),
            canonical_simplified_form(&direct).unwrap()
        );
    }

    #[test]
    fn full_simplify_simple_model_is_renaming() {
        let m = parse_model(
            r#"{
                "dispatchers": [{"id": "d", "rate": 1.5}],
                "servers": [{"id": "u1", "rate": 1.0}, {"id": "u2", "rate": 1.0}, {"id": "u3", "rate": 1.0}],
                "edges": [["d", "u1"], ["d", "u2"], ["d", "u3"]]
            }"#,
        )
        .unwrap();
        let (out, _) = full_simplify(&m).unwrap();
        assert_eq!(out.graph().n_servers(), 3);
        assert_eq!(out.graph().n_edges(), 3);
        assert!(out.has_singleton_partition());
        // the original is already fully simplified, so only names change
        assert_eq!(
            canonical_simplified_form(&out).unwrap(),
            canonical_simplified_form(&m).unwrap()
        );
    }

    #[test]
    fn full_simplify_preserves_dispatcher_degree_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let m = random_model(&mut rng);
            let (out, record) = full_simplify(&m).unwrap();
            let mut before: Vec<usize> = (0..m.graph().n_dispatchers())
                .map(|di| m.graph().dispatcher_degree(di))
                .collect();
            let mut after: Vec<usize> = (0..out.graph().n_dispatchers())
                .map(|di| out.graph().dispatcher_degree(di))
                .collect();
            before.sort_unstable();
            after.sort_unstable();
            assert_eq!(before, after);
            assert_eq!(out.graph().n_servers(), m.graph().n_edges());
            // mapping total on output servers
            for u in out.graph().servers() {
                assert!(record.mapping.contains_key(u));
            }
        }
    }

    fn random_model(rng: &mut impl Rng) -> NetworkModel {
        loop {
            let nd = rng.gen_range(1..=3usize);
            let ns = rng.gen_range(1..=3usize);
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
            let Ok(graph) = BipartiteGraph::new(dispatchers, servers, edges) else {
                continue;
            };
            let rates = RateSpec::new(
                graph
                    .dispatchers()
                    .iter()
                    .map(|d| (d.clone(), rng.gen_range(0.2..0.5)))
                    .collect(),
                graph
                    .servers()
                    .iter()
                    .map(|u| (u.clone(), rng.gen_range(1.0..2.0)))
                    .collect(),
            )
            .unwrap();
            if let Ok(m) = NetworkModel::with_singleton_partition(graph, rates) {
                return m;
            }
        }
    }

    #[test]
    fn full_simplify_matches_random_order_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xbeef);
        for _ in 0..40 {
            let m = random_model(&mut rng);
            let (direct, _) = full_simplify(&m).unwrap();
            let mut order: Vec<(DispatcherId, ServerId)> = m
                .graph()
                .edges()
                .map(|(d, u)| (d.clone(), u.clone()))
                .collect();
            order.shuffle(&mut rng);
            let mut cur = m.clone();
            for (d, u) in order {
                let (next, _) = edge_simplify(&cur, &d, &u).unwrap();
                cur = next;
            }
            assert_eq!(
                canonical_simplified_form(&direct).unwrap(),
                canonical_simplified_form(&cur).unwrap()
            );
        }
    }

    #[test]
    fn transforms_preserve_ergodicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xcafe);
        let mut tested = 0;
        while tested < 30 {
            let m = random_model(&mut rng);
            if check_ergodic(&m).unwrap().status != StabilityStatus::Ergodic {
                continue;
            }
            tested += 1;
            let (fs, _) = full_simplify(&m).unwrap();
            assert_eq!(check_ergodic(&fs).unwrap().status, StabilityStatus::Ergodic);
            let edge = m
                .graph()
                .edges()
                .next()
                .map(|(d, u)| (d.clone(), u.clone()))
                .unwrap();
            let (es, _) = edge_simplify(&m, &edge.0, &edge.1).unwrap();
            assert_eq!(check_ergodic(&es).unwrap().status, StabilityStatus::Ergodic);
        }
    }

    #[test]
    fn gamma_split_identity_when_all_degrees_low() {
        let m = crate::model::family_g2(2).unwrap();
        // beta = 4/3; degrees are (2, 1, 1), all below gamma = 7/3
        let (simplified, induced, record) = gamma_split(&m, 7.0 / 3.0).unwrap();
        assert!(record.identity);
        assert_eq!(simplified, m);
        assert_eq!(induced.graph().n_servers(), m.graph().n_servers());
        assert_eq!(induced.graph().n_edges(), m.graph().n_edges());
    }

    #[test]
    fn gamma_split_hand_case() {
        // d1 with degree 3 and d2 with degree 1 sharing server u1
        let m = parse_model(
            r#"{
                "dispatchers": [{"id": "d1", "rate": 0.5}, {"id": "d2", "rate": 0.5}],
                "servers": [{"id": "u1", "rate": 1.0}, {"id": "u2", "rate": 1.0}, {"id": "u3", "rate": 1.0}],
                "edges": [["d1", "u1"], ["d1", "u2"], ["d1", "u3"], ["d2", "u1"]]
            }"#,
        )
        .unwrap();
        // beta = 2, take gamma = 2.5: low = {d2}, reachable = {u1}
        let (simplified, induced, record) = gamma_split(&m, 2.5).unwrap();
        assert_eq!(record.removed_edges, vec![("d1".into(), "u1".into())]);
        assert_eq!(induced.graph().n_dispatchers(), 1);
        assert_eq!(induced.graph().n_servers(), 1);
        assert!(induced.graph().has_edge(&"d2".into(), &"u1".into()));
        // the simplified network kept d1's degree
        assert_eq!(simplified.graph().dispatcher_degree(0), 3);
        assert!(simplified.graph().has_edge(&"d1".into(), &"u1@d1".into()));
        assert!(!simplified.graph().has_edge(&"d1".into(), &"u1".into()));
    }

    #[test]
    fn gamma_split_guards() {
        let m = complete_2x2(); // beta = 2
        assert!(matches!(
            gamma_split(&m, 2.0),
            Err(TransformError::GammaTooSmall(..))
        ));
        // gamma > beta always leaves some dispatcher below gamma, because the
        // average degree dominates the minimum; here every degree is 2 < 2.1,
        // so the split degenerates to the identity.
        let (_, induced, record) = gamma_split(&m, 2.1).unwrap();
        assert!(record.identity);
        assert_eq!(induced, m);
    }
}
