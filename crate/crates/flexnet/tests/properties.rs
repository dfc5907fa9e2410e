//! Property tests for the structural invariants: occupancy shape, JSON
//! round-trips, metric ordering and transformation bookkeeping.

use proptest::prelude::*;

use flexnet::metrics::{alpha, beta, min_weight, theta_metric, Rat, WeightFunction};
use flexnet::model::{
    model_to_json, occupancy_of_state, parse_model, BipartiteGraph, DispatcherId, NetworkModel,
    QueueState, RateSpec, ServerId,
};
use flexnet::transforms::{edge_simplify, full_simplify};

fn arb_lengths() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..12, 1..8)
}

/// Random bipartite graph without isolated nodes, by rejection.
fn arb_graph() -> impl Strategy<Value = BipartiteGraph> {
    (1usize..=4, 1usize..=4, any::<u64>()).prop_filter_map(
        "graph without isolated nodes",
        |(nd, ns, bits)| {
            let dispatchers: Vec<DispatcherId> =
                (0..nd).map(|i| DispatcherId(format!("d{i}"))).collect();
            let servers: Vec<ServerId> = (0..ns).map(|i| ServerId(format!("u{i}"))).collect();
            let mut edges = Vec::new();
            for (k, d) in dispatchers.iter().enumerate() {
                for (j, u) in servers.iter().enumerate() {
                    if bits >> ((k * ns + j) % 64) & 1 == 1 {
                        edges.push((d.clone(), u.clone()));
                    }
                }
            }
            BipartiteGraph::new(dispatchers, servers, edges).ok()
        },
    )
}

fn arb_model() -> impl Strategy<Value = NetworkModel> {
    (
        arb_graph(),
        prop::collection::vec(1u32..=40, 8),
        prop::collection::vec(1u32..=40, 8),
    )
        .prop_map(|(graph, lambdas, mus)| {
            let rates = RateSpec::new(
                graph
                    .dispatchers()
                    .iter()
                    .enumerate()
                    .map(|(i, d)| (d.clone(), lambdas[i % 8] as f64 / 10.0))
                    .collect(),
                graph
                    .servers()
                    .iter()
                    .enumerate()
                    .map(|(i, u)| (u.clone(), mus[i % 8] as f64 / 10.0))
                    .collect(),
            )
            .expect("positive rates");
            NetworkModel::with_singleton_partition(graph, rates).expect("valid model")
        })
}

proptest! {
    #[test]
    fn occupancy_of_state_shape(lengths in arb_lengths()) {
        let state = QueueState::from_lengths(&lengths);
        let occ = occupancy_of_state(&state);
        prop_assert_eq!(occ[0], 1.0);
        for w in occ.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-15);
        }
        for &v in &occ {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // sum identity: |S| * sum_{i>=1} q(i) = total tasks
        let total: u64 = lengths.iter().sum();
        let sum: f64 = occ[1..].iter().sum();
        prop_assert!((sum * lengths.len() as f64 - total as f64).abs() < 1e-9);
    }

    #[test]
    fn model_json_round_trip(model in arb_model()) {
        let text = model_to_json(&model);
        let again = parse_model(&text).expect("serialized models parse");
        prop_assert_eq!(model, again);
    }

    #[test]
    fn theta_never_below_alpha(graph in arb_graph(), seeds in prop::collection::vec(0u32..=6, 32)) {
        // build a valid theta from arbitrary nonnegative integer mass
        let mut weights = Vec::new();
        let mut k = 0usize;
        for ui in 0..graph.n_servers() {
            let neighbors = graph.dispatchers_of(ui).to_vec();
            let mass: Vec<i64> = neighbors.iter().map(|_| {
                k += 1;
                seeds[k % 32] as i64
            }).collect();
            let total: i64 = mass.iter().sum();
            if total == 0 {
                weights.push((
                    (graph.dispatchers()[neighbors[0]].clone(), graph.servers()[ui].clone()),
                    Rat::from_integer(1),
                ));
            } else {
                for (&di, &m) in neighbors.iter().zip(mass.iter()) {
                    weights.push((
                        (graph.dispatchers()[di].clone(), graph.servers()[ui].clone()),
                        Rat::new(m, total),
                    ));
                }
            }
        }
        let theta = WeightFunction::new(&graph, weights).expect("valid weights");
        prop_assert!(theta_metric(&graph, &theta).unwrap() >= alpha(&graph));
        // and the minimizing weights achieve alpha exactly
        prop_assert_eq!(theta_metric(&graph, &min_weight(&graph)).unwrap(), alpha(&graph));
    }

    #[test]
    fn edge_simplify_bookkeeping(model in arb_model(), pick in any::<prop::sample::Index>()) {
        let edges: Vec<_> = model
            .graph()
            .edges()
            .map(|(d, u)| (d.clone(), u.clone()))
            .collect();
        let (d, u) = edges[pick.index(edges.len())].clone();
        let degree_one = model.graph().server_degree(
            model.graph().server_index(&u).unwrap()) == 1;
        let (out, record) = edge_simplify(&model, &d, &u).expect("edge exists");
        // dispatcher degrees never change
        for di in 0..model.graph().n_dispatchers() {
            prop_assert_eq!(
                model.graph().dispatcher_degree(di),
                out.graph().dispatcher_degree(di)
            );
        }
        if degree_one {
            prop_assert!(record.identity);
            prop_assert_eq!(out.graph().n_servers(), model.graph().n_servers());
        } else {
            prop_assert_eq!(out.graph().n_servers(), model.graph().n_servers() + 1);
        }
        // mapping total on the output server set
        for server in out.graph().servers() {
            prop_assert!(record.mapping.contains_key(server));
        }
        // beta unchanged (dispatcher degrees preserved)
        prop_assert_eq!(beta(model.graph()), beta(out.graph()));
    }

    #[test]
    fn full_simplify_structure(model in arb_model()) {
        let (out, record) = full_simplify(&model).expect("valid model");
        prop_assert_eq!(out.graph().n_servers(), model.graph().n_edges());
        prop_assert_eq!(out.graph().n_edges(), model.graph().n_edges());
        for ui in 0..out.graph().n_servers() {
            prop_assert_eq!(out.graph().server_degree(ui), 1);
        }
        // blocks mirror the original servers: one block per server, sized by
        // its degree, holding copies with the same service rate
        prop_assert_eq!(out.block_indices().len(), model.graph().n_servers());
        for (block, origin_ui) in out.block_indices().iter().zip(0..) {
            prop_assert_eq!(block.len(), model.graph().server_degree(origin_ui));
            for &ui in block {
                let copy = &out.graph().servers()[ui];
                prop_assert_eq!(
                    &record.mapping[copy],
                    &model.graph().servers()[origin_ui]
                );
                prop_assert_eq!(out.mu(ui), model.mu(origin_ui));
            }
        }
    }
}
