//! Core domain types: bipartite compatibility graphs, rate specifications,
//! departure partitions, validated network models, queue states and occupancy
//! curves, plus JSON I/O and the `g1`/`g2` example graph families.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque dispatcher identifier. Iteration order is fixed by the owning graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DispatcherId(pub String);

/// Opaque server identifier. Iteration order is fixed by the owning graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServerId(pub String);

impl DispatcherId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl ServerId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DispatcherId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DispatcherId {
    fn from(s: &str) -> Self {
        DispatcherId(s.to_owned())
    }
}

impl From<&str> for ServerId {
    fn from(s: &str) -> Self {
        ServerId(s.to_owned())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate dispatcher id {0}")]
    DuplicateDispatcher(String),
    #[error("duplicate server id {0}")]
    DuplicateServer(String),
    #[error("edge references unknown dispatcher {0}")]
    UnknownDispatcher(String),
    #[error("edge references unknown server {0}")]
    UnknownServer(String),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(String, String),
    #[error("isolated dispatcher {0}")]
    IsolatedDispatcher(String),
    #[error("isolated server {0}")]
    IsolatedServer(String),
    #[error("nonpositive rate for {kind} {id}: {rate}")]
    NonPositiveRate {
        kind: &'static str,
        id: String,
        rate: f64,
    },
    #[error("rate map does not match graph: {0}")]
    RateKeyMismatch(String),
    #[error("partition references unknown server {0}")]
    PartitionUnknownServer(String),
    #[error("partition block is empty")]
    EmptyBlock,
    #[error("server {0} appears in more than one partition block")]
    OverlappingBlocks(String),
    #[error("server {0} is missing from the partition")]
    UncoveredServer(String),
    #[error("unequal rates in block {{{0}}}")]
    UnequalRatesInBlock(String),
    #[error("family parameter n must be >= 1, got {0}")]
    InvalidFamilySize(usize),
    #[error("queue state domain does not match server set: {0}")]
    StateDomainMismatch(String),
}

/// A finite bipartite compatibility graph without isolated nodes.
///
/// Dispatcher and server iteration order is the construction order; all index
/// based accessors refer to these orders, which keeps matrix indexing and tie
/// breaking reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    dispatchers: Vec<DispatcherId>,
    servers: Vec<ServerId>,
    /// Edges as (dispatcher index, server index) pairs in insertion order.
    edges: Vec<(usize, usize)>,
    dispatcher_adj: Vec<Vec<usize>>,
    server_adj: Vec<Vec<usize>>,
    dispatcher_lookup: HashMap<String, usize>,
    server_lookup: HashMap<String, usize>,
}

impl BipartiteGraph {
    pub fn new(
        dispatchers: Vec<DispatcherId>,
        servers: Vec<ServerId>,
        edges: Vec<(DispatcherId, ServerId)>,
    ) -> Result<Self, ModelError> {
        let mut dispatcher_lookup = HashMap::with_capacity(dispatchers.len());
        for (i, d) in dispatchers.iter().enumerate() {
            if dispatcher_lookup.insert(d.0.clone(), i).is_some() {
                return Err(ModelError::DuplicateDispatcher(d.0.clone()));
            }
        }
        let mut server_lookup = HashMap::with_capacity(servers.len());
        for (i, u) in servers.iter().enumerate() {
            if server_lookup.insert(u.0.clone(), i).is_some() {
                return Err(ModelError::DuplicateServer(u.0.clone()));
            }
        }

        let mut index_edges = Vec::with_capacity(edges.len());
        let mut dispatcher_adj = vec![Vec::new(); dispatchers.len()];
        let mut server_adj = vec![Vec::new(); servers.len()];
        let mut seen = HashMap::with_capacity(edges.len());
        for (d, u) in &edges {
            let di = *dispatcher_lookup
                .get(&d.0)
                .ok_or_else(|| ModelError::UnknownDispatcher(d.0.clone()))?;
            let ui = *server_lookup
                .get(&u.0)
                .ok_or_else(|| ModelError::UnknownServer(u.0.clone()))?;
            if seen.insert((di, ui), ()).is_some() {
                return Err(ModelError::DuplicateEdge(d.0.clone(), u.0.clone()));
            }
            index_edges.push((di, ui));
            dispatcher_adj[di].push(ui);
            server_adj[ui].push(di);
        }
        for adj in dispatcher_adj.iter_mut().chain(server_adj.iter_mut()) {
            adj.sort_unstable();
        }
        if let Some(d) = dispatcher_adj.iter().position(Vec::is_empty) {
            return Err(ModelError::IsolatedDispatcher(dispatchers[d].0.clone()));
        }
        if let Some(u) = server_adj.iter().position(Vec::is_empty) {
            return Err(ModelError::IsolatedServer(servers[u].0.clone()));
        }

        Ok(BipartiteGraph {
            dispatchers,
            servers,
            edges: index_edges,
            dispatcher_adj,
            server_adj,
            dispatcher_lookup,
            server_lookup,
        })
    }

    pub fn dispatchers(&self) -> &[DispatcherId] {
        &self.dispatchers
    }

    pub fn servers(&self) -> &[ServerId] {
        &self.servers
    }

    pub fn n_dispatchers(&self) -> usize {
        self.dispatchers.len()
    }

    pub fn n_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in insertion order as id pairs.
    pub fn edges(&self) -> impl Iterator<Item = (&DispatcherId, &ServerId)> {
        self.edges
            .iter()
            .map(move |&(di, ui)| (&self.dispatchers[di], &self.servers[ui]))
    }

    pub fn dispatcher_index(&self, id: &DispatcherId) -> Option<usize> {
        self.dispatcher_lookup.get(&id.0).copied()
    }

    pub fn server_index(&self, id: &ServerId) -> Option<usize> {
        self.server_lookup.get(&id.0).copied()
    }

    pub fn has_edge(&self, d: &DispatcherId, u: &ServerId) -> bool {
        match (self.dispatcher_index(d), self.server_index(u)) {
            (Some(di), Some(ui)) => self.dispatcher_adj[di].binary_search(&ui).is_ok(),
            _ => false,
        }
    }

    /// Server indices compatible with dispatcher `di`, sorted.
    pub fn servers_of(&self, di: usize) -> &[usize] {
        &self.dispatcher_adj[di]
    }

    /// Dispatcher indices compatible with server `ui`, sorted.
    pub fn dispatchers_of(&self, ui: usize) -> &[usize] {
        &self.server_adj[ui]
    }

    pub fn dispatcher_degree(&self, di: usize) -> usize {
        self.dispatcher_adj[di].len()
    }

    pub fn server_degree(&self, ui: usize) -> usize {
        self.server_adj[ui].len()
    }

    /// True for the topology of a simple process: one dispatcher compatible
    /// with every server.
    pub fn is_complete_single_dispatcher(&self) -> bool {
        self.dispatchers.len() == 1 && self.dispatcher_adj[0].len() == self.servers.len()
    }
}

/// Strictly positive arrival and service rates keyed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSpec {
    pub lambda: IndexMap<DispatcherId, f64>,
    pub mu: IndexMap<ServerId, f64>,
}

impl RateSpec {
    pub fn new(
        lambda: IndexMap<DispatcherId, f64>,
        mu: IndexMap<ServerId, f64>,
    ) -> Result<Self, ModelError> {
        for (d, &rate) in &lambda {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(ModelError::NonPositiveRate {
                    kind: "dispatcher",
                    id: d.0.clone(),
                    rate,
                });
            }
        }
        for (u, &rate) in &mu {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(ModelError::NonPositiveRate {
                    kind: "server",
                    id: u.0.clone(),
                    rate,
                });
            }
        }
        Ok(RateSpec { lambda, mu })
    }

    /// Constant rates over the given node sets.
    pub fn uniform(
        dispatchers: &[DispatcherId],
        servers: &[ServerId],
        lambda: f64,
        mu: f64,
    ) -> Result<Self, ModelError> {
        RateSpec::new(
            dispatchers.iter().map(|d| (d.clone(), lambda)).collect(),
            servers.iter().map(|u| (u.clone(), mu)).collect(),
        )
    }
}

/// Partition of the server set into groups sharing one potential-departure
/// clock. Service rates must be constant within each block.
#[derive(Debug, Clone, PartialEq)]
pub struct DeparturePartition {
    pub blocks: Vec<Vec<ServerId>>,
}

impl DeparturePartition {
    pub fn singletons(servers: &[ServerId]) -> Self {
        DeparturePartition {
            blocks: servers.iter().map(|u| vec![u.clone()]).collect(),
        }
    }
}

/// A validated network: graph, rates and departure partition, with the derived
/// rate envelope (`lambda0`, `mu0`, `rho0`).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    graph: BipartiteGraph,
    /// Arrival rate per dispatcher index.
    lambda: Vec<f64>,
    /// Service rate per server index.
    mu: Vec<f64>,
    /// Partition blocks as sorted server index sets, in input order.
    blocks: Vec<Vec<usize>>,
    /// Block index per server index.
    block_of: Vec<usize>,
}

impl NetworkModel {
    pub fn new(
        graph: BipartiteGraph,
        rates: RateSpec,
        partition: DeparturePartition,
    ) -> Result<Self, ModelError> {
        if rates.lambda.len() != graph.n_dispatchers() {
            return Err(ModelError::RateKeyMismatch(format!(
                "{} arrival rates for {} dispatchers",
                rates.lambda.len(),
                graph.n_dispatchers()
            )));
        }
        if rates.mu.len() != graph.n_servers() {
            return Err(ModelError::RateKeyMismatch(format!(
                "{} service rates for {} servers",
                rates.mu.len(),
                graph.n_servers()
            )));
        }
        let mut lambda = vec![0.0; graph.n_dispatchers()];
        for (d, &rate) in &rates.lambda {
            let di = graph
                .dispatcher_index(d)
                .ok_or_else(|| ModelError::RateKeyMismatch(format!("unknown dispatcher {d}")))?;
            lambda[di] = rate;
        }
        let mut mu = vec![0.0; graph.n_servers()];
        for (u, &rate) in &rates.mu {
            let ui = graph
                .server_index(u)
                .ok_or_else(|| ModelError::RateKeyMismatch(format!("unknown server {u}")))?;
            mu[ui] = rate;
        }

        let mut block_of = vec![usize::MAX; graph.n_servers()];
        let mut blocks = Vec::with_capacity(partition.blocks.len());
        for block in &partition.blocks {
            if block.is_empty() {
                return Err(ModelError::EmptyBlock);
            }
            let mut idx_block = Vec::with_capacity(block.len());
            for u in block {
                let ui = graph
                    .server_index(u)
                    .ok_or_else(|| ModelError::PartitionUnknownServer(u.0.clone()))?;
                if block_of[ui] != usize::MAX {
                    return Err(ModelError::OverlappingBlocks(u.0.clone()));
                }
                block_of[ui] = blocks.len();
                idx_block.push(ui);
            }
            idx_block.sort_unstable();
            let rate = mu[idx_block[0]];
            if idx_block.iter().any(|&ui| mu[ui] != rate) {
                let names: Vec<&str> = block.iter().map(|u| u.as_str()).collect();
                return Err(ModelError::UnequalRatesInBlock(names.join(",")));
            }
            blocks.push(idx_block);
        }
        if let Some(ui) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(ModelError::UncoveredServer(graph.servers()[ui].0.clone()));
        }

        Ok(NetworkModel {
            graph,
            lambda,
            mu,
            blocks,
            block_of,
        })
    }

    /// Model with all-singleton departure blocks (independent servers).
    pub fn with_singleton_partition(
        graph: BipartiteGraph,
        rates: RateSpec,
    ) -> Result<Self, ModelError> {
        let partition = DeparturePartition::singletons(graph.servers());
        NetworkModel::new(graph, rates, partition)
    }

    pub fn graph(&self) -> &BipartiteGraph {
        &self.graph
    }

    pub fn lambda(&self, di: usize) -> f64 {
        self.lambda[di]
    }

    pub fn mu(&self, ui: usize) -> f64 {
        self.mu[ui]
    }

    pub fn lambda_of(&self, d: &DispatcherId) -> Option<f64> {
        self.graph.dispatcher_index(d).map(|di| self.lambda[di])
    }

    pub fn mu_of(&self, u: &ServerId) -> Option<f64> {
        self.graph.server_index(u).map(|ui| self.mu[ui])
    }

    pub fn rates(&self) -> RateSpec {
        RateSpec {
            lambda: self
                .graph
                .dispatchers()
                .iter()
                .enumerate()
                .map(|(di, d)| (d.clone(), self.lambda[di]))
                .collect(),
            mu: self
                .graph
                .servers()
                .iter()
                .enumerate()
                .map(|(ui, u)| (u.clone(), self.mu[ui]))
                .collect(),
        }
    }

    /// Blocks as server-index sets, sorted within each block.
    pub fn block_indices(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, ui: usize) -> usize {
        self.block_of[ui]
    }

    pub fn partition(&self) -> DeparturePartition {
        DeparturePartition {
            blocks: self
                .blocks
                .iter()
                .map(|b| {
                    b.iter()
                        .map(|&ui| self.graph.servers()[ui].clone())
                        .collect()
                })
                .collect(),
        }
    }

    /// Common service rate of a block.
    pub fn block_rate(&self, block: usize) -> f64 {
        self.mu[self.blocks[block][0]]
    }

    pub fn has_singleton_partition(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    /// Smallest arrival rate over dispatchers.
    pub fn lambda0(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest service rate over servers.
    pub fn mu0(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, f64::max)
    }

    /// Tightest admissible load envelope: `lambda0 / mu0`.
    pub fn rho0(&self) -> f64 {
        self.lambda0() / self.mu0()
    }

    /// True when this is a simple process: one dispatcher compatible with
    /// every server and a constant service rate with independent departures.
    pub fn is_simple(&self) -> bool {
        self.graph.is_complete_single_dispatcher()
            && self.has_singleton_partition()
            && self.mu.iter().all(|&m| m == self.mu[0])
    }
}

/// A queue-length vector over the server set of some model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueState {
    pub lengths: IndexMap<ServerId, u64>,
}

impl QueueState {
    /// Builds a state over the model's server set, checking the domain.
    pub fn new(model: &NetworkModel, lengths: IndexMap<ServerId, u64>) -> Result<Self, ModelError> {
        if lengths.len() != model.graph().n_servers() {
            return Err(ModelError::StateDomainMismatch(format!(
                "{} entries for {} servers",
                lengths.len(),
                model.graph().n_servers()
            )));
        }
        for u in lengths.keys() {
            if model.graph().server_index(u).is_none() {
                return Err(ModelError::StateDomainMismatch(format!("unknown server {u}")));
            }
        }
        Ok(QueueState { lengths })
    }

    /// A state from raw lengths, keyed by synthetic ids. Handy in tests.
    pub fn from_lengths(lengths: &[u64]) -> Self {
        QueueState {
            lengths: lengths
                .iter()
                .enumerate()
                .map(|(i, &x)| (ServerId(format!("s{i}")), x))
                .collect(),
        }
    }
}

/// Occupancy of a single state: `q(i)` is the fraction of servers with at
/// least `i` tasks, returned for `i = 0..=max_length`. `q(0)` is always 1 and
/// all later values are implicitly 0 beyond the returned range.
pub fn occupancy_of_state(state: &QueueState) -> Vec<f64> {
    let n = state.lengths.len();
    assert!(n > 0, "occupancy of an empty server set is undefined");
    let max_len = state.lengths.values().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; max_len + 1];
    for &len in state.lengths.values() {
        for entry in counts.iter_mut().take(len as usize + 1) {
            *entry += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Origin of an occupancy curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSource {
    Exact,
    Simulated,
}

/// Estimates of the mean steady-state occupancy `E[q(i)]` for
/// `i = 0..=i_max`, with per-level uncertainty.
///
/// `half_widths` are confidence-interval half-widths (zero for exact results);
/// `truncation_slack` is the boundary mass of the truncating solver (zero for
/// simulation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyCurve {
    pub values: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub source: CurveSource,
    pub truncation_slack: f64,
}

impl OccupancyCurve {
    pub fn i_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Checks the structural invariants: starts at 1, nonincreasing, within
    /// `[0, 1]`, nonnegative half-widths. `tol` absorbs floating-point noise.
    pub fn check_invariants(&self, tol: f64) -> Result<(), String> {
        if self.values.is_empty() {
            return Err("empty curve".to_owned());
        }
        if (self.values[0] - 1.0).abs() > tol {
            return Err(format!("q(0) = {} != 1", self.values[0]));
        }
        for (i, w) in self.values.windows(2).enumerate() {
            if w[1] > w[0] + tol {
                return Err(format!("values increase at i={}: {} -> {}", i, w[0], w[1]));
            }
        }
        for (i, &v) in self.values.iter().enumerate() {
            if !(-tol..=1.0 + tol).contains(&v) {
                return Err(format!("value out of [0,1] at i={i}: {v}"));
            }
        }
        if self.half_widths.len() != self.values.len() {
            return Err("half_widths length mismatch".to_owned());
        }
        if let Some((i, &h)) = self.half_widths.iter().enumerate().find(|(_, &h)| h < 0.0) {
            return Err(format!("negative half-width at i={i}: {h}"));
        }
        if self.truncation_slack < 0.0 {
            return Err(format!("negative truncation slack {}", self.truncation_slack));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// JSON network format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRateFile {
    id: String,
    rate: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    dispatchers: Vec<NodeRateFile>,
    servers: Vec<NodeRateFile>,
    edges: Vec<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<Vec<Vec<String>>>,
}

fn model_from_file(file: NetworkFile) -> Result<NetworkModel, ModelError> {
    let dispatchers: Vec<DispatcherId> = file
        .dispatchers
        .iter()
        .map(|n| DispatcherId(n.id.clone()))
        .collect();
    let servers: Vec<ServerId> = file.servers.iter().map(|n| ServerId(n.id.clone())).collect();
    let edges: Vec<(DispatcherId, ServerId)> = file
        .edges
        .iter()
        .map(|(d, u)| (DispatcherId(d.clone()), ServerId(u.clone())))
        .collect();
    let graph = BipartiteGraph::new(dispatchers, servers, edges)?;
    let rates = RateSpec::new(
        file.dispatchers
            .iter()
            .map(|n| (DispatcherId(n.id.clone()), n.rate))
            .collect(),
        file.servers
            .iter()
            .map(|n| (ServerId(n.id.clone()), n.rate))
            .collect(),
    )?;
    let partition = match file.partition {
        Some(blocks) => DeparturePartition {
            blocks: blocks
                .into_iter()
                .map(|b| b.into_iter().map(ServerId).collect())
                .collect(),
        },
        None => DeparturePartition::singletons(graph.servers()),
    };
    NetworkModel::new(graph, rates, partition)
}

fn model_to_file(model: &NetworkModel) -> NetworkFile {
    let graph = model.graph();
    NetworkFile {
        dispatchers: graph
            .dispatchers()
            .iter()
            .enumerate()
            .map(|(di, d)| NodeRateFile {
                id: d.0.clone(),
                rate: model.lambda(di),
            })
            .collect(),
        servers: graph
            .servers()
            .iter()
            .enumerate()
            .map(|(ui, u)| NodeRateFile {
                id: u.0.clone(),
                rate: model.mu(ui),
            })
            .collect(),
        edges: graph
            .edges()
            .map(|(d, u)| (d.0.clone(), u.0.clone()))
            .collect(),
        partition: if model.has_singleton_partition() {
            None
        } else {
            Some(
                model
                    .partition()
                    .blocks
                    .into_iter()
                    .map(|b| b.into_iter().map(|u| u.0).collect())
                    .collect(),
            )
        },
    }
}

/// Loads and validates a model from the JSON network format.
pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}

/// Parses a model from JSON text.
pub fn parse_model(text: &str) -> Result<NetworkModel, ModelError> {
    let file: NetworkFile = serde_json::from_str(text)?;
    model_from_file(file)
}

/// Serializes a model to the JSON network format. A singleton partition is
/// omitted, matching the parsing default.
pub fn model_to_json(model: &NetworkModel) -> String {
    serde_json::to_string_pretty(&model_to_file(model)).expect("serializing a model cannot fail")
}

/// Writes a model to disk in the JSON network format.
pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Example graph families
// ---------------------------------------------------------------------------

/// Family `g1`: `n` servers `u1..un`, each with a dedicated degree-one
/// dispatcher `r1..rn`, plus `n` dispatchers `b1..bn` compatible with every
/// server. Unit rates, singleton partition. The flexibility metrics are
/// `alpha = 1` and `beta = (n + 1) / 2`.
pub fn family_g1(n: usize) -> Result<NetworkModel, ModelError> {
    if n < 1 {
        return Err(ModelError::InvalidFamilySize(n));
    }
    let servers: Vec<ServerId> = (1..=n).map(|i| ServerId(format!("u{i}"))).collect();
    let mut dispatchers: Vec<DispatcherId> =
        (1..=n).map(|i| DispatcherId(format!("r{i}"))).collect();
    dispatchers.extend((1..=n).map(|j| DispatcherId(format!("b{j}"))));
    let mut edges = Vec::with_capacity(n + n * n);
    for i in 0..n {
        edges.push((dispatchers[i].clone(), servers[i].clone()));
    }
    for j in 0..n {
        for u in &servers {
            edges.push((dispatchers[n + j].clone(), u.clone()));
        }
    }
    let graph = BipartiteGraph::new(dispatchers, servers, edges)?;
    let rates = RateSpec::uniform(
        &graph.dispatchers().to_vec(),
        &graph.servers().to_vec(),
        1.0,
        1.0,
    )?;
    NetworkModel::with_singleton_partition(graph, rates)
}

/// Family `g2`: one dispatcher `c` compatible with servers `v1..vn`, plus `n`
/// isolated dispatcher-server pairs `(d_i, w_i)`. Unit rates, singleton
/// partition. The flexibility metrics are `alpha = (n + 1) / 2` and
/// `beta = 2n / (n + 1)`.
pub fn family_g2(n: usize) -> Result<NetworkModel, ModelError> {
    if n < 1 {
        return Err(ModelError::InvalidFamilySize(n));
    }
    let mut dispatchers = vec![DispatcherId("c".to_owned())];
    dispatchers.extend((1..=n).map(|i| DispatcherId(format!("d{i}"))));
    let mut servers: Vec<ServerId> = (1..=n).map(|i| ServerId(format!("v{i}"))).collect();
    servers.extend((1..=n).map(|i| ServerId(format!("w{i}"))));
    let mut edges = Vec::with_capacity(2 * n);
    for i in 0..n {
        edges.push((dispatchers[0].clone(), servers[i].clone()));
    }
    for i in 0..n {
        edges.push((dispatchers[1 + i].clone(), servers[n + i].clone()));
    }
    let graph = BipartiteGraph::new(dispatchers, servers, edges)?;
    let rates = RateSpec::uniform(
        &graph.dispatchers().to_vec(),
        &graph.servers().to_vec(),
        1.0,
        1.0,
    )?;
    NetworkModel::with_singleton_partition(graph, rates)
}

/// Returns a copy of `model` with every arrival rate multiplied by `factor`.
pub fn scale_arrivals(model: &NetworkModel, factor: f64) -> Result<NetworkModel, ModelError> {
    let mut rates = model.rates();
    for rate in rates.lambda.values_mut() {
        *rate *= factor;
    }
    NetworkModel::new(model.graph().clone(), RateSpec::new(rates.lambda, rates.mu)?, model.partition())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model_json() -> &'static str {
        r#"{
            "dispatchers": [{"id": "d1", "rate": 1.5}],
            "servers": [{"id": "u1", "rate": 1.0}, {"id": "u2", "rate": 1.0}],
            "edges": [["d1", "u1"], ["d1", "u2"]]
        }"#
    }

    #[test]
    fn parses_simple_model_with_default_partition() {
        let model = parse_model(tiny_model_json()).unwrap();
        assert_eq!(model.graph().n_dispatchers(), 1);
        assert_eq!(model.graph().n_servers(), 2);
        assert!(model.has_singleton_partition());
        assert!((model.rho0() - 1.5).abs() < 1e-15);
        assert!(model.is_simple());
    }

    #[test]
    fn rejects_isolated_server() {
        let text = r#"{
            "dispatchers": [{"id": "d1", "rate": 1.0}],
            "servers": [{"id": "u1", "rate": 1.0}, {"id": "u2", "rate": 1.0}],
            "edges": [["d1", "u1"]]
        }"#;
        let err = parse_model(text).unwrap_err();
        assert_eq!(err.to_string(), "isolated server u2");
    }

    #[test]
    fn rejects_unequal_rates_in_block() {
        let text = r#"{
            "dispatchers": [{"id": "d1", "rate": 1.0}],
            "servers": [{"id": "u1", "rate": 1.0}, {"id": "u2", "rate": 2.0}],
            "edges": [["d1", "u1"], ["d1", "u2"]],
            "partition": [["u1", "u2"]]
        }"#;
        let err = parse_model(text).unwrap_err();
        assert!(err.to_string().starts_with("unequal rates in block"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{
            "dispatchers": [{"id": "d1", "rate": 1.0}],
            "servers": [{"id": "u1", "rate": 1.0}],
            "edges": [["d1", "u1"]],
            "comment": "nope"
        }"#;
        assert!(parse_model(text).is_err());
    }

    #[test]
    fn rejects_nonpositive_rate() {
        let text = r#"{
            "dispatchers": [{"id": "d1", "rate": 0.0}],
            "servers": [{"id": "u1", "rate": 1.0}],
            "edges": [["d1", "u1"]]
        }"#;
        assert!(parse_model(text).is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"{
            "dispatchers": [{"id": "a", "rate": 0.7}, {"id": "b", "rate": 1.2}],
            "servers": [{"id": "x", "rate": 2.0}, {"id": "y", "rate": 2.0}, {"id": "z", "rate": 0.5}],
            "edges": [["a", "x"], ["a", "y"], ["b", "y"], ["b", "z"]],
            "partition": [["x", "y"], ["z"]]
        }"#;
        let model = parse_model(text).unwrap();
        let again = parse_model(&model_to_json(&model)).unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn occupancy_of_state_examples() {
        let occ = occupancy_of_state(&QueueState::from_lengths(&[0, 2, 3]));
        let expect = [1.0, 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0];
        assert_eq!(occ.len(), expect.len());
        for (a, b) in occ.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }

        assert_eq!(occupancy_of_state(&QueueState::from_lengths(&[0, 0])), vec![1.0]);
        assert_eq!(
            occupancy_of_state(&QueueState::from_lengths(&[5])),
            vec![1.0; 6]
        );
    }

    #[test]
    fn occupancy_sum_identity() {
        // sum_i>=1 q(i) = (total tasks) / |S|
        let state = QueueState::from_lengths(&[3, 0, 7, 1]);
        let occ = occupancy_of_state(&state);
        let total: u64 = state.lengths.values().sum();
        let sum: f64 = occ[1..].iter().sum();
        assert!((sum - total as f64 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn family_g1_shape() {
        for n in [1usize, 3, 20] {
            let model = family_g1(n).unwrap();
            let g = model.graph();
            assert_eq!(g.n_servers(), n);
            assert_eq!(g.n_dispatchers(), 2 * n);
            assert_eq!(g.n_edges(), n + n * n);
        }
        assert!(family_g1(0).is_err());
    }

    #[test]
    fn family_g2_shape() {
        for n in [1usize, 2, 10] {
            let model = family_g2(n).unwrap();
            let g = model.graph();
            assert_eq!(g.n_servers(), 2 * n);
            assert_eq!(g.n_dispatchers(), n + 1);
            assert_eq!(g.n_edges(), 2 * n);
        }
        assert!(family_g2(0).is_err());
    }

    #[test]
    fn duplicate_edge_rejected() {
        let err = BipartiteGraph::new(
            vec!["d".into()],
            vec!["u".into()],
            vec![("d".into(), "u".into()), ("d".into(), "u".into())],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DuplicateEdge(_, _)));
    }

    #[test]
    fn partition_must_cover_servers() {
        let graph = BipartiteGraph::new(
            vec!["d".into()],
            vec!["u".into(), "v".into()],
            vec![("d".into(), "u".into()), ("d".into(), "v".into())],
        )
        .unwrap();
        let rates = RateSpec::uniform(&graph.dispatchers().to_vec(), &graph.servers().to_vec(), 1.0, 1.0).unwrap();
        let partition = DeparturePartition {
            blocks: vec![vec!["u".into()]],
        };
        assert!(matches!(
            NetworkModel::new(graph, rates, partition),
            Err(ModelError::UncoveredServer(_))
        ));
    }
}
