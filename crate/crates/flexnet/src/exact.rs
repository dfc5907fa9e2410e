//! Exact stationary distributions for small networks via a truncated chain.
//!
//! The chain truncates every queue at a cap `B`: an arrival whose shortest
//! compatible queues all sit at the cap is dropped. The stationary
//! distribution is computed by power iteration on the uniformized transition
//! kernel, accelerated by a geometric extrapolation step once the iteration's
//! error decay has stabilized. The probability mass on states touching the
//! cap is reported as `boundary_mass` and folded into every downstream
//! comparison as slack; the truncation bias direction is not established
//! analytically, so the mass is treated as symmetric slack.
//!
//! [`solve_model`] additionally splits the network into independent
//! components (servers linked by edges or shared departure blocks) and solves
//! each on its own truncated box, which keeps the state spaces small and
//! makes untouched components of two compared models agree bitwise.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BipartiteGraph, CurveSource, DeparturePartition, ModelError, NetworkModel, OccupancyCurve,
    RateSpec, ServerId,
};
use crate::par;
use crate::stability::{check_ergodic, StabilityError, StabilityStatus};

/// Default cap on the truncated state count.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// Default iteration cap for the stationary solver.
pub const DEFAULT_MAX_ITERATIONS: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("truncated chain would have {states} states, exceeding the cap {cap}")]
    StateCapExceeded { states: u128, cap: usize },
    #[error("queue cap must be >= 1")]
    CapTooSmall,
    #[error("model is not ergodic ({status:?}); witness {witness:?}")]
    NotErgodic {
        status: StabilityStatus,
        witness: Option<Vec<ServerId>>,
    },
    #[error("stationary solver did not converge within {iterations} iterations (diff {diff})")]
    NonConvergence { iterations: u64, diff: f64 },
    #[error("tail comparison mapping is missing server {0}")]
    MappingIncomplete(ServerId),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The truncated chain of a model: state indexing plus the assembled sparse
/// uniformized kernel, stored by destination state for pull-style sweeps.
pub struct TruncatedChain {
    model: NetworkModel,
    cap: usize,
    strides: Vec<usize>,
    state_count: usize,
    in_offsets: Vec<usize>,
    in_src: Vec<u32>,
    /// Incoming rate divided by the uniformization constant.
    in_weight: Vec<f64>,
    /// `1 - exit / uniformization` per state.
    diag: Vec<f64>,
    exit: Vec<f64>,
    uniformization: f64,
}

/// Stationary distribution of a truncated chain.
#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub pi: Vec<f64>,
    /// Max-norm of `pi * Q` at the final iterate.
    pub residual: f64,
    /// Total probability of states with any queue at the cap.
    pub boundary_mass: f64,
    pub iterations: u64,
    /// Tolerance the solver was run at; consumed as comparison slack.
    pub tol: f64,
}

/// Builds the truncated generator with the default state cap.
pub fn build_generator(model: &NetworkModel, cap: usize) -> Result<TruncatedChain, ExactError> {
    build_generator_with_state_cap(model, cap, DEFAULT_STATE_CAP)
}

/// Builds the truncated generator, enforcing `(cap + 1)^|S| <= state_cap`.
pub fn build_generator_with_state_cap(
    model: &NetworkModel,
    cap: usize,
    state_cap: usize,
) -> Result<TruncatedChain, ExactError> {
    if cap < 1 {
        return Err(ExactError::CapTooSmall);
    }
    let m = model.graph().n_servers();
    let states = (cap as u128 + 1).checked_pow(m as u32).unwrap_or(u128::MAX);
    if states > state_cap as u128 {
        return Err(ExactError::StateCapExceeded {
            states,
            cap: state_cap,
        });
    }
    let state_count = states as usize;
    let mut strides = vec![1usize; m];
    for k in 1..m {
        strides[k] = strides[k - 1] * (cap + 1);
    }

    let mut chain = TruncatedChain {
        model: model.clone(),
        cap,
        strides,
        state_count,
        in_offsets: Vec::new(),
        in_src: Vec::new(),
        in_weight: Vec::new(),
        diag: Vec::new(),
        exit: Vec::new(),
        uniformization: 0.0,
    };
    chain.assemble();
    Ok(chain)
}

impl TruncatedChain {
    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn uniformization(&self) -> f64 {
        self.uniformization
    }

    /// State index of a queue-length vector in server order.
    pub fn index_of(&self, lengths: &[u32]) -> usize {
        lengths
            .iter()
            .zip(self.strides.iter())
            .map(|(&x, &s)| x as usize * s)
            .sum()
    }

    /// Queue-length vector of a state index.
    pub fn decode(&self, idx: usize) -> Vec<u32> {
        let mut digits = vec![0u32; self.strides.len()];
        let mut rest = idx;
        for (k, d) in digits.iter_mut().enumerate() {
            *d = (rest % (self.cap + 1)) as u32;
            rest /= self.cap + 1;
            let _ = k;
        }
        digits
    }

    /// Outgoing transitions `(destination, rate)` of a state. Arrival rates
    /// split evenly over the shortest compatible queues; arrivals whose
    /// shortest compatible queues sit at the cap are dropped; each departure
    /// block with a nonempty member fires as one transition.
    pub fn outgoing(&self, idx: usize) -> Vec<(usize, f64)> {
        let digits = self.decode(idx);
        let mut out = Vec::new();
        self.for_each_outgoing(idx, &digits, |dst, rate| out.push((dst, rate)));
        out
    }

    fn for_each_outgoing(&self, idx: usize, digits: &[u32], mut f: impl FnMut(usize, f64)) {
        let graph = self.model.graph();
        let cap = self.cap as u32;
        for di in 0..graph.n_dispatchers() {
            let servers = graph.servers_of(di);
            let mut min = u32::MAX;
            let mut ties = 0usize;
            for &ui in servers {
                let x = digits[ui];
                if x < min {
                    min = x;
                    ties = 1;
                } else if x == min {
                    ties += 1;
                }
            }
            if min < cap {
                let rate = self.model.lambda(di) / ties as f64;
                for &ui in servers {
                    if digits[ui] == min {
                        f(idx + self.strides[ui], rate);
                    }
                }
            }
        }
        for (b, block) in self.model.block_indices().iter().enumerate() {
            let mut dst = idx;
            let mut any = false;
            for &ui in block {
                if digits[ui] > 0 {
                    dst -= self.strides[ui];
                    any = true;
                }
            }
            if any {
                f(dst, self.model.block_rate(b));
            }
        }
    }

    /// Iterates all states in index order with their digit vectors.
    fn for_each_state(&self, mut f: impl FnMut(usize, &[u32])) {
        let m = self.strides.len();
        let mut digits = vec![0u32; m];
        for idx in 0..self.state_count {
            f(idx, &digits);
            for d in digits.iter_mut() {
                if (*d as usize) < self.cap {
                    *d += 1;
                    break;
                }
                *d = 0;
            }
        }
    }

    fn assemble(&mut self) {
        let n = self.state_count;
        let mut counts = vec![0usize; n + 1];
        let mut exit = vec![0.0f64; n];
        self.for_each_state(|idx, digits| {
            let mut total = 0.0;
            self.for_each_outgoing(idx, digits, |dst, rate| {
                counts[dst + 1] += 1;
                total += rate;
            });
            exit[idx] = total;
        });
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let nnz = offsets[n];
        let max_exit = exit.iter().copied().fold(0.0f64, f64::max);
        assert!(max_exit > 0.0, "every truncated state must have positive exit rate");
        let lambda = Self::LAZY_FACTOR * max_exit;

        let mut in_src = vec![0u32; nnz];
        let mut in_weight = vec![0.0f64; nnz];
        let mut cursor = offsets.clone();
        self.for_each_state(|idx, digits| {
            self.for_each_outgoing(idx, digits, |dst, rate| {
                let at = cursor[dst];
                in_src[at] = idx as u32;
                in_weight[at] = rate / lambda;
                cursor[dst] += 1;
            });
        });

        self.diag = exit.iter().map(|&e| 1.0 - e / lambda).collect();
        self.exit = exit;
        self.uniformization = lambda;
        self.in_offsets = offsets;
        self.in_src = in_src;
        self.in_weight = in_weight;
    }

    // assemble() computes weights against this multiple of the max exit rate.
    // The factor 2 keeps the kernel's spectrum in the right half plane, so the
    // iteration error decays with a single sign and the geometric
    // extrapolation below stays well posed.
    const LAZY_FACTOR: f64 = 2.0;

    /// One sweep of the uniformized kernel: `next = pi * P`.
    fn sweep(&self, pi: &[f64], next: &mut [f64]) {
        let offsets = &self.in_offsets;
        let src = &self.in_src;
        let weight = &self.in_weight;
        let diag = &self.diag;
        par::fill_chunks(next, 8192, |base, chunk| {
            for (k, v) in chunk.iter_mut().enumerate() {
                let j = base + k;
                let mut acc = pi[j] * diag[j];
                for e in offsets[j]..offsets[j + 1] {
                    acc += pi[src[e] as usize] * weight[e];
                }
                *v = acc;
            }
        });
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        let chunk = 1 << 14;
        let chunks = a.len().div_ceil(chunk);
        par::map_reduce(
            chunks,
            |c| {
                let lo = c * chunk;
                let hi = ((c + 1) * chunk).min(a.len());
                let mut best = 0.0f64;
                for i in lo..hi {
                    best = best.max((a[i] - b[i]).abs());
                }
                best
            },
            0.0,
            f64::max,
        )
    }

    /// Solves `pi * Q = 0` with the default iteration cap.
    pub fn stationary(&self, tol: f64) -> Result<StationarySolution, ExactError> {
        self.stationary_with(tol, DEFAULT_MAX_ITERATIONS)
    }

    /// Power iteration on the uniformized kernel from the empty state, with a
    /// geometric extrapolation jump whenever the per-sweep contraction ratio
    /// has stabilized. Stops once both the successive-iterate max-norm and
    /// the extrapolated true-error estimate fall below `tol / uniformization`
    /// (so the reported generator residual is below `tol`).
    pub fn stationary_with(
        &self,
        tol: f64,
        max_iterations: u64,
    ) -> Result<StationarySolution, ExactError> {
        let verdict = check_ergodic(&self.model)?;
        if verdict.status != StabilityStatus::Ergodic {
            return Err(ExactError::NotErgodic {
                status: verdict.status,
                witness: verdict.witness,
            });
        }

        let n = self.state_count;
        let mut pi = vec![0.0f64; n];
        pi[0] = 1.0;
        let mut next = vec![0.0f64; n];

        // Sweep-space tolerance: ||pi P - pi|| <= tol / Lambda gives
        // ||pi Q|| <= tol.
        let sweep_tol = tol / self.uniformization;
        let check_every = 16u64;
        let mut iterations = 0u64;
        let mut last_diff = f64::INFINITY;
        let mut ratio_history: Vec<f64> = Vec::new();
        // Most recent contraction ratio observed during a clean geometric
        // phase. Once the diff plateaus at rounding noise the instantaneous
        // ratio degenerates to ~1, so the error estimate keeps using this.
        let mut contraction: Option<f64> = None;
        let mut stalled_checks = 0u32;
        // Snapshot taken before an extrapolation jump, with the pre-jump
        // diff; reverted if the next check shows the jump made things worse.
        let mut jump_backup: Option<(Vec<f64>, f64)> = None;
        let mut jumps_blocked_until = 0u64;
        let trace = std::env::var_os("FLEXNET_SOLVER_TRACE").is_some();
        let final_diff;

        loop {
            for _ in 0..check_every {
                self.sweep(&pi, &mut next);
                std::mem::swap(&mut pi, &mut next);
                iterations += 1;
            }
            // `next` holds the pre-sweep iterate after the swap.
            let diff = Self::max_abs_diff(&pi, &next);
            if !diff.is_finite() {
                return Err(ExactError::NonConvergence { iterations, diff });
            }
            if let Some((saved, pre_diff)) = jump_backup.take() {
                if diff > pre_diff {
                    // jump overshot; resume plain iteration from the snapshot
                    pi.copy_from_slice(&saved);
                    jumps_blocked_until = iterations + 16 * check_every;
                    last_diff = f64::INFINITY;
                    ratio_history.clear();
                    if trace {
                        eprintln!("iter {iterations}: jump reverted ({pre_diff:.3e} -> {diff:.3e})");
                    }
                    continue;
                }
            }
            let ratio = if last_diff.is_finite() && last_diff > 0.0 {
                (diff / last_diff).powf(1.0 / check_every as f64)
            } else {
                f64::NAN
            };
            last_diff = diff;
            if ratio.is_finite() && ratio > 0.0 && ratio < 0.999_999 {
                contraction = Some(ratio);
            }
            // Rounding-noise plateau: the diff sits at ulp scale and no
            // longer contracts. Two consecutive stalled checks count as
            // converged even without a contraction estimate.
            if diff <= 1e-15 && !(ratio < 0.999) {
                stalled_checks += 1;
            } else {
                stalled_checks = 0;
            }

            let est_error = match contraction {
                _ if diff == 0.0 => 0.0,
                Some(r) => diff * r / (1.0 - r),
                None => f64::INFINITY,
            };
            if trace {
                eprintln!(
                    "iter {iterations}: diff {diff:.3e} ratio {ratio:.6} est {est_error:.3e} tol {sweep_tol:.3e}"
                );
            }
            if diff <= sweep_tol && (est_error <= sweep_tol || stalled_checks >= 2) {
                final_diff = diff;
                break;
            }
            if iterations >= max_iterations {
                return Err(ExactError::NonConvergence { iterations, diff });
            }

            if ratio.is_finite() && ratio > 0.0 && ratio < 1.0 {
                ratio_history.push(ratio);
            } else {
                ratio_history.clear();
            }
            // Jump only once the observed ratio has genuinely settled; a
            // rising window means slower modes are still being exposed.
            let stable = ratio_history.len() >= 4 && {
                let tail = &ratio_history[ratio_history.len() - 4..];
                let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = tail.iter().copied().fold(0.0f64, f64::max);
                hi - lo < 0.005 * hi
            };
            if stable && iterations >= jumps_blocked_until {
                let r = ratio_history[ratio_history.len() - 1];
                let gain = (r / (1.0 - r)).min(1e5);
                if gain > 1.0 {
                    jump_backup = Some((pi.clone(), diff));
                    // pi currently equals pi_{k+1}, next holds pi_k
                    par::fill_chunks(&mut pi, 1 << 14, |base, chunk| {
                        for (k, v) in chunk.iter_mut().enumerate() {
                            let j = base + k;
                            let jumped = *v + (*v - next[j]) * gain;
                            *v = jumped.max(0.0);
                        }
                    });
                    ratio_history.clear();
                    last_diff = f64::INFINITY;
                }
            }

            let total: f64 = pi.iter().sum();
            if total > 0.0 && (total - 1.0).abs() > 1e-14 {
                let inv = 1.0 / total;
                for v in pi.iter_mut() {
                    *v *= inv;
                }
            }
        }

        let total: f64 = pi.iter().sum();
        let inv = 1.0 / total;
        for v in pi.iter_mut() {
            *v *= inv;
        }

        let mut boundary_mass = 0.0;
        let cap = self.cap as u32;
        self.for_each_state(|idx, digits| {
            if digits.iter().any(|&x| x == cap) {
                boundary_mass += pi[idx];
            }
        });

        Ok(StationarySolution {
            pi,
            residual: final_diff * self.uniformization,
            boundary_mass,
            iterations,
            tol,
        })
    }
}

/// Occupancy and per-server tails extracted from a stationary solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactOccupancy {
    pub curve: OccupancyCurve,
    /// `P(X(u) >= i)` for `i = 0..=i_max`, per server in model order.
    pub tails: IndexMap<ServerId, Vec<f64>>,
    /// Stationary mean total task count, from the full marginals.
    pub mean_total_tasks: f64,
    pub boundary_mass: f64,
    pub residual: f64,
    /// Solver tolerance, folded into comparison slacks.
    pub tol: f64,
}

/// Computes `E[q(i)] = (1/|S|) sum_u P(X(u) >= i)` together with the
/// per-server tails, up to `i_max`.
pub fn occupancy_exact(
    chain: &TruncatedChain,
    solution: &StationarySolution,
    i_max: usize,
) -> ExactOccupancy {
    let m = chain.model.graph().n_servers();
    let levels = chain.cap + 1;
    let mut marginal = vec![vec![0.0f64; levels]; m];
    chain.for_each_state(|idx, digits| {
        let p = solution.pi[idx];
        for (u, &x) in digits.iter().enumerate() {
            marginal[u][x as usize] += p;
        }
    });

    // suffix sums: full tails over 0..=cap
    let mut full_tails = vec![vec![0.0f64; levels + 1]; m];
    for u in 0..m {
        for i in (0..levels).rev() {
            full_tails[u][i] = full_tails[u][i + 1] + marginal[u][i];
        }
    }
    let mean_total_tasks: f64 = full_tails
        .iter()
        .map(|t| t[1..].iter().sum::<f64>())
        .sum();

    let mut tails = IndexMap::with_capacity(m);
    for (u, name) in chain.model.graph().servers().iter().enumerate() {
        let mut t = Vec::with_capacity(i_max + 1);
        t.push(1.0);
        for i in 1..=i_max {
            t.push(if i < levels + 1 {
                *full_tails[u].get(i).unwrap_or(&0.0)
            } else {
                0.0
            });
        }
        tails.insert(name.clone(), t);
    }

    let values: Vec<f64> = (0..=i_max)
        .map(|i| tails.values().map(|t| t[i]).sum::<f64>() / m as f64)
        .collect();
    let half_widths = vec![0.0; i_max + 1];
    ExactOccupancy {
        curve: OccupancyCurve {
            values,
            half_widths,
            source: CurveSource::Exact,
            truncation_slack: solution.boundary_mass,
        },
        tails,
        mean_total_tasks,
        boundary_mass: solution.boundary_mass,
        residual: solution.residual,
        tol: solution.tol,
    }
}

/// Stationary mean total task count computed directly from the joint
/// distribution; test oracle for the marginal-sum identity.
pub fn mean_total_tasks_direct(chain: &TruncatedChain, solution: &StationarySolution) -> f64 {
    let mut total = 0.0;
    chain.for_each_state(|idx, digits| {
        total += solution.pi[idx] * digits.iter().map(|&x| x as f64).sum::<f64>();
    });
    total
}

/// Options for [`solve_model`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Per-server queue cap; `None` picks one per component from its
    /// bottleneck load and `boundary_target`.
    pub cap: Option<usize>,
    pub tol: f64,
    pub max_iterations: u64,
    pub state_cap: usize,
    pub i_max: usize,
    /// Aimed-for total boundary mass when the cap is chosen automatically.
    pub boundary_target: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            cap: None,
            tol: 1e-10,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            state_cap: DEFAULT_STATE_CAP,
            i_max: 10,
            boundary_target: 1e-10,
        }
    }
}

/// Splits the model into independent components: servers connected through
/// compatibility edges or shared departure blocks, with their dispatchers.
fn chain_components(model: &NetworkModel) -> Vec<(Vec<usize>, Vec<usize>)> {
    let graph = model.graph();
    let ns = graph.n_servers();
    let mut parent: Vec<usize> = (0..ns).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for di in 0..graph.n_dispatchers() {
        let servers = graph.servers_of(di);
        for w in servers.windows(2) {
            let a = find(&mut parent, w[0]);
            let b = find(&mut parent, w[1]);
            parent[a] = b;
        }
    }
    for block in model.block_indices() {
        for w in block.windows(2) {
            let a = find(&mut parent, w[0]);
            let b = find(&mut parent, w[1]);
            parent[a] = b;
        }
    }
    let mut groups: IndexMap<usize, (Vec<usize>, Vec<usize>)> = IndexMap::new();
    for ui in 0..ns {
        let root = find(&mut parent, ui);
        groups.entry(root).or_default().0.push(ui);
    }
    for di in 0..graph.n_dispatchers() {
        let root = find(&mut parent, graph.servers_of(di)[0]);
        groups.entry(root).or_default().1.push(di);
    }
    groups.into_values().collect()
}

fn sub_model(model: &NetworkModel, servers: &[usize], dispatchers: &[usize]) -> NetworkModel {
    let graph = model.graph();
    let server_ids: Vec<ServerId> = servers.iter().map(|&ui| graph.servers()[ui].clone()).collect();
    let dispatcher_ids: Vec<crate::model::DispatcherId> = dispatchers
        .iter()
        .map(|&di| graph.dispatchers()[di].clone())
        .collect();
    let in_component: std::collections::HashSet<usize> = servers.iter().copied().collect();
    let edges: Vec<(crate::model::DispatcherId, ServerId)> = graph
        .edges()
        .filter(|(d, u)| {
            let di = graph.dispatcher_index(d).expect("own edge");
            let ui = graph.server_index(u).expect("own edge");
            dispatchers.contains(&di) && in_component.contains(&ui)
        })
        .map(|(d, u)| (d.clone(), u.clone()))
        .collect();
    let sub_graph = BipartiteGraph::new(dispatcher_ids.clone(), server_ids.clone(), edges)
        .expect("component subgraph is valid");
    let rates = RateSpec::new(
        dispatchers
            .iter()
            .map(|&di| (graph.dispatchers()[di].clone(), model.lambda(di)))
            .collect(),
        servers
            .iter()
            .map(|&ui| (graph.servers()[ui].clone(), model.mu(ui)))
            .collect(),
    )
    .expect("component rates are valid");
    let blocks: Vec<Vec<ServerId>> = model
        .block_indices()
        .iter()
        .filter(|b| in_component.contains(&b[0]))
        .map(|b| b.iter().map(|&ui| graph.servers()[ui].clone()).collect())
        .collect();
    NetworkModel::new(sub_graph, rates, DeparturePartition { blocks })
        .expect("component model is valid")
}

/// Worst subset load `max_U (confined arrivals) / (service of U)`; strictly
/// below one for ergodic models and the driver of the truncation cap.
pub fn bottleneck_load(model: &NetworkModel) -> f64 {
    let graph = model.graph();
    let ns = graph.n_servers();
    let masks: Vec<u32> = (0..graph.n_dispatchers())
        .map(|di| graph.servers_of(di).iter().fold(0u32, |m, &ui| m | (1 << ui)))
        .collect();
    let mut worst: f64 = 0.0;
    for subset in 1..(1u32 << ns) {
        let mut service = 0.0;
        for ui in 0..ns {
            if subset & (1 << ui) != 0 {
                service += model.mu(ui);
            }
        }
        let mut confined = 0.0;
        for (di, &nd) in masks.iter().enumerate() {
            if nd & !subset == 0 {
                confined += model.lambda(di);
            }
        }
        worst = worst.max(confined / service);
    }
    worst
}

fn auto_cap(model: &NetworkModel, opts: &SolveOptions, per_component_target: f64) -> usize {
    let m = model.graph().n_servers();
    let rho = bottleneck_load(model).min(0.999_999);
    let aimed = (per_component_target / (4.0 * m as f64)).max(1e-300);
    let needed = (aimed.ln() / rho.ln()).ceil() as i64;
    let floor = (opts.i_max + 2).max(8) as i64;
    let mut cap = needed.max(floor) as usize;
    // largest cap fitting the state budget
    let mut max_cap = 1usize;
    while ((max_cap + 2) as u128).pow(m as u32) <= opts.state_cap as u128 {
        max_cap += 1;
    }
    cap = cap.min(max_cap);
    cap.max(1)
}

/// Solves the full model exactly: checks ergodicity, splits into independent
/// components, solves each truncated component and reassembles occupancy,
/// per-server tails, mean total tasks and the accumulated boundary mass.
pub fn solve_model(model: &NetworkModel, opts: &SolveOptions) -> Result<ExactOccupancy, ExactError> {
    let verdict = check_ergodic(model)?;
    if verdict.status != StabilityStatus::Ergodic {
        return Err(ExactError::NotErgodic {
            status: verdict.status,
            witness: verdict.witness,
        });
    }

    let components = chain_components(model);
    let per_component_target = opts.boundary_target / components.len() as f64;
    let mut solved: Vec<(NetworkModel, ExactOccupancy)> = Vec::with_capacity(components.len());
    for (servers, dispatchers) in &components {
        let sub = sub_model(model, servers, dispatchers);
        let mut cap = opts
            .cap
            .unwrap_or_else(|| auto_cap(&sub, opts, per_component_target));
        let mut attempt = 0;
        let occ = loop {
            let chain = build_generator_with_state_cap(&sub, cap, opts.state_cap)?;
            let solution = chain.stationary_with(opts.tol, opts.max_iterations)?;
            let occ = occupancy_exact(&chain, &solution, opts.i_max);
            attempt += 1;
            let can_grow = opts.cap.is_none()
                && attempt < 3
                && ((cap * 2 + 1) as u128).pow(sub.graph().n_servers() as u32)
                    <= opts.state_cap as u128;
            if occ.boundary_mass <= per_component_target || !can_grow {
                break occ;
            }
            cap *= 2;
        };
        solved.push((sub, occ));
    }

    let graph = model.graph();
    let mut tails: IndexMap<ServerId, Vec<f64>> = IndexMap::with_capacity(graph.n_servers());
    for u in graph.servers() {
        let t = solved
            .iter()
            .find_map(|(_, occ)| occ.tails.get(u))
            .expect("every server belongs to one component")
            .clone();
        tails.insert(u.clone(), t);
    }
    let boundary_mass: f64 = solved.iter().map(|(_, occ)| occ.boundary_mass).sum();
    let residual = solved
        .iter()
        .map(|(_, occ)| occ.residual)
        .fold(0.0f64, f64::max);
    let mean_total_tasks: f64 = solved.iter().map(|(_, occ)| occ.mean_total_tasks).sum();
    let values: Vec<f64> = (0..=opts.i_max)
        .map(|i| tails.values().map(|t| t[i]).sum::<f64>() / graph.n_servers() as f64)
        .collect();

    Ok(ExactOccupancy {
        curve: OccupancyCurve {
            values,
            half_widths: vec![0.0; opts.i_max + 1],
            source: CurveSource::Exact,
            truncation_slack: boundary_mass,
        },
        tails,
        mean_total_tasks,
        boundary_mass,
        residual,
        tol: opts.tol,
    })
}

/// Result of a stationary tail comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailCompareReport {
    /// Smallest `P(X_A(map(w)) >= i) - P(X_B(w) >= i)` over servers and levels.
    pub worst_margin: f64,
    pub worst_server: Option<ServerId>,
    pub worst_level: usize,
    /// Sum of both boundary masses plus both solver tolerances.
    pub slack: f64,
    /// Margins below `-slack`.
    pub violations: usize,
    pub comparisons: usize,
}

/// Checks stationary tail dominance of model A over model B under the given
/// server mapping (B's server id to A's server id).
pub fn tail_compare(
    a: &ExactOccupancy,
    b: &ExactOccupancy,
    mapping: &IndexMap<ServerId, ServerId>,
) -> Result<TailCompareReport, ExactError> {
    let slack = a.boundary_mass + b.boundary_mass + a.tol + b.tol;
    let mut worst = f64::INFINITY;
    let mut worst_server = None;
    let mut worst_level = 0;
    let mut violations = 0;
    let mut comparisons = 0;
    for (w, tail_b) in &b.tails {
        let origin = mapping
            .get(w)
            .ok_or_else(|| ExactError::MappingIncomplete(w.clone()))?;
        let tail_a = a
            .tails
            .get(origin)
            .ok_or_else(|| ExactError::MappingIncomplete(origin.clone()))?;
        for i in 0..tail_a.len().min(tail_b.len()) {
            let margin = tail_a[i] - tail_b[i];
            comparisons += 1;
            if margin < worst {
                worst = margin;
                worst_server = Some(w.clone());
                worst_level = i;
            }
            if margin < -slack {
                violations += 1;
            }
        }
    }
    Ok(TailCompareReport {
        worst_margin: worst,
        worst_server,
        worst_level,
        slack,
        violations,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use approx::assert_relative_eq;

    fn mm1(lambda: f64, mu: f64) -> NetworkModel {
        parse_model(&format!(
            r#"{{
                "dispatchers": [{{"id": "d", "rate": {lambda}}}],
                "servers": [{{"id": "u", "rate": {mu}}}],
                "edges": [["d", "u"]]
            }}"#
        ))
        .unwrap()
    }

    fn simple2(rho: f64) -> NetworkModel {
        parse_model(&format!(
            r#"{{
                "dispatchers": [{{"id": "d", "rate": {rho}}}],
                "servers": [{{"id": "u1", "rate": 1.0}}, {{"id": "u2", "rate": 1.0}}],
                "edges": [["d", "u1"], ["d", "u2"]]
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn mm1_skeleton_is_birth_death() {
        let chain = build_generator(&mm1(0.5, 1.0), 2).unwrap();
        assert_eq!(chain.state_count(), 3);
        assert_eq!(chain.outgoing(0), vec![(1, 0.5)]);
        let mut mid = chain.outgoing(1);
        mid.sort_by_key(|&(dst, _)| dst);
        assert_eq!(mid, vec![(0, 1.0), (2, 0.5)]);
        // at the cap the arrival is dropped
        assert_eq!(chain.outgoing(2), vec![(1, 1.0)]);
    }

    #[test]
    fn tie_splits_evenly() {
        let chain = build_generator(&simple2(1.0), 2).unwrap();
        let idx = chain.index_of(&[1, 1]);
        let mut out = chain.outgoing(idx);
        out.sort_by_key(|&(dst, _)| dst);
        let up_u1 = chain.index_of(&[2, 1]);
        let up_u2 = chain.index_of(&[1, 2]);
        let down_u1 = chain.index_of(&[0, 1]);
        let down_u2 = chain.index_of(&[1, 0]);
        let mut expect = vec![
            (up_u1, 0.5),
            (up_u2, 0.5),
            (down_u1, 1.0),
            (down_u2, 1.0),
        ];
        expect.sort_by_key(|&(dst, _)| dst);
        assert_eq!(out, expect);
    }

    #[test]
    fn coupled_block_fires_once() {
        let m = parse_model(
            r#"{
                "dispatchers": [{"id": "d", "rate": 0.5}, {"id": "e", "rate": 0.5}],
                "servers": [{"id": "u", "rate": 1.0}, {"id": "v", "rate": 1.0}],
                "edges": [["d", "u"], ["e", "v"]],
                "partition": [["u", "v"]]
            }"#,
        )
        .unwrap();
        let chain = build_generator(&m, 3).unwrap();
        let idx = chain.index_of(&[2, 1]);
        let out = chain.outgoing(idx);
        let departures: Vec<&(usize, f64)> = out
            .iter()
            .filter(|&&(dst, _)| dst < idx)
            .collect();
        assert_eq!(departures.len(), 1);
        assert_eq!(departures[0].0, chain.index_of(&[1, 0]));
        assert_eq!(departures[0].1, 1.0);
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let m = parse_model(
            r#"{
                "dispatchers": [{"id": "d", "rate": 0.4}, {"id": "e", "rate": 0.3}],
                "servers": [{"id": "u", "rate": 1.0}, {"id": "v", "rate": 1.0}],
                "edges": [["d", "u"], ["d", "v"], ["e", "v"]],
                "partition": [["u", "v"]]
            }"#,
        )
        .unwrap();
        let chain = build_generator(&m, 3).unwrap();
        for idx in 0..chain.state_count() {
            let out = chain.outgoing(idx);
            let total: f64 = out.iter().map(|&(_, r)| r).sum();
            assert!(
                (total - chain.exit[idx]).abs() <= 1e-12,
                "row {idx}: out {total} vs exit {}",
                chain.exit[idx]
            );
            assert!(out.iter().all(|&(_, r)| r >= 0.0));
        }
    }

    #[test]
    fn state_cap_enforced() {
        let m = simple2(1.0);
        assert!(matches!(
            build_generator_with_state_cap(&m, 100, 1000),
            Err(ExactError::StateCapExceeded { .. })
        ));
    }

    #[test]
    fn mm1_geometric_to_1e8() {
        let chain = build_generator(&mm1(0.5, 1.0), 200).unwrap();
        let solution = chain.stationary(1e-10).unwrap();
        let occ = occupancy_exact(&chain, &solution, 50);
        let tail = &occ.tails[&ServerId("u".into())];
        let mut sup = 0.0f64;
        for i in 0..=50usize {
            sup = sup.max((tail[i] - 0.5f64.powi(i as i32)).abs());
        }
        assert!(sup <= 1e-8, "sup error {sup}");
        // E[q(i)] equals the tail for a single server
        for i in 0..=50usize {
            assert_eq!(occ.curve.values[i], tail[i]);
        }
    }

    #[test]
    fn near_empty_system() {
        let chain = build_generator(&mm1(1e-6, 1.0), 10).unwrap();
        let solution = chain.stationary(1e-12).unwrap();
        let occ = occupancy_exact(&chain, &solution, 2);
        assert_relative_eq!(occ.curve.values[1], 1e-6, max_relative = 1e-3);
    }

    #[test]
    fn refuses_non_ergodic() {
        let chain = build_generator(&mm1(2.0, 1.0), 10).unwrap();
        assert!(matches!(
            chain.stationary(1e-8),
            Err(ExactError::NotErgodic { .. })
        ));
    }

    #[test]
    fn symmetric_two_server_tails_equal() {
        let m = simple2(1.5);
        let chain = build_generator(&m, 60).unwrap();
        let solution = chain.stationary(1e-11).unwrap();
        let occ = occupancy_exact(&chain, &solution, 10);
        let t1 = &occ.tails[&ServerId("u1".into())];
        let t2 = &occ.tails[&ServerId("u2".into())];
        for i in 0..=10 {
            assert_relative_eq!(t1[i], t2[i], max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn boundary_mass_decreases_with_cap() {
        let m = simple2(1.5);
        let small = build_generator(&m, 10).unwrap().stationary(1e-10).unwrap();
        let large = build_generator(&m, 20).unwrap().stationary(1e-10).unwrap();
        assert!(large.boundary_mass < small.boundary_mass);
    }

    #[test]
    fn little_identity_marginals_vs_direct() {
        let m = parse_model(
            r#"{
                "dispatchers": [{"id": "d", "rate": 0.4}, {"id": "e", "rate": 0.5}],
                "servers": [{"id": "u", "rate": 1.0}, {"id": "v", "rate": 1.2}],
                "edges": [["d", "u"], ["d", "v"], ["e", "v"]]
            }"#,
        )
        .unwrap();
        let chain = build_generator(&m, 40).unwrap();
        let solution = chain.stationary(1e-11).unwrap();
        let occ = occupancy_exact(&chain, &solution, 10);
        let direct = mean_total_tasks_direct(&chain, &solution);
        assert!((occ.mean_total_tasks - direct).abs() < 1e-10);
        // and |S| * sum_i>=1 E[q(i)] equals the same total when the tail
        // range covers the box
        let wide = occupancy_exact(&chain, &solution, 40);
        let via_curve: f64 = wide.curve.values[1..].iter().sum::<f64>() * 2.0;
        assert!((via_curve - direct).abs() < 1e-10);
    }

    #[test]
    fn simple_models_dominate_simple_bound() {
        use crate::bounds::prop1_bound;
        for (s, rho) in [(1usize, 0.5f64), (2, 1.5), (3, 2.1), (2, 0.7), (3, 1.1)] {
            let servers: Vec<String> = (0..s)
                .map(|i| format!("{{\"id\": \"u{i}\", \"rate\": 1.0}}"))
                .collect();
            let edges: Vec<String> = (0..s).map(|i| format!("[\"d\", \"u{i}\"]")).collect();
            let m = parse_model(&format!(
                r#"{{"dispatchers": [{{"id": "d", "rate": {rho}}}], "servers": [{}], "edges": [{}]}}"#,
                servers.join(","),
                edges.join(",")
            ))
            .unwrap();
            let occ = solve_model(
                &m,
                &SolveOptions {
                    i_max: 12,
                    tol: 1e-9,
                    boundary_target: 1e-8,
                    ..SolveOptions::default()
                },
            )
            .unwrap();
            for i in 0..=12u32 {
                let bound = prop1_bound(rho, s, i).unwrap();
                assert!(
                    occ.curve.values[i as usize] + occ.boundary_mass + occ.tol >= bound,
                    "s={s} rho={rho} i={i}: {} < {}",
                    occ.curve.values[i as usize],
                    bound
                );
            }
        }
    }

    #[test]
    fn solve_model_splits_components() {
        // two disjoint M/M/1 queues with different loads
        let m = parse_model(
            r#"{
                "dispatchers": [{"id": "d1", "rate": 0.5}, {"id": "d2", "rate": 0.25}],
                "servers": [{"id": "u1", "rate": 1.0}, {"id": "u2", "rate": 1.0}],
                "edges": [["d1", "u1"], ["d2", "u2"]]
            }"#,
        )
        .unwrap();
        let occ = solve_model(&m, &SolveOptions::default()).unwrap();
        let t1 = &occ.tails[&ServerId("u1".into())];
        let t2 = &occ.tails[&ServerId("u2".into())];
        for i in 0..=8usize {
            assert_relative_eq!(t1[i], 0.5f64.powi(i as i32), epsilon = 1e-8);
            assert_relative_eq!(t2[i], 0.25f64.powi(i as i32), epsilon = 1e-8);
            assert_relative_eq!(
                occ.curve.values[i],
                (t1[i] + t2[i]) / 2.0,
                max_relative = 1e-12,
                epsilon = 1e-15
            );
        }
        assert!(occ.boundary_mass <= 1e-10);
    }

    #[test]
    fn tail_compare_identity_and_arrival_decrease() {
        let a = solve_model(&mm1(0.5, 1.0), &SolveOptions::default()).unwrap();
        let mapping: IndexMap<ServerId, ServerId> =
            [(ServerId("u".into()), ServerId("u".into()))].into_iter().collect();
        let same = tail_compare(&a, &a, &mapping).unwrap();
        assert_eq!(same.violations, 0);
        assert_eq!(same.worst_margin, 0.0);

        let b = solve_model(&mm1(0.4, 1.0), &SolveOptions::default()).unwrap();
        let report = tail_compare(&a, &b, &mapping).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.worst_margin >= 0.0);
    }

    #[test]
    fn tail_compare_requires_total_mapping() {
        let a = solve_model(&mm1(0.5, 1.0), &SolveOptions::default()).unwrap();
        let empty: IndexMap<ServerId, ServerId> = IndexMap::new();
        assert!(matches!(
            tail_compare(&a, &a, &empty),
            Err(ExactError::MappingIncomplete(_))
        ));
    }
}
