//! Event-driven simulation of the load balancing chain.
//!
//! Clocks are competing exponentials with state-independent rates: one arrival
//! clock per dispatcher and one potential-departure clock per departure block,
//! so each event costs one total-rate exponential plus a categorical pick.
//! Routing ties are broken by a dedicated RNG stream, separate from event
//! timing, so tie-break randomness never perturbs the event schedule.
//! Occupancy is integrated with time weights after a burn-in fraction and
//! summarized by batch means with Student-t confidence intervals.

use std::collections::VecDeque;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{CurveSource, NetworkModel, OccupancyCurve};
use crate::par;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("burn-in fraction must lie in [0, 1), got {0}")]
    BadBurnIn(f64),
    #[error("need at least 2 batches, got {0}")]
    BadBatches(usize),
    #[error("i_max must be >= 1")]
    BadIMax,
    #[error("replications must be >= 1")]
    BadReplications,
}

/// Simulation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated time horizon.
    pub horizon: f64,
    /// Fraction of the horizon discarded before measurement.
    pub burn_in: f64,
    /// Number of equal-time batches for the batch-means interval.
    pub batches: usize,
    pub seed: u64,
    /// Occupancy levels tracked (`q(1)..q(i_max)`).
    pub i_max: usize,
    /// Abort as apparently unstable once the total task count passes this.
    pub divergence_guard: u64,
}

impl SimConfig {
    pub fn new(horizon: f64, seed: u64, i_max: usize) -> Self {
        SimConfig {
            horizon,
            burn_in: 0.2,
            batches: 20,
            seed,
            i_max,
            divergence_guard: 1_000_000,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0) {
            return Err(SimError::BadHorizon(self.horizon));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(SimError::BadBurnIn(self.burn_in));
        }
        if self.batches < 2 {
            return Err(SimError::BadBatches(self.batches));
        }
        if self.i_max < 1 {
            return Err(SimError::BadIMax);
        }
        Ok(())
    }
}

/// Simulation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    /// Time-averaged occupancy with 99% batch-means half-widths.
    pub occupancy: OccupancyCurve,
    pub mean_total_tasks: f64,
    pub events: u64,
    pub aborted_unstable: bool,
    /// Mean sojourn time of tasks completed after burn-in.
    pub mean_sojourn: f64,
    pub arrivals: u64,
    pub completions: u64,
    /// Measured (post burn-in) time per replication.
    pub measured_time: f64,
    /// Time-average queue length per server.
    pub per_server_mean: Vec<f64>,
    pub replications: usize,
}

/// Raw per-replication tallies, merged by [`estimate_occupancy`].
struct RepTally {
    /// Batch means of q(i) for i in 1..=i_max, shape `[batches][i_max]`.
    batch_occ: Vec<Vec<f64>>,
    /// Batch means of the total task count.
    batch_total: Vec<f64>,
    per_server_integral: Vec<f64>,
    events: u64,
    arrivals: u64,
    completions: u64,
    sojourn_sum: f64,
    aborted: bool,
}

fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    // inverse transform; 1 - U avoids ln(0)
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

fn run_replication(model: &NetworkModel, config: &SimConfig, rep: u64) -> RepTally {
    let graph = model.graph();
    let ns = graph.n_servers();
    let nd = graph.n_dispatchers();
    let nb = model.block_indices().len();

    let mut event_rng = ChaCha8Rng::seed_from_u64(config.seed);
    event_rng.set_stream(2 * rep);
    let mut tie_rng = ChaCha8Rng::seed_from_u64(config.seed);
    tie_rng.set_stream(2 * rep + 1);

    // cumulative clock weights: dispatchers then blocks
    let mut cumulative = Vec::with_capacity(nd + nb);
    let mut total_rate = 0.0;
    for di in 0..nd {
        total_rate += model.lambda(di);
        cumulative.push(total_rate);
    }
    for b in 0..nb {
        total_rate += model.block_rate(b);
        cumulative.push(total_rate);
    }

    let burn = config.burn_in * config.horizon;
    let width = (config.horizon - burn) / config.batches as f64;

    let mut lengths = vec![0u64; ns];
    let mut queues: Vec<VecDeque<f64>> = vec![VecDeque::new(); ns];
    // counts[i-1] = number of servers with length >= i
    let mut counts = vec![0u64; config.i_max];
    let mut total_tasks = 0u64;

    let mut acc_occ = vec![vec![0.0f64; config.i_max]; config.batches];
    let mut acc_total = vec![0.0f64; config.batches];
    let mut per_server_integral = vec![0.0f64; ns];

    let mut t = 0.0f64;
    let mut events = 0u64;
    let mut arrivals = 0u64;
    let mut completions = 0u64;
    let mut sojourn_sum = 0.0f64;
    let mut aborted = false;

    let integrate = |from: f64,
                         to: f64,
                         counts: &[u64],
                         lengths: &[u64],
                         total_tasks: u64,
                         acc_occ: &mut Vec<Vec<f64>>,
                         acc_total: &mut Vec<f64>,
                         per_server_integral: &mut Vec<f64>| {
        let mut from = from.max(burn);
        let to = to.min(config.horizon);
        if from >= to {
            return;
        }
        for (u, &len) in lengths.iter().enumerate() {
            per_server_integral[u] += len as f64 * (to - from);
        }
        while from < to {
            let batch = (((from - burn) / width) as usize).min(config.batches - 1);
            let boundary = burn + (batch + 1) as f64 * width;
            let seg_end = to.min(boundary);
            let dt = seg_end - from;
            let row = &mut acc_occ[batch];
            for (i, c) in counts.iter().enumerate() {
                row[i] += *c as f64 * dt;
            }
            acc_total[batch] += total_tasks as f64 * dt;
            from = seg_end;
        }
    };

    loop {
        let dt = exp_sample(&mut event_rng, total_rate);
        let t_next = t + dt;
        if t_next >= config.horizon {
            integrate(
                t,
                config.horizon,
                &counts,
                &lengths,
                total_tasks,
                &mut acc_occ,
                &mut acc_total,
                &mut per_server_integral,
            );
            break;
        }
        integrate(
            t,
            t_next,
            &counts,
            &lengths,
            total_tasks,
            &mut acc_occ,
            &mut acc_total,
            &mut per_server_integral,
        );
        t = t_next;

        let draw = event_rng.gen::<f64>() * total_rate;
        let clock = cumulative.partition_point(|&c| c <= draw).min(nd + nb - 1);
        if clock < nd {
            // arrival at dispatcher `clock`: join a shortest compatible queue
            arrivals += 1;
            let servers = graph.servers_of(clock);
            let mut min = u64::MAX;
            let mut ties = 0usize;
            for &ui in servers {
                let x = lengths[ui];
                if x < min {
                    min = x;
                    ties = 1;
                } else if x == min {
                    ties += 1;
                }
            }
            let pick = if ties == 1 {
                0
            } else {
                tie_rng.gen_range(0..ties)
            };
            let mut seen = 0usize;
            let mut chosen = servers[0];
            for &ui in servers {
                if lengths[ui] == min {
                    if seen == pick {
                        chosen = ui;
                        break;
                    }
                    seen += 1;
                }
            }
            lengths[chosen] += 1;
            total_tasks += 1;
            let new_len = lengths[chosen];
            if new_len as usize <= config.i_max {
                counts[new_len as usize - 1] += 1;
            }
            queues[chosen].push_back(t);
            if total_tasks > config.divergence_guard {
                aborted = true;
                break;
            }
        } else {
            // potential departure of a block: every nonempty member completes
            let block = &model.block_indices()[clock - nd];
            for &ui in block {
                if lengths[ui] > 0 {
                    let old = lengths[ui];
                    lengths[ui] -= 1;
                    total_tasks -= 1;
                    if old as usize <= config.i_max {
                        counts[old as usize - 1] -= 1;
                    }
                    let arrived = queues[ui].pop_front().expect("nonempty queue has a head");
                    if t >= burn {
                        completions += 1;
                        sojourn_sum += t - arrived;
                    }
                }
            }
        }
        events += 1;
    }

    let inv = 1.0 / (width * ns as f64);
    let batch_occ: Vec<Vec<f64>> = acc_occ
        .iter()
        .map(|row| row.iter().map(|&a| a * inv).collect())
        .collect();
    let batch_total: Vec<f64> = acc_total.iter().map(|&a| a / width).collect();
    RepTally {
        batch_occ,
        batch_total,
        per_server_integral,
        events,
        arrivals,
        completions,
        sojourn_sum,
        aborted,
    }
}

fn t_quantile_995(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.995)
}

fn merge(model: &NetworkModel, config: &SimConfig, tallies: Vec<RepTally>) -> SimResult {
    let ns = model.graph().n_servers();
    let reps = tallies.len();
    let aborted = tallies.iter().any(|t| t.aborted);
    let measured = (1.0 - config.burn_in) * config.horizon;

    let all_batches: Vec<&Vec<f64>> = tallies.iter().flat_map(|t| t.batch_occ.iter()).collect();
    let n = all_batches.len();
    let mut values = Vec::with_capacity(config.i_max + 1);
    let mut half_widths = Vec::with_capacity(config.i_max + 1);
    values.push(1.0);
    half_widths.push(0.0);
    let tq = t_quantile_995(n.saturating_sub(1).max(1));
    for i in 0..config.i_max {
        let mean = all_batches.iter().map(|b| b[i]).sum::<f64>() / n as f64;
        let var = all_batches
            .iter()
            .map(|b| (b[i] - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        values.push(mean);
        half_widths.push(tq * (var / n as f64).sqrt());
    }

    let mean_total_tasks = tallies
        .iter()
        .flat_map(|t| t.batch_total.iter())
        .sum::<f64>()
        / n as f64;
    let completions: u64 = tallies.iter().map(|t| t.completions).sum();
    let sojourn_sum: f64 = tallies.iter().map(|t| t.sojourn_sum).sum();
    let per_server_mean: Vec<f64> = (0..ns)
        .map(|u| {
            tallies
                .iter()
                .map(|t| t.per_server_integral[u])
                .sum::<f64>()
                / (measured * reps as f64)
        })
        .collect();

    SimResult {
        occupancy: OccupancyCurve {
            values,
            half_widths,
            source: CurveSource::Simulated,
            truncation_slack: 0.0,
        },
        mean_total_tasks,
        events: tallies.iter().map(|t| t.events).sum(),
        aborted_unstable: aborted,
        mean_sojourn: if completions > 0 {
            sojourn_sum / completions as f64
        } else {
            0.0
        },
        arrivals: tallies.iter().map(|t| t.arrivals).sum(),
        completions,
        measured_time: measured,
        per_server_mean,
        replications: reps,
    }
}

/// Runs a single replication.
pub fn simulate(model: &NetworkModel, config: &SimConfig) -> Result<SimResult, SimError> {
    estimate_occupancy(model, config, 1)
}

/// Runs independent replications with seeds derived deterministically from
/// `(config.seed, replication index)` and merges them by pooling batch means.
pub fn estimate_occupancy(
    model: &NetworkModel,
    config: &SimConfig,
    replications: usize,
) -> Result<SimResult, SimError> {
    config.validate()?;
    if replications < 1 {
        return Err(SimError::BadReplications);
    }
    let tallies = par::map_collect(replications, |rep| {
        run_replication(model, config, rep as u64)
    });
    Ok(merge(model, config, tallies))
}

/// Outcome of the pathwise coupling run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingReport {
    pub events: u64,
    /// Events at which the simple system's total fell below the fast queue.
    pub violations: u64,
    pub final_total_simple: u64,
    pub final_fast_queue: u64,
}

/// Couples the simple `s`-server system (load `rho`) with a single fast queue
/// of service rate `s` on a shared event stream: arrivals feed both systems;
/// one potential-departure clock at rate `s` serves the fast queue and is
/// assigned to a uniformly random server of the simple system. Both systems
/// start empty; reports how often the simple system's total task count fell
/// below the fast queue (never, if the dominance argument holds).
pub fn coupled_prop1_run(s: usize, rho: f64, events: u64, seed: u64) -> CouplingReport {
    assert!(s >= 1, "need at least one server");
    assert!(rho > 0.0 && rho < s as f64, "simple process must be ergodic");
    let mut event_rng = ChaCha8Rng::seed_from_u64(seed);
    event_rng.set_stream(0);
    let mut assign_rng = ChaCha8Rng::seed_from_u64(seed);
    assign_rng.set_stream(1);

    let arrival_rate = rho; // mu = 1 per server
    let departure_rate = s as f64;
    let p_arrival = arrival_rate / (arrival_rate + departure_rate);

    let mut x = vec![0u64; s];
    let mut total_x = 0u64;
    let mut y = 0u64;
    let mut violations = 0u64;

    for _ in 0..events {
        if event_rng.gen::<f64>() < p_arrival {
            // shared arrival: JSQ for the simple system, enqueue for the fast one
            let min = *x.iter().min().expect("nonempty");
            let ties = x.iter().filter(|&&v| v == min).count();
            let pick = if ties == 1 {
                0
            } else {
                assign_rng.gen_range(0..ties)
            };
            let mut seen = 0;
            for v in x.iter_mut() {
                if *v == min {
                    if seen == pick {
                        *v += 1;
                        break;
                    }
                    seen += 1;
                }
            }
            total_x += 1;
            y += 1;
        } else {
            // shared potential departure, assigned uniformly in the simple system
            let j = assign_rng.gen_range(0..s);
            if x[j] > 0 {
                x[j] -= 1;
                total_x -= 1;
            }
            if y > 0 {
                y -= 1;
            }
        }
        if total_x < y {
            violations += 1;
        }
    }

    CouplingReport {
        events,
        violations,
        final_total_simple: total_x,
        final_fast_queue: y,
    }
}

/// Consistency report between the time-average task count, the occupancy tail
/// sum and Little's law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LittleReport {
    /// Time-average total tasks, integrated directly.
    pub l_time_average: f64,
    /// `|S| * sum_{i>=1} q(i)` from the tracked occupancy levels; undercounts
    /// if queues exceeded `i_max`.
    pub l_tail_sum: f64,
    /// Completions per unit of measured time.
    pub throughput: f64,
    pub mean_sojourn: f64,
    /// `throughput * mean_sojourn`.
    pub l_little: f64,
}

/// Checks the tail-sum identity and Little's law on a simulation result.
pub fn little_check(result: &SimResult, model: &NetworkModel) -> LittleReport {
    let ns = model.graph().n_servers() as f64;
    let l_tail_sum: f64 = result.occupancy.values[1..].iter().sum::<f64>() * ns;
    let throughput =
        result.completions as f64 / (result.measured_time * result.replications as f64);
    LittleReport {
        l_time_average: result.mean_total_tasks,
        l_tail_sum,
        throughput,
        mean_sojourn: result.mean_sojourn,
        l_little: throughput * result.mean_sojourn,
    }
}
