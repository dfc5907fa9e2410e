//! Load-balancing networks on bipartite dispatcher-server compatibility graphs.
//!
//! The library models networks where dispatchers route Poisson task streams to
//! compatible FCFS single-server queues via join-the-shortest-queue, and provides:
//!
//! * [`model`] — domain types (graphs, rates, departure partitions, queue states,
//!   occupancy curves), JSON I/O and the `g1`/`g2` example graph families;
//! * [`metrics`] — the flexibility metrics `alpha`, `beta` and the weighted
//!   variant `theta` in exact rational arithmetic;
//! * [`stability`] — ergodicity verdicts by exhaustive subset enumeration;
//! * [`bounds`] — geometric lower bounds for the steady-state occupancy and a
//!   numeric scan for the monotonicity/convexity of the underlying ratio function;
//! * [`transforms`] — monotone network transformations (arrival decrease, service
//!   increase, edge simplification) and the composite full-simplification and
//!   gamma-split constructions;
//! * [`exact`] — stationary distributions of truncated chains by uniformization
//!   and power iteration, occupancy extraction and stationary tail comparison;
//! * [`sim`] — event-driven simulation with batch-means confidence intervals and
//!   a pathwise coupling check against a fast single-server queue.
//!
//! With the default `parallel` feature the heavy inner loops (power-iteration
//! sweeps, subset enumeration, independent replications) run on rayon; disabling
//! the feature yields a dependency-light sequential build with identical results.

pub mod bounds;
pub mod exact;
pub mod metrics;
pub mod model;
mod par;
pub mod sim;
pub mod stability;
pub mod transforms;

pub use model::{
    BipartiteGraph, DeparturePartition, DispatcherId, ModelError, NetworkModel, OccupancyCurve,
    QueueState, RateSpec, ServerId,
};
