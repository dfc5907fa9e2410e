//! Randomized verification batteries: bound audits over sampled models and
//! the stationary monotonicity check for the network transformations.

use indexmap::IndexMap;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use flexnet::bounds::{thm1_bound, thm2_bound, valid_from};
use flexnet::exact::{solve_model, tail_compare, SolveOptions};
use flexnet::metrics::{alpha, beta, rat_to_f64};
use flexnet::model::NetworkModel;
use flexnet::transforms::{decrease_arrivals, edge_simplify, increase_service, TransformRecord};

use crate::sampler::{sample_ergodic_model, SamplerConfig};

/// Outcome of the bound battery over random ergodic models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundBatteryReport {
    pub models: usize,
    pub rows: usize,
    pub failures: usize,
    pub max_boundary_mass: f64,
    /// Smallest `estimate + slack - bound` over all audited rows.
    pub worst_margin: f64,
}

/// Solves `count` sampled models exactly and audits the alpha- and beta-driven
/// bounds on every level in `[valid_from, i_max]`.
pub fn run_bound_battery(count: usize, seed: u64, i_max: usize) -> BoundBatteryReport {
    let config = SamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models: Vec<NetworkModel> = (0..count)
        .map(|_| sample_ergodic_model(&mut rng, &config))
        .collect();

    let audited = crate::par_map(models, |model| {
        let occ = solve_model(
            &model,
            &SolveOptions {
                i_max,
                tol: 1e-10,
                boundary_target: 1e-10,
                ..SolveOptions::default()
            },
        )
        .expect("sampled model is ergodic and small");
        let rho0 = model.rho0();
        let alpha_f = rat_to_f64(alpha(model.graph()));
        let beta_f = rat_to_f64(beta(model.graph()));
        let slack = occ.boundary_mass + 2.0 * occ.tol;
        let mut rows = 0usize;
        let mut failures = 0usize;
        let mut worst = f64::INFINITY;
        for i in valid_from(rho0)..=i_max as u32 {
            let estimate = occ.curve.values[i as usize];
            for bound in [
                thm1_bound(rho0, alpha_f, i).value,
                thm2_bound(rho0, beta_f, i).value,
            ] {
                let margin = estimate + slack - bound;
                rows += 1;
                worst = worst.min(margin);
                if margin < 0.0 {
                    failures += 1;
                }
            }
        }
        (rows, failures, occ.boundary_mass, worst)
    });

    let mut report = BoundBatteryReport {
        models: count,
        rows: 0,
        failures: 0,
        max_boundary_mass: 0.0,
        worst_margin: f64::INFINITY,
    };
    for (rows, failures, bm, worst) in audited {
        report.rows += rows;
        report.failures += failures;
        report.max_boundary_mass = report.max_boundary_mass.max(bm);
        report.worst_margin = report.worst_margin.min(worst);
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatteryKind {
    ArrivalDecrease,
    ServiceIncrease,
    EdgeSimplify,
}

impl BatteryKind {
    pub const ALL: [BatteryKind; 3] = [
        BatteryKind::ArrivalDecrease,
        BatteryKind::ServiceIncrease,
        BatteryKind::EdgeSimplify,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BatteryKind::ArrivalDecrease => "arrival-decrease",
            BatteryKind::ServiceIncrease => "service-increase",
            BatteryKind::EdgeSimplify => "edge-simplify",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KindOutcome {
    pub kind: String,
    pub cases: usize,
    pub identity_cases: usize,
    pub comparisons: usize,
    pub violations: usize,
    /// Smallest dominance margin seen, and the slack it is compared against.
    pub worst_margin: f64,
    pub worst_slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub count_per_kind: usize,
    pub seed: u64,
    pub i_max: usize,
    pub outcomes: Vec<KindOutcome>,
    pub all_pass: bool,
}

pub struct MonotonicityOptions {
    pub count: usize,
    pub seed: u64,
    pub i_max: usize,
    pub tol: f64,
    pub boundary_target: f64,
    pub kinds: Vec<BatteryKind>,
}

impl Default for MonotonicityOptions {
    fn default() -> Self {
        MonotonicityOptions {
            count: 50,
            seed: 0xf1e8,
            i_max: 8,
            tol: 1e-10,
            boundary_target: 1e-10,
            kinds: BatteryKind::ALL.to_vec(),
        }
    }
}

/// Applies one transformation of the given kind with random parameters.
/// Every tenth arrival-decrease case is an exact no-op so equality rows stay
/// in the battery.
fn apply_kind(
    kind: BatteryKind,
    model: &NetworkModel,
    case: usize,
    rng: &mut ChaCha8Rng,
) -> (NetworkModel, TransformRecord) {
    match kind {
        BatteryKind::ArrivalDecrease => {
            let rates = model.rates();
            let new: IndexMap<_, _> = rates
                .lambda
                .iter()
                .map(|(d, &l)| {
                    let factor = if case % 10 == 0 {
                        1.0
                    } else {
                        rng.gen_range(0.5..1.0)
                    };
                    (d.clone(), l * factor)
                })
                .collect();
            decrease_arrivals(model, &new).expect("pointwise decrease is valid")
        }
        BatteryKind::ServiceIncrease => {
            let graph = model.graph();
            let mut new: IndexMap<_, _> = IndexMap::new();
            for block in model.block_indices() {
                let factor = rng.gen_range(1.0..2.0);
                for &ui in block {
                    new.insert(graph.servers()[ui].clone(), model.mu(ui) * factor);
                }
            }
            increase_service(model, &new).expect("blockwise increase is valid")
        }
        BatteryKind::EdgeSimplify => {
            let graph = model.graph();
            let edges: Vec<_> = graph
                .edges()
                .map(|(d, u)| (d.clone(), u.clone()))
                .collect();
            // Prefer edges whose removal actually rewires the network;
            // degree-one targets collapse to the identity, which the battery
            // keeps as deliberate equality rows on every seventh case.
            let rewiring: Vec<_> = edges
                .iter()
                .filter(|(_, u)| graph.server_degree(graph.server_index(u).expect("own edge")) > 1)
                .cloned()
                .collect();
            let pool = if rewiring.is_empty() || case % 7 == 0 {
                &edges
            } else {
                &rewiring
            };
            let (d, u) = &pool[rng.gen_range(0..pool.len())];
            edge_simplify(model, d, u).expect("edge exists")
        }
    }
}

/// Samples random small ergodic models, applies each transformation kind,
/// solves both sides exactly and checks stationary tail dominance of the
/// original over the transformed network.
///
/// Edge simplification grows the coupled component by one server, so its
/// battery samples models with at most two servers to keep the product state
/// spaces within the exact solver's budget; the rate transformations use the
/// full three-server sampler.
pub fn run_monotonicity_battery(opts: &MonotonicityOptions) -> MonotonicityReport {
    let mut outcomes = Vec::new();
    for &kind in &opts.kinds {
        let sampler = match kind {
            BatteryKind::EdgeSimplify => SamplerConfig {
                max_servers: 2,
                ..SamplerConfig::default()
            },
            _ => SamplerConfig::default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ kind.label().len() as u64);
        let cases: Vec<(NetworkModel, NetworkModel, TransformRecord)> = (0..opts.count)
            .map(|case| {
                let model = loop {
                    let m = sample_ergodic_model(&mut rng, &sampler);
                    // For edge simplification, most cases should actually
                    // rewire; all-degree-one models only feed the deliberate
                    // identity rows.
                    let want_rewire = kind == BatteryKind::EdgeSimplify && case % 7 != 0;
                    if !want_rewire
                        || (0..m.graph().n_servers()).any(|ui| m.graph().server_degree(ui) > 1)
                    {
                        break m;
                    }
                };
                let (transformed, record) = apply_kind(kind, &model, case, &mut rng);
                (model, transformed, record)
            })
            .collect();

        let solve_opts = SolveOptions {
            i_max: opts.i_max,
            tol: opts.tol,
            boundary_target: opts.boundary_target,
            ..SolveOptions::default()
        };
        let reports = crate::par_map(cases, |(original, transformed, record)| {
            let a = solve_model(&original, &solve_opts).expect("original is ergodic");
            let b = solve_model(&transformed, &solve_opts)
                .expect("transformations preserve ergodicity");
            let report = tail_compare(&a, &b, &record.mapping).expect("mapping is total");
            (report, record.identity)
        });

        let mut outcome = KindOutcome {
            kind: kind.label().to_owned(),
            cases: opts.count,
            identity_cases: 0,
            comparisons: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            worst_slack: 0.0,
        };
        for (report, identity) in reports {
            outcome.comparisons += report.comparisons;
            outcome.violations += report.violations;
            if report.worst_margin < outcome.worst_margin {
                outcome.worst_margin = report.worst_margin;
                outcome.worst_slack = report.slack;
            }
            if identity {
                outcome.identity_cases += 1;
            }
        }
        outcomes.push(outcome);
    }
    let all_pass = outcomes.iter().all(|o| o.violations == 0);
    MonotonicityReport {
        count_per_kind: opts.count,
        seed: opts.seed,
        i_max: opts.i_max,
        outcomes,
        all_pass,
    }
}
