//! Bound-verification experiments and family sweeps.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use flexnet::bounds::{
    prop1_bound, theta_bound, thm1_bound, thm2_bound, thm3_bound, valid_from,
};
use flexnet::exact::{solve_model, ExactError, SolveOptions};
use flexnet::metrics::{alpha, beta, rat_to_f64, theta_metric, RationalJson, WeightFunction};
use flexnet::model::{
    family_g1, family_g2, load_model, ModelError, NetworkModel, RateSpec,
};
use flexnet::sim::{estimate_occupancy, SimConfig, SimError};
use flexnet::stability::{check_ergodic, StabilityError, StabilityStatus, StabilityVerdict};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("model is not usable for bound experiments: {0:?}")]
    Rejected(StabilityVerdict),
    #[error("family sweep aborted: n={0} is not ergodic after scaling")]
    SweepRejected(usize, StabilityVerdict),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    G1,
    G2,
}

impl FamilyKind {
    pub fn build(self, n: usize) -> Result<NetworkModel, ModelError> {
        match self {
            FamilyKind::G1 => family_g1(n),
            FamilyKind::G2 => family_g2(n),
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "g1" => Ok(FamilyKind::G1),
            "g2" => Ok(FamilyKind::G2),
            other => Err(format!("unknown family {other}; expected g1 or g2")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelSource {
    File(PathBuf),
    Family {
        family: FamilyKind,
        n: usize,
        load: f64,
    },
}

#[derive(Debug, Clone)]
pub struct ExactParams {
    pub cap: Option<usize>,
    pub tol: f64,
    pub boundary_target: f64,
}

impl Default for ExactParams {
    fn default() -> Self {
        ExactParams {
            cap: None,
            tol: 1e-10,
            boundary_target: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimParams {
    pub horizon: f64,
    pub replications: usize,
    pub batches: usize,
    pub burn_in: f64,
    pub divergence_guard: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            horizon: 1e6,
            replications: 5,
            batches: 20,
            burn_in: 0.2,
            divergence_guard: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Method {
    Exact(ExactParams),
    Simulate(SimParams),
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Exact(_) => "exact",
            Method::Simulate(_) => "simulate",
        }
    }
}

/// A full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub source: ModelSource,
    pub method: Method,
    pub i_max: usize,
    pub seed: u64,
    /// Evaluate the uniform-weight theta bound alongside the metric bounds.
    pub include_theta: bool,
}

/// One audited level of the occupancy-vs-bounds table. Pass flags are
/// recomputable from the row alone: `estimate + half_width + slack >= bound`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationRow {
    pub i: u32,
    pub estimate: f64,
    pub half_width: f64,
    pub slack: f64,
    pub prop1: Option<f64>,
    pub thm1: f64,
    pub thm1_theta: Option<f64>,
    pub thm2: f64,
    pub thm3: f64,
    pub pass_prop1: Option<bool>,
    pub pass_thm1: bool,
    pub pass_thm1_theta: Option<bool>,
    pub pass_thm2: bool,
    pub pass_thm3: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub method: String,
    pub alpha: RationalJson,
    pub beta: RationalJson,
    pub theta_uniform: Option<RationalJson>,
    pub rho0: f64,
    pub valid_from: u32,
    pub i_max: usize,
    pub simple: bool,
    pub stability_margin: f64,
    pub rows: Vec<VerificationRow>,
    pub all_pass: bool,
}

/// Loads or builds the model of an experiment. Family models are rescaled to
/// the requested load factor.
pub fn resolve_model(source: &ModelSource) -> Result<NetworkModel, HarnessError> {
    match source {
        ModelSource::File(path) => Ok(load_model(path)?),
        ModelSource::Family { family, n, load } => {
            let base = family.build(*n)?;
            let (scaled, _) = scale_to_load(&base, *load)?;
            Ok(scaled)
        }
    }
}

/// Sets all service rates to one and every arrival rate to `c` times the
/// critical uniform rate, found by bisecting the stability margin. Returns the
/// scaled model and the arrival rate used.
pub fn scale_to_load(model: &NetworkModel, c: f64) -> Result<(NetworkModel, f64), HarnessError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(HarnessError::Config(format!(
            "load factor must lie in (0, 1), got {c}"
        )));
    }
    let margin_at = |x: f64| -> Result<f64, HarnessError> {
        Ok(check_ergodic(&with_uniform_rates(model, x)?)?.margin)
    };
    // bracket the critical rate
    let mut lo = 1e-9;
    let mut hi = 1.0;
    while margin_at(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(HarnessError::Config(
                "failed to bracket the critical arrival rate".to_owned(),
            ));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if margin_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let critical = 0.5 * (lo + hi);
    let rate = c * critical;
    Ok((with_uniform_rates(model, rate)?, rate))
}

fn with_uniform_rates(model: &NetworkModel, lambda: f64) -> Result<NetworkModel, ModelError> {
    let rates = RateSpec::uniform(
        &model.graph().dispatchers().to_vec(),
        &model.graph().servers().to_vec(),
        lambda,
        1.0,
    )?;
    NetworkModel::new(model.graph().clone(), rates, model.partition())
}

/// Occupancy estimate plus the slack its comparisons are entitled to.
pub struct EstimateTable {
    pub values: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub slack: f64,
}

pub fn estimate_table(
    model: &NetworkModel,
    method: &Method,
    i_max: usize,
    seed: u64,
) -> Result<EstimateTable, HarnessError> {
    match method {
        Method::Exact(params) => {
            let occ = solve_model(
                model,
                &SolveOptions {
                    cap: params.cap,
                    tol: params.tol,
                    i_max,
                    boundary_target: params.boundary_target,
                    ..SolveOptions::default()
                },
            )?;
            Ok(EstimateTable {
                values: occ.curve.values,
                half_widths: vec![0.0; i_max + 1],
                slack: occ.boundary_mass + 2.0 * occ.tol,
            })
        }
        Method::Simulate(params) => {
            let mut config = SimConfig::new(params.horizon, seed, i_max);
            config.batches = params.batches;
            config.burn_in = params.burn_in;
            config.divergence_guard = params.divergence_guard;
            let result = estimate_occupancy(model, &config, params.replications)?;
            if result.aborted_unstable {
                return Err(HarnessError::Config(
                    "simulation aborted as apparently unstable".to_owned(),
                ));
            }
            Ok(EstimateTable {
                values: result.occupancy.values,
                half_widths: result.occupancy.half_widths,
                slack: 0.0,
            })
        }
    }
}

/// Runs one verification experiment: stability gate, metrics, occupancy by
/// the chosen method, bound evaluation and per-row pass flags for levels in
/// `[valid_from, i_max]`.
pub fn run_verification(spec: &ExperimentSpec) -> Result<VerificationReport, HarnessError> {
    let model = resolve_model(&spec.source)?;
    let verdict = check_ergodic(&model)?;
    if verdict.status != StabilityStatus::Ergodic {
        return Err(HarnessError::Rejected(verdict));
    }

    let graph = model.graph();
    let alpha_rat = alpha(graph);
    let beta_rat = beta(graph);
    let theta_rat = if spec.include_theta {
        Some(
            theta_metric(graph, &WeightFunction::uniform(graph))
                .expect("uniform weights are valid"),
        )
    } else {
        None
    };
    let rho0 = model.rho0();
    let vf = valid_from(rho0);
    let simple = model.is_simple();
    let simple_rho = if simple {
        Some(model.lambda(0) / model.mu(0))
    } else {
        None
    };

    let table = estimate_table(&model, &spec.method, spec.i_max, spec.seed)?;

    let alpha_f = rat_to_f64(alpha_rat);
    let beta_f = rat_to_f64(beta_rat);
    let theta_f = theta_rat.map(rat_to_f64);
    let mut rows = Vec::new();
    for i in vf..=spec.i_max as u32 {
        let estimate = table.values[i as usize];
        let half_width = table.half_widths[i as usize];
        let budget = estimate + half_width + table.slack;
        let prop1 = match simple_rho {
            Some(rho) => Some(prop1_bound(rho, graph.n_servers(), i).expect("ergodic gate")),
            None => None,
        };
        let t1 = thm1_bound(rho0, alpha_f, i);
        let tt = theta_f.map(|t| theta_bound(rho0, t, i));
        let t2 = thm2_bound(rho0, beta_f, i);
        let t3 = thm3_bound(rho0, alpha_f, beta_f, i);
        rows.push(VerificationRow {
            i,
            estimate,
            half_width,
            slack: table.slack,
            prop1,
            thm1: t1.value,
            thm1_theta: tt.map(|b| b.value),
            thm2: t2.value,
            thm3: t3.value,
            pass_prop1: prop1.map(|b| budget >= b),
            pass_thm1: budget >= t1.value,
            pass_thm1_theta: tt.map(|b| budget >= b.value),
            pass_thm2: budget >= t2.value,
            pass_thm3: budget >= t3.value,
        });
    }
    let all_pass = rows.iter().all(|r| {
        r.pass_thm1
            && r.pass_thm2
            && r.pass_thm3
            && r.pass_prop1.unwrap_or(true)
            && r.pass_thm1_theta.unwrap_or(true)
    });

    Ok(VerificationReport {
        method: spec.method.label().to_owned(),
        alpha: alpha_rat.into(),
        beta: beta_rat.into(),
        theta_uniform: theta_rat.map(Into::into),
        rho0,
        valid_from: vf,
        i_max: spec.i_max,
        simple,
        stability_margin: verdict.margin,
        rows,
        all_pass,
    })
}

/// One `(n, i)` row of a family sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub alpha: RationalJson,
    pub beta: RationalJson,
    pub lambda: f64,
    pub rho0: f64,
    pub valid_from: u32,
    pub i: u32,
    pub estimate: f64,
    pub half_width: f64,
    pub slack: f64,
    pub thm1: f64,
    pub thm2: f64,
    pub thm3: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub family: String,
    pub load: f64,
    pub method: String,
    pub rows: Vec<SweepRow>,
    pub all_pass: bool,
}

/// Sweeps a graph family over `n`, rescaling each instance to the load factor
/// and auditing the combined bound on every emitted row. Aborts on the first
/// non-ergodic instantiation.
pub fn run_family_sweep(
    family: FamilyKind,
    n_range: std::ops::RangeInclusive<usize>,
    load: f64,
    method: &Method,
    i_max: usize,
    seed: u64,
) -> Result<SweepReport, HarnessError> {
    // scale sequentially (cheap ergodicity bisections), then measure each n
    let mut prepared = Vec::new();
    for n in n_range {
        let base = family.build(n)?;
        let (model, rate) = scale_to_load(&base, load)?;
        let verdict = check_ergodic(&model)?;
        if verdict.status != StabilityStatus::Ergodic {
            return Err(HarnessError::SweepRejected(n, verdict));
        }
        prepared.push((n, model, rate));
    }

    let results = crate::par_map(prepared, |(n, model, rate)| {
        let table = estimate_table(&model, method, i_max, seed.wrapping_add(n as u64));
        (n, model, rate, table)
    });

    let mut rows = Vec::new();
    for (n, model, rate, table) in results {
        let table = table?;
        let graph = model.graph();
        let alpha_rat = alpha(graph);
        let beta_rat = beta(graph);
        let alpha_f = rat_to_f64(alpha_rat);
        let beta_f = rat_to_f64(beta_rat);
        let rho0 = model.rho0();
        let vf = valid_from(rho0);
        for i in vf..=i_max as u32 {
            let estimate = table.values[i as usize];
            let half_width = table.half_widths[i as usize];
            let t1 = thm1_bound(rho0, alpha_f, i).value;
            let t2 = thm2_bound(rho0, beta_f, i).value;
            let t3 = thm3_bound(rho0, alpha_f, beta_f, i).value;
            rows.push(SweepRow {
                n,
                alpha: alpha_rat.into(),
                beta: beta_rat.into(),
                lambda: rate,
                rho0,
                valid_from: vf,
                i,
                estimate,
                half_width,
                slack: table.slack,
                thm1: t1,
                thm2: t2,
                thm3: t3,
                pass: estimate + half_width + table.slack >= t3,
            });
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(SweepReport {
        family: match family {
            FamilyKind::G1 => "g1".to_owned(),
            FamilyKind::G2 => "g2".to_owned(),
        },
        load,
        method: method.label().to_owned(),
        rows,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_to_load_g1_hits_half_critical() {
        // the critical uniform rate of the first family is 1/2 for every n
        for n in [1usize, 3, 7] {
            let base = family_g1(n).unwrap();
            let (scaled, rate) = scale_to_load(&base, 0.8).unwrap();
            assert!((rate - 0.4).abs() < 1e-6, "n={n}: rate {rate}");
            assert_eq!(
                check_ergodic(&scaled).unwrap().status,
                StabilityStatus::Ergodic
            );
        }
    }

    #[test]
    fn verification_on_simple_model_passes() {
        let spec = ExperimentSpec {
            source: ModelSource::File("unused".into()),
            method: Method::Exact(ExactParams::default()),
            i_max: 10,
            seed: 1,
            include_theta: true,
        };
        // bypass the file source: drive run_verification through a family
        let spec = ExperimentSpec {
            source: ModelSource::Family {
                family: FamilyKind::G2,
                n: 2,
                load: 0.7,
            },
            ..spec
        };
        let report = run_verification(&spec).unwrap();
        assert!(report.all_pass, "{report:?}");
        assert_eq!(report.alpha.num, 3);
        assert_eq!(report.alpha.den, 2);
        assert!(!report.rows.is_empty());
        // self-audit: recompute a pass flag from row columns
        let row = &report.rows[0];
        assert_eq!(
            row.pass_thm3,
            row.estimate + row.half_width + row.slack >= row.thm3
        );
    }

    #[test]
    fn rejection_carries_witness() {
        let text = r#"{
            "dispatchers": [{"id": "d1", "rate": 0.6}, {"id": "d2", "rate": 0.6}],
            "servers": [{"id": "u1", "rate": 0.5}, {"id": "u2", "rate": 0.5}],
            "edges": [["d1", "u1"], ["d2", "u1"], ["d2", "u2"]]
        }"#;
        let dir = std::env::temp_dir().join("flexnet-exp-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("unstable.json");
        std::fs::write(&path, text).unwrap();
        let spec = ExperimentSpec {
            source: ModelSource::File(path),
            method: Method::Exact(ExactParams::default()),
            i_max: 6,
            seed: 1,
            include_theta: false,
        };
        match run_verification(&spec) {
            Err(HarnessError::Rejected(verdict)) => {
                assert_eq!(verdict.status, StabilityStatus::NotErgodic);
                assert_eq!(
                    verdict.witness.as_deref(),
                    Some(&[flexnet::model::ServerId("u1".into())][..])
                );
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }
}
