//! Ergodicity verdicts by exhaustive enumeration of server subsets.
//!
//! A model is ergodic when every nonempty server subset `U` has more total
//! service rate than the total arrival rate of the dispatchers confined to it
//! (those whose whole neighborhood lies inside `U`). A strict violation in the
//! opposite direction implies non-ergodicity; exact equality on the tightest
//! subset is reported as `Boundary` and treated as unusable for bound
//! experiments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NetworkModel, ServerId};
use crate::par;

/// Default cap on `|S|` for the exhaustive enumeration.
pub const DEFAULT_SUBSET_CAP: usize = 25;

/// Equality band for the floating-point fallback.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("server count {0} exceeds the subset-enumeration cap {1}")]
    TooManyServers(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityStatus {
    Ergodic,
    NotErgodic,
    Boundary,
}

/// Outcome of the subset condition.
///
/// `margin` is the minimum over subsets of (service rate of `U`) minus
/// (arrival rate confined to `U`). The witness, present for `NotErgodic` and
/// `Boundary`, is the offending subset of smallest cardinality (ties broken by
/// most negative slack, then by subset encoding), which makes diagnostics
/// point at the tightest overloaded group rather than a large superset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub status: StabilityStatus,
    pub witness: Option<Vec<ServerId>>,
    pub margin: f64,
}

/// Slack bookkeeping for one subset, generic over the arithmetic.
#[derive(Debug, Clone, Copy)]
struct Scan<T> {
    min_slack: T,
    /// Best offending subset under (popcount, slack, mask) ordering.
    offender: Option<(u32, T, u32)>,
}

impl<T: Copy + PartialOrd> Scan<T> {
    fn merge(self, other: Self) -> Self {
        let min_slack = if other.min_slack < self.min_slack {
            other.min_slack
        } else {
            self.min_slack
        };
        let offender = match (self.offender, other.offender) {
            (None, o) | (o, None) => o,
            (Some(a), Some(b)) => {
                let key = |(pc, slack, mask): (u32, T, u32)| (pc, slack, mask);
                if key(b).partial_cmp(&key(a)) == Some(std::cmp::Ordering::Less) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        };
        Scan { min_slack, offender }
    }
}

/// Decides ergodicity with the default enumeration cap.
pub fn check_ergodic(model: &NetworkModel) -> Result<StabilityVerdict, StabilityError> {
    check_ergodic_with_cap(model, DEFAULT_SUBSET_CAP)
}

/// Decides ergodicity, enumerating all `2^|S| - 1` nonempty server subsets.
///
/// When every rate is representable as a decimal with at most twelve fractional
/// digits the comparison runs in scaled integer arithmetic and the verdict is
/// exact; otherwise slacks within `1e-12` of zero are classified as `Boundary`.
pub fn check_ergodic_with_cap(
    model: &NetworkModel,
    cap: usize,
) -> Result<StabilityVerdict, StabilityError> {
    let ns = model.graph().n_servers();
    if ns > cap {
        return Err(StabilityError::TooManyServers(ns, cap));
    }

    let masks = confinement_masks(model);
    let mu: Vec<f64> = (0..ns).map(|ui| model.mu(ui)).collect();
    let lambda: Vec<f64> = (0..model.graph().n_dispatchers())
        .map(|di| model.lambda(di))
        .collect();

    if let Some(scale) = decimal_scale(lambda.iter().chain(mu.iter()).copied()) {
        let mu_i: Vec<i128> = mu.iter().map(|&x| to_scaled(x, scale)).collect();
        let lambda_i: Vec<i128> = lambda.iter().map(|&x| to_scaled(x, scale)).collect();
        let scan = scan_subsets(
            ns,
            &masks,
            &lambda_i,
            &mu_i,
            i128::MAX,
            |slack| slack < 0,
            |slack| slack == 0,
        );
        let margin = scan.min_slack as f64 / 10f64.powi(scale as i32);
        Ok(build_verdict(model, scan, margin, |s| *s < 0, |s| *s == 0))
    } else {
        let scan = scan_subsets(
            ns,
            &masks,
            &lambda,
            &mu,
            f64::INFINITY,
            |slack| slack < -BOUNDARY_EPS,
            |slack| slack.abs() <= BOUNDARY_EPS,
        );
        let margin = scan.min_slack;
        Ok(build_verdict(
            model,
            scan,
            margin,
            |s| *s < -BOUNDARY_EPS,
            |s| s.abs() <= BOUNDARY_EPS,
        ))
    }
}

fn build_verdict<T: Copy + PartialOrd>(
    model: &NetworkModel,
    scan: Scan<T>,
    margin: f64,
    is_violation: impl Fn(&T) -> bool,
    is_boundary: impl Fn(&T) -> bool,
) -> StabilityVerdict {
    let (status, witness_mask) = match scan.offender {
        Some((_, slack, mask)) if is_violation(&slack) => (StabilityStatus::NotErgodic, Some(mask)),
        Some((_, slack, mask)) if is_boundary(&slack) => (StabilityStatus::Boundary, Some(mask)),
        _ => (StabilityStatus::Ergodic, None),
    };
    let witness = witness_mask.map(|mask| {
        (0..model.graph().n_servers())
            .filter(|ui| mask & (1 << ui) != 0)
            .map(|ui| model.graph().servers()[ui].clone())
            .collect()
    });
    StabilityVerdict {
        status,
        witness,
        margin,
    }
}

/// Neighborhood of each dispatcher as a bitmask over server indices.
fn confinement_masks(model: &NetworkModel) -> Vec<u32> {
    (0..model.graph().n_dispatchers())
        .map(|di| {
            model
                .graph()
                .servers_of(di)
                .iter()
                .fold(0u32, |m, &ui| m | (1 << ui))
        })
        .collect()
}

fn scan_subsets<T>(
    ns: usize,
    masks: &[u32],
    lambda: &[T],
    mu: &[T],
    pos_infinity: T,
    is_violation: impl Fn(T) -> bool + Sync,
    is_boundary: impl Fn(T) -> bool + Sync,
) -> Scan<T>
where
    T: Copy + PartialOrd + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + Send + Sync + num_traits::Zero,
{
    let total = (1usize << ns) - 1;
    // Chunked so the parallel reduction has coarse units; merge order is
    // immaterial because `merge` is associative and commutative over disjoint
    // mask ranges.
    let chunk = 1usize << 14;
    let chunks = total.div_ceil(chunk);
    let identity = Scan {
        min_slack: pos_infinity,
        offender: None,
    };
    par::map_reduce(
        chunks,
        |c| {
            let lo = c * chunk + 1;
            let hi = ((c + 1) * chunk).min(total);
            let mut acc = identity;
            for subset in lo..=hi {
                let mask = subset as u32;
                let mut service = T::zero();
                let mut rest = mask;
                while rest != 0 {
                    let ui = rest.trailing_zeros() as usize;
                    service = service + mu[ui];
                    rest &= rest - 1;
                }
                let mut confined = T::zero();
                for (di, &nd) in masks.iter().enumerate() {
                    if nd & !mask == 0 {
                        confined = confined + lambda[di];
                    }
                }
                let slack = service - confined;
                if slack < acc.min_slack {
                    acc.min_slack = slack;
                }
                if is_violation(slack) || is_boundary(slack) {
                    let cand = (mask.count_ones(), slack, mask);
                    // Violations outrank boundary hits of the same size.
                    acc.offender = match acc.offender {
                        None => Some(cand),
                        Some(best) => {
                            if cand < best {
                                Some(cand)
                            } else {
                                Some(best)
                            }
                        }
                    };
                }
            }
            acc
        },
        identity,
        Scan::merge,
    )
}

/// Finds `10^k` (k <= 12) scaling all rates to integers, if one exists.
fn decimal_scale(rates: impl Iterator<Item = f64>) -> Option<u32> {
    let rates: Vec<f64> = rates.collect();
    'scales: for k in 0..=12u32 {
        let factor = 10f64.powi(k as i32);
        for &r in &rates {
            let scaled = r * factor;
            if scaled.abs() > 1e15 {
                return None;
            }
            if (scaled - scaled.round()).abs() > 1e-6 {
                continue 'scales;
            }
        }
        return Some(k);
    }
    None
}

fn to_scaled(rate: f64, scale: u32) -> i128 {
    (rate * 10f64.powi(scale as i32)).round() as i128
}
