//! Geometric lower bounds for the mean steady-state occupancy.
//!
//! All bounds share the ratio function `r(rho, x) = (rho / x)^x` and hold for
//! integer levels `i >= 1 / rho0`, where `rho0` is the tightest admissible
//! load envelope of the model:
//!
//! * `prop1_bound` — the simple-process bound `r(rho, |S|)^i / |S|`, valid at
//!   every level;
//! * `thm1_bound` — the same shape driven by the flexibility metric `alpha`;
//! * `theta_bound` — the weighted generalization driven by `theta >= alpha`;
//! * `thm2_bound` — the dispatcher-degree bound driven by `beta`, with its
//!   load-dependent prefactor;
//! * `thm3_bound` — the pointwise maximum of the previous two.
//!
//! `lemma1_scan` numerically audits that `x -> r(rho, x)^k / x` is strictly
//! decreasing and convex on `[rho, x_max]`, the property that orders the
//! bounds among each other.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("r(rho, x) requires rho > 0 and x > 0, got rho={0}, x={1}")]
    RatioDomain(f64, f64),
    #[error("simple-process bound requires rho < s, got rho={0}, s={1}")]
    NotErgodicSimple(f64, usize),
    #[error("scan requires k >= 1/rho, got k={0}, rho={1}")]
    ScanThreshold(u32, f64),
    #[error("scan grid is degenerate: x_max={0} <= rho={1} or points={2} < 3")]
    DegenerateGrid(f64, f64, usize),
}

/// `r(rho, x) = (rho / x)^x`, evaluated as `exp(x (ln rho - ln x))`.
pub fn r(rho: f64, x: f64) -> Result<f64, BoundsError> {
    if !(rho > 0.0 && x > 0.0 && rho.is_finite() && x.is_finite()) {
        return Err(BoundsError::RatioDomain(rho, x));
    }
    Ok(log_r(rho, x).exp())
}

/// `ln r(rho, x)`; callers are expected to have validated the domain.
fn log_r(rho: f64, x: f64) -> f64 {
    x * (rho.ln() - x.ln())
}

/// Smallest integer level at which the metric-driven bounds are asserted:
/// `ceil(1 / rho0)`, with an epsilon snap so that loads like `1/3` whose
/// reciprocal lands a hair above an integer are not pushed one level up.
pub fn valid_from(rho0: f64) -> u32 {
    let raw = 1.0 / rho0;
    let snapped = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    };
    snapped.max(0.0) as u32
}

/// A bound value carried in both linear and log scale. `value` flushes to zero
/// below roughly `1e-300`; `log_value` stays exact there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub log_value: f64,
    pub valid: bool,
}

impl BoundValue {
    fn from_log(log_value: f64, valid: bool) -> Self {
        BoundValue {
            value: log_value.exp(),
            log_value,
            valid,
        }
    }
}

/// Simple-process bound `r(rho, s)^i / s`. Requires `rho < s` (ergodicity).
pub fn prop1_bound(rho: f64, s: usize, i: u32) -> Result<f64, BoundsError> {
    if !(rho > 0.0) || s == 0 {
        return Err(BoundsError::RatioDomain(rho, s as f64));
    }
    if rho >= s as f64 {
        return Err(BoundsError::NotErgodicSimple(rho, s));
    }
    Ok((i as f64 * log_r(rho, s as f64) - (s as f64).ln()).exp())
}

/// Alpha-driven bound `r(rho0, alpha)^i / alpha`.
///
/// `valid` requires both `i >= 1/rho0` and `alpha >= rho0` (the latter always
/// holds for ergodic models, where every dispatcher degree exceeds `rho0`).
pub fn thm1_bound(rho0: f64, alpha: f64, i: u32) -> BoundValue {
    parametric_bound(rho0, alpha, i)
}

/// Theta-driven bound `r(rho0, theta)^i / theta` for any admissible weighted
/// metric `theta >= alpha`. Same shape as `thm1_bound`, never larger.
pub fn theta_bound(rho0: f64, theta: f64, i: u32) -> BoundValue {
    parametric_bound(rho0, theta, i)
}

fn parametric_bound(rho0: f64, x: f64, i: u32) -> BoundValue {
    let log_value = i as f64 * log_r(rho0, x) - x.ln();
    let valid = x >= rho0 && i >= valid_from(rho0);
    BoundValue::from_log(log_value, valid)
}

/// Beta-driven bound
/// `[rho0 / (beta (beta + 1) + rho0)] r(rho0, beta + 1)^i / (beta + 1)`.
///
/// `valid` requires `i >= 1/rho0` and `beta + 1 >= rho0`; the latter is
/// automatic for ergodic models and flagged rather than extrapolated
/// otherwise.
pub fn thm2_bound(rho0: f64, beta: f64, i: u32) -> BoundValue {
    let prefactor = rho0 / (beta * (beta + 1.0) + rho0);
    let log_value =
        prefactor.ln() + i as f64 * log_r(rho0, beta + 1.0) - (beta + 1.0).ln();
    let valid = beta + 1.0 >= rho0 && i >= valid_from(rho0);
    BoundValue::from_log(log_value, valid)
}

/// Combined bound: the larger of `thm1_bound` and `thm2_bound`.
pub fn thm3_bound(rho0: f64, alpha: f64, beta: f64, i: u32) -> BoundValue {
    let a = thm1_bound(rho0, alpha, i);
    let b = thm2_bound(rho0, beta, i);
    let (value, log_value) = if a.log_value >= b.log_value {
        (a.value, a.log_value)
    } else {
        (b.value, b.log_value)
    };
    BoundValue {
        value,
        log_value,
        valid: a.valid && b.valid,
    }
}

/// Which closed form a [`BoundCurve`] evaluates, with its defining parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundKind {
    Prop1 { servers: usize },
    Thm1 { alpha: f64 },
    Thm1Theta { theta: f64 },
    Thm2 { beta: f64 },
    Thm3 { alpha: f64, beta: f64 },
}

/// A lower-bound curve over levels `0..=i_max`.
///
/// For the single-formula kinds successive values decay by the constant
/// factor `r(rho0, base)`; the combined kind is a pointwise maximum and only
/// piecewise geometric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub rho0: f64,
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
    pub valid_from: u32,
}

impl BoundCurve {
    pub fn new(kind: BoundKind, rho0: f64, i_max: u32) -> Result<Self, BoundsError> {
        let mut values = Vec::with_capacity(i_max as usize + 1);
        let mut log_values = Vec::with_capacity(i_max as usize + 1);
        let mut vf = valid_from(rho0);
        for i in 0..=i_max {
            let bv = match kind {
                BoundKind::Prop1 { servers } => {
                    let v = prop1_bound(rho0, servers, i)?;
                    vf = 0;
                    BoundValue {
                        value: v,
                        log_value: v.ln(),
                        valid: true,
                    }
                }
                BoundKind::Thm1 { alpha } => thm1_bound(rho0, alpha, i),
                BoundKind::Thm1Theta { theta } => theta_bound(rho0, theta, i),
                BoundKind::Thm2 { beta } => thm2_bound(rho0, beta, i),
                BoundKind::Thm3 { alpha, beta } => thm3_bound(rho0, alpha, beta, i),
            };
            values.push(bv.value);
            log_values.push(bv.log_value);
        }
        Ok(BoundCurve {
            kind,
            rho0,
            values,
            log_values,
            valid_from: vf,
        })
    }

    pub fn value_at(&self, i: u32) -> f64 {
        self.values[i as usize]
    }

    pub fn is_valid_at(&self, i: u32) -> bool {
        i >= self.valid_from
    }
}

/// Report of a monotonicity/convexity grid scan of `f(x) = r(rho, x)^k / x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub rho: f64,
    pub k: u32,
    pub x_max: f64,
    pub points: usize,
    pub decreasing: bool,
    pub convex: bool,
    /// Smallest forward decrease `f(x_j) - f(x_{j+1})` over the grid.
    pub worst_decrease: f64,
    /// Smallest second difference over the grid.
    pub worst_second_difference: f64,
}

/// Evaluates `f(x) = r(rho, x)^k / x` on a uniform grid over `[rho, x_max]`
/// and checks strict decrease and strictly positive second differences.
pub fn lemma1_scan(rho: f64, k: u32, x_max: f64, points: usize) -> Result<Lemma1Report, BoundsError> {
    if !(rho > 0.0) {
        return Err(BoundsError::RatioDomain(rho, x_max));
    }
    if (k as f64) < 1.0 / rho - 1e-12 {
        return Err(BoundsError::ScanThreshold(k, rho));
    }
    if !(x_max > rho) || points < 3 {
        return Err(BoundsError::DegenerateGrid(x_max, rho, points));
    }
    let h = (x_max - rho) / (points - 1) as f64;
    let f: Vec<f64> = (0..points)
        .map(|j| {
            let x = rho + h * j as f64;
            (k as f64 * log_r(rho, x) - x.ln()).exp()
        })
        .collect();
    let mut worst_decrease = f64::INFINITY;
    for w in f.windows(2) {
        worst_decrease = worst_decrease.min(w[0] - w[1]);
    }
    let mut worst_second = f64::INFINITY;
    for w in f.windows(3) {
        worst_second = worst_second.min(w[2] - 2.0 * w[1] + w[0]);
    }
    Ok(Lemma1Report {
        rho,
        k,
        x_max,
        points,
        decreasing: worst_decrease > 0.0,
        convex: worst_second > 0.0,
        worst_decrease,
        worst_second_difference: worst_second,
    })
}
