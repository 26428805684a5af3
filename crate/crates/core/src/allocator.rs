//! MCS and sparsity allocation for layered multicast.
//!
//! For each layer the allocator looks for the highest MCS index `m` that at
//! least `u_hat` users can decode (their reported `max_mcs >= m`), and the
//! sparsest code at that MCS whose modelled delay at PER `p_hat` stays within
//! the layer's transmission budget `tau_hat`. Because the modelled delay is
//! increasing in `p_zero`, the sparsest feasible code is the root of
//! `tau(p) = tau_hat`, found by bisection. Layers are handled in order and
//! `m` is kept non-decreasing across layers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amc::{LayerModel, SystematicAccounting};
use crate::codec::Scheme;

/// Upper end of the sparsity search interval is `1 - SPARSITY_CAP_DELTA`.
pub const SPARSITY_CAP_DELTA: f64 = 1e-6;
const ROOT_WIDTH: f64 = 1e-13;
const ROOT_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    #[error("MCS table must be non-empty")]
    EmptyMcsTable,
    #[error("MCS rates must be positive and strictly increasing (entry {0})")]
    NonMonotoneMcs(usize),
    #[error("layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("p_hat must be in [0, 1), got {0}")]
    InvalidPHat(f64),
    #[error("user {user} reports max_mcs {max_mcs} but the table has {m} entries")]
    FeedbackOutOfRange { user: usize, max_mcs: usize, m: usize },
}

/// Information bits per resource block for `m = 1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct McsTable {
    rates: Vec<f64>,
}

impl TryFrom<Vec<f64>> for McsTable {
    type Error = AllocError;

    fn try_from(v: Vec<f64>) -> Result<Self, AllocError> {
        McsTable::new(v)
    }
}

impl From<McsTable> for Vec<f64> {
    fn from(t: McsTable) -> Self {
        t.rates
    }
}

impl McsTable {
    pub fn new(rates: Vec<f64>) -> Result<Self, AllocError> {
        if rates.is_empty() {
            return Err(AllocError::EmptyMcsTable);
        }
        for (i, r) in rates.iter().enumerate() {
            let ok = r.is_finite() && *r > 0.0 && (i == 0 || *r > rates[i - 1]);
            if !ok {
                return Err(AllocError::NonMonotoneMcs(i + 1));
            }
        }
        Ok(McsTable { rates })
    }

    /// Number of MCS indices, `M`.
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// `r(m)` for 1-based `m`.
    pub fn rate(&self, m: usize) -> f64 {
        self.rates[m - 1]
    }

    /// `ceil(bits / r(m))`.
    pub fn layer_length(&self, bits: f64, m: usize) -> usize {
        (bits / self.rate(m)).ceil().max(1.0) as usize
    }
}

/// Highest acceptable MCS index reported by one user (0 = none).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFeedback {
    pub max_mcs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTargets {
    /// Layer size in bits.
    pub bits: f64,
    /// Maximum average transmissions to recover the layer.
    pub tau_hat: f64,
    /// Minimum number of users that must recover the layer.
    pub u_hat: usize,
}

/// PER used by the allocator: `p_hat` up to the user's reported MCS, 1 above.
pub fn per_model(m: usize, user: UserFeedback, p_hat: f64) -> f64 {
    if m <= user.max_mcs {
        p_hat
    } else {
        1.0
    }
}

/// Largest `m` whose PER, and every lower MCS's PER, is at most `p_hat`.
/// Taking the prefix maximum keeps the answer conservative when the curve is
/// not monotone.
pub fn derive_feedback(per_curve: &[f64], p_hat: f64) -> UserFeedback {
    let mut worst = 0.0f64;
    let mut max_mcs = 0;
    for (i, &p) in per_curve.iter().enumerate() {
        worst = worst.max(p);
        if worst <= p_hat {
            max_mcs = i + 1;
        } else {
            break;
        }
    }
    UserFeedback { max_mcs }
}

fn modelled_tau(k: usize, q: u32, p_zero: f64, per: f64, scheme: Scheme, accounting: SystematicAccounting) -> f64 {
    LayerModel::new(k, p_zero, q, per)
        .map(|m| m.tau_with(scheme, accounting))
        .unwrap_or(f64::INFINITY)
}

/// Largest sparsity `p` in `[1/q, 1 - delta]` with `tau(p) <= tau_hat`, or
/// `None` when even the dense code misses the budget. Systematic delays
/// count received source packets only; see [`solve_lsm_with`].
pub fn solve_lsm(k: usize, q: u32, per: f64, tau_hat: f64, scheme: Scheme) -> Option<f64> {
    solve_lsm_with(k, q, per, tau_hat, scheme, SystematicAccounting::ReceivedOnly)
}

pub fn solve_lsm_with(
    k: usize,
    q: u32,
    per: f64,
    tau_hat: f64,
    scheme: Scheme,
    accounting: SystematicAccounting,
) -> Option<f64> {
    if k == 0 || !(0.0..1.0).contains(&per) || tau_hat.is_nan() || tau_hat <= 0.0 {
        return None;
    }
    let tau = |p: f64| modelled_tau(k, q, p, per, scheme, accounting);
    let mut lo = 1.0 / q as f64;
    if tau(lo) > tau_hat {
        return None;
    }
    let mut hi = 1.0 - SPARSITY_CAP_DELTA;
    if tau(hi) <= tau_hat {
        return Some(hi);
    }
    // invariant: tau(lo) <= tau_hat < tau(hi)
    for _ in 0..200 {
        if hi - lo <= ROOT_WIDTH {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let t = tau(mid);
        if t <= tau_hat {
            lo = mid;
            if tau_hat - t <= ROOT_RESIDUAL {
                break;
            }
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Whether to optimize sparsity or pin every layer to the dense code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparsitySearch {
    #[default]
    Optimize,
    DenseOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StProblem {
    pub feedback: Vec<UserFeedback>,
    pub mcs: McsTable,
    pub layers: Vec<LayerTargets>,
    pub q: u32,
    pub p_hat: f64,
    pub scheme: Scheme,
    pub search: SparsitySearch,
    /// Systematic delays are budgeted in transmitted packets (`AllSlots`)
    /// unless told otherwise.
    pub systematic: SystematicAccounting,
}

impl StProblem {
    pub fn validate(&self) -> Result<(), AllocError> {
        if !(0.0..1.0).contains(&self.p_hat) {
            return Err(AllocError::InvalidPHat(self.p_hat));
        }
        for (user, f) in self.feedback.iter().enumerate() {
            if f.max_mcs > self.mcs.len() {
                return Err(AllocError::FeedbackOutOfRange {
                    user,
                    max_mcs: f.max_mcs,
                    m: self.mcs.len(),
                });
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            let bad = |reason: &str| AllocError::InvalidLayer {
                layer: i + 1,
                reason: reason.to_string(),
            };
            if l.bits.is_nan() || l.bits <= 0.0 {
                return Err(bad("size must be positive"));
            }
            if l.tau_hat.is_nan() || l.tau_hat <= 0.0 {
                return Err(bad("tau_hat must be positive"));
            }
            if l.u_hat == 0 {
                return Err(bad("u_hat must be at least 1"));
            }
            if i > 0 && l.u_hat > self.layers[i - 1].u_hat {
                return Err(bad("u_hat must be non-increasing across layers"));
            }
        }
        Ok(())
    }

    /// Modelled delay of a `k`-packet layer at sparsity `p_zero` and PER
    /// `p_hat`.
    pub fn tau(&self, k: usize, p_zero: f64) -> f64 {
        modelled_tau(k, self.q, p_zero, self.p_hat, self.scheme, self.systematic)
    }

    /// `|{u : max_mcs_u >= m}|`
    pub fn users_at(&self, m: usize) -> usize {
        self.feedback.iter().filter(|f| f.max_mcs >= m).count()
    }

    fn lsm(&self, k: usize, tau_hat: f64) -> Option<f64> {
        match self.search {
            SparsitySearch::Optimize => solve_lsm_with(k, self.q, self.p_hat, tau_hat, self.scheme, self.systematic),
            SparsitySearch::DenseOnly => {
                let p = 1.0 / self.q as f64;
                (self.tau(k, p) <= tau_hat).then_some(p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Infeasibility {
    /// Fewer than `u_hat` users can decode any admissible MCS.
    CoverageTooLarge,
    /// Even the dense code misses `tau_hat` at every admissible MCS.
    DeadlineTooTight,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerAllocation {
    /// 1-based layer index.
    pub layer: usize,
    pub m: Option<usize>,
    pub p_zero: Option<f64>,
    pub k: Option<usize>,
    /// Modelled delay at the chosen point.
    pub tau: Option<f64>,
    /// Users able to decode the chosen MCS.
    pub covered_users: usize,
    pub feasible: bool,
    pub infeasible: Option<Infeasibility>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationSolution {
    pub layers: Vec<LayerAllocation>,
}

impl AllocationSolution {
    pub fn all_feasible(&self) -> bool {
        self.layers.iter().all(|l| l.feasible)
    }
}

/// Solves every layer in order, restricting layer `l` to MCS indices at or
/// above the one chosen for layer `l - 1`.
pub fn solve_st(problem: &StProblem) -> Result<AllocationSolution, AllocError> {
    problem.validate()?;
    let m_max = problem.mcs.len();
    let mut lower = 1;
    let mut layers = Vec::with_capacity(problem.layers.len());
    for (i, target) in problem.layers.iter().enumerate() {
        let mut reason = Infeasibility::CoverageTooLarge;
        let mut chosen = None;
        for m in (lower..=m_max).rev() {
            let covered = problem.users_at(m);
            if covered < target.u_hat {
                continue;
            }
            reason = Infeasibility::DeadlineTooTight;
            let k = problem.mcs.layer_length(target.bits, m);
            if let Some(p) = problem.lsm(k, target.tau_hat) {
                chosen = Some((m, p, k, covered));
                break;
            }
        }
        layers.push(match chosen {
            Some((m, p, k, covered)) => {
                lower = m;
                LayerAllocation {
                    layer: i + 1,
                    m: Some(m),
                    p_zero: Some(p),
                    k: Some(k),
                    tau: Some(problem.tau(k, p)),
                    covered_users: covered,
                    feasible: true,
                    infeasible: None,
                }
            }
            None => LayerAllocation {
                layer: i + 1,
                m: None,
                p_zero: None,
                k: None,
                tau: None,
                covered_users: 0,
                feasible: false,
                infeasible: Some(reason),
            },
        });
    }
    Ok(AllocationSolution { layers })
}

/// Re-evaluates the per-layer constraints of a solution from scratch.
/// Returns a description of the first violated constraint.
pub fn recheck_feasibility(problem: &StProblem, solution: &AllocationSolution) -> Result<(), String> {
    let mut prev_m = 0;
    for (target, alloc) in problem.layers.iter().zip(&solution.layers) {
        let (Some(m), Some(p), Some(k)) = (alloc.m, alloc.p_zero, alloc.k) else {
            continue;
        };
        let l = alloc.layer;
        if m < prev_m {
            return Err(format!("layer {l}: MCS {m} below previous layer's {prev_m}"));
        }
        prev_m = m;
        if k != problem.mcs.layer_length(target.bits, m) {
            return Err(format!("layer {l}: k = {k} inconsistent with MCS {m}"));
        }
        let lo = 1.0 / problem.q as f64;
        if !(p >= lo - 1e-15 && p < 1.0) {
            return Err(format!("layer {l}: p_zero {p} outside [1/q, 1)"));
        }
        let covered = problem
            .feedback
            .iter()
            .filter(|f| per_model(m, **f, problem.p_hat) < 1.0)
            .count();
        if covered < target.u_hat {
            return Err(format!("layer {l}: {covered} users < u_hat {}", target.u_hat));
        }
        let tau = LayerModel::new(k, p, problem.q, problem.p_hat)
            .map_err(|e| e.to_string())?
            .tau_with(problem.scheme, problem.systematic);
        if tau > target.tau_hat {
            return Err(format!("layer {l}: tau {tau} > tau_hat {}", target.tau_hat));
        }
    }
    Ok(())
}
