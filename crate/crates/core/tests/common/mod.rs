//! Independent oracles shared by integration and acceptance tests. Nothing
//! here calls the library's delay model or root finder.

#![allow(dead_code)]

use nc_toolkit::allocator::{LayerTargets, McsTable, SparsitySearch, StProblem, UserFeedback};
use nc_toolkit::amc::SystematicAccounting;
use nc_toolkit::codec::Scheme;
use rand::Rng;

pub const GRID_STEP: f64 = 1e-4;
pub const SPARSITY_CAP: f64 = 1.0 - 1e-6;

/// Expected transmissions from each defect `i = 0..=k` of a coded stream,
/// by first-step analysis of the defect chain.
pub fn coded_tau_by_state(k: usize, q: u32, p_zero: f64, per: f64) -> Vec<f64> {
    let base = p_zero.max((1.0 - p_zero) / (q as f64 - 1.0));
    let mut tau = vec![0.0; k + 1];
    for i in 1..=k {
        // rank k - i, so k - rank = i coefficients left undetermined
        let fail = base.powi(i as i32);
        let stay = fail * (1.0 - per) + per;
        let step = (1.0 - fail) * (1.0 - per);
        tau[i] = (1.0 + step * tau[i - 1]) / (1.0 - stay);
    }
    tau
}

/// Probability that `i` of `k` systematic packets are erased.
pub fn binomial_pmf(k: usize, per: f64) -> Vec<f64> {
    let mut out = vec![0.0; k + 1];
    let mut c = 1.0f64;
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = c * per.powi(i as i32) * (1.0 - per).powi((k - i) as i32);
        c = c * (k - i) as f64 / (i + 1) as f64;
    }
    out
}

pub fn tau(k: usize, q: u32, p_zero: f64, per: f64, scheme: Scheme, acc: SystematicAccounting) -> f64 {
    let coded = coded_tau_by_state(k, q, p_zero, per);
    if !matches!(scheme, Scheme::Srlnc | Scheme::SparseSrlnc) {
        return coded[k];
    }
    let pi = binomial_pmf(k, per);
    let tail: f64 = pi.iter().zip(&coded).map(|(w, t)| w * t).sum();
    match acc {
        SystematicAccounting::AllSlots => k as f64 + tail,
        SystematicAccounting::ReceivedOnly => {
            pi.iter().enumerate().map(|(i, w)| w * (k - i) as f64).sum::<f64>() + tail
        }
    }
}

/// Chosen `(m, p_zero)` per layer from exhaustive search over MCS and a
/// sparsity grid: the largest feasible grid `p` for each `m`, then the
/// largest `m`, restricted to `m >= m` of the last feasible layer.
pub fn brute_force(problem: &StProblem) -> Vec<Option<(usize, f64)>> {
    let q = problem.q;
    let dense = 1.0 / q as f64;
    let grid: Vec<f64> = match problem.search {
        SparsitySearch::DenseOnly => vec![dense],
        SparsitySearch::Optimize => (0..)
            .map(|j| dense + j as f64 * GRID_STEP)
            .take_while(|&p| p <= SPARSITY_CAP)
            .collect(),
    };
    let m_max = problem.mcs.len();
    let mut lower = 1;
    let mut out = Vec::new();
    for target in &problem.layers {
        let mut best = None;
        for m in (lower..=m_max).rev() {
            let covered = problem.feedback.iter().filter(|f| f.max_mcs >= m).count();
            if covered < target.u_hat {
                continue;
            }
            let k = (target.bits / problem.mcs.rate(m)).ceil() as usize;
            let p = grid
                .iter()
                .copied()
                .filter(|&p| tau(k, q, p, problem.p_hat, problem.scheme, problem.systematic) <= target.tau_hat)
                .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));
            if let Some(p) = p {
                best = Some((m, p));
                break;
            }
        }
        if let Some((m, _)) = best {
            lower = m;
        }
        out.push(best);
    }
    out
}

/// Random toy allocation problem with `U <= 10`, `M <= 6`, `L <= 4`.
pub fn random_toy(rng: &mut impl Rng) -> StProblem {
    let m_max = rng.gen_range(1..=6);
    let users = rng.gen_range(1..=10);
    let layers_n = rng.gen_range(1..=4);
    let mut rate = 0.0;
    let rates: Vec<f64> = (0..m_max)
        .map(|_| {
            rate += rng.gen_range(50.0..200.0);
            rate
        })
        .collect();
    let q = if rng.gen_bool(0.5) { 2 } else { 256 };
    let scheme = if rng.gen_bool(0.5) {
        Scheme::SparseRlnc
    } else {
        Scheme::SparseSrlnc
    };
    let p_hat = rng.gen_range(0.0..0.3);
    let feedback: Vec<UserFeedback> = (0..users)
        .map(|_| UserFeedback {
            max_mcs: rng.gen_range(0..=m_max),
        })
        .collect();
    let mut u_hat = rng.gen_range(1..=users + 1);
    let layers = (0..layers_n)
        .map(|_| {
            let bits = rng.gen_range(500.0..4000.0);
            let m_ref = rng.gen_range(1..=m_max);
            let k_ref = (bits / rates[m_ref - 1]).ceil();
            let tau_hat = k_ref * rng.gen_range(0.9..2.0) / (1.0 - p_hat);
            let t = LayerTargets { bits, tau_hat, u_hat };
            u_hat = rng.gen_range(1..=u_hat);
            t
        })
        .collect();
    StProblem {
        feedback,
        mcs: McsTable::new(rates).unwrap(),
        layers,
        q,
        p_hat,
        scheme,
        search: SparsitySearch::Optimize,
        systematic: SystematicAccounting::AllSlots,
    }
}
