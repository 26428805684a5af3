//! Closed-form delay model for one (user, layer) pair.
//!
//! A receiver's progress on a layer of `k` packets is an absorbing Markov
//! chain over the defect `i = k - rank` of its decoding matrix: state `k` is
//! the start, state 0 (layer recovered) is absorbing. A packet moves the chain
//! from `i` to `i - 1` when it is received and innovative. The probability that
//! a received packet fails to raise the rank from `t` is approximated by
//! `max(p, (1 - p)/(q - 1))^(k - t)`, exact for dense codes (`p = 1/q`) and an
//! upper bound otherwise.
//!
//! The transient part of the transition matrix is lower bidiagonal, so the
//! fundamental matrix has a closed form and expected absorption times reduce
//! to plain sums; [`fundamental_matrix_reference`] inverts `I - Q` explicitly
//! and is kept only as a test oracle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Scheme;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AmcError {
    #[error("invalid layer model: {0}")]
    InvalidModel(String),
    #[error("{what} = {value} outside valid range {range}")]
    Domain {
        what: &'static str,
        value: usize,
        range: String,
    },
    #[error("I - Q is singular")]
    SingularMatrix,
    #[error("reference fundamental matrix limited to k <= {max}, got {k}")]
    TooLarge { k: usize, max: usize },
}

/// Largest `k` accepted by [`fundamental_matrix_reference`].
pub const REFERENCE_MAX_K: usize = 512;

/// Parameters of one user's chain for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerModel {
    k: usize,
    p_zero: f64,
    q: u32,
    per: f64,
}

/// Expected transmissions to recover a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayResult {
    pub tau: f64,
    /// `tau_i` for `i = 0..=k`: expected coded transmissions from defect `i`.
    pub per_state_tau: Vec<f64>,
}

/// Where the S-RLNC sum starts. `FromOne` sums one term per rank increment
/// and agrees with the fundamental matrix; `FromZero` adds one extra
/// `1/[(1 - per)(1 - P^k)]` term for comparison with the zero-based sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SumStart {
    #[default]
    FromOne,
    FromZero,
}

/// How the source-packet phase of a systematic stream is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystematicAccounting {
    /// `k - i` received source packets plus `tau_i`. Erased source slots
    /// are not counted.
    #[default]
    ReceivedOnly,
    /// All `k` source slots plus `tau_i`, i.e. transmitted packets.
    AllSlots,
}

impl LayerModel {
    pub fn new(k: usize, p_zero: f64, q: u32, per: f64) -> Result<Self, AmcError> {
        if k == 0 {
            return Err(AmcError::InvalidModel("k must be at least 1".into()));
        }
        if !(p_zero > 0.0 && p_zero < 1.0) {
            return Err(AmcError::InvalidModel(format!(
                "p_zero must be in (0, 1), got {p_zero}"
            )));
        }
        if q < 2 {
            return Err(AmcError::InvalidModel(format!(
                "field size must be at least 2, got {q}"
            )));
        }
        if !(0.0..1.0).contains(&per) {
            return Err(AmcError::InvalidModel(format!("per must be in [0, 1), got {per}")));
        }
        Ok(LayerModel { k, p_zero, q, per })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p_zero(&self) -> f64 {
        self.p_zero
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn per(&self) -> f64 {
        self.per
    }

    /// `max(p, (1 - p)/(q - 1))`, the per-coefficient term of the bound.
    fn base(&self) -> f64 {
        self.p_zero.max((1.0 - self.p_zero) / (self.q as f64 - 1.0))
    }

    /// `1 - base^n`, accurate when `base^n` is close to one.
    fn one_minus_base_pow(&self, n: usize) -> f64 {
        -(n as f64 * self.base().ln()).exp_m1()
    }

    /// Expected transmissions per rank increment when `n` more are needed.
    fn step(&self, n: usize) -> f64 {
        1.0 / ((1.0 - self.per) * self.one_minus_base_pow(n))
    }

    /// Probability that a packet received at rank `t` is not innovative.
    pub fn rank_failure_prob(&self, t: usize) -> Result<f64, AmcError> {
        if t >= self.k {
            return Err(AmcError::Domain {
                what: "t",
                value: t,
                range: format!("0..={}", self.k - 1),
            });
        }
        Ok(self.base().powi((self.k - t) as i32))
    }

    /// One-step transition probability from defect `i` to defect `j`.
    pub fn transition_probability(&self, i: usize, j: usize) -> Result<f64, AmcError> {
        for (what, v) in [("i", i), ("j", j)] {
            if v > self.k {
                return Err(AmcError::Domain {
                    what,
                    value: v,
                    range: format!("0..={}", self.k),
                });
            }
        }
        if i == 0 {
            return Ok(if j == 0 { 1.0 } else { 0.0 });
        }
        // rank t = k - i, so the failure exponent k - t is i
        let fail = self.base().powi(i as i32);
        Ok(if i == j + 1 {
            self.one_minus_base_pow(i) * (1.0 - self.per)
        } else if i == j {
            fail * (1.0 - self.per) + self.per
        } else {
            0.0
        })
    }

    /// `tau_i` for every starting defect.
    pub fn per_state_tau(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..=self.k {
            acc += self.step(i);
            out.push(acc);
        }
        out
    }

    /// Non-systematic stream: the chain starts at defect `k`.
    pub fn tau_srlnc(&self) -> DelayResult {
        let per_state_tau = self.per_state_tau();
        DelayResult {
            tau: per_state_tau[self.k],
            per_state_tau,
        }
    }

    pub fn tau_srlnc_sum(&self, start: SumStart) -> f64 {
        let base = self.per_state_tau()[self.k];
        match start {
            SumStart::FromOne => base,
            SumStart::FromZero => base + self.step(self.k),
        }
    }

    /// Probability of defect `i` after the systematic phase (binomial in the
    /// number of erased source packets).
    pub fn systematic_start_distribution(&self) -> Vec<f64> {
        let k = self.k;
        if self.per == 0.0 {
            let mut v = vec![0.0; k + 1];
            v[0] = 1.0;
            return v;
        }
        let ln_p = self.per.ln();
        let ln_q = (-self.per).ln_1p();
        let mut ln_choose = 0.0f64;
        (0..=k)
            .map(|i| {
                if i > 0 {
                    ln_choose += ((k - i + 1) as f64).ln() - (i as f64).ln();
                }
                (ln_choose + i as f64 * ln_p + (k - i) as f64 * ln_q).exp()
            })
            .collect()
    }

    /// Systematic stream: `k - i` source packets received, then `tau_i`
    /// coded packets, averaged over the starting defect.
    pub fn tau_ssrlnc(&self) -> DelayResult {
        let per_state_tau = self.per_state_tau();
        let pi = self.systematic_start_distribution();
        let tau = pi
            .iter()
            .zip(&per_state_tau)
            .enumerate()
            .map(|(i, (p, t))| p * ((self.k - i) as f64 + t))
            .sum();
        DelayResult { tau, per_state_tau }
    }

    pub fn tau_ssrlnc_with(&self, accounting: SystematicAccounting) -> f64 {
        match accounting {
            SystematicAccounting::ReceivedOnly => self.tau_ssrlnc().tau,
            SystematicAccounting::AllSlots => {
                let per_state_tau = self.per_state_tau();
                let coded: f64 = self
                    .systematic_start_distribution()
                    .iter()
                    .zip(&per_state_tau)
                    .map(|(p, t)| p * t)
                    .sum();
                self.k as f64 + coded
            }
        }
    }

    pub fn tau(&self, scheme: Scheme) -> f64 {
        self.tau_with(scheme, SystematicAccounting::ReceivedOnly)
    }

    pub fn tau_with(&self, scheme: Scheme, accounting: SystematicAccounting) -> f64 {
        if scheme.is_systematic() {
            self.tau_ssrlnc_with(accounting)
        } else {
            self.tau_srlnc().tau
        }
    }
}

/// `(I - Q)^-1` over the transient states `1..=k` (row/column `i - 1` is
/// defect `i`), by explicit numerical inversion.
pub fn fundamental_matrix_reference(model: &LayerModel) -> Result<DMatrix<f64>, AmcError> {
    let k = model.k;
    if k > REFERENCE_MAX_K {
        return Err(AmcError::TooLarge {
            k,
            max: REFERENCE_MAX_K,
        });
    }
    let mut w = DMatrix::<f64>::identity(k, k);
    for i in 1..=k {
        for j in 1..=k {
            w[(i - 1, j - 1)] -= model.transition_probability(i, j)?;
        }
    }
    w.try_inverse().ok_or(AmcError::SingularMatrix)
}

/// Row sums of a fundamental matrix: `tau_i` for `i = 1..=k`.
pub fn absorption_times(n: &DMatrix<f64>) -> Vec<f64> {
    n.row_iter().map(|r| r.sum()).collect()
}

/// `Pr[X = r]` for the number of dense-code transmissions needed on an
/// erasure-free link (`p_zero = 1/q`, `per = 0`).
pub fn exact_dense_pmf(k: usize, q: u32, r: usize) -> Result<f64, AmcError> {
    if r < k {
        return Err(AmcError::Domain {
            what: "r",
            value: r,
            range: format!("{k}.."),
        });
    }
    let full_rank = |r: usize| -> f64 {
        let qf = q as f64;
        (0..k)
            .map(|i| (-(qf.powi(i as i32 - r as i32))).ln_1p())
            .sum::<f64>()
            .exp()
    };
    Ok(if r == k {
        full_rank(r)
    } else {
        full_rank(r) - full_rank(r - 1)
    })
}

/// `E[X] = sum r * Pr[X = r]`, truncated once the remaining mass is below
/// `tail`.
pub fn dense_pmf_mean(k: usize, q: u32, tail: f64) -> f64 {
    let mut mass = 0.0;
    let mut mean = 0.0;
    let mut r = k;
    while 1.0 - mass > tail {
        let p = exact_dense_pmf(k, q, r).expect("r >= k");
        mass += p;
        mean += r as f64 * p;
        r += 1;
        if r > k + 100_000 {
            break;
        }
    }
    mean
}
