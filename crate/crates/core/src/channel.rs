//! Scenario documents, user placement and packet erasures.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! format_version = 1
//! q = 2
//! p_hat = 0.1
//! rb_duration_s = 0.01
//! scheme = "s-rlnc"
//! pruned = false
//! trials = 1000
//! seed = 1
//! mcs_table = [100.0, 200.0, 300.0]   # r(m), bits per resource block
//!
//! [[layers]]
//! size_bits = 2000.0        # or size_kbytes (1 KByte = 8192 bits)
//! tau_hat = 50.0            # packets; or tau_hat_s in seconds
//! u_hat = 2
//!
//! [geometry]                # or an explicit [[users]] list
//! users = 3
//!
//! [synthetic_per]           # maps distance to the highest usable MCS
//! d0_m = 90.0
//! step_m = 11.0
//! ```
//!
//! Each `[[users]]` entry has a `position_m` and at most one of `per_curve`
//! (PER for every MCS) or `max_mcs`; entries with neither take their
//! `max_mcs` from `[synthetic_per]`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{derive_feedback, per_model, LayerTargets, McsTable, SparsitySearch, StProblem, UserFeedback};
use crate::amc::SystematicAccounting;
use crate::codec::Scheme;
use crate::gf::{FieldSpec, DEFAULT_POLYNOMIAL};
use crate::rng::StreamRng;

pub const FORMAT_VERSION: u32 = 1;
pub const BITS_PER_KBYTE: f64 = 8192.0;
pub const DEFAULT_FIRST_POSITION_M: f64 = 90.0;
pub const DEFAULT_SPACING_M: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub position_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_curve: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_mcs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub users: usize,
    #[serde(default = "default_first")]
    pub first_m: f64,
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
}

fn default_first() -> f64 {
    DEFAULT_FIRST_POSITION_M
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING_M
}

/// `M_u(d) = clamp(M - floor((d - d0) / step), 0, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPer {
    pub d0_m: f64,
    pub step_m: f64,
}

impl SyntheticPer {
    pub fn max_mcs(&self, distance_m: f64, m: usize) -> usize {
        let drop = ((distance_m - self.d0_m) / self.step_m).floor();
        (m as f64 - drop).clamp(0.0, m as f64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bits: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_kbytes: Option<f64>,
    /// Budget in packets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_hat: Option<f64>,
    /// Budget in seconds, converted with `rb_duration_s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_hat_s: Option<f64>,
    pub u_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub q: u32,
    #[serde(default = "default_polynomial")]
    pub reduction_polynomial: u16,
    pub p_hat: f64,
    pub rb_duration_s: f64,
    pub scheme: Scheme,
    #[serde(default)]
    pub pruned: bool,
    /// How the allocator budgets systematic streams.
    #[serde(default = "default_accounting")]
    pub systematic_accounting: SystematicAccounting,
    pub trials: usize,
    pub seed: u64,
    pub mcs_table: McsTable,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub users: Vec<UserSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_per: Option<SyntheticPer>,
}

fn default_accounting() -> SystematicAccounting {
    SystematicAccounting::AllSlots
}

fn default_polynomial() -> u16 {
    DEFAULT_POLYNOMIAL
}

/// A user with its position, its feedback and optionally a measured PER
/// curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedUser {
    pub position_m: f64,
    pub feedback: UserFeedback,
    pub per_curve: Option<Vec<f64>>,
}

impl ResolvedUser {
    /// PER seen in simulation at MCS `m`. Without a curve this is the
    /// allocator's own two-level model.
    pub fn per_at(&self, m: usize, p_hat: f64) -> f64 {
        match &self.per_curve {
            Some(c) => c[m - 1],
            None => per_model(m, self.feedback, p_hat),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(s)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ScenarioError::Version(self.format_version));
        }
        self.field()?;
        if !(0.0..1.0).contains(&self.p_hat) {
            return Err(invalid(format!("p_hat must be in [0, 1), got {}", self.p_hat)));
        }
        if self.rb_duration_s.is_nan() || self.rb_duration_s <= 0.0 {
            return Err(invalid("rb_duration_s must be positive"));
        }
        if self.layers.is_empty() {
            return Err(invalid("at least one layer is required"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.size_bits.is_some() == l.size_kbytes.is_some() {
                return Err(invalid(format!(
                    "layer {}: give exactly one of size_bits, size_kbytes",
                    i + 1
                )));
            }
            if l.tau_hat.is_some() == l.tau_hat_s.is_some() {
                return Err(invalid(format!(
                    "layer {}: give exactly one of tau_hat, tau_hat_s",
                    i + 1
                )));
            }
        }
        if self.users.is_empty() == self.geometry.is_none() {
            return Err(invalid("give exactly one of [[users]] or [geometry]"));
        }
        let m = self.mcs_table.len();
        for (i, u) in self.users.iter().enumerate() {
            match (&u.per_curve, u.max_mcs) {
                (Some(_), Some(_)) => {
                    return Err(invalid(format!("user {i}: per_curve and max_mcs are exclusive")));
                }
                (Some(c), None) => {
                    if c.len() != m || c.iter().any(|p| !(0.0..=1.0).contains(p)) {
                        return Err(invalid(format!("user {i}: per_curve needs {m} entries in [0, 1]")));
                    }
                }
                (None, Some(mu)) if mu > m => {
                    return Err(invalid(format!("user {i}: max_mcs {mu} exceeds {m}")));
                }
                (None, None) if self.synthetic_per.is_none() => {
                    return Err(invalid(format!("user {i}: no PER source and no [synthetic_per]")));
                }
                _ => {}
            }
        }
        if let Some(g) = &self.geometry {
            if g.users == 0 {
                return Err(invalid("geometry.users must be at least 1"));
            }
            if self.synthetic_per.is_none() {
                return Err(invalid("[geometry] requires [synthetic_per]"));
            }
        }
        if let Some(s) = &self.synthetic_per {
            if s.step_m.is_nan() || s.step_m <= 0.0 {
                return Err(invalid("synthetic_per.step_m must be positive"));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> Result<FieldSpec, ScenarioError> {
        FieldSpec::new(self.q, self.reduction_polynomial).map_err(|e| invalid(e.to_string()))
    }

    pub fn user_count(&self) -> usize {
        match &self.geometry {
            Some(g) => g.users,
            None => self.users.len(),
        }
    }

    pub fn resolve_users(&self) -> Vec<ResolvedUser> {
        let m = self.mcs_table.len();
        let synthetic = |d: f64| {
            let s = self.synthetic_per.expect("validated");
            UserFeedback {
                max_mcs: s.max_mcs(d, m),
            }
        };
        match &self.geometry {
            Some(g) => (0..g.users)
                .map(|i| {
                    let d = g.first_m + g.spacing_m * i as f64;
                    ResolvedUser {
                        position_m: d,
                        feedback: synthetic(d),
                        per_curve: None,
                    }
                })
                .collect(),
            None => self
                .users
                .iter()
                .map(|u| {
                    let feedback = match (&u.per_curve, u.max_mcs) {
                        (Some(c), _) => derive_feedback(c, self.p_hat),
                        (None, Some(max_mcs)) => UserFeedback { max_mcs },
                        (None, None) => synthetic(u.position_m),
                    };
                    ResolvedUser {
                        position_m: u.position_m,
                        feedback,
                        per_curve: u.per_curve.clone(),
                    }
                })
                .collect(),
        }
    }

    pub fn layer_targets(&self) -> Vec<LayerTargets> {
        self.layers
            .iter()
            .map(|l| LayerTargets {
                bits: l
                    .size_bits
                    .unwrap_or_else(|| l.size_kbytes.unwrap_or(0.0) * BITS_PER_KBYTE),
                tau_hat: l
                    .tau_hat
                    .unwrap_or_else(|| (l.tau_hat_s.unwrap_or(0.0) / self.rb_duration_s).round()),
                u_hat: l.u_hat,
            })
            .collect()
    }

    pub fn st_problem(&self, scheme: Scheme, search: SparsitySearch) -> StProblem {
        StProblem {
            feedback: self.resolve_users().iter().map(|u| u.feedback).collect(),
            mcs: self.mcs_table.clone(),
            layers: self.layer_targets(),
            q: self.q,
            p_hat: self.p_hat,
            scheme,
            search,
            systematic: self.systematic_accounting,
        }
    }

    pub fn packets_to_seconds(&self, n: f64) -> f64 {
        packets_to_seconds(n, self.rb_duration_s)
    }
}

/// Positions `90, 92, ..., 90 + 2(U - 1)` metres.
pub fn build_default_geometry(users: usize) -> Vec<f64> {
    (0..users)
        .map(|i| DEFAULT_FIRST_POSITION_M + DEFAULT_SPACING_M * i as f64)
        .collect()
}

/// One resource block carries one coded packet per layer.
pub fn packets_to_seconds(n: f64, rb_duration_s: f64) -> f64 {
    n * rb_duration_s
}

/// I.i.d. Bernoulli packet erasures.
#[derive(Debug, Clone)]
pub struct ErasureProcess {
    per: f64,
    rng: StreamRng,
}

impl ErasureProcess {
    pub fn new(per: f64, rng: StreamRng) -> Self {
        ErasureProcess { per, rng }
    }

    pub fn per(&self) -> f64 {
        self.per
    }

    /// Always consumes one draw, so a user's erasure sequence does not
    /// depend on its PER.
    pub fn erase(&mut self) -> bool {
        self.rng.gen::<f64>() < self.per
    }
}
