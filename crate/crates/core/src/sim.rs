//! Monte Carlo multicast sessions.
//!
//! One trial sends every layer on its own stream (layers use disjoint
//! subchannels, so they are simulated independently). All users of a layer
//! see the same coded packets; each user erases them independently and feeds
//! the survivors to its own decoder. A user's delay is the index of the
//! packet that completes its decoding, counting erased packets and, in
//! non-pruned mode, all-zero packets.
//!
//! Erasure draws are consumed only for packets with a nonzero coding vector.
//! A pruned stream is the non-pruned stream with its all-zero packets
//! removed, so with shared seeds every user receives the same nonzero packets
//! in the same order in both modes and the pruned delay can never be larger.
//!
//! Seeds are derived from `(seed, trial, layer)` for the packet stream and
//! `(seed, trial, layer, user)` for erasures, independent of the scheme and
//! sparsity, so different schemes are compared on common random numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::AllocationSolution;
use crate::channel::Scenario;
use crate::codec::trace::TraceRecord;
use crate::codec::{CodecError, Decoder, Encoder, OpCounting, PacketStreamConfig, Scheme, SparsityParams};
use crate::gf::{Field, FieldSpec};
use crate::rng::{self, derive_seed};
use crate::stats::{Accumulator, Summary};

pub const DEFAULT_PACKET_CAP: u64 = 1_000_000;

const CODING_STREAM: u64 = 0;
const ERASURE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("layer {layer}: stream exceeded {cap} packets")]
    RuntimeLimit { layer: usize, cap: u64 },
    #[error("layer {layer}: only {reachable} users can receive it, {u_hat} required")]
    Unreachable {
        layer: usize,
        reachable: usize,
        u_hat: usize,
    },
    #[error("layer {0} has no feasible allocation")]
    InfeasibleLayer(usize),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// When a layer's stream stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop once `u_hat` users have recovered; the rest are censored at the
    /// stream end.
    AtCoverage,
    /// Keep sending until every user with PER < 1 has recovered. Only users
    /// that can never decode are censored. `stream_length` still reports the
    /// packet at which `u_hat` users had recovered.
    #[default]
    AllReachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub k: usize,
    pub p_zero: f64,
    pub u_hat: usize,
    pub tau_hat: f64,
}

/// Everything a simulation needs, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub field: FieldSpec,
    pub scheme: Scheme,
    pub pruned: bool,
    pub counting: OpCounting,
    pub stop: StopRule,
    pub layers: Vec<LayerPlan>,
    /// PER per user per layer.
    pub per: Vec<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub packet_cap: u64,
}

impl ExperimentPlan {
    /// Plan for simulating `solution` on `scenario` with `scheme`. The PER
    /// of every user on layer `l` is taken at the layer's chosen MCS.
    pub fn from_allocation(
        scenario: &Scenario,
        solution: &AllocationSolution,
        scheme: Scheme,
        pruned: bool,
    ) -> Result<Self, SimError> {
        let field = scenario.field().map_err(|e| SimError::InvalidPlan(e.to_string()))?;
        let targets = scenario.layer_targets();
        let mut layers = Vec::with_capacity(targets.len());
        let mut mcs = Vec::with_capacity(targets.len());
        for (t, a) in targets.iter().zip(&solution.layers) {
            let (Some(m), Some(p_zero), Some(k)) = (a.m, a.p_zero, a.k) else {
                return Err(SimError::InfeasibleLayer(a.layer));
            };
            mcs.push(m);
            layers.push(LayerPlan {
                k,
                p_zero,
                u_hat: t.u_hat,
                tau_hat: t.tau_hat,
            });
        }
        let per = scenario
            .resolve_users()
            .iter()
            .map(|u| mcs.iter().map(|&m| u.per_at(m, scenario.p_hat)).collect())
            .collect();
        Ok(ExperimentPlan {
            field,
            scheme,
            pruned,
            counting: OpCounting::CoefficientsOnly,
            stop: StopRule::default(),
            layers,
            per,
            trials: scenario.trials,
            seed: scenario.seed,
            packet_cap: DEFAULT_PACKET_CAP,
        })
    }

    pub fn users(&self) -> usize {
        self.per.len()
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidPlan(m));
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        if self.per.is_empty() {
            return bad("no users".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        for (u, row) in self.per.iter().enumerate() {
            if row.len() != self.layers.len() {
                return bad(format!(
                    "user {u}: {} PER values for {} layers",
                    row.len(),
                    self.layers.len()
                ));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return bad(format!("user {u}: PER outside [0, 1]"));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.u_hat == 0 || layer.u_hat > self.users() {
                return bad(format!("layer {}: u_hat {} out of range", l + 1, layer.u_hat));
            }
            self.stream_config(l, 0)?;
        }
        Ok(())
    }

    fn stream_config(&self, layer: usize, seed: u64) -> Result<PacketStreamConfig, SimError> {
        let l = &self.layers[layer];
        let sparsity = SparsityParams::new(l.p_zero, l.k, self.field)?;
        Ok(PacketStreamConfig::new(self.scheme, self.pruned, sparsity, seed)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UserOutcome {
    pub delay_packets: u64,
    pub ops: u64,
    pub forward_ops: u64,
    pub backsub_ops: u64,
    /// The user had not recovered the layer when the stream stopped.
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionResult {
    pub users: Vec<UserOutcome>,
    /// Packets sent until `u_hat` users had recovered.
    pub stream_length: u64,
    /// Packets actually sent.
    pub packets_sent: u64,
}

struct Receiver {
    decoder: Decoder,
    erasures: rng::StreamRng,
    per: f64,
    done: Option<u64>,
}

/// Simulates layer `layer` (0-based) of trial `trial`.
pub fn run_layer_session(plan: &ExperimentPlan, trial: u64, layer: usize) -> Result<SessionResult, SimError> {
    let field = Field::new(plan.field);
    session(plan, &field, trial, layer, None)
}

fn session(
    plan: &ExperimentPlan,
    field: &Field,
    trial: u64,
    layer: usize,
    mut trace: Option<(usize, &mut Vec<TraceRecord>)>,
) -> Result<SessionResult, SimError> {
    let l = &plan.layers[layer];
    let lid = layer as u64;
    let config = plan.stream_config(layer, derive_seed(plan.seed, &[trial, lid, CODING_STREAM]))?;
    let mut encoder = Encoder::new(config)?;

    let mut receivers: Vec<Receiver> = plan
        .per
        .iter()
        .enumerate()
        .map(|(u, row)| Receiver {
            decoder: Decoder::with_field(l.k, field, plan.counting),
            erasures: rng::stream(plan.seed, &[trial, lid, ERASURE_STREAM, u as u64]),
            per: row[layer],
            done: None,
        })
        .collect();
    let reachable = receivers.iter().filter(|r| r.per < 1.0).count();
    if reachable < l.u_hat {
        return Err(SimError::Unreachable {
            layer: layer + 1,
            reachable,
            u_hat: l.u_hat,
        });
    }
    let target = match plan.stop {
        StopRule::AtCoverage => l.u_hat,
        StopRule::AllReachable => reachable,
    };

    let mut recovered = 0;
    let mut stream_length = None;
    let mut sent = 0u64;
    while recovered < target {
        if sent >= plan.packet_cap {
            return Err(SimError::RuntimeLimit {
                layer: layer + 1,
                cap: plan.packet_cap,
            });
        }
        let packet = encoder.next_packet();
        sent += 1;
        let zero = packet.vector.is_zero();
        for (u, r) in receivers.iter_mut().enumerate() {
            if r.done.is_some() || r.per >= 1.0 || zero {
                continue;
            }
            let erased = rand::Rng::gen::<f64>(&mut r.erasures) < r.per;
            if let Some((tu, records)) = trace.as_mut() {
                if *tu == u {
                    records.push(TraceRecord::new(layer + 1, packet.index, &packet.vector, erased));
                }
            }
            if erased {
                continue;
            }
            r.decoder.insert(&packet.vector)?;
            if r.decoder.is_complete() {
                r.decoder.finish();
                r.done = Some(sent);
                recovered += 1;
                if recovered == l.u_hat {
                    stream_length = Some(sent);
                }
            }
        }
        if zero {
            if let Some((_, records)) = trace.as_mut() {
                records.push(TraceRecord::new(layer + 1, packet.index, &packet.vector, false));
            }
        }
    }
    let stream_length = stream_length.unwrap_or(sent);

    let users = receivers
        .iter()
        .map(|r| match r.done {
            Some(delay) => UserOutcome {
                delay_packets: delay,
                ops: r.decoder.op_count(),
                forward_ops: r.decoder.forward_ops(),
                backsub_ops: r.decoder.backsub_ops(),
                censored: false,
            },
            None => UserOutcome {
                delay_packets: sent,
                ops: r.decoder.op_count(),
                forward_ops: r.decoder.forward_ops(),
                backsub_ops: r.decoder.backsub_ops(),
                censored: true,
            },
        })
        .collect();
    Ok(SessionResult {
        users,
        stream_length,
        packets_sent: sent,
    })
}

/// Re-runs one trial, recording every packet as seen by `user`.
pub fn trace_trial(plan: &ExperimentPlan, trial: u64, user: usize) -> Result<Vec<TraceRecord>, SimError> {
    plan.validate()?;
    if user >= plan.users() {
        return Err(SimError::InvalidPlan(format!("no user {user}")));
    }
    let field = Field::new(plan.field);
    let mut records = Vec::new();
    for layer in 0..plan.layers.len() {
        session(plan, &field, trial, layer, Some((user, &mut records)))?;
    }
    Ok(records)
}

/// Per-user, per-QoS-level results averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub trials: usize,
    /// `sum_{t <= l} tau_hat_t` per level.
    pub level_budget: Vec<f64>,
    pub u_hat: Vec<usize>,
    /// Mean delay per user per layer.
    pub layer_delay: Vec<Vec<Summary>>,
    /// Transmission footprint per user per level: cumulative delay over
    /// layers `1..=l`.
    pub footprint: Vec<Vec<Summary>>,
    /// Fraction of trials in which the user was censored on some layer
    /// `<= l`.
    pub censored_fraction: Vec<Vec<f64>>,
    /// Whether the user has PER < 1 on every layer `<= l`.
    pub reachable: Vec<Vec<bool>>,
    /// Decoding operations per layer, averaged over recovering users.
    pub layer_ops: Vec<Summary>,
    pub layer_forward_ops: Vec<Summary>,
    pub layer_backsub_ops: Vec<Summary>,
    /// Operations to reach each level, `sum_{t <= l}` of the layer means.
    pub ops: Vec<Summary>,
    pub stream_length: Vec<Summary>,
    /// Reachable users whose mean footprint is within the level budget.
    pub coverage: Vec<usize>,
    /// As `coverage`, allowing the mean to exceed the budget by up to three
    /// standard errors.
    pub coverage_3sigma: Vec<usize>,
}

impl AggregateMetrics {
    pub fn levels(&self) -> usize {
        self.level_budget.len()
    }

    pub fn users(&self) -> usize {
        self.footprint.len()
    }
}

fn run_trial(plan: &ExperimentPlan, field: &Field, trial: u64) -> Result<Vec<SessionResult>, SimError> {
    (0..plan.layers.len())
        .map(|l| session(plan, field, trial, l, None))
        .collect()
}

/// Runs `plan.trials` independent trials on the rayon pool and reduces them
/// in trial order.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<AggregateMetrics, SimError> {
    plan.validate()?;
    let field = Field::new(plan.field);
    let results: Vec<Vec<SessionResult>> = (0..plan.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(plan, &field, t))
        .collect::<Result<_, _>>()?;
    Ok(aggregate(plan, &results))
}

fn aggregate(plan: &ExperimentPlan, results: &[Vec<SessionResult>]) -> AggregateMetrics {
    let n_layers = plan.layers.len();
    let n_users = plan.users();
    let trials = results.len();

    let mut layer_delay = vec![vec![Accumulator::new(); n_layers]; n_users];
    let mut footprint = vec![vec![Accumulator::new(); n_layers]; n_users];
    let mut censored = vec![vec![0usize; n_layers]; n_users];
    let mut layer_ops = vec![Accumulator::new(); n_layers];
    let mut layer_fwd = vec![Accumulator::new(); n_layers];
    let mut layer_back = vec![Accumulator::new(); n_layers];
    let mut ops = vec![Accumulator::new(); n_layers];
    let mut stream_length = vec![Accumulator::new(); n_layers];

    for trial in results {
        let mut level_ops = 0.0;
        for (l, s) in trial.iter().enumerate() {
            stream_length[l].push(s.stream_length as f64);
            let mut sums = (0.0, 0.0, 0.0, 0usize);
            for o in s.users.iter().filter(|o| !o.censored) {
                sums.0 += o.ops as f64;
                sums.1 += o.forward_ops as f64;
                sums.2 += o.backsub_ops as f64;
                sums.3 += 1;
            }
            let n = sums.3.max(1) as f64;
            layer_ops[l].push(sums.0 / n);
            layer_fwd[l].push(sums.1 / n);
            layer_back[l].push(sums.2 / n);
            level_ops += sums.0 / n;
            ops[l].push(level_ops);
        }
        for u in 0..n_users {
            let mut cumulative = 0.0;
            let mut any_censored = false;
            for l in 0..n_layers {
                let o = &trial[l].users[u];
                layer_delay[u][l].push(o.delay_packets as f64);
                cumulative += o.delay_packets as f64;
                footprint[u][l].push(cumulative);
                any_censored |= o.censored;
                if any_censored {
                    censored[u][l] += 1;
                }
            }
        }
    }

    let mut level_budget = Vec::with_capacity(n_layers);
    let mut budget = 0.0;
    for l in &plan.layers {
        budget += l.tau_hat;
        level_budget.push(budget);
    }
    let reachable: Vec<Vec<bool>> = plan
        .per
        .iter()
        .map(|row| {
            let mut ok = true;
            row.iter()
                .map(|&p| {
                    ok &= p < 1.0;
                    ok
                })
                .collect()
        })
        .collect();
    let footprint: Vec<Vec<Summary>> = footprint
        .iter()
        .map(|row| row.iter().map(Accumulator::summary).collect())
        .collect();
    let count = |slack: f64| -> Vec<usize> {
        (0..n_layers)
            .map(|l| {
                (0..n_users)
                    .filter(|&u| {
                        reachable[u][l] && footprint[u][l].mean - slack * footprint[u][l].se <= level_budget[l]
                    })
                    .count()
            })
            .collect()
    };
    let summaries = |v: &[Accumulator]| v.iter().map(Accumulator::summary).collect::<Vec<_>>();

    AggregateMetrics {
        trials,
        u_hat: plan.layers.iter().map(|l| l.u_hat).collect(),
        layer_delay: layer_delay
            .iter()
            .map(|row| row.iter().map(Accumulator::summary).collect())
            .collect(),
        censored_fraction: censored
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / trials as f64).collect())
            .collect(),
        coverage: count(0.0),
        coverage_3sigma: count(3.0),
        footprint,
        reachable,
        layer_ops: summaries(&layer_ops),
        layer_forward_ops: summaries(&layer_fwd),
        layer_backsub_ops: summaries(&layer_back),
        ops: summaries(&ops),
        stream_length: summaries(&stream_length),
        level_budget,
    }
}

/// `omega[u][l] = footprint_sparse / footprint_dense`.
pub fn footprint_ratio(sparse: &AggregateMetrics, dense: &AggregateMetrics) -> Result<Vec<Vec<f64>>, SimError> {
    if sparse.users() != dense.users() || sparse.levels() != dense.levels() {
        return Err(SimError::InvalidPlan(
            "footprint ratio needs matching user and level sets".into(),
        ));
    }
    Ok(sparse
        .footprint
        .iter()
        .zip(&dense.footprint)
        .map(|(s, d)| s.iter().zip(d).map(|(a, b)| a.mean / b.mean).collect())
        .collect())
}

/// Delay and decoding cost of one receiver on one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleLayerStats {
    pub delay: Summary,
    pub ops: Summary,
    pub forward_ops: Summary,
    pub backsub_ops: Summary,
}

/// Convenience wrapper for model validation: one user, one layer.
#[allow(clippy::too_many_arguments)]
pub fn simulate_single_layer(
    k: usize,
    p_zero: f64,
    field: FieldSpec,
    scheme: Scheme,
    pruned: bool,
    per: f64,
    trials: usize,
    seed: u64,
) -> Result<SingleLayerStats, SimError> {
    let plan = ExperimentPlan {
        field,
        scheme,
        pruned,
        counting: OpCounting::CoefficientsOnly,
        stop: StopRule::AllReachable,
        layers: vec![LayerPlan {
            k,
            p_zero,
            u_hat: 1,
            tau_hat: f64::INFINITY,
        }],
        per: vec![vec![per]],
        trials,
        seed,
        packet_cap: DEFAULT_PACKET_CAP,
    };
    let m = run_experiment(&plan)?;
    Ok(SingleLayerStats {
        delay: m.layer_delay[0][0],
        ops: m.layer_ops[0],
        forward_ops: m.layer_forward_ops[0],
        backsub_ops: m.layer_backsub_ops[0],
    })
}
