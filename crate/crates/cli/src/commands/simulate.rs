use nc_toolkit::codec::trace::write_trace;
use nc_toolkit::codec::Scheme;
use nc_toolkit::sim::{footprint_ratio, run_experiment, trace_trial, AggregateMetrics, ExperimentPlan};
use serde::Serialize;

use super::allocate::{check_feasible, rows as allocation_rows, solve_both};
use super::Context;
use crate::output::{ensure_dir, write_csv, write_jsonl};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
struct FootprintRow {
    q: u32,
    scheme: Scheme,
    pruned: bool,
    user: usize,
    position_m: f64,
    level: usize,
    metric: &'static str,
    mean: f64,
    se: f64,
    trials: usize,
}

#[derive(Debug, Clone, Serialize)]
struct OmegaRow {
    q: u32,
    scheme: Scheme,
    pruned: bool,
    baseline: Scheme,
    user: usize,
    position_m: f64,
    level: usize,
    omega: f64,
}

#[derive(Debug, Clone, Serialize)]
struct CoverageRow {
    q: u32,
    scheme: Scheme,
    pruned: bool,
    level: usize,
    u_hat: usize,
    budget_packets: f64,
    budget_s: f64,
    reachable_users: usize,
    coverage: usize,
    coverage_3sigma: usize,
    stream_length_mean: f64,
    stream_length_se: f64,
    trials: usize,
}

#[derive(Debug, Clone, Serialize)]
struct OpsRow {
    q: u32,
    scheme: Scheme,
    pruned: bool,
    level: usize,
    metric: &'static str,
    mean: f64,
    se: f64,
    trials: usize,
}

/// One simulated configuration.
struct Run {
    scheme: Scheme,
    pruned: bool,
    metrics: AggregateMetrics,
}

/// `(scheme, pruned)` pairs to simulate for each scheme family.
fn runs_for(filter: Option<Scheme>, pruned_only: bool) -> Vec<(Scheme, bool)> {
    let families = match filter {
        Some(s) => vec![s.sparse()],
        None => vec![Scheme::SparseRlnc, Scheme::SparseSrlnc],
    };
    let mut out = Vec::new();
    for sparse in families {
        match filter {
            Some(s) if !s.is_sparse() => out.push((s, false)),
            _ => {
                out.push((sparse.dense(), false));
                if !pruned_only {
                    out.push((sparse, false));
                }
                out.push((sparse, true));
            }
        }
    }
    out
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let base = ctx.require_scenario()?;
    let a = ctx.args;
    let trials = a.trials.unwrap_or(base.trials);
    let seed = ctx.seed();
    let selected = runs_for(a.scheme, a.pruned);
    if a.trace_user.is_some_and(|u| u == 0 || u > base.user_count()) {
        return Err(CliError::Usage(format!(
            "--trace-user must be in 1..={}",
            base.user_count()
        )));
    }

    let mut alloc_rows = Vec::new();
    let mut footprint = Vec::new();
    let mut omega = Vec::new();
    let mut coverage = Vec::new();
    let mut ops = Vec::new();
    let mut traces = Vec::new();
    let mut infeasible = None;

    for q in ctx.field_sizes(&[]) {
        let mut scenario = base.clone();
        scenario.q = q;
        let users = scenario.resolve_users();
        let mut done: Vec<Run> = Vec::new();
        for family in [Scheme::SparseRlnc, Scheme::SparseSrlnc] {
            let family_runs: Vec<_> = selected.iter().filter(|(s, _)| s.sparse() == family).collect();
            if family_runs.is_empty() {
                continue;
            }
            let alloc = solve_both(&scenario, family)?;
            alloc_rows.extend(allocation_rows(&scenario, family, &alloc));
            if let Err(e) = check_feasible(q, family, &alloc) {
                infeasible.get_or_insert(e);
                continue;
            }
            for &&(scheme, pruned) in &family_runs {
                let solution = if scheme.is_sparse() {
                    &alloc.sparse
                } else {
                    &alloc.dense
                };
                let mut plan = ExperimentPlan::from_allocation(&scenario, solution, scheme, pruned)?;
                plan.trials = trials;
                plan.seed = seed;
                if let Some(u) = a.trace_user {
                    traces.push((q, scheme, pruned, trace_trial(&plan, 0, u - 1)?));
                }
                let metrics = run_experiment(&plan)?;
                done.push(Run {
                    scheme,
                    pruned,
                    metrics,
                });
            }
        }

        for r in &done {
            let m = &r.metrics;
            for (u, user) in users.iter().enumerate() {
                for level in 0..m.levels() {
                    let f = m.footprint[u][level];
                    let row = |metric, mean, se| FootprintRow {
                        q,
                        scheme: r.scheme,
                        pruned: r.pruned,
                        user: u + 1,
                        position_m: user.position_m,
                        level: level + 1,
                        metric,
                        mean,
                        se,
                        trials: m.trials,
                    };
                    footprint.push(row("footprint_packets", f.mean, f.se));
                    footprint.push(row(
                        "footprint_s",
                        scenario.packets_to_seconds(f.mean),
                        scenario.packets_to_seconds(f.se),
                    ));
                    footprint.push(row("censored_fraction", m.censored_fraction[u][level], 0.0));
                }
            }
            for level in 0..m.levels() {
                coverage.push(CoverageRow {
                    q,
                    scheme: r.scheme,
                    pruned: r.pruned,
                    level: level + 1,
                    u_hat: m.u_hat[level],
                    budget_packets: m.level_budget[level],
                    budget_s: scenario.packets_to_seconds(m.level_budget[level]),
                    reachable_users: m.reachable.iter().filter(|row| row[level]).count(),
                    coverage: m.coverage[level],
                    coverage_3sigma: m.coverage_3sigma[level],
                    stream_length_mean: m.stream_length[level].mean,
                    stream_length_se: m.stream_length[level].se,
                    trials: m.trials,
                });
                let row = |metric, s: nc_toolkit::stats::Summary| OpsRow {
                    q,
                    scheme: r.scheme,
                    pruned: r.pruned,
                    level: level + 1,
                    metric,
                    mean: s.mean,
                    se: s.se,
                    trials: m.trials,
                };
                ops.push(row("ops", m.ops[level]));
                ops.push(row("layer_ops", m.layer_ops[level]));
                ops.push(row("layer_forward_ops", m.layer_forward_ops[level]));
                ops.push(row("layer_backsub_ops", m.layer_backsub_ops[level]));
            }
            if r.scheme.is_sparse() {
                if let Some(dense) = done.iter().find(|d| d.scheme == r.scheme.dense()) {
                    let w = footprint_ratio(&r.metrics, &dense.metrics)?;
                    for (u, user) in users.iter().enumerate() {
                        for (level, &value) in w[u].iter().enumerate() {
                            omega.push(OmegaRow {
                                q,
                                scheme: r.scheme,
                                pruned: r.pruned,
                                baseline: dense.scheme,
                                user: u + 1,
                                position_m: user.position_m,
                                level: level + 1,
                                omega: value,
                            });
                        }
                    }
                    let last = m.levels() - 1;
                    let reduction = 1.0 - m.ops[last].mean / dense.metrics.ops[last].mean;
                    println!(
                        "q={q:<3} {:<8} pruned={:<5} ops reduction vs {}: {:.1}%",
                        r.scheme,
                        r.pruned,
                        dense.scheme,
                        100.0 * reduction
                    );
                }
            }
        }
    }

    ensure_dir(&a.out)?;
    let manifest = ctx.manifest(Some(trials), vec![]);
    write_csv(&a.out, "allocation.csv", &manifest, &alloc_rows)?;
    if let Some(e) = infeasible {
        return Err(e);
    }
    write_csv(&a.out, "footprint.csv", &manifest, &footprint)?;
    write_csv(&a.out, "omega.csv", &manifest, &omega)?;
    write_csv(&a.out, "coverage.csv", &manifest, &coverage)?;
    write_csv(&a.out, "ops.csv", &manifest, &ops)?;
    for (q, scheme, pruned, records) in traces {
        let name = format!("trace_q{q}_{scheme}{}.jsonl", if pruned { "_pruned" } else { "" });
        write_jsonl(&a.out, &name, &manifest, |w| write_trace(&records, w))?;
    }
    println!("results written to {}", a.out.display());
    Ok(())
}
