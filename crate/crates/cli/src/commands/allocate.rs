use nc_toolkit::allocator::{solve_st, AllocationSolution, Infeasibility, SparsitySearch};
use nc_toolkit::channel::Scenario;
use nc_toolkit::codec::Scheme;
use serde::Serialize;

use super::Context;
use crate::output::{ensure_dir, write_csv};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub(crate) struct AllocationRow {
    q: u32,
    scheme: Scheme,
    search: &'static str,
    layer: usize,
    m: Option<usize>,
    p_zero: Option<f64>,
    k: Option<usize>,
    feasible: bool,
    reason: Option<&'static str>,
    tau: Option<f64>,
    tau_s: Option<f64>,
    tau_hat: f64,
    tau_hat_s: f64,
    u_hat: usize,
    covered_users: usize,
}

/// Sparse and dense-baseline solutions for one field size.
pub(crate) struct Allocations {
    pub sparse: AllocationSolution,
    pub dense: AllocationSolution,
}

pub(crate) fn solve_both(scenario: &Scenario, scheme: Scheme) -> Result<Allocations, CliError> {
    let sparse = solve_st(&scenario.st_problem(scheme.sparse(), SparsitySearch::Optimize))?;
    let dense = solve_st(&scenario.st_problem(scheme.sparse(), SparsitySearch::DenseOnly))?;
    Ok(Allocations { sparse, dense })
}

pub(crate) fn rows(scenario: &Scenario, scheme: Scheme, alloc: &Allocations) -> Vec<AllocationRow> {
    let targets = scenario.layer_targets();
    let mut out = Vec::new();
    for (search, solution, scheme) in [
        ("optimize", &alloc.sparse, scheme.sparse()),
        ("dense-only", &alloc.dense, scheme.dense()),
    ] {
        for (l, t) in solution.layers.iter().zip(&targets) {
            out.push(AllocationRow {
                q: scenario.q,
                scheme,
                search,
                layer: l.layer,
                m: l.m,
                p_zero: l.p_zero,
                k: l.k,
                feasible: l.feasible,
                reason: l.infeasible.map(|r| match r {
                    Infeasibility::CoverageTooLarge => "coverage-too-large",
                    Infeasibility::DeadlineTooTight => "deadline-too-tight",
                }),
                tau: l.tau,
                tau_s: l.tau.map(|t| scenario.packets_to_seconds(t)),
                tau_hat: t.tau_hat,
                tau_hat_s: scenario.packets_to_seconds(t.tau_hat),
                u_hat: t.u_hat,
                covered_users: l.covered_users,
            });
        }
    }
    out
}

fn infeasible_layers(solution: &AllocationSolution) -> Vec<usize> {
    solution
        .layers
        .iter()
        .filter(|l| !l.feasible)
        .map(|l| l.layer)
        .collect()
}

pub(crate) fn check_feasible(q: u32, scheme: Scheme, alloc: &Allocations) -> Result<(), CliError> {
    let bad = infeasible_layers(&alloc.sparse);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!(
            "q={q} {scheme}: layers {bad:?} have no feasible MCS"
        )))
    }
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let base = ctx.require_scenario()?;
    let scheme = ctx.args.scheme.unwrap_or(base.scheme);
    let mut all_rows = Vec::new();
    let mut failure = None;
    for q in ctx.field_sizes(&[]) {
        let mut scenario = base.clone();
        scenario.q = q;
        let alloc = solve_both(&scenario, scheme)?;
        for r in rows(&scenario, scheme, &alloc) {
            println!(
                "q={:<3} {:<8} {:<10} layer {} m={:<4} p={:<10} k={:<5} feasible={}",
                r.q,
                r.scheme,
                r.search,
                r.layer,
                r.m.map_or("-".into(), |m| m.to_string()),
                r.p_zero.map_or("-".into(), |p| format!("{p:.6}")),
                r.k.map_or("-".into(), |k| k.to_string()),
                r.feasible
            );
            all_rows.push(r);
        }
        if let Err(e) = check_feasible(q, scheme, &alloc) {
            failure.get_or_insert(e);
        }
    }
    ensure_dir(&ctx.args.out)?;
    write_csv(&ctx.args.out, "allocation.csv", &ctx.manifest(None, vec![]), &all_rows)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
