//! `validate-model` and `sweep`: single-layer cells, analytical against
//! simulated delay.

use nc_toolkit::amc::{LayerModel, SystematicAccounting};
use nc_toolkit::codec::Scheme;
use nc_toolkit::gf::FieldSpec;
use nc_toolkit::rng::derive_seed;
use nc_toolkit::sim::simulate_single_layer;
use serde::Serialize;

use super::Context;
use crate::grid::{self, ModelCell};
use crate::output::{ensure_dir, write_csv};
use crate::CliError;

pub const DEFAULT_VALIDATION_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
struct ValidationRow {
    scheme: Scheme,
    k: usize,
    q: u32,
    p_zero: f64,
    per: f64,
    tau_analytic: f64,
    tau_sim_mean: f64,
    tau_sim_se: f64,
    gap: f64,
    rel_gap: f64,
    ops_mean: f64,
    ops_se: f64,
    trials: usize,
    tau_analytic_s: f64,
    tau_sim_mean_s: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    scheme: Scheme,
    k: usize,
    q: u32,
    p_zero: f64,
    per: f64,
    metric: &'static str,
    mean: f64,
    se: f64,
    trials: usize,
}

fn cell_seed(seed: u64, cell: &ModelCell, pruned: bool) -> u64 {
    let scheme = Scheme::ALL.iter().position(|s| *s == cell.scheme).unwrap_or(0) as u64;
    derive_seed(
        seed,
        &[
            cell.k as u64,
            cell.q as u64,
            cell.p_zero.to_bits(),
            cell.per.to_bits(),
            scheme,
            pruned as u64,
        ],
    )
}

fn evaluate(cell: &ModelCell, pruned: bool, trials: usize, seed: u64, rb: f64) -> Result<ValidationRow, CliError> {
    let field = FieldSpec::from_q(cell.q).map_err(|e| CliError::Usage(e.to_string()))?;
    // simulated delays count every transmitted packet, so the systematic
    // model is taken in the same units
    let tau_analytic = LayerModel::new(cell.k, cell.p_zero, cell.q, cell.per)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .tau_with(cell.scheme, SystematicAccounting::AllSlots);
    let sim = simulate_single_layer(
        cell.k,
        cell.p_zero,
        field,
        cell.scheme,
        pruned,
        cell.per,
        trials,
        cell_seed(seed, cell, pruned),
    )?;
    let gap = tau_analytic - sim.delay.mean;
    Ok(ValidationRow {
        scheme: cell.scheme,
        k: cell.k,
        q: cell.q,
        p_zero: cell.p_zero,
        per: cell.per,
        tau_analytic,
        tau_sim_mean: sim.delay.mean,
        tau_sim_se: sim.delay.se,
        gap,
        rel_gap: gap / sim.delay.mean,
        ops_mean: sim.ops.mean,
        ops_se: sim.ops.se,
        trials,
        tau_analytic_s: tau_analytic * rb,
        tau_sim_mean_s: sim.delay.mean * rb,
    })
}

/// Axis values used when no `--grid` names that axis.
struct Defaults {
    q: &'static [u32],
    k: &'static [usize],
    p_zero: fn(u32) -> Vec<f64>,
    p_points: usize,
}

const VALIDATE_DEFAULTS: Defaults = Defaults {
    q: &[2, 256],
    k: &grid::DEFAULT_K,
    p_zero: |q| grid::default_sparsity_points(q, grid::DEFAULT_SPARSITY_POINTS),
    p_points: grid::DEFAULT_SPARSITY_POINTS,
};

const SWEEP_DEFAULTS: Defaults = Defaults {
    q: &[2],
    k: &[SWEEP_DEFAULT_K],
    p_zero: |q| vec![1.0 / q as f64],
    p_points: 1,
};

const SWEEP_DEFAULT_K: usize = 30;

fn cells(ctx: &Context, defaults: &Defaults) -> Result<Vec<ModelCell>, CliError> {
    let a = ctx.args;
    let scheme = a.scheme.unwrap_or(Scheme::SparseRlnc);
    if a.pruned && !scheme.is_sparse() {
        return Err(CliError::Usage(format!("{scheme} cannot be pruned")));
    }
    let qs = ctx.field_sizes(defaults.q);
    let budget = grid::cell_count(&a.grid, qs.len(), defaults.k.len(), defaults.p_points, 1);
    if budget > a.max_cells {
        return Err(CliError::Usage(format!(
            "grid has {budget} cells, more than --max-cells {}",
            a.max_cells
        )));
    }
    grid::expand(&a.grid, scheme, &qs, defaults.k, &defaults.p_zero, &[0.0]).map_err(CliError::Usage)
}

fn rows(ctx: &Context, defaults: &Defaults) -> Result<(Vec<ValidationRow>, usize), CliError> {
    let cells = cells(ctx, defaults)?;
    let trials = ctx.args.trials.unwrap_or(DEFAULT_VALIDATION_TRIALS);
    let rb = ctx.rb_duration_s();
    let rows = cells
        .iter()
        .map(|c| evaluate(c, ctx.args.pruned, trials, ctx.seed(), rb))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((rows, trials))
}

pub fn validate(ctx: &Context) -> Result<(), CliError> {
    let (rows, trials) = rows(ctx, &VALIDATE_DEFAULTS)?;
    ensure_dir(&ctx.args.out)?;
    let path = write_csv(
        &ctx.args.out,
        "validation.csv",
        &ctx.manifest(Some(trials), vec![]),
        &rows,
    )?;
    let worst = rows.iter().map(|r| r.rel_gap).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{} cells, max relative gap {worst:.4}, written to {}",
        rows.len(),
        path.display()
    );
    Ok(())
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    if ctx.args.grid.is_empty() {
        return Err(CliError::Usage("sweep needs at least one --grid".into()));
    }
    let (rows, trials) = rows(ctx, &SWEEP_DEFAULTS)?;
    let mut long = Vec::with_capacity(rows.len() * 4);
    for r in &rows {
        let row = |metric, mean, se| SweepRow {
            scheme: r.scheme,
            k: r.k,
            q: r.q,
            p_zero: r.p_zero,
            per: r.per,
            metric,
            mean,
            se,
            trials: r.trials,
        };
        long.push(row("tau_analytic", r.tau_analytic, 0.0));
        long.push(row("tau_sim", r.tau_sim_mean, r.tau_sim_se));
        long.push(row("gap", r.gap, r.tau_sim_se));
        long.push(row("ops", r.ops_mean, r.ops_se));
    }
    ensure_dir(&ctx.args.out)?;
    let path = write_csv(&ctx.args.out, "sweep.csv", &ctx.manifest(Some(trials), vec![]), &long)?;
    println!("{} cells, written to {}", rows.len(), path.display());
    Ok(())
}
