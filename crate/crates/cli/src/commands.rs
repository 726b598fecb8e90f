//! Subcommand implementations; each returns the tables to write.

use rayon::prelude::*;
use ssep_core::diagnostics::{collect_ensemble, fourier_check, hydrodynamic_gap};
use ssep_core::evolution::{continuity_moduli, evolve_discrete_with, evolve_integral_form_with, DiscreteTrajectory, StepOptions};
use ssep_core::kernels::{a_coefficients, KernelTable};
use ssep_core::kmc::{ensemble_mean, RecordSpec};
use ssep_core::macroscopic::{boundary_flux_check, reconstruct_density, solve_boundary_traces, BoundaryTraces, MacroGrid};
use ssep_core::oracle::{evolve_law, marginal_expectations, GeneratorMatrix, LawVector};
use ssep_core::{DensityProfile, ModelParams};

use crate::config::{KernelChoice, RunConfig, Scheme, Subcommand};
use crate::error::CliError;
use crate::output::{Cell, Table};

/// Largest state count for which `oracle` also writes the full law.
const LAW_TABLE_LIMIT: usize = 4096;

pub fn run(cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    match cfg.subcommand {
        Subcommand::Simulate => simulate(cfg),
        Subcommand::Oracle => oracle(cfg),
        Subcommand::Evolve => evolve(cfg),
        Subcommand::Macro => macro_solve(cfg),
        Subcommand::Kernels => kernels(cfg),
        Subcommand::Fourier => fourier(cfg),
        Subcommand::Study => study(cfg),
    }
}

fn lattice(cfg: &RunConfig, n: usize) -> Result<(ModelParams, DensityProfile), CliError> {
    let params = ModelParams::new(n, cfg.k, cfg.j)?;
    let rho0 = DensityProfile::from_fn(&params, |r| cfg.init.eval(r))?;
    Ok((params, rho0))
}

fn k_u32(cfg: &RunConfig) -> Result<u32, CliError> {
    u32::try_from(cfg.k).map_err(|_| CliError::Config("k too large".into()))
}

fn site_rows(table: &mut Table, params: &ModelParams, t: f64, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        table.push(vec![t.into(), params.site(i).into(), (*v).into()]);
    }
}

fn simulate(cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    let (params, rho0) = lattice(cfg, cfg.n)?;
    let stats = ensemble_mean(&params, &rho0, &cfg.output_times(), cfg.replicas, cfg.seed)?;
    let mut table = Table::new("simulate", &["t", "x", "mean", "stderr"]);
    for ((t, means), errs) in stats.times.iter().zip(&stats.site_means).zip(&stats.site_stderrs) {
        for (i, (m, e)) in means.iter().zip(errs).enumerate() {
            table.push(vec![(*t).into(), params.site(i).into(), (*m).into(), (*e).into()]);
        }
    }
    Ok(vec![table])
}

fn oracle(cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    let (params, rho0) = lattice(cfg, cfg.n)?;
    let generator = GeneratorMatrix::build(&params)?;
    let initial = LawVector::product(&params, &rho0);
    let mut marginals = Table::new("oracle", &["t", "x", "rho"]);
    let mut law_table = Table::new("oracle_law", &["t", "state", "prob"]);
    let write_law = generator.num_states() <= LAW_TABLE_LIMIT;
    for t in cfg.output_times() {
        let law = evolve_law(&generator, &initial, t);
        site_rows(&mut marginals, &params, t, marginal_expectations(&law).values());
        if write_law {
            for (s, p) in law.probabilities().iter().enumerate() {
                law_table.push(vec![t.into(), (s as i64).into(), (*p).into()]);
            }
        }
    }
    marginals.note("states", generator.num_states());
    let mut out = vec![marginals];
    if write_law {
        law_table.note("state_encoding", "bit i is site i-N");
        out.push(law_table);
    }
    Ok(out)
}

fn trajectory(cfg: &RunConfig, params: &ModelParams, rho0: &DensityProfile, times: &[f64]) -> Result<DiscreteTrajectory, CliError> {
    let opts = StepOptions { max_step_eps2: cfg.dt };
    Ok(match cfg.scheme {
        Scheme::Splitting => evolve_discrete_with(params, rho0, cfg.t_final, times, opts)?,
        Scheme::Integral => evolve_integral_form_with(params, rho0, cfg.t_final, times, opts)?,
    })
}

fn evolve(cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    let (params, rho0) = lattice(cfg, cfg.n)?;
    let traj = trajectory(cfg, &params, &rho0, &cfg.output_times())?;
    let mut table = Table::new("evolve", &["t", "x", "rho"]);
    for (t, p) in traj.times.iter().zip(&traj.profiles) {
        site_rows(&mut table, &params, *t, p.values());
    }
    table.note("step", traj.step);
    table.note("clamped", traj.clamped);
    Ok(vec![table])
}

fn traces(cfg: &RunConfig, t_final: f64) -> Result<BoundaryTraces, CliError> {
    Ok(solve_boundary_traces(&cfg.init, cfg.j, k_u32(cfg)?, t_final, cfg.h)?)
}

/// Snaps times to the trace grid, rejecting ones that are not on it.
fn on_trace_grid(times: &[f64], h: f64) -> Result<Vec<f64>, CliError> {
    times
        .iter()
        .map(|&t| {
            let m = (t / h).round();
            if (m * h - t).abs() > 1e-9 * (1.0 + t) {
                Err(CliError::Config(format!("time {t} is not a multiple of h = {h}")))
            } else {
                Ok(m * h)
            }
        })
        .collect()
}

fn macro_solve(cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    let tr = traces(cfg, cfg.t_final)?;
    let grid = MacroGrid { r: MacroGrid::uniform(cfg.nr, 0.0, 1.0, 1).r, t: on_trace_grid(&cfg.output_times(), cfg.h)? };
    let sol = reconstruct_density(&tr, &cfg.init, &grid)?;

    let mut density = Table::new("macro", &["t", "r", "rho"]);
    for (t, row) in grid.t.iter().zip(&sol.rho) {
        for (r, v) in grid.r.iter().zip(row) {
            density.push(vec![(*t).into(), (*r).into(), (*v).into()]);
        }
    }
    let mut trace_table = Table::new("macro_traces", &["t", "u_plus", "u_minus"]);
    for ((t, up), um) in tr.times.iter().zip(&tr.u_plus).zip(&tr.u_minus) {
        trace_table.push(vec![(*t).into(), (*up).into(), (*um).into()]);
    }
    trace_table.note("max_iterations", tr.max_iterations);
    let mut flux = Table::new("macro_flux", &["t", "slope_plus", "flux_plus", "slope_minus", "flux_minus"]);
    for row in boundary_flux_check(&sol)? {
        flux.push(vec![row.t.into(), row.slope_plus.into(), row.flux_plus.into(), row.slope_minus.into(), row.flux_minus.into()]);
    }
    Ok(vec![density, trace_table, flux])
}

fn kernels(cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    let times: Vec<f64> = cfg.output_times().into_iter().filter(|&t| t > 0.0).collect();
    let table = match cfg.kind {
        KernelChoice::A => {
            let a = a_coefficients(cfg.k.max(1), None, cfg.tol);
            let mut t = Table::new("kernels_a", &["h", "a", "error", "tail"]);
            for h in 0..a.values.len() {
                t.push(vec![(h as i64).into(), a.values[h].into(), a.errors[h].into(), a.tails[h].into()]);
            }
            t.note("t_max", a.t_max);
            return Ok(vec![t]);
        }
        KernelChoice::Reflected => KernelTable::reflected(&ModelParams::new(cfg.n, cfg.k, cfg.j)?, &times, cfg.tol),
        KernelChoice::FullLine => KernelTable::full_line(1.0 / cfg.n as f64, &times, 2 * cfg.n as i64),
        KernelChoice::Neumann => KernelTable::neumann(&times, &MacroGrid::uniform(cfg.nr, 0.0, 1.0, 1).r),
        KernelChoice::Boundary => KernelTable::boundary(&times),
    };
    let mut t = Table::new("kernels", &["t", "x", "y", "value"]);
    for (tt, x, y, v) in &table.rows {
        t.push(vec![(*tt).into(), (*x).into(), (*y).into(), (*v).into()]);
    }
    t.note("kind", cfg.kind);
    t.note("max_images", table.max_images);
    t.note("row_sum_error", table.row_sum_error);
    Ok(vec![t])
}

fn fourier(cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    let (params, rho0) = lattice(cfg, cfg.n)?;
    let t = on_trace_grid(&[cfg.t_final], cfg.h)?[0];
    let eps = params.epsilon();
    let bonds: Vec<i64> = cfg.points.iter().filter(|r| r.abs() < 1.0).map(|r| (r / eps).floor() as i64).collect();
    let spec = RecordSpec { times: vec![t, t + cfg.window], tracked_bonds: bonds };
    let (ens, sol) = rayon::join(
        || collect_ensemble(&params, &rho0, &spec, cfg.replicas, cfg.seed),
        || -> Result<_, CliError> {
            let tr = traces(cfg, t)?;
            let grid = MacroGrid { r: MacroGrid::uniform(cfg.nr, 0.0, 1.0, 1).r, t: vec![t] };
            Ok(reconstruct_density(&tr, &cfg.init, &grid)?)
        },
    );
    let (ens, sol) = (ens?, sol?);
    let mut table = Table::new("fourier", &["estimator", "location", "microscopic", "stderr", "macroscopic", "gap"]);
    for row in fourier_check(&ens, &sol, &cfg.points, t, cfg.window)? {
        table.push(vec![
            row.estimator.as_str().into(),
            row.location.into(),
            row.microscopic.value.into(),
            row.microscopic.stderr.into(),
            row.macroscopic.into(),
            row.gap().into(),
        ]);
    }
    table.note("events", ens.events);
    Ok(vec![table])
}

fn study(cfg: &RunConfig) -> Result<Vec<Table>, CliError> {
    let times = on_trace_grid(&cfg.output_times(), cfg.h)?;
    let t_lo = times.iter().copied().find(|&t| t > 0.0).ok_or_else(|| CliError::Config("study needs a positive output time".into()))?;
    let t_hi = *times.last().unwrap();
    let tr = traces(cfg, t_hi)?;
    let rows: Vec<Result<Vec<Cell>, CliError>> = cfg
        .ladder
        .par_iter()
        .map(|&n| {
            let (params, rho0) = lattice(cfg, n)?;
            let traj = trajectory(cfg, &params, &rho0, &times)?;
            let eps = params.epsilon();
            let grid = MacroGrid { r: params.sites().map(|x| eps * x as f64).collect(), t: times.clone() };
            let sol = reconstruct_density(&tr, &cfg.init, &grid)?;
            let gap = hydrodynamic_gap(&traj, &sol, (t_lo, t_hi))?;
            let cont = continuity_moduli(&traj, t_lo, t_hi);
            Ok(vec![(n as i64).into(), gap.into(), cont.c_space.into(), cont.c_time.into()])
        })
        .collect();
    let mut table = Table::new("study", &["n", "hydro_gap", "c_space", "c_time"]);
    for row in rows {
        table.push(row?);
    }
    table.note("window", format!("{t_lo},{t_hi}"));
    Ok(vec![table])
}
