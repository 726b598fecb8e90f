//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Set `ACCEPTANCE_ONLY=1,4,7`
//! to run a subset.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use ssep_core::diagnostics::{
    boundary_current_snapshot, bulk_current_counting, collect_ensemble, hydrodynamic_gap, macro_gradient, v_statistic,
    v_statistic_with_reference, Estimate,
};
use ssep_core::evolution::{continuity_moduli, evolve_discrete, evolve_integral_form, evolve_regularized, uniform_times};
use ssep_core::kernels::{a_coefficients, ImageKernel};
use ssep_core::kmc::{replica_rng, sample_product_measure, simulate, RecordSpec};
use ssep_core::macroscopic::{boundary_flux_check, reconstruct_density, solve_boundary_traces, MacroGrid};
use ssep_core::oracle::{evolve_law, marginal_expectations, v_function_exact, GeneratorMatrix, LawVector};
use ssep_core::{DensityProfile, InitialProfile, ModelParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn params(n: usize, k: usize, j: f64) -> ModelParams {
    ModelParams::new(n, k, j).expect("valid lattice")
}

fn profile(p: &ModelParams, u0: &InitialProfile) -> DensityProfile {
    DensityProfile::from_fn(p, |r| u0.eval(r)).expect("profile in [0,1]")
}

/// `a` is not larger than `b` up to twice their combined standard error.
fn not_larger(a: &Estimate, b: &Estimate) -> bool {
    a.value.abs() <= b.value.abs() + 2.0 * (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
}

fn simulator_exactness() -> Outcome {
    let p = params(3, 1, 1.0);
    let rho0 = profile(&p, &InitialProfile::Linear { a: 0.5, b: 0.35 });
    let replicas = 100_000u64;
    let times = [0.1, 1.0];
    let spec = RecordSpec { times: times.to_vec(), tracked_bonds: vec![] };
    let gen = GeneratorMatrix::build(&p).unwrap();
    let law0 = LawVector::product(&p, &rho0);
    let states = gen.num_states();
    let mut counts = vec![vec![0u64; states]; times.len()];
    for r in 0..replicas {
        let mut rng = replica_rng(2024, r);
        let config = sample_product_measure(&rho0, &p, &mut rng);
        let rec = simulate(&p, config, &spec, &mut rng).unwrap();
        for (ti, snap) in rec.snapshots.iter().enumerate() {
            let mask = snap.iter().enumerate().fold(0usize, |m, (i, &b)| m | ((b as usize) << i));
            counts[ti][mask] += 1;
        }
    }
    let mut pass = true;
    let mut detail = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let law = evolve_law(&gen, &law0, t);
        let exact = marginal_expectations(&law);
        let mut worst_z: f64 = 0.0;
        for (i, &e) in exact.values().iter().enumerate() {
            let hits: u64 = (0..states).filter(|s| (s >> i) & 1 == 1).map(|s| counts[ti][s]).sum();
            let m = hits as f64 / replicas as f64;
            let se = (m * (1.0 - m) / replicas as f64).sqrt();
            worst_z = worst_z.max((m - e).abs() / se);
        }
        // chi-square with cells of expected count below 5 pooled
        let probs = law.probabilities();
        let (mut stat, mut cells) = (0.0, 0usize);
        let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
        for (s, &q) in probs.iter().enumerate() {
            let expected = q * replicas as f64;
            let observed = counts[ti][s] as f64;
            if expected < 5.0 {
                pool_obs += observed;
                pool_exp += expected;
            } else {
                stat += (observed - expected).powi(2) / expected;
                cells += 1;
            }
        }
        if pool_exp > 0.0 {
            stat += (pool_obs - pool_exp).powi(2) / pool_exp.max(1e-300);
            cells += 1;
        }
        let critical = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.999);
        pass &= worst_z <= 4.0 && stat <= critical;
        detail.push(format!("t={t}: max|z|={worst_z:.2}, chi2={stat:.1} (crit {critical:.1}, {cells} cells)"));
    }
    outcome(pass, detail.join("; "))
}

fn kernel_identity() -> Outcome {
    let n = 16;
    let p = params(n, 1, 1.0);
    let size = p.num_sites();
    let rate = 0.5 * (n * n) as f64;
    let mut gen = DMatrix::<f64>::zeros(size, size);
    for i in 0..size {
        for k in [i.wrapping_sub(1), i + 1] {
            if k < size {
                gen[(i, k)] = rate;
                gen[(i, i)] -= rate;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for t in [0.01, 0.1, 1.0] {
        let exact = (&gen * t).exp();
        let images = ImageKernel::new(&p, t, 1e-14).matrix();
        for i in 0..size {
            for k in 0..size {
                worst = worst.max((images[i * size + k] - exact[(i, k)]).abs());
            }
        }
    }
    outcome(worst <= 1e-8, format!("max |images - expm| = {worst:.2e}"))
}

fn cross_scheme() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut clamped: f64 = 0.0;
    let mut in_range = true;
    for k in [1, 3] {
        for j in [0.5, 2.0] {
            for u0 in [InitialProfile::Constant(0.5), InitialProfile::Step { left: 0.8, right: 0.2, at: 0.0 }] {
                let p = params(50, k, j);
                let rho0 = profile(&p, &u0);
                let times = uniform_times(0.5, 20, false);
                let a = evolve_discrete(&p, &rho0, 0.5, &times).unwrap();
                let b = evolve_integral_form(&p, &rho0, 0.5, &times).unwrap();
                for (x, y) in a.profiles.iter().zip(&b.profiles) {
                    for (u, v) in x.values().iter().zip(y.values()) {
                        worst = worst.max((u - v).abs());
                        in_range &= (0.0..=1.0).contains(u) && (0.0..=1.0).contains(v);
                    }
                }
                clamped = clamped.max(a.clamped).max(b.clamped);
            }
        }
    }
    outcome(
        worst <= 1e-4 && in_range && clamped == 0.0,
        format!("sup gap = {worst:.2e}, values in [0,1]: {in_range}, clamp correction = {clamped:e}"),
    )
}

fn a_constants() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 1..=5 {
        let a = a_coefficients(k, None, 1e-8);
        for v in &a.values {
            worst = worst.max((v - 2.0).abs());
        }
    }
    outcome(worst <= 1e-2, format!("max |a(h) - 2| over K <= 5: {worst:.2e}"))
}

fn boundary_flux() -> Outcome {
    let u0 = InitialProfile::Constant(0.5);
    let mut worst: f64 = 0.0;
    for k in [1, 2] {
        let traces = solve_boundary_traces(&u0, 1.0, k, 1.0, 1e-3).unwrap();
        let grid = MacroGrid::uniform(401, 0.1, 1.0, 19);
        let sol = reconstruct_density(&traces, &u0, &grid).unwrap();
        for row in boundary_flux_check(&sol).unwrap() {
            worst = worst.max(row.gap());
        }
    }
    outcome(worst <= 1e-3, format!("max |slope - flux| on [0.1, 1] = {worst:.2e} (h = 1e-3, 401 points, 3-point stencil)"))
}

fn stationary_slopes() -> Outcome {
    let u0 = InitialProfile::Constant(0.5);
    let targets = [(1u32, 0.25), (2, (7f64.sqrt() - 2.0) / 2.0)];
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, target) in targets {
        let traces = solve_boundary_traces(&u0, 1.0, k, 20.0, 2e-3).unwrap();
        let grid = MacroGrid::uniform(201, 20.0, 20.0, 1);
        let sol = reconstruct_density(&traces, &u0, &grid).unwrap();
        let row = &boundary_flux_check(&sol).unwrap()[0];
        let chord = 0.5 * (sol.rho[0][200] - sol.rho[0][0]);
        let err = (row.slope_plus - target).abs().max((row.slope_minus - target).abs()).max((chord - target).abs());
        pass &= err <= 1e-3;
        detail.push(format!("K={k}: slope {:.6} vs {target:.6} (err {err:.1e})", row.slope_plus));
    }
    outcome(pass, detail.join("; "))
}

fn hydrodynamic_convergence() -> Outcome {
    let u0 = InitialProfile::Constant(0.5);
    let times: Vec<f64> = (10..=50).map(|i| i as f64 / 100.0).collect();
    let traces = solve_boundary_traces(&u0, 1.0, 1, 0.5, 1e-3).unwrap();
    let gaps: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| {
            let p = params(n, 1, 1.0);
            let traj = evolve_discrete(&p, &profile(&p, &u0), 0.5, &times).unwrap();
            let grid = MacroGrid { r: p.sites().map(|x| x as f64 / n as f64).collect(), t: times.clone() };
            let sol = reconstruct_density(&traces, &u0, &grid).unwrap();
            hydrodynamic_gap(&traj, &sol, (0.1, 0.5)).unwrap()
        })
        .collect();
    let pass = gaps[1] < gaps[0] && gaps[2] < gaps[1] && gaps[2] < gaps[0] / 1.5;
    outcome(pass, format!("gap(50, 100, 200) = {:.3e}, {:.3e}, {:.3e}", gaps[0], gaps[1], gaps[2]))
}

/// Microscopic currents at `t` against the macroscopic solution: bulk
/// counting at bond `(0, 1)` over `[t, t+w]` (target averaged over the
/// window) and boundary snapshots at `t`. Returns `(bulk, plus, minus)` gaps.
fn fourier_gaps(n: usize, replicas: u64) -> [Estimate; 3] {
    let (t, w) = (0.5, 0.05);
    let p = params(n, 1, 1.0);
    let u0 = InitialProfile::Constant(0.5);
    let spec = RecordSpec { times: vec![t, t + w], tracked_bonds: vec![0] };
    let ens = collect_ensemble(&p, &profile(&p, &u0), &spec, replicas, 77 + n as u64).unwrap();
    let traces = solve_boundary_traces(&u0, 1.0, 1, t + w, 1e-3).unwrap();
    let grid = MacroGrid::uniform(401, t, t + w, 3);
    let sol = reconstruct_density(&traces, &u0, &grid).unwrap();
    let mid = 0.5 / n as f64;
    let current = |s: f64, r: f64| -0.5 * macro_gradient(&sol, s, r).unwrap();
    // Simpson over the window
    let bulk_target = (current(t, mid) + 4.0 * current(t + 0.5 * w, mid) + current(t + w, mid)) / 6.0;
    let bulk = bulk_current_counting(&ens, 0, t, w).unwrap();
    let (plus, minus) = boundary_current_snapshot(&ens, t).unwrap();
    let gap = |e: Estimate, target: f64| Estimate { value: e.value - target, stderr: e.stderr };
    [gap(bulk, bulk_target), gap(plus, current(t, 1.0)), gap(minus, current(t, -1.0))]
}

fn fourier_law() -> Outcome {
    let ladder = [50usize, 100, 200];
    let gaps: Vec<[Estimate; 3]> = ladder.iter().map(|&n| fourier_gaps(n, 20_000)).collect();
    let top = &gaps[2];
    let mut pass = top.iter().all(|g| g.value.abs() <= (3.0 * g.stderr).max(0.02));
    for q in 0..3 {
        pass &= not_larger(&gaps[1][q], &gaps[0][q]) && not_larger(&gaps[2][q], &gaps[1][q]);
    }
    let fmt = |g: &[Estimate; 3]| {
        format!("bulk {:+.4}±{:.4}, +1 {:+.4}±{:.4}, -1 {:+.4}±{:.4}", g[0].value, g[0].stderr, g[1].value, g[1].stderr, g[2].value, g[2].stderr)
    };
    let detail = ladder.iter().zip(&gaps).map(|(n, g)| format!("N={n}: {}", fmt(g))).collect::<Vec<_>>().join("; ");
    outcome(pass, detail)
}

fn propagation_of_chaos() -> Outcome {
    let t = 0.2;
    let u0 = InitialProfile::Constant(0.5);
    let spec = RecordSpec { times: vec![t], tracked_bonds: vec![] };
    let v: Vec<Estimate> = [50usize, 100]
        .iter()
        .map(|&n| {
            let p = params(n, 1, 1.0);
            let rho0 = profile(&p, &u0);
            let ens = collect_ensemble(&p, &rho0, &spec, 100_000, 300 + n as u64).unwrap();
            let traj = evolve_discrete(&p, &rho0, t, &[t]).unwrap();
            let s = v_statistic(&ens, &traj, &[0, 1], t).unwrap();
            Estimate { value: s.estimate, stderr: s.stderr }
        })
        .collect();
    // tiny lattice against the exact law
    let p3 = params(3, 1, 1.0);
    let rho3 = profile(&p3, &InitialProfile::Step { left: 0.9, right: 0.1, at: 0.0 });
    let ens3 = collect_ensemble(&p3, &rho3, &spec, 100_000, 3).unwrap();
    let law = evolve_law(&GeneratorMatrix::build(&p3).unwrap(), &LawVector::product(&p3, &rho3), t);
    let reference = marginal_expectations(&law);
    let mc3 = v_statistic_with_reference(&ens3, reference.values(), &[0, 1], t).unwrap();
    let exact3 = v_function_exact(&law, &reference, &[0, 1]).unwrap();
    let small_ok = (mc3.estimate - exact3).abs() <= 4.0 * mc3.stderr;
    let pass = not_larger(&v[1], &v[0]) && v.iter().all(|e| e.value.abs() <= 0.05) && small_ok;
    outcome(
        pass,
        format!(
            "v(0,1): N=50 {:+.2e}±{:.1e}, N=100 {:+.2e}±{:.1e}; N=3 MC {:+.4e}±{:.1e} vs exact {:+.4e}",
            v[0].value, v[0].stderr, v[1].value, v[1].stderr, mc3.estimate, mc3.stderr, exact3
        ),
    )
}

fn equicontinuity() -> Outcome {
    let u0 = InitialProfile::Step { left: 0.8, right: 0.2, at: 0.0 };
    let mut times = vec![0.01];
    while *times.last().unwrap() * 1.25 < 0.5 {
        times.push(times.last().unwrap() * 1.25);
    }
    times.push(0.5);
    let reports: Vec<_> = [50, 100, 200]
        .iter()
        .map(|&n| {
            let p = params(n, 1, 1.0);
            let traj = evolve_discrete(&p, &profile(&p, &u0), 0.5, &times).unwrap();
            continuity_moduli(&traj, 0.01, 0.5)
        })
        .collect();
    let spread = |f: &dyn Fn(usize) -> f64| {
        let v: Vec<f64> = (0..3).map(f).collect();
        v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let s = spread(&|i| reports[i].c_space);
    let c = spread(&|i| reports[i].c_time);
    outcome(
        s <= 2.0 && c <= 2.0,
        format!(
            "c_space = {:.3}, {:.3}, {:.3} (ratio {s:.2}); c_time = {:.3}, {:.3}, {:.3} (ratio {c:.2})",
            reports[0].c_space, reports[1].c_space, reports[2].c_space, reports[0].c_time, reports[1].c_time, reports[2].c_time
        ),
    )
}

fn regularization() -> Outcome {
    let p = params(100, 1, 1.0);
    let rho0 = profile(&p, &InitialProfile::Step { left: 0.8, right: 0.2, at: 0.0 });
    let deltas = [1e-3, 4e-3, 1.6e-2];
    let gaps: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            let mut times = uniform_times(0.5, 50, false);
            times.push(d);
            times.sort_by(f64::total_cmp);
            times.dedup();
            let reg = evolve_regularized(&p, &rho0, d, 0.5, &times).unwrap();
            let plain = evolve_discrete(&p, &rho0, 0.5, &times).unwrap();
            reg.trajectory
                .profiles
                .iter()
                .zip(&plain.profiles)
                .filter(|(a, _)| a.time() >= d - 1e-12)
                .flat_map(|(a, b)| a.values().iter().zip(b.values()).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    // least-squares slope of log gap against log delta
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    outcome(
        (slope - 0.5).abs() <= 0.15,
        format!("gaps {:.3e}, {:.3e}, {:.3e}; log-log slope {slope:.3}", gaps[0], gaps[1], gaps[2]),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "simulator exactness", simulator_exactness),
        (2, "image-sum kernel identity", kernel_identity),
        (3, "cross-scheme agreement", cross_scheme),
        (4, "a(h) constants", a_constants),
        (5, "boundary flux relation", boundary_flux),
        (6, "stationary profile", stationary_slopes),
        (7, "hydrodynamic convergence", hydrodynamic_convergence),
        (8, "Fourier law", fourier_law),
        (9, "propagation of chaos proxy", propagation_of_chaos),
        (10, "equicontinuity shapes", equicontinuity),
        (11, "regularization bound shape", regularization),
    ];
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut results: HashMap<u32, bool> = HashMap::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] criterion {id:>2} {name} ({:.1} s): {}", start.elapsed().as_secs_f64(), out.detail);
        results.insert(id, out.pass);
    }
    let failed: Vec<u32> = {
        let mut f: Vec<u32> = results.iter().filter(|(_, &p)| !p).map(|(&id, _)| id).collect();
        f.sort();
        f
    };
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
