//! The macroscopic limit on `[-1, 1]`: the heat equation `∂_t ρ = ½∂²_r ρ`
//! driven through its boundary traces `u±(t)`, which solve
//!
//! ```text
//! u₊(t) = w₊(t) + ∫₀ᵗ p(s) f₊(u₊(t-s)) − q(s) f₋(u₋(t-s)) ds
//! u₋(t) = w₋(t) + ∫₀ᵗ q(s) f₊(u₊(t-s)) − p(s) f₋(u₋(t-s)) ds
//! ```
//!
//! with `f₊(u) = (j/2)(1 − u^K)`, `f₋(u) = (j/2)(1 − (1−u)^K)`,
//! `p(s) = P_s(1,1)`, `q(s) = P_s(1,-1)` and `w± = (P_t u₀)(±1)`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::continuum::{boundary_panel_weights, FreeEvolution};
use crate::profile::InitialProfile;

/// Fixed-point tolerance of the per-step nonlinear solve.
pub const FIXED_POINT_TOL: f64 = 1e-12;
const MAX_FIXED_POINT: usize = 500;
/// Largest excursion outside `[0, 1]` tolerated before aborting.
const RANGE_SLACK: f64 = 1e-9;

#[inline]
fn f_plus(j: f64, k: u32, u: f64) -> f64 {
    0.5 * j * (1.0 - u.powi(k as i32))
}

#[inline]
fn f_minus(j: f64, k: u32, u: f64) -> f64 {
    0.5 * j * (1.0 - (1.0 - u).powi(k as i32))
}

/// Hat weights truncated after `n` panels: entry `i` multiplies `g(t_n − i·h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LagWeights {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl LagWeights {
    fn new(r: f64, plus: bool, h: f64, panels: usize) -> Self {
        let (alpha, beta) = boundary_panel_weights(r, plus, h, panels);
        Self { alpha, beta }
    }

    /// Weight of lag `i` in a convolution over `n` panels.
    #[inline]
    fn at(&self, i: usize, n: usize) -> f64 {
        let a = if i < n { self.alpha[i] } else { 0.0 };
        let b = if i > 0 { self.beta[i - 1] } else { 0.0 };
        a + b
    }

    /// `Σ_{i=lo..=n} w_i g[n−i]`.
    fn convolve(&self, g: &[f64], n: usize, lo: usize) -> f64 {
        let mut acc = 0.0;
        if n == 0 {
            return 0.0;
        }
        for i in lo.max(1)..n {
            acc += (self.alpha[i] + self.beta[i - 1]) * g[n - i];
        }
        if lo == 0 {
            acc += self.alpha[0] * g[n];
        }
        acc + self.beta[n - 1] * g[0]
    }
}

/// Solved boundary traces on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTraces {
    pub j: f64,
    pub k: u32,
    pub step: f64,
    pub times: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub u_minus: Vec<f64>,
    /// Free terms `w±` on the grid.
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    /// Most fixed-point iterations used by any step.
    pub max_iterations: usize,
    pub fixed_point_tol: f64,
}

impl BoundaryTraces {
    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Grid index of `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = (t / self.step).round();
        (i >= 0.0 && (i as usize) < self.times.len() && (i * self.step - t).abs() <= 1e-9 * (1.0 + t))
            .then_some(i as usize)
    }

    fn f_plus_values(&self) -> Vec<f64> {
        self.u_plus.iter().map(|&u| f_plus(self.j, self.k, u)).collect()
    }

    fn f_minus_values(&self) -> Vec<f64> {
        self.u_minus.iter().map(|&u| f_minus(self.j, self.k, u)).collect()
    }

    /// CSV with header `t,u_plus,u_minus`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,u_plus,u_minus")?;
        for ((t, a), b) in self.times.iter().zip(&self.u_plus).zip(&self.u_minus) {
            writeln!(out, "{t},{a:.15e},{b:.15e}")?;
        }
        Ok(())
    }
}

fn check_inputs(j: f64, k: u32, t_final: f64, step: f64) -> Result<usize> {
    if !(j >= 0.0 && j.is_finite()) || k == 0 {
        return Err(Error::InvalidParams(format!("need j >= 0 and K >= 1, got j = {j}, K = {k}")));
    }
    if !(t_final > 0.0 && step > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParams("need T > 0 and h_t > 0".into()));
    }
    let n = (t_final / step).round();
    if (n * step - t_final).abs() > 1e-9 * t_final || n > 1e6 {
        return Err(Error::InvalidParams(format!("T = {t_final} must be a multiple of h_t = {step} with T/h_t <= 1e6")));
    }
    Ok(n as usize)
}

/// Time-marching product-integration solve of the trace system on `[0, T]`.
pub fn solve_boundary_traces(u0: &InitialProfile, j: f64, k: u32, t_final: f64, step: f64) -> Result<BoundaryTraces> {
    u0.validate()?;
    let m = check_inputs(j, k, t_final, step)?;
    let (wp, wq) = rayon::join(|| LagWeights::new(1.0, true, step, m), || LagWeights::new(1.0, false, step, m));
    let free = FreeEvolution::new(u0);
    let times: Vec<f64> = (0..=m).map(|n| n as f64 * step).collect();
    let (w_plus, w_minus): (Vec<f64>, Vec<f64>) = times.par_iter().map(|&t| free.w_terms(t)).unzip();
    let mut up = vec![0.0; m + 1];
    let mut um = vec![0.0; m + 1];
    let mut gp = vec![0.0; m + 1];
    let mut gm = vec![0.0; m + 1];
    up[0] = w_plus[0];
    um[0] = w_minus[0];
    gp[0] = f_plus(j, k, up[0]);
    gm[0] = f_minus(j, k, um[0]);
    let mut max_iterations = 0;
    for n in 1..=m {
        // history: every lag except i = 0
        let hp = w_plus[n] + wp.convolve(&gp, n, 1) - wq.convolve(&gm, n, 1);
        let hm = w_minus[n] + wq.convolve(&gp, n, 1) - wp.convolve(&gm, n, 1);
        let (p0, q0) = (wp.at(0, n), wq.at(0, n));
        let (mut x, mut y) = (up[n - 1], um[n - 1]);
        let mut damping = 1.0;
        let mut last_inc = f64::INFINITY;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let (fx, fy) = (f_plus(j, k, x), f_minus(j, k, y));
            let nx = hp + p0 * fx - q0 * fy;
            let ny = hm + q0 * fx - p0 * fy;
            let inc = (nx - x).abs().max((ny - y).abs());
            if inc > last_inc {
                damping = 0.5;
            }
            last_inc = inc;
            x += damping * (nx - x);
            y += damping * (ny - y);
            if inc < FIXED_POINT_TOL {
                break;
            }
            if iterations >= MAX_FIXED_POINT {
                return Err(Error::Numerical(format!(
                    "trace fixed point stalled at t = {}: increment {inc:e}",
                    times[n]
                )));
            }
        }
        max_iterations = max_iterations.max(iterations);
        for (v, name) in [(x, "u_plus"), (y, "u_minus")] {
            if v < -RANGE_SLACK || v > 1.0 + RANGE_SLACK {
                return Err(Error::Numerical(format!("{name} = {v} left [0,1] at t = {}", times[n])));
            }
        }
        up[n] = x.clamp(0.0, 1.0);
        um[n] = y.clamp(0.0, 1.0);
        gp[n] = f_plus(j, k, up[n]);
        gm[n] = f_minus(j, k, um[n]);
    }
    Ok(BoundaryTraces {
        j,
        k,
        step,
        times,
        u_plus: up,
        u_minus: um,
        w_plus,
        w_minus,
        max_iterations,
        fixed_point_tol: FIXED_POINT_TOL,
    })
}

/// Space-time grid for reconstruction; times must lie on the trace grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroGrid {
    pub r: Vec<f64>,
    pub t: Vec<f64>,
}

impl MacroGrid {
    /// `nr` equispaced points on `[-1, 1]` and `nt` on `[t0, t1]`.
    pub fn uniform(nr: usize, t0: f64, t1: f64, nt: usize) -> Self {
        let r = (0..nr).map(|i| -1.0 + 2.0 * i as f64 / (nr - 1) as f64).collect();
        let t = if nt == 1 { vec![t1] } else { (0..nt).map(|i| t0 + (t1 - t0) * i as f64 / (nt - 1) as f64).collect() };
        Self { r, t }
    }
}

/// `ρ(r, t)` on a grid, row `i` holding time `t[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSolution {
    pub grid: MacroGrid,
    pub rho: Vec<Vec<f64>>,
    pub traces: BoundaryTraces,
}

impl MacroSolution {
    /// CSV with header `t,r,rho`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,r,rho")?;
        for (t, row) in self.grid.t.iter().zip(&self.rho) {
            for (r, v) in self.grid.r.iter().zip(row) {
                writeln!(out, "{t},{r},{v:.15e}")?;
            }
        }
        Ok(())
    }

    /// Linear interpolation in `r` at row `i`.
    pub fn interpolate(&self, i: usize, r: f64) -> f64 {
        let g = &self.grid.r;
        let pos = g.partition_point(|&x| x < r).clamp(1, g.len() - 1);
        let (a, b) = (g[pos - 1], g[pos]);
        let w = (r - a) / (b - a);
        (1.0 - w) * self.rho[i][pos - 1] + w * self.rho[i][pos]
    }
}

/// Evaluates `ρ(r, t) = (P_t u₀)(r) + ∫₀ᵗ P_s(r,1) f₊(u₊(t−s)) − P_s(r,−1) f₋(u₋(t−s)) ds`
/// with the same product integration as the trace solver.
pub fn reconstruct_density(traces: &BoundaryTraces, u0: &InitialProfile, grid: &MacroGrid) -> Result<MacroSolution> {
    let rows: Vec<usize> = grid
        .t
        .iter()
        .map(|&t| {
            traces.index_of(t).ok_or_else(|| Error::InvalidParams(format!("t = {t} is not on the trace grid")))
        })
        .collect::<Result<_>>()?;
    if let Some(r) = grid.r.iter().find(|r| !(r.abs() <= 1.0)) {
        return Err(Error::InvalidParams(format!("r = {r} outside [-1, 1]")));
    }
    let panels = rows.iter().copied().max().unwrap_or(0);
    let gp = traces.f_plus_values();
    let gm = traces.f_minus_values();
    let free = FreeEvolution::new(u0);
    let h = traces.step;
    let columns: Vec<Vec<f64>> = grid
        .r
        .par_iter()
        .map(|&r| {
            let wp = LagWeights::new(r, true, h, panels);
            let wm = LagWeights::new(r, false, h, panels);
            rows.iter()
                .map(|&n| {
                    let t = n as f64 * h;
                    let base = if n == 0 { u0.eval(r) } else { free.eval(t, r) };
                    (base + wp.convolve(&gp, n, 0) - wm.convolve(&gm, n, 0)).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    let rho = (0..rows.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    Ok(MacroSolution { grid: grid.clone(), rho, traces: traces.clone() })
}

/// Residuals of the Dirichlet problem on a reconstructed solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletReport {
    /// `max |∂_t ρ − ½∂²_r ρ|` over interior points, central differences.
    pub interior: f64,
    /// `max |ρ(±1, t) − u±(t)|`.
    pub boundary: f64,
}

/// Central-difference residual of `∂_t ρ = ½∂²_r ρ`; the grid must be uniform.
pub fn check_dirichlet_form(sol: &MacroSolution) -> DirichletReport {
    let (r, t) = (&sol.grid.r, &sol.grid.t);
    let mut interior: f64 = 0.0;
    if r.len() >= 3 && t.len() >= 3 {
        let dr = r[1] - r[0];
        let dt = t[1] - t[0];
        for i in 1..t.len() - 1 {
            for x in 1..r.len() - 1 {
                let rt = (sol.rho[i + 1][x] - sol.rho[i - 1][x]) / (2.0 * dt);
                let rr = (sol.rho[i][x + 1] - 2.0 * sol.rho[i][x] + sol.rho[i][x - 1]) / (dr * dr);
                interior = interior.max((rt - 0.5 * rr).abs());
            }
        }
    }
    let mut boundary: f64 = 0.0;
    let last = r.len() - 1;
    for (i, &tt) in t.iter().enumerate() {
        if let Some(n) = sol.traces.index_of(tt) {
            if r[last] == 1.0 {
                boundary = boundary.max((sol.rho[i][last] - sol.traces.u_plus[n]).abs());
            }
            if r[0] == -1.0 {
                boundary = boundary.max((sol.rho[i][0] - sol.traces.u_minus[n]).abs());
            }
        }
    }
    DirichletReport { interior, boundary }
}

/// One row of the boundary-flux check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxRow {
    pub t: f64,
    /// One-sided `∂_r ρ(1, t)` and `j(1 − ρ(1,t)^K)`.
    pub slope_plus: f64,
    pub flux_plus: f64,
    /// One-sided `∂_r ρ(−1, t)` and `j(1 − (1 − ρ(−1,t))^K)`.
    pub slope_minus: f64,
    pub flux_minus: f64,
}

impl FluxRow {
    pub fn gap(&self) -> f64 {
        (self.slope_plus - self.flux_plus).abs().max((self.slope_minus - self.flux_minus).abs())
    }
}

/// Boundary flux relation `∂_r ρ(±1, t) = 2f±(ρ(±1, t))` with the 3-point one-sided
/// stencil `(3ρ(1) − 4ρ(1−Δr) + ρ(1−2Δr)) / 2Δr`, `Δr` the grid spacing.
pub fn boundary_flux_check(sol: &MacroSolution) -> Result<Vec<FluxRow>> {
    let r = &sol.grid.r;
    let n = r.len();
    if n < 3 || r[0] != -1.0 || r[n - 1] != 1.0 {
        return Err(Error::InvalidParams("flux check needs a grid containing both endpoints".into()));
    }
    let dr = r[1] - r[0];
    let (j, k) = (sol.traces.j, sol.traces.k);
    Ok(sol
        .grid
        .t
        .iter()
        .zip(&sol.rho)
        .map(|(&t, row)| {
            let top = row[n - 1];
            let bottom = row[0];
            FluxRow {
                t,
                slope_plus: (3.0 * top - 4.0 * row[n - 2] + row[n - 3]) / (2.0 * dr),
                flux_plus: 2.0 * f_plus(j, k, top),
                slope_minus: (-3.0 * bottom + 4.0 * row[1] - row[2]) / (2.0 * dr),
                flux_minus: 2.0 * f_minus(j, k, bottom),
            }
        })
        .collect())
}

/// Stationary slope `b` with `b = j(1 − (1/2 + b)^K)`; the profile is `1/2 + b r`.
pub fn stationary_profile(j: f64, k: u32) -> Result<(f64, impl Fn(f64) -> f64)> {
    if !(j >= 0.0 && j.is_finite()) || k == 0 {
        return Err(Error::InvalidParams(format!("need j >= 0 and K >= 1, got j = {j}, K = {k}")));
    }
    let g = |b: f64| b - j * (1.0 - (0.5 + b).powi(k as i32));
    let (mut lo, mut hi) = (0.0, j.min(0.5));
    assert!(g(lo) <= 0.0 && g(hi) >= 0.0, "no stationary slope in bracket");
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    Ok((b, move |r: f64| 0.5 + b * r))
}
