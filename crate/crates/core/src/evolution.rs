//! The discretized mean-field evolution
//! `dρ/dt = ½Δ_ε ρ + ε⁻¹(j/2)(1_{I₊}D₊ρ − 1_{I₋}D₋ρ)`,
//! its Duhamel (Volterra) form, the regularized evolution and equicontinuity
//! diagnostics.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::discrete::{BandedKernel, ImageKernel, ReflectedSpectrum};
use crate::model::{d_minus_block, d_plus_block, DensityProfile, ModelParams};

/// Profiles of `ρ_ε` at increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTrajectory {
    pub params: ModelParams,
    pub times: Vec<f64>,
    pub profiles: Vec<DensityProfile>,
    /// Largest internal step.
    pub step: f64,
    pub scheme: String,
    /// Largest amount by which a raw value left `[0,1]` before clamping.
    pub clamped: f64,
}

impl DiscreteTrajectory {
    /// Index of the output time closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Profile at the output time closest to `t`.
    pub fn at(&self, t: f64) -> &DensityProfile {
        &self.profiles[self.index_near(t)]
    }

    /// CSV with header `t,x,rho`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,rho")?;
        for (t, p) in self.times.iter().zip(&self.profiles) {
            for (i, v) in p.values().iter().enumerate() {
                writeln!(out, "{t},{},{v:.15e}", self.params.site(i))?;
            }
        }
        Ok(())
    }
}

/// A trajectory that runs free of reservoirs up to `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedTrajectory {
    pub delta: f64,
    pub trajectory: DiscreteTrajectory,
}

/// Internal step control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    /// Largest step in units of `ε²`.
    pub max_step_eps2: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { max_step_eps2: 0.0625 }
    }
}

fn validate_times(output_times: &[f64]) -> Result<()> {
    if output_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || output_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("output times must be finite, nonnegative and strictly increasing".into()));
    }
    Ok(())
}

/// Output times clipped to `[0, t_final]`, with `t_final` appended when absent.
fn output_grid(t_final: f64, output_times: &[f64]) -> Result<Vec<f64>> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParams(format!("t_final must be finite and nonnegative, got {t_final}")));
    }
    validate_times(output_times)?;
    let mut times: Vec<f64> = output_times.iter().copied().filter(|&t| t <= t_final).collect();
    if times.last().is_none_or(|&t| t < t_final) {
        times.push(t_final);
    }
    Ok(times)
}

fn check_profile(params: &ModelParams, rho0: &DensityProfile) -> Result<()> {
    if rho0.n() != params.n() {
        return Err(Error::InvalidParams("profile does not match the lattice".into()));
    }
    Ok(())
}

/// Splits `[from, to]` into equal steps no longer than `max`.
fn steps_between(from: f64, to: f64, max: f64) -> (usize, f64) {
    let span = to - from;
    if span <= 0.0 {
        return (0, 0.0);
    }
    let n = (span / max).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

/// Exact solution of the reservoir flow over `dt` on both blocks.
///
/// `I₊` is swept from `N` downward: at each site `ρ' = c(1-ρ)Π` with `Π` the
/// product over the sites above, which have already been advanced; `Π` is
/// replaced by its trapezoid average over the step. `I₋` is symmetric.
fn reservoir_step(params: &ModelParams, u: &mut [f64], dt: f64) {
    let c = 0.5 * params.j() / params.epsilon();
    if c == 0.0 {
        return;
    }
    let len = u.len();
    let k = params.k();
    let mut above_old = 1.0;
    let mut above_new = 1.0;
    for h in 0..k {
        let i = len - 1 - h;
        let old = u[i];
        let prod = 0.5 * (above_old + above_new);
        u[i] = 1.0 - (1.0 - old) * (-c * prod * dt).exp();
        above_old *= old;
        above_new *= u[i];
    }
    let mut below_old = 1.0;
    let mut below_new = 1.0;
    for i in 0..k {
        let old = u[i];
        let prod = 0.5 * (below_old + below_new);
        u[i] = old * (-c * prod * dt).exp();
        below_old *= 1.0 - old;
        below_new *= 1.0 - u[i];
    }
}

/// Strang splitting: exact diffusion half-steps, exact reservoir step.
///
/// Steps are at most `ε²/16` by default and land on every output time.
pub fn evolve_discrete(
    params: &ModelParams,
    rho0: &DensityProfile,
    t_final: f64,
    output_times: &[f64],
) -> Result<DiscreteTrajectory> {
    evolve_discrete_with(params, rho0, t_final, output_times, StepOptions::default())
}

pub fn evolve_discrete_with(
    params: &ModelParams,
    rho0: &DensityProfile,
    t_final: f64,
    output_times: &[f64],
    opts: StepOptions,
) -> Result<DiscreteTrajectory> {
    check_profile(params, rho0)?;
    let output_times = &output_grid(t_final, output_times)?;
    let eps = params.epsilon();
    let max_dt = opts.max_step_eps2 * eps * eps;
    let size = params.num_sites();
    let mut kernels: HashMap<u64, BandedKernel> = HashMap::new();
    let mut u = rho0.values().to_vec();
    let mut scratch = vec![0.0; size];
    let mut t = 0.0;
    let mut out = DiscreteTrajectory {
        params: *params,
        times: Vec::with_capacity(output_times.len()),
        profiles: Vec::with_capacity(output_times.len()),
        step: 0.0,
        scheme: "strang-splitting".into(),
        clamped: 0.0,
    };
    for &target in output_times {
        let (n, dt) = steps_between(t, target, max_dt);
        if n > 0 {
            out.step = out.step.max(dt);
            let half = kernels.entry((0.5 * dt).to_bits()).or_insert_with(|| {
                let dense = ImageKernel::new(params, 0.5 * dt, 1e-14).matrix();
                BandedKernel::from_dense(&dense, size, 1e-18)
            });
            for _ in 0..n {
                half.apply_into(&u, &mut scratch);
                clamp_unit(&mut scratch, &mut out.clamped);
                reservoir_step(params, &mut scratch, dt);
                half.apply_into(&scratch, &mut u);
                clamp_unit(&mut u, &mut out.clamped);
            }
        }
        t = target;
        out.times.push(target);
        out.profiles.push(DensityProfile::new(u.clone(), target)?);
    }
    Ok(out)
}

#[inline]
fn clamp_unit(u: &mut [f64], worst: &mut f64) {
    for v in u {
        if *v < 0.0 {
            *worst = worst.max(-*v);
            *v = 0.0;
        } else if *v > 1.0 {
            *worst = worst.max(*v - 1.0);
            *v = 1.0;
        }
    }
}

/// `(φ_a, φ_b)`: weights of `F(t)` and `F(t+h)` in `∫₀^h e^{-μ(h-s)} F(t+s) ds`
/// for linear `F`.
fn exp_weights(mu: f64, h: f64) -> (f64, f64) {
    let z = mu * h;
    if z < 1e-3 {
        // series of (1-e^{-z})/z and (z-1+e^{-z})/z²
        let total = h * (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0);
        let b = h * (0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0);
        return (total - b, b);
    }
    let e = (-z).exp();
    let total = -(-z).exp_m1() / mu;
    let b = h * (z - 1.0 + e) / (z * z);
    (total - b, b)
}

/// Reservoir forcing `ε⁻¹(j/2)(1_{I₊}D₊u − 1_{I₋}D₋u)` on the `2K` reservoir sites.
fn forcing(params: &ModelParams, u: &[f64], out: &mut [f64]) {
    let c = 0.5 * params.j() / params.epsilon();
    let k = params.k();
    for (o, d) in out[..k].iter_mut().zip(d_minus_block(params, u)) {
        *o = -c * d;
    }
    for (o, d) in out[k..].iter_mut().zip(d_plus_block(params, u)) {
        *o = c * d;
    }
}

/// Time-marching solution of the Duhamel form
/// `ρ(t) = P_t ρ₀ + ∫₀ᵗ P_s F(ρ(t-s)) ds`.
///
/// Modal product integration in the cosine eigenbasis of `½Δ_ε`: each mode is
/// advanced exactly against a piecewise-linear forcing, and the forcing at the
/// new time is found by Picard iteration on the reservoir sites.
pub fn evolve_integral_form(
    params: &ModelParams,
    rho0: &DensityProfile,
    t_final: f64,
    output_times: &[f64],
) -> Result<DiscreteTrajectory> {
    evolve_integral_form_with(params, rho0, t_final, output_times, StepOptions::default())
}

pub fn evolve_integral_form_with(
    params: &ModelParams,
    rho0: &DensityProfile,
    t_final: f64,
    output_times: &[f64],
    opts: StepOptions,
) -> Result<DiscreteTrajectory> {
    check_profile(params, rho0)?;
    let output_times = &output_grid(t_final, output_times)?;
    let eps = params.epsilon();
    let max_dt = opts.max_step_eps2 * eps * eps;
    let spec = ReflectedSpectrum::new(params);
    let size = spec.size();
    let k = params.k();
    // reservoir site offsets: I₋ then I₊
    let res: Vec<usize> = (0..k).chain(size - k..size).collect();
    // basis restricted to reservoir sites: vres[m][r] = v_m(res[r])
    let vres: Vec<Vec<f64>> = (0..size).map(|m| res.iter().map(|&i| spec.vector(m)[i]).collect()).collect();
    let mut modes = spec.project(rho0.values());
    let mut u_res: Vec<f64> = res.iter().map(|&i| rho0.values()[i]).collect();
    let mut full = rho0.values().to_vec();
    let mut f_old = vec![0.0; 2 * k];
    let mut f_new = vec![0.0; 2 * k];
    let mut out = DiscreteTrajectory {
        params: *params,
        times: Vec::with_capacity(output_times.len()),
        profiles: Vec::with_capacity(output_times.len()),
        step: 0.0,
        scheme: "modal-product-integration".into(),
        clamped: 0.0,
    };
    let block = |u_res: &[f64], full: &mut Vec<f64>| {
        for (r, &i) in res.iter().enumerate() {
            full[i] = u_res[r];
        }
    };
    let mut t = 0.0;
    let mut weights: Option<(f64, Vec<(f64, f64, f64)>)> = None;
    for &target in output_times {
        let (n, h) = steps_between(t, target, max_dt);
        if n > 0 {
            out.step = out.step.max(h);
            if weights.as_ref().map(|w| w.0) != Some(h) {
                let w = spec.rates.iter().map(|&mu| {
                    let (a, b) = exp_weights(mu, h);
                    ((-mu * h).exp(), a, b)
                });
                weights = Some((h, w.collect()));
            }
            let w = &weights.as_ref().unwrap().1;
            for _ in 0..n {
                block(&u_res, &mut full);
                forcing(params, &full, &mut f_old);
                // modal forcing at the old time, and the homogeneous part
                let mut base = vec![0.0; size];
                for m in 0..size {
                    let fm: f64 = vres[m].iter().zip(&f_old).map(|(v, f)| v * f).sum();
                    base[m] = w[m].0 * modes[m] + w[m].1 * fm;
                }
                let mut guess = u_res.clone();
                let mut converged = false;
                let mut new_modes = base.clone();
                for _ in 0..50 {
                    block(&guess, &mut full);
                    forcing(params, &full, &mut f_new);
                    for m in 0..size {
                        let fm: f64 = vres[m].iter().zip(&f_new).map(|(v, f)| v * f).sum();
                        new_modes[m] = base[m] + w[m].2 * fm;
                    }
                    let next: Vec<f64> = (0..res.len())
                        .map(|r| (0..size).map(|m| new_modes[m] * vres[m][r]).sum::<f64>())
                        .collect();
                    let inc = next.iter().zip(&guess).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    guess = next;
                    if inc < 1e-10 {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Numerical(format!("Picard iteration stalled near t = {t}")));
                }
                modes = new_modes;
                for (r, g) in guess.iter().enumerate() {
                    u_res[r] = *g;
                }
                t += h;
            }
        }
        t = target;
        let mut values = spec.synthesize(&modes);
        let mut worst = 0.0;
        clamp_unit(&mut values, &mut worst);
        out.clamped = out.clamped.max(worst);
        if worst > 1e-9 {
            return Err(Error::Numerical(format!("integral form left [0,1] by {worst:e} at t = {target}")));
        }
        for (r, &i) in res.iter().enumerate() {
            u_res[r] = values[i];
        }
        out.times.push(target);
        out.profiles.push(DensityProfile::new(values, target)?);
    }
    Ok(out)
}

/// `Σ_y P_t^(ε)(x,y) ρ₀(y)` for every output time (no reservoirs).
pub fn free_evolution(params: &ModelParams, rho0: &DensityProfile, output_times: &[f64]) -> Result<DiscreteTrajectory> {
    check_profile(params, rho0)?;
    validate_times(output_times)?;
    let spec = ReflectedSpectrum::new(params);
    let modes = spec.project(rho0.values());
    let mut out = DiscreteTrajectory {
        params: *params,
        times: output_times.to_vec(),
        profiles: Vec::with_capacity(output_times.len()),
        step: 0.0,
        scheme: "free-spectral".into(),
        clamped: 0.0,
    };
    for &t in output_times {
        let m: Vec<f64> = modes.iter().zip(&spec.rates).map(|(a, mu)| a * (-mu * t).exp()).collect();
        let mut v = spec.synthesize(&m);
        clamp_unit(&mut v, &mut out.clamped);
        out.profiles.push(DensityProfile::new(v, t)?);
    }
    Ok(out)
}

/// Free evolution on `[0, δ]`, then the full dynamics from the profile at `δ`.
pub fn evolve_regularized(
    params: &ModelParams,
    rho0: &DensityProfile,
    delta: f64,
    t_final: f64,
    output_times: &[f64],
) -> Result<RegularizedTrajectory> {
    evolve_regularized_with(params, rho0, delta, t_final, output_times, StepOptions::default())
}

pub fn evolve_regularized_with(
    params: &ModelParams,
    rho0: &DensityProfile,
    delta: f64,
    t_final: f64,
    output_times: &[f64],
    opts: StepOptions,
) -> Result<RegularizedTrajectory> {
    if !(delta > 0.0 && delta < t_final) {
        return Err(Error::InvalidParams(format!("need 0 < delta < t_final, got delta = {delta}")));
    }
    let output_times = output_grid(t_final, output_times)?;
    let early: Vec<f64> = output_times.iter().copied().filter(|&t| t <= delta).collect();
    let mut free_times = early.clone();
    if free_times.last() != Some(&delta) {
        free_times.push(delta);
    }
    let free = free_evolution(params, rho0, &free_times)?;
    let at_delta = free.profiles.last().unwrap().clone();
    let late: Vec<f64> = output_times.iter().copied().filter(|&t| t > delta).map(|t| t - delta).collect();
    let rest = evolve_discrete_with(params, &at_delta, t_final - delta, &late, opts)?;
    let mut trajectory = free;
    trajectory.times.truncate(early.len());
    trajectory.profiles.truncate(early.len());
    for (t, p) in rest.times.iter().zip(rest.profiles) {
        trajectory.times.push(t + delta);
        trajectory.profiles.push(p.with_time(t + delta));
    }
    trajectory.step = rest.step;
    trajectory.clamped = trajectory.clamped.max(rest.clamped);
    trajectory.scheme = "regularized".into();
    Ok(RegularizedTrajectory { delta, trajectory })
}

/// First Picard iterate of the Duhamel form from the free term:
/// `ρ¹(t) = P_t ρ₀ + ∫₀ᵗ P_s F(P_{t-s} ρ₀) ds`, by Gauss-Legendre panels in `s`.
pub fn duhamel_first_iterate(params: &ModelParams, rho0: &DensityProfile, t: f64, panels: usize) -> Result<DensityProfile> {
    check_profile(params, rho0)?;
    if !(t > 0.0) || panels == 0 {
        return Err(Error::InvalidParams("need t > 0 and at least one panel".into()));
    }
    let spec = ReflectedSpectrum::new(params);
    let size = spec.size();
    let k = params.k();
    let modes0 = spec.project(rho0.values());
    let free_at = |s: f64| {
        let m: Vec<f64> = modes0.iter().zip(&spec.rates).map(|(a, mu)| a * (-mu * s).exp()).collect();
        spec.synthesize(&m)
    };
    let mut acc = free_at(t);
    let mut f = vec![0.0; 2 * k];
    let mut src = vec![0.0; size];
    let h = t / panels as f64;
    for p in 0..panels {
        for &(node, weight) in crate::quad::GL6.iter() {
            let s = h * (p as f64 + 0.5 * (node + 1.0));
            forcing(params, &free_at(t - s), &mut f);
            src.iter_mut().for_each(|v| *v = 0.0);
            src[..k].copy_from_slice(&f[..k]);
            src[size - k..].copy_from_slice(&f[k..]);
            let moved = spec.apply(s, &src);
            for (a, m) in acc.iter_mut().zip(moved) {
                *a += 0.5 * h * weight * m;
            }
        }
    }
    let mut worst = 0.0;
    clamp_unit(&mut acc, &mut worst);
    DensityProfile::new(acc, t)
}

/// Fitted equicontinuity constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// `(t, sup_x |ρ(x+1,t) − ρ(x,t)|)`.
    pub spatial: Vec<(f64, f64)>,
    /// `(t, s, sup_x |ρ(x,t+s) − ρ(x,t)|)`.
    pub temporal: Vec<(f64, f64, f64)>,
    /// `sup_t` spatial modulus over `ε log₊(ε⁻²t) + 1/√(ε⁻²t)`.
    pub c_space: f64,
    /// `sup_{t,s}` temporal modulus over `√(s/t) + √s log(t/s)`.
    pub c_time: f64,
}

/// Spatial and temporal moduli of a trajectory on `t ∈ [t_lo, t_hi]`.
///
/// Temporal pairs use every output pair `(t, t+s)` with `s < t`, both in range.
pub fn continuity_moduli(traj: &DiscreteTrajectory, t_lo: f64, t_hi: f64) -> ContinuityReport {
    let eps = traj.params.epsilon();
    let idx: Vec<usize> = (0..traj.times.len()).filter(|&i| traj.times[i] >= t_lo && traj.times[i] <= t_hi).collect();
    let mut report = ContinuityReport { spatial: Vec::new(), temporal: Vec::new(), c_space: 0.0, c_time: 0.0 };
    for &i in &idx {
        let t = traj.times[i];
        if t <= 0.0 {
            continue;
        }
        let v = traj.profiles[i].values();
        let m = v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        report.spatial.push((t, m));
        let micro = t / (eps * eps);
        let bound = eps * micro.ln().max(0.0) + 1.0 / micro.sqrt();
        report.c_space = report.c_space.max(m / bound);
    }
    for (a, &i) in idx.iter().enumerate() {
        for &l in &idx[a + 1..] {
            let (t, s) = (traj.times[i], traj.times[l] - traj.times[i]);
            if !(t > 0.0 && s > 0.0 && s < t) {
                continue;
            }
            let m = traj.profiles[i]
                .values()
                .iter()
                .zip(traj.profiles[l].values())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            report.temporal.push((t, s, m));
            let bound = (s / t).sqrt() + s.sqrt() * (t / s).ln();
            report.c_time = report.c_time.max(m / bound);
        }
    }
    report
}

/// Residual of the mass balance on `[N-K, N]` over `[t, t+τ]`:
/// `ε(M(t+τ) − M(t)) − ∫ (−½J₊ + (j/2)ΣD₊ρ) ds`, `J₊ = ε⁻¹(ρ(N−K) − ρ(N−K−1))`.
///
/// The time integral is the trapezoid rule over the trajectory's output times.
pub fn discrete_mass_balance(traj: &DiscreteTrajectory, t: f64, tau: f64) -> Result<f64> {
    let params = &traj.params;
    if params.n() <= params.k() {
        return Err(Error::SiteOutOfDomain { site: params.n_i64() - params.k() as i64 - 1, domain: "bulk" });
    }
    let i0 = traj.index_near(t);
    let i1 = traj.index_near(t + tau);
    let tol = 1e-9 * (1.0 + t + tau);
    if (traj.times[i0] - t).abs() > tol || (traj.times[i1] - t - tau).abs() > tol || i1 <= i0 {
        return Err(Error::InvalidParams("mass-balance window must start and end on output times".into()));
    }
    let eps = params.epsilon();
    let size = params.num_sites();
    let k = params.k();
    let lo = size - 1 - k;
    let mass = |p: &DensityProfile| p.values()[lo..].iter().sum::<f64>();
    let rate = |p: &DensityProfile| {
        let v = p.values();
        let current = (v[lo] - v[lo - 1]) / eps;
        -0.5 * current + 0.5 * params.j() * d_plus_block(params, v).iter().sum::<f64>()
    };
    let mut integral = 0.0;
    for i in i0..i1 {
        let dt = traj.times[i + 1] - traj.times[i];
        integral += 0.5 * dt * (rate(&traj.profiles[i]) + rate(&traj.profiles[i + 1]));
    }
    Ok(eps * (mass(&traj.profiles[i1]) - mass(&traj.profiles[i0])) - integral)
}

/// Uniform grid `dt, 2dt, ..., t_final` (with `0` first when `with_zero`).
pub fn uniform_times(t_final: f64, count: usize, with_zero: bool) -> Vec<f64> {
    let start = if with_zero { 0 } else { 1 };
    (start..=count).map(|i| t_final * i as f64 / count as f64).collect()
}
