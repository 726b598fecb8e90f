//! Currents, Fourier law, v-functions, block averages and convergence gaps,
//! tying the Monte Carlo process, the discretized evolution and the
//! macroscopic solution together.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::DiscreteTrajectory;
use crate::kmc::{replica_rng, sample_product_measure, simulate, RecordSpec, ReplicaRecord};
use crate::macroscopic::MacroSolution;
use crate::model::{DensityProfile, ModelParams};

/// Default window of the counting estimators, in macroscopic time.
pub const DEFAULT_WINDOW: f64 = 0.05;

/// Replicas per parallel work unit.
const CHUNK: u64 = 64;

/// Stored replica records of one ensemble, in replica order.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub params: ModelParams,
    pub initial: DensityProfile,
    pub spec: RecordSpec,
    pub seed: u64,
    pub records: Vec<ReplicaRecord>,
    pub events: u64,
}

/// Runs `replicas` trajectories from product measures and keeps their records.
///
/// Replica `r` uses stream `r` of the seed, so the result does not depend on
/// the thread count.
pub fn collect_ensemble(
    params: &ModelParams,
    initial: &DensityProfile,
    spec: &RecordSpec,
    replicas: u64,
    seed: u64,
) -> Result<Ensemble> {
    if initial.n() != params.n() {
        return Err(Error::InvalidParams("initial profile does not match the lattice".into()));
    }
    if replicas < 2 {
        return Err(Error::InvalidParams("need at least two replicas".into()));
    }
    let chunks: Vec<Result<Vec<ReplicaRecord>>> = (0..replicas.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            (c * CHUNK..((c + 1) * CHUNK).min(replicas))
                .map(|r| {
                    let mut rng = replica_rng(seed, r);
                    let config = sample_product_measure(initial, params, &mut rng);
                    simulate(params, config, spec, &mut rng)
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(replicas as usize);
    for c in chunks {
        records.extend(c?);
    }
    let events = records.iter().map(|r| r.events).sum();
    Ok(Ensemble { params: *params, initial: initial.clone(), spec: spec.clone(), seed, records, events })
}

impl Ensemble {
    pub fn replicas(&self) -> usize {
        self.records.len()
    }

    /// Index of observation time `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.spec
            .times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t))
            .ok_or_else(|| Error::InvalidParams(format!("t = {t} is not an observation time")))
    }

    fn bond_index(&self, x: i64) -> Result<usize> {
        self.spec
            .tracked_bonds
            .iter()
            .position(|&b| b == x)
            .ok_or_else(|| Error::InvalidParams(format!("bond {x} is not tracked")))
    }

    /// Mean and standard error of a per-replica statistic.
    pub fn estimate(&self, f: impl Fn(&ReplicaRecord) -> f64 + Sync + Send) -> Estimate {
        Estimate::from_samples(self.records.par_iter().map(f).collect::<Vec<_>>().iter().copied())
    }

    /// Per-site sample means at time index `ti`.
    pub fn site_means(&self, ti: usize) -> Vec<f64> {
        let sites = self.params.num_sites();
        let mut sum = vec![0u64; sites];
        for r in &self.records {
            for (s, &b) in sum.iter_mut().zip(&r.snapshots[ti]) {
                *s += b as u64;
            }
        }
        sum.iter().map(|&s| s as f64 / self.records.len() as f64).collect()
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// Two-pass mean and standard error.
    pub fn from_samples(samples: impl Iterator<Item = f64> + Clone) -> Self {
        let n = samples.clone().count();
        if n == 0 {
            return Self { value: f64::NAN, stderr: f64::NAN };
        }
        let mean = samples.clone().sum::<f64>() / n as f64;
        let var = if n > 1 { samples.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { value: mean, stderr: (var / n as f64).sqrt() }
    }

    /// True when `|value − target| ≤ max(z·stderr, floor)`.
    pub fn consistent_with(&self, target: f64, z: f64, floor: f64) -> bool {
        (self.value - target).abs() <= (z * self.stderr).max(floor)
    }
}

/// One row of a diagnostics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimator: String,
    pub t: f64,
    pub location: f64,
    pub value: f64,
    pub stderr: f64,
}

impl ReportRow {
    pub fn new(estimator: &str, t: f64, location: f64, e: Estimate) -> Self {
        Self { estimator: estimator.into(), t, location, value: e.value, stderr: e.stderr }
    }
}

/// CSV with header `estimator,t,location,value,stderr`.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], mut out: W) -> io::Result<()> {
    writeln!(out, "estimator,t,location,value,stderr")?;
    for r in rows {
        writeln!(out, "{},{},{},{:.12e},{:.6e}", r.estimator, r.t, r.location, r.value, r.stderr)?;
    }
    Ok(())
}

fn require_bulk(params: &ModelParams, x: i64) -> Result<()> {
    // both endpoints of the bond must be in the bulk |x| <= N-K
    if !(params.in_bulk(x) && params.in_bulk(x + 1)) {
        return Err(Error::SiteOutOfDomain { site: x, domain: "bulk bonds, |x| <= N-K" });
    }
    Ok(())
}

/// Bulk current through bond `(x, x+1)`, gradient form
/// `−½ E[(η(x+1,t) − η(x,t))/ε]`.
pub fn bulk_current_gradient(ens: &Ensemble, x: i64, t: f64) -> Result<Estimate> {
    require_bulk(&ens.params, x)?;
    let ti = ens.time_index(t)?;
    let i = ens.params.offset(x);
    let scale = -0.5 / ens.params.epsilon();
    Ok(ens.estimate(|r| scale * (r.snapshots[ti][i + 1] as f64 - r.snapshots[ti][i] as f64)))
}

/// Bulk current through bond `(x, x+1)`, counting form: `ε` times the net
/// rightward crossings per unit time over `[t, t+w]`.
pub fn bulk_current_counting(ens: &Ensemble, x: i64, t: f64, w: f64) -> Result<Estimate> {
    require_bulk(&ens.params, x)?;
    let (t0, t1) = (ens.time_index(t)?, ens.time_index(t + w)?);
    let b = ens.bond_index(x)?;
    let scale = ens.params.epsilon() / w;
    Ok(ens.estimate(|r| scale * (r.crossings[t1][b] - r.crossings[t0][b]) as f64))
}

/// `(j₊, j₋)` from snapshots: `−(j/2)P(I₊ not full)`, `−(j/2)P(I₋ not empty)`.
///
/// On a `{0,1}` configuration `Σ_{y∈I₊} D₊η(y)` is the indicator that `I₊` is not full.
pub fn boundary_current_snapshot(ens: &Ensemble, t: f64) -> Result<(Estimate, Estimate)> {
    let ti = ens.time_index(t)?;
    let p = &ens.params;
    let (k, size) = (p.k(), p.num_sites());
    let half_j = 0.5 * p.j();
    let plus = ens.estimate(|r| if r.snapshots[ti][size - k..].iter().all(|&b| b == 1) { 0.0 } else { -half_j });
    let minus = ens.estimate(|r| if r.snapshots[ti][..k].iter().all(|&b| b == 0) { 0.0 } else { -half_j });
    Ok((plus, minus))
}

/// `(j₊, j₋)` from event counters: `−ε` times the birth (death) rate over `[t, t+w]`.
pub fn boundary_current_counter(ens: &Ensemble, t: f64, w: f64) -> Result<(Estimate, Estimate)> {
    let (t0, t1) = (ens.time_index(t)?, ens.time_index(t + w)?);
    let scale = -ens.params.epsilon() / w;
    let plus = ens.estimate(|r| scale * (r.births[t1] - r.births[t0]) as f64);
    let minus = ens.estimate(|r| scale * (r.deaths[t1] - r.deaths[t0]) as f64);
    Ok((plus, minus))
}

fn theta_sites(params: &ModelParams) -> Result<[usize; 4]> {
    if params.n() <= params.k() {
        return Err(Error::SiteOutOfDomain { site: params.n_i64() - params.k() as i64 - 1, domain: "lattice, needs N > K" });
    }
    let k = params.k();
    let size = params.num_sites();
    // offsets of N-K-1, N-K, -N+K, -N+K+1
    Ok([size - 2 - k, size - 1 - k, k, k + 1])
}

/// `(Θ₊, Θ₋)` from Monte Carlo: `ε⁻¹(E η(N−K) − E η(N−K−1))` and
/// `ε⁻¹(E η(−N+K+1) − E η(−N+K))`.
pub fn theta_mc(ens: &Ensemble, t: f64) -> Result<(Estimate, Estimate)> {
    let [a, b, c, d] = theta_sites(&ens.params)?;
    let ti = ens.time_index(t)?;
    let inv = 1.0 / ens.params.epsilon();
    let plus = ens.estimate(|r| inv * (r.snapshots[ti][b] as f64 - r.snapshots[ti][a] as f64));
    let minus = ens.estimate(|r| inv * (r.snapshots[ti][d] as f64 - r.snapshots[ti][c] as f64));
    Ok((plus, minus))
}

/// `(Θ₊, Θ₋)` from `ρ_ε` at the output time nearest `t`.
pub fn theta_profile(traj: &DiscreteTrajectory, t: f64) -> Result<(f64, f64)> {
    let [a, b, c, d] = theta_sites(&traj.params)?;
    let v = traj.at(t).values();
    let inv = 1.0 / traj.params.epsilon();
    Ok((inv * (v[b] - v[a]), inv * (v[d] - v[c])))
}

/// One compared quantity of the Fourier-law check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierRow {
    pub estimator: String,
    pub location: f64,
    pub microscopic: Estimate,
    /// `−½ ∂_r ρ` from the macroscopic solution.
    pub macroscopic: f64,
}

impl FourierRow {
    pub fn gap(&self) -> f64 {
        self.microscopic.value - self.macroscopic
    }
}

/// `∂_r ρ(r, t)` on the macroscopic grid row of `t`: central differences inside,
/// the 3-point one-sided stencil at `r = ±1`.
pub fn macro_gradient(sol: &MacroSolution, t: f64, r: f64) -> Result<f64> {
    let row = sol
        .grid
        .t
        .iter()
        .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t))
        .ok_or_else(|| Error::InvalidParams(format!("t = {t} not on the macroscopic grid")))?;
    let g = &sol.grid.r;
    let v = &sol.rho[row];
    let n = g.len();
    if n < 3 {
        return Err(Error::InvalidParams("macroscopic grid too coarse".into()));
    }
    let h = g[1] - g[0];
    let slope_at = |i: usize| {
        if i == 0 {
            (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * h)
        }
    };
    // linear interpolation of grid slopes
    let pos = ((r - g[0]) / h).clamp(0.0, (n - 1) as f64);
    let i = (pos.floor() as usize).min(n - 2);
    let w = pos - i as f64;
    Ok((1.0 - w) * slope_at(i) + w * slope_at(i + 1))
}

/// Fourier law at time `t`: bulk currents at bonds nearest `ε⁻¹r` for each
/// interior `r`, and boundary currents, against `−½∂_r ρ` of the macro solution.
pub fn fourier_check(ens: &Ensemble, sol: &MacroSolution, points: &[f64], t: f64, w: f64) -> Result<Vec<FourierRow>> {
    let eps = ens.params.epsilon();
    let mut rows = Vec::new();
    for &r in points {
        if r.abs() >= 1.0 {
            continue;
        }
        // the bond (x, x+1) containing r; its midpoint is ε(x + ½)
        let x = (r / eps).floor() as i64;
        let mid = eps * (x as f64 + 0.5);
        let target = -0.5 * macro_gradient(sol, t, mid)?;
        rows.push(FourierRow {
            estimator: "bulk_gradient".into(),
            location: mid,
            microscopic: bulk_current_gradient(ens, x, t)?,
            macroscopic: target,
        });
        if ens.bond_index(x).is_ok() && ens.time_index(t + w).is_ok() {
            rows.push(FourierRow {
                estimator: "bulk_counting".into(),
                location: mid,
                microscopic: bulk_current_counting(ens, x, t, w)?,
                macroscopic: target,
            });
        }
    }
    let (plus, minus) = boundary_current_snapshot(ens, t)?;
    rows.push(FourierRow {
        estimator: "boundary_snapshot".into(),
        location: 1.0,
        microscopic: plus,
        macroscopic: -0.5 * macro_gradient(sol, t, 1.0)?,
    });
    rows.push(FourierRow {
        estimator: "boundary_snapshot".into(),
        location: -1.0,
        microscopic: minus,
        macroscopic: -0.5 * macro_gradient(sol, t, -1.0)?,
    });
    Ok(rows)
}

/// Sample of the v-function `E[∏(η(xᵢ,t) − ρ(xᵢ,t))]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VStatistic {
    pub sites: Vec<i64>,
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
}

fn check_sites(params: &ModelParams, sites: &[i64]) -> Result<Vec<usize>> {
    for (a, &x) in sites.iter().enumerate() {
        if !params.contains(x) {
            return Err(Error::SiteOutOfDomain { site: x, domain: "Λ_N" });
        }
        if sites[..a].contains(&x) {
            return Err(Error::RepeatedSite(x));
        }
    }
    Ok(sites.iter().map(|&x| params.offset(x)).collect())
}

/// v-statistic centred on an arbitrary per-site reference.
pub fn v_statistic_with_reference(ens: &Ensemble, reference: &[f64], sites: &[i64], t: f64) -> Result<VStatistic> {
    let offsets = check_sites(&ens.params, sites)?;
    let ti = ens.time_index(t)?;
    let e = ens.estimate(|r| offsets.iter().map(|&i| r.snapshots[ti][i] as f64 - reference[i]).product());
    Ok(VStatistic { sites: sites.to_vec(), t, estimate: e.value, stderr: e.stderr, n: ens.params.n() })
}

/// v-statistic centred on `ρ_ε` at time `t`.
pub fn v_statistic(ens: &Ensemble, rho_eps: &DiscreteTrajectory, sites: &[i64], t: f64) -> Result<VStatistic> {
    let i = rho_eps.index_near(t);
    if (rho_eps.times[i] - t).abs() > 1e-12 * (1.0 + t) {
        return Err(Error::InvalidParams(format!("trajectory has no output at t = {t}")));
    }
    v_statistic_with_reference(ens, rho_eps.profiles[i].values(), sites, t)
}

/// Empirical probability that `sup_x |block avg of η − block avg of ρ_ε| ≥ δ`,
/// blocks `[x−M, x+M] ∩ Λ_N`, `M = ⌊N^a⌋`.
pub fn block_average_deviation(ens: &Ensemble, rho_eps: &DiscreteTrajectory, t: f64, a: f64, delta: f64) -> Result<Estimate> {
    let m = (ens.params.n() as f64).powf(a).floor() as usize;
    if !(a > 0.0 && a < 1.0) || m < 2 {
        return Err(Error::InvalidParams(format!("need a in (0,1) with floor(N^a) >= 2, got a = {a}")));
    }
    let ti = ens.time_index(t)?;
    let rho = rho_eps.at(t).values();
    let size = rho.len();
    let prefix = |v: &mut dyn Iterator<Item = f64>| {
        let mut p = vec![0.0];
        for x in v {
            p.push(p.last().unwrap() + x);
        }
        p
    };
    let rho_prefix = prefix(&mut rho.iter().copied());
    Ok(ens.estimate(|r| {
        let eta_prefix = prefix(&mut r.snapshots[ti].iter().map(|&b| b as f64));
        let worst = (0..size)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(m), (i + m).min(size - 1));
                let len = (hi - lo + 1) as f64;
                ((eta_prefix[hi + 1] - eta_prefix[lo]) - (rho_prefix[hi + 1] - rho_prefix[lo])).abs() / len
            })
            .fold(0.0, f64::max);
        if worst >= delta {
            1.0
        } else {
            0.0
        }
    }))
}

/// `sup |ρ_ε(x,t) − ρ(εx,t)|` over lattice sites and trajectory times in
/// `[t₀, t₁]` that are also macroscopic grid times; `ρ(εx,·)` is linearly
/// interpolated in `r` (exact when the grid contains the lattice points).
pub fn hydrodynamic_gap(rho_eps: &DiscreteTrajectory, sol: &MacroSolution, window: (f64, f64)) -> Result<f64> {
    let (t0, t1) = window;
    if !(t0 > 0.0 && t1 >= t0) {
        return Err(Error::InvalidParams("window must satisfy 0 < t0 <= t1".into()));
    }
    let eps = rho_eps.params.epsilon();
    let mut gap: f64 = 0.0;
    let mut used = 0;
    for (t, prof) in rho_eps.times.iter().zip(&rho_eps.profiles) {
        if *t < t0 - 1e-12 || *t > t1 + 1e-12 {
            continue;
        }
        let Some(row) = sol.grid.t.iter().position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t)) else {
            continue;
        };
        used += 1;
        for (i, v) in prof.values().iter().enumerate() {
            let r = eps * rho_eps.params.site(i) as f64;
            gap = gap.max((v - sol.interpolate(row, r)).abs());
        }
    }
    if used == 0 {
        return Err(Error::InvalidParams("no common times in the window".into()));
    }
    Ok(gap)
}

/// Largest per-replica violation of the discrete continuity equation on the
/// tracked bonds outside the reservoir blocks: the mass change right of
/// `(x,x+1)` equals the crossings plus the births minus the deaths on that side.
pub fn crossing_continuity_defect(ens: &Ensemble) -> i64 {
    let size = ens.params.num_sites();
    let mut worst = 0;
    for r in &ens.records {
        let mass_right = |occ: &[u8], i: usize| occ[i + 1..].iter().map(|&b| b as i64).sum::<i64>();
        for (b, &x) in ens.spec.tracked_bonds.iter().enumerate() {
            let i = ens.params.offset(x);
            let k = ens.params.k();
            if i >= size - k || i + 1 < k {
                // bond inside a reservoir block: events land on either side
                continue;
            }
            // births land in I₊, deaths in I₋: attribute each to its side of the bond
            let plus_right = size - ens.params.k() > i;
            let minus_right = ens.params.k() > i + 1;
            let m0 = mass_right(&r.initial, i);
            for ti in 0..ens.spec.times.len() {
                let dm = mass_right(&r.snapshots[ti], i) - m0;
                let mut source = 0;
                if plus_right {
                    source += r.births[ti] as i64;
                }
                if minus_right {
                    source -= r.deaths[ti] as i64;
                }
                worst = worst.max((dm - r.crossings[ti][b] - source).abs());
            }
        }
    }
    worst
}
