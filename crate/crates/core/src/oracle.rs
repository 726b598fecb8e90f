//! Exact master equation on `{0,1}^Λ_N` for tiny lattices.
//!
//! States are bitmasks with site `x` at bit `x + N`. Laws are row vectors
//! evolving by `d/dt μ = μ L`.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{DensityProfile, ModelParams};
use crate::uniformize::poisson_window;

/// Largest lattice the oracle accepts.
pub const MAX_SITES: usize = 13;

/// Sparse generator with off-diagonal rates per row.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    params: ModelParams,
    rows: Vec<Vec<(u32, f64)>>,
    diagonal: Vec<f64>,
}

#[inline]
fn bit(mask: u64, i: usize) -> u64 {
    (mask >> i) & 1
}

/// `D₊η(x)` evaluated from the bitmask directly.
fn d_plus_mask(params: &ModelParams, mask: u64, i: usize) -> f64 {
    let top = params.num_sites() - 1;
    let above_full = (i + 1..=top).all(|y| bit(mask, y) == 1);
    if bit(mask, i) == 0 && above_full {
        1.0
    } else {
        0.0
    }
}

/// `D₋η(x)` evaluated from the bitmask directly.
fn d_minus_mask(mask: u64, i: usize) -> f64 {
    let below_empty = (0..i).all(|y| bit(mask, y) == 0);
    if bit(mask, i) == 1 && below_empty {
        1.0
    } else {
        0.0
    }
}

impl GeneratorMatrix {
    pub fn build(params: &ModelParams) -> Result<Self> {
        let sites = params.num_sites();
        if sites > MAX_SITES {
            return Err(Error::StateSpaceTooLarge { sites, limit: MAX_SITES });
        }
        let eps = params.epsilon();
        let exchange = 0.5 / (eps * eps);
        let flip = (0.5 * params.j()) / eps;
        let k = params.k();
        let states = 1usize << sites;
        let mut rows = Vec::with_capacity(states);
        let mut diagonal = Vec::with_capacity(states);
        for s in 0..states as u64 {
            let mut row = Vec::new();
            for i in 0..sites - 1 {
                if bit(s, i) != bit(s, i + 1) {
                    row.push(((s ^ (0b11 << i)) as u32, exchange));
                }
            }
            if flip > 0.0 {
                for i in sites - k..sites {
                    let rate = flip * d_plus_mask(params, s, i);
                    if rate > 0.0 {
                        row.push(((s ^ (1 << i)) as u32, rate));
                    }
                }
                for i in 0..k {
                    let rate = flip * d_minus_mask(s, i);
                    if rate > 0.0 {
                        row.push(((s ^ (1 << i)) as u32, rate));
                    }
                }
            }
            diagonal.push(-row.iter().map(|e| e.1).sum::<f64>());
            rows.push(row);
        }
        Ok(Self { params: params.clone(), rows, diagonal })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    /// Off-diagonal entries `(target, rate)` of row `state`.
    pub fn row(&self, state: usize) -> &[(u32, f64)] {
        &self.rows[state]
    }

    pub fn diagonal(&self, state: usize) -> f64 {
        self.diagonal[state]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diagonal.iter().fold(0.0, |m, d| m.max(-d))
    }

    /// Largest `|row sum|`, zero up to rounding.
    pub fn row_sum_error(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.diagonal)
            .map(|(r, d)| (r.iter().map(|e| e.1).sum::<f64>() + d).abs())
            .fold(0.0, f64::max)
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.num_states();
        let mut out = vec![0.0; n * n];
        for (s, row) in self.rows.iter().enumerate() {
            out[s * n + s] = self.diagonal[s];
            for &(t, r) in row {
                out[s * n + t as usize] += r;
            }
        }
        out
    }

    /// CSV of `(row, col, value)` triplets, diagonal included.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "row,col,value")?;
        for (s, row) in self.rows.iter().enumerate() {
            writeln!(out, "{s},{s},{:e}", self.diagonal[s])?;
            for &(t, r) in row {
                writeln!(out, "{s},{t},{r:e}")?;
            }
        }
        Ok(())
    }
}

/// A probability vector over configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct LawVector {
    params: ModelParams,
    probs: Vec<f64>,
}

impl LawVector {
    pub fn new(params: &ModelParams, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << params.num_sites() {
            return Err(Error::InvalidParams("law length must be 2^(2N+1)".into()));
        }
        if let Some((i, &v)) = probs.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::OutOfUnitRange { index: i, value: v });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!("law sums to {total}")));
        }
        Ok(Self { params: params.clone(), probs })
    }

    pub fn point_mass(params: &ModelParams, state: u64) -> Self {
        let mut probs = vec![0.0; 1 << params.num_sites()];
        probs[state as usize] = 1.0;
        Self { params: params.clone(), probs }
    }

    /// Product Bernoulli law with the given marginals.
    pub fn product(params: &ModelParams, profile: &DensityProfile) -> Self {
        let sites = params.num_sites();
        let probs = (0..1u64 << sites)
            .map(|s| {
                (0..sites)
                    .map(|i| if bit(s, i) == 1 { profile.values()[i] } else { 1.0 - profile.values()[i] })
                    .product()
            })
            .collect();
        Self { params: params.clone(), probs }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// `E[f(η)]`.
    pub fn expect(&self, f: impl Fn(u64) -> f64) -> f64 {
        self.probs.iter().enumerate().filter(|(_, p)| **p != 0.0).map(|(s, p)| p * f(s as u64)).sum()
    }

    /// CSV `state,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "state,value")?;
        for (s, p) in self.probs.iter().enumerate() {
            writeln!(out, "{s},{p:e}")?;
        }
        Ok(())
    }
}

/// Law at time `t` by uniformization, Poisson tail below 1e-12.
pub fn evolve_law(gen: &GeneratorMatrix, initial: &LawVector, t: f64) -> LawVector {
    assert!(t >= 0.0);
    if t == 0.0 {
        return initial.clone();
    }
    let rate = gen.max_exit_rate();
    if rate == 0.0 {
        return initial.clone();
    }
    let window = poisson_window(rate * t, 1e-12);
    let n = gen.num_states();
    let mut cur = initial.probs.clone();
    let mut next = vec![0.0; n];
    let mut out = vec![0.0; n];
    let last = window.first + window.weights.len();
    for k in 0..last {
        if k >= window.first {
            let w = window.weights[k - window.first];
            for (o, c) in out.iter_mut().zip(&cur) {
                *o += w * c;
            }
        }
        // next = cur (I + L / rate)
        for (s, nx) in next.iter_mut().enumerate() {
            *nx = cur[s] * (1.0 + gen.diagonal[s] / rate);
        }
        for (s, row) in gen.rows.iter().enumerate() {
            let mass = cur[s];
            if mass == 0.0 {
                continue;
            }
            for &(t, r) in row {
                next[t as usize] += mass * r / rate;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    LawVector { params: initial.params.clone(), probs: out }
}

/// `E[η(x)]` for every site.
pub fn marginal_expectations(law: &LawVector) -> DensityProfile {
    let sites = law.params.num_sites();
    let mut m = vec![0.0; sites];
    for (s, &p) in law.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (i, v) in m.iter_mut().enumerate() {
            if bit(s as u64, i) == 1 {
                *v += p;
            }
        }
    }
    for v in &mut m {
        *v = v.clamp(0.0, 1.0);
    }
    DensityProfile::new(m, 0.0).expect("marginals lie in [0,1]")
}

/// Right side of the expectation dynamics evaluated under `law`:
/// `½ε⁻²ΔE[η](x) + ε⁻¹(j/2)(1_{I₊}E[D₊η](x) − 1_{I₋}E[D₋η](x))`.
pub fn expectation_drift(law: &LawVector) -> Vec<f64> {
    let params = &law.params;
    let eps = params.epsilon();
    let sites = params.num_sites();
    let k = params.k();
    let m = marginal_expectations(law);
    let lap = crate::model::discrete_laplacian(m.values());
    let mut out: Vec<f64> = lap.iter().map(|v| 0.5 * v / (eps * eps)).collect();
    let flip = 0.5 * params.j() / eps;
    for i in sites - k..sites {
        out[i] += flip * law.expect(|s| d_plus_mask(params, s, i));
    }
    for (i, o) in out.iter_mut().enumerate().take(k) {
        *o -= flip * law.expect(|s| d_minus_mask(s, i));
    }
    out
}

/// `E[∏ᵢ (η(xᵢ) − ρ(xᵢ))]` under `law`.
pub fn v_function_exact(law: &LawVector, reference: &DensityProfile, sites: &[i64]) -> Result<f64> {
    let params = &law.params;
    for (a, &x) in sites.iter().enumerate() {
        if !params.contains(x) {
            return Err(Error::SiteOutOfDomain { site: x, domain: "Λ_N" });
        }
        if sites[..a].contains(&x) {
            return Err(Error::RepeatedSite(x));
        }
    }
    let idx: Vec<(usize, f64)> = sites.iter().map(|&x| (params.offset(x), reference.get(x))).collect();
    Ok(law.expect(|s| idx.iter().map(|&(i, r)| bit(s, i) as f64 - r).product()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn params(n: usize, k: usize, j: f64) -> ModelParams {
        ModelParams::new(n, k, j).unwrap()
    }

    #[test]
    fn generator_rows_are_conservative() {
        for (n, k, j) in [(2, 1, 0.0), (2, 1, 1.0), (3, 2, 2.5)] {
            let p = params(n, k, j);
            let g = GeneratorMatrix::build(&p).unwrap();
            assert!(g.row_sum_error() < 1e-12);
            assert!(g.rows.iter().flatten().all(|e| e.1 > 0.0));
        }
        assert!(GeneratorMatrix::build(&params(7, 1, 1.0)).is_err());
    }

    #[test]
    fn small_generator_examples() {
        let p0 = params(1, 1, 0.0);
        let g = GeneratorMatrix::build(&p0).unwrap();
        for (s, row) in g.rows.iter().enumerate() {
            for &(t, _) in row {
                let diff = s as u32 ^ t;
                assert_eq!(diff.count_ones(), 2);
                assert_eq!(diff >> diff.trailing_zeros(), 0b11);
            }
        }
        let g = GeneratorMatrix::build(&params(1, 1, 1.0)).unwrap();
        assert!((g.diagonal(0b111) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniformization_matches_dense_exponential() {
        let p = params(1, 1, 1.0);
        let g = GeneratorMatrix::build(&p).unwrap();
        let n = g.num_states();
        let dense = DMatrix::from_row_slice(n, n, &g.to_dense());
        let start = LawVector::point_mass(&p, 0b010);
        for &t in &[0.0, 0.2, 1.3] {
            let e = (dense.clone() * t).exp();
            let law = evolve_law(&g, &start, t);
            for c in 0..n {
                assert!((law.probabilities()[c] - e[(0b010, c)]).abs() < 1e-10);
            }
            let total: f64 = law.probabilities().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn marginals_of_simple_laws() {
        let p = params(2, 1, 1.0);
        let full = LawVector::point_mass(&p, 0b11111);
        assert!(marginal_expectations(&full).values().iter().all(|&v| v == 1.0));
        let uniform = LawVector::new(&p, vec![1.0 / 32.0; 32]).unwrap();
        assert!(marginal_expectations(&uniform).values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn marginal_derivative_matches_expectation_drift() {
        let p = params(3, 1, 1.0);
        let g = GeneratorMatrix::build(&p).unwrap();
        let rho0 = DensityProfile::from_fn(&p, |r| 0.3 + 0.4 * (r + 1.0) / 2.0).unwrap();
        let start = LawVector::product(&p, &rho0);
        let t = 0.05;
        let h = 1e-4;
        let law = evolve_law(&g, &start, t);
        let up = marginal_expectations(&evolve_law(&g, &start, t + h));
        let down = marginal_expectations(&evolve_law(&g, &start, t - h));
        let drift = expectation_drift(&law);
        for i in 0..p.num_sites() {
            let fd = (up.values()[i] - down.values()[i]) / (2.0 * h);
            assert!((fd - drift[i]).abs() < 1e-6, "site {i}: {fd} vs {}", drift[i]);
        }
    }

    #[test]
    fn stirring_conserves_sectors_and_uniform_is_stationary() {
        let p = params(2, 1, 0.0);
        let g = GeneratorMatrix::build(&p).unwrap();
        for (s, row) in g.rows.iter().enumerate() {
            for &(t, _) in row {
                assert_eq!((s as u32).count_ones(), t.count_ones());
            }
        }
        for m in 0..=5u32 {
            let count = (0..32u32).filter(|s| s.count_ones() == m).count() as f64;
            let probs = (0..32u32).map(|s| if s.count_ones() == m { 1.0 / count } else { 0.0 }).collect();
            let law = LawVector::new(&p, probs).unwrap();
            let later = evolve_law(&g, &law, 0.7);
            for (a, b) in law.probabilities().iter().zip(later.probabilities()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn v_functions() {
        let p = params(3, 1, 1.0);
        let rho0 = DensityProfile::from_fn(&p, |r| 0.5 + 0.3 * r).unwrap();
        let law = LawVector::product(&p, &rho0);
        assert!(v_function_exact(&law, &rho0, &[-1, 1]).unwrap().abs() < 1e-15);
        assert!(v_function_exact(&law, &rho0, &[-3, 0, 2]).unwrap().abs() < 1e-15);
        assert!(matches!(v_function_exact(&law, &rho0, &[1, 1]), Err(Error::RepeatedSite(1))));

        let g = GeneratorMatrix::build(&p).unwrap();
        let later = evolve_law(&g, &law, 0.5);
        let m = marginal_expectations(&later);
        assert!(v_function_exact(&later, &m, &[2]).unwrap().abs() < 1e-12);
        // E[(a-ρa)(b-ρb)] = E[ab] - ρa E[b] - ρb E[a] + ρa ρb
        let (ia, ib) = (p.offset(-1), p.offset(1));
        let eab = later.expect(|s| (bit(s, ia) * bit(s, ib)) as f64);
        let (ra, rb) = (rho0.get(-1), rho0.get(1));
        let expanded = eab - ra * m.get(1) - rb * m.get(-1) + ra * rb;
        let direct = v_function_exact(&later, &rho0, &[-1, 1]).unwrap();
        assert!((direct - expanded).abs() < 1e-12);
    }
}
