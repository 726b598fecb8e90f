//! Lattice geometry, particle configurations, density profiles, the boundary
//! operators `D±`, the reflection maps and the reflecting discrete Laplacian.
//!
//! Sites are signed integers in `[-N, N]`. The reservoir blocks are
//! `I₊ = [N-K+1, N]` (births) and `I₋ = [-N, -N+K-1]` (deaths).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice half-width `N`, reservoir width `K` and reservoir rate `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n: usize,
    k: usize,
    j: f64,
}

impl ModelParams {
    pub fn new(n: usize, k: usize, j: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParams("reservoir width K must be at least 1".into()));
        }
        // N >= K keeps I₊, I₋ disjoint and the bulk |x| <= N-K nonempty
        if n < k {
            return Err(Error::InvalidParams(format!(
                "lattice half-width N={n} must be at least the reservoir width K={k}"
            )));
        }
        if !(j.is_finite() && j >= 0.0) {
            return Err(Error::InvalidParams(format!("reservoir rate j={j} must be finite and >= 0")));
        }
        Ok(Self { n, k, j })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn j(&self) -> f64 {
        self.j
    }

    /// Lattice spacing `ε = 1/N`.
    #[inline]
    pub fn epsilon(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of sites `2N + 1`.
    #[inline]
    pub fn num_sites(&self) -> usize {
        2 * self.n + 1
    }

    #[inline]
    pub fn n_i64(&self) -> i64 {
        self.n as i64
    }

    /// Array offset of lattice site `x`.
    #[inline]
    pub fn offset(&self, x: i64) -> usize {
        debug_assert!(self.contains(x));
        (x + self.n as i64) as usize
    }

    /// Lattice site at array offset `i`.
    #[inline]
    pub fn site(&self, i: usize) -> i64 {
        i as i64 - self.n as i64
    }

    #[inline]
    pub fn contains(&self, x: i64) -> bool {
        x.abs() <= self.n as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> + Clone {
        let n = self.n as i64;
        -n..=n
    }

    /// Birth block `I₊ = [N-K+1, N]`.
    pub fn i_plus(&self) -> std::ops::RangeInclusive<i64> {
        let (n, k) = (self.n as i64, self.k as i64);
        n - k + 1..=n
    }

    /// Death block `I₋ = [-N, -N+K-1]`.
    pub fn i_minus(&self) -> std::ops::RangeInclusive<i64> {
        let (n, k) = (self.n as i64, self.k as i64);
        -n..=-n + k - 1
    }

    #[inline]
    pub fn in_i_plus(&self, x: i64) -> bool {
        x > (self.n - self.k) as i64 && x <= self.n as i64
    }

    #[inline]
    pub fn in_i_minus(&self, x: i64) -> bool {
        x >= -(self.n as i64) && x < -((self.n - self.k) as i64)
    }

    /// Sites with `|x| <= N - K`, away from both reservoirs.
    #[inline]
    pub fn in_bulk(&self, x: i64) -> bool {
        x.abs() <= (self.n - self.k) as i64
    }
}

/// Anything that assigns a value in `[0, 1]` to each lattice site.
pub trait SiteValues {
    fn value_at(&self, x: i64) -> f64;
}

/// A real function on `Λ_N`, valued in `[0, 1]`, tagged with a macroscopic time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    n: usize,
    values: Vec<f64>,
    time: f64,
}

impl DensityProfile {
    /// Builds a profile from values ordered by site `-N..=N`.
    pub fn new(values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() < 3 || values.len() % 2 == 0 {
            return Err(Error::InvalidParams(format!(
                "profile length {} is not of the form 2N+1 with N >= 1",
                values.len()
            )));
        }
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfUnitRange { index, value });
        }
        let n = (values.len() - 1) / 2;
        Ok(Self { n, values, time })
    }

    pub fn constant(params: &ModelParams, c: f64) -> Result<Self> {
        Self::new(vec![c; params.num_sites()], 0.0)
    }

    /// Samples `f(ε x)` at every site.
    pub fn from_fn(params: &ModelParams, f: impl Fn(f64) -> f64) -> Result<Self> {
        let eps = params.epsilon();
        Self::new(params.sites().map(|x| f(eps * x as f64)).collect(), 0.0)
    }

    #[allow(dead_code)]
    pub(crate) fn from_values_unchecked(values: Vec<f64>, time: f64) -> Self {
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        let n = (values.len() - 1) / 2;
        Self { n, values, time }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: i64) -> f64 {
        self.values[(x + self.n as i64) as usize]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl SiteValues for DensityProfile {
    #[inline]
    fn value_at(&self, x: i64) -> f64 {
        self.get(x)
    }
}

/// One particle configuration `η ∈ {0,1}^Λ_N`, with cached reservoir state.
///
/// `top_empty_plus` is the largest empty site of `I₊` and
/// `bottom_occupied_minus` the smallest occupied site of `I₋`; these are the
/// only sites where a birth (resp. death) can currently happen.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    params: ModelParams,
    occupancy: Vec<u8>,
    top_empty_plus: Option<i64>,
    bottom_occupied_minus: Option<i64>,
}

impl Configuration {
    pub fn empty(params: &ModelParams) -> Self {
        Self::from_occupancy(params, vec![0; params.num_sites()])
    }

    pub fn full(params: &ModelParams) -> Self {
        Self::from_occupancy(params, vec![1; params.num_sites()])
    }

    /// Panics if `occupancy` has the wrong length or entries other than 0/1.
    pub fn from_occupancy(params: &ModelParams, occupancy: Vec<u8>) -> Self {
        assert_eq!(occupancy.len(), params.num_sites(), "occupancy length mismatch");
        assert!(occupancy.iter().all(|&b| b <= 1), "occupancy must be 0/1");
        let mut config = Self {
            params: *params,
            occupancy,
            top_empty_plus: None,
            bottom_occupied_minus: None,
        };
        config.refresh_caches();
        config
    }

    /// Configuration with site `x` at bit `x + N` of `mask`.
    pub fn from_bitmask(params: &ModelParams, mask: u64) -> Self {
        let occupancy = (0..params.num_sites()).map(|i| ((mask >> i) & 1) as u8).collect();
        Self::from_occupancy(params, occupancy)
    }

    pub fn to_bitmask(&self) -> u64 {
        assert!(self.occupancy.len() <= 64);
        self.occupancy
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    #[inline]
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    #[inline]
    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    #[inline]
    pub fn get(&self, x: i64) -> u8 {
        self.occupancy[self.params.offset(x)]
    }

    pub fn particle_count(&self) -> u64 {
        self.occupancy.iter().map(|&b| b as u64).sum()
    }

    #[inline]
    pub fn top_empty_plus(&self) -> Option<i64> {
        self.top_empty_plus
    }

    #[inline]
    pub fn bottom_occupied_minus(&self) -> Option<i64> {
        self.bottom_occupied_minus
    }

    fn scan_top_empty_plus(&self) -> Option<i64> {
        self.params.i_plus().rev().find(|&x| self.get(x) == 0)
    }

    fn scan_bottom_occupied_minus(&self) -> Option<i64> {
        self.params.i_minus().find(|&x| self.get(x) == 1)
    }

    fn refresh_caches(&mut self) {
        self.top_empty_plus = self.scan_top_empty_plus();
        self.bottom_occupied_minus = self.scan_bottom_occupied_minus();
    }

    /// True when the cached reservoir sites agree with the occupancy.
    pub fn caches_consistent(&self) -> bool {
        self.top_empty_plus == self.scan_top_empty_plus()
            && self.bottom_occupied_minus == self.scan_bottom_occupied_minus()
    }

    /// Exchanges the occupancies of offsets `i` and `i + 1`.
    #[inline]
    pub(crate) fn exchange_offsets(&mut self, i: usize) {
        self.occupancy.swap(i, i + 1);
        let n = self.params.n;
        let k = self.params.k;
        if i + 1 >= 2 * n + 1 - k {
            self.top_empty_plus = self.scan_top_empty_plus();
            debug_assert!(self.caches_consistent());
        }
        if i < k {
            self.bottom_occupied_minus = self.scan_bottom_occupied_minus();
            debug_assert!(self.caches_consistent());
        }
    }

    /// Exchanges the occupancies of sites `x` and `x + 1`.
    pub fn exchange(&mut self, x: i64) {
        assert!(x >= -self.params.n_i64() && x < self.params.n_i64(), "bond out of range");
        self.exchange_offsets(self.params.offset(x));
    }

    /// Fills the top empty site of `I₊`; returns it, or `None` when `I₊` is full.
    pub fn birth(&mut self) -> Option<i64> {
        let x = self.top_empty_plus?;
        let i = self.params.offset(x);
        debug_assert_eq!(self.occupancy[i], 0);
        self.occupancy[i] = 1;
        // sites above x were already occupied
        let low = *self.params.i_plus().start();
        self.top_empty_plus = (low..x).rev().find(|&y| self.get(y) == 0);
        debug_assert!(self.caches_consistent());
        Some(x)
    }

    /// Empties the bottom occupied site of `I₋`; returns it, or `None` when `I₋` is empty.
    pub fn death(&mut self) -> Option<i64> {
        let x = self.bottom_occupied_minus?;
        let i = self.params.offset(x);
        debug_assert_eq!(self.occupancy[i], 1);
        self.occupancy[i] = 0;
        let high = *self.params.i_minus().end();
        self.bottom_occupied_minus = (x + 1..=high).find(|&y| self.get(y) == 1);
        debug_assert!(self.caches_consistent());
        Some(x)
    }

    /// Flips the occupation number at `x` (the configuration `η^(x)`).
    pub fn flip(&mut self, x: i64) {
        let i = self.params.offset(x);
        self.occupancy[i] ^= 1;
        self.refresh_caches();
    }
}

impl SiteValues for Configuration {
    #[inline]
    fn value_at(&self, x: i64) -> f64 {
        self.get(x) as f64
    }
}

/// `D₊u(x) = (1 - u(x)) u(x+1) ⋯ u(N)` for `x ∈ I₊`.
pub fn d_plus(params: &ModelParams, u: &impl SiteValues, x: i64) -> Result<f64> {
    if !params.in_i_plus(x) {
        return Err(Error::SiteOutOfDomain { site: x, domain: "I+" });
    }
    let n = params.n_i64();
    let tail: f64 = (x + 1..=n).map(|y| u.value_at(y)).product();
    Ok((1.0 - u.value_at(x)) * tail)
}

/// `D₋u(x) = u(x) (1 - u(x-1)) ⋯ (1 - u(-N))` for `x ∈ I₋`.
pub fn d_minus(params: &ModelParams, u: &impl SiteValues, x: i64) -> Result<f64> {
    if !params.in_i_minus(x) {
        return Err(Error::SiteOutOfDomain { site: x, domain: "I-" });
    }
    let n = params.n_i64();
    let tail: f64 = (-n..x).map(|y| 1.0 - u.value_at(y)).product();
    Ok(u.value_at(x) * tail)
}

/// `D₊u` on all of `I₊`, ordered from `N-K+1` up to `N`.
pub fn d_plus_block(params: &ModelParams, u: &[f64]) -> Vec<f64> {
    let n = params.num_sites();
    let k = params.k();
    let mut out = vec![0.0; k];
    let mut tail = 1.0;
    for h in 0..k {
        let i = n - 1 - h;
        out[k - 1 - h] = (1.0 - u[i]) * tail;
        tail *= u[i];
    }
    out
}

/// `D₋u` on all of `I₋`, ordered from `-N` up to `-N+K-1`.
pub fn d_minus_block(params: &ModelParams, u: &[f64]) -> Vec<f64> {
    let k = params.k();
    let mut out = vec![0.0; k];
    let mut tail = 1.0;
    for (h, slot) in out.iter_mut().enumerate() {
        *slot = u[h] * tail;
        tail *= 1.0 - u[h];
    }
    out
}

/// Discrete Laplacian on `Λ_N` with reflecting ends (no `ε⁻²` factor).
pub fn discrete_laplacian(u: &[f64]) -> Vec<f64> {
    let len = u.len();
    assert!(len >= 2, "laplacian needs at least two sites");
    let mut out = vec![0.0; len];
    out[0] = u[1] - u[0];
    out[len - 1] = u[len - 2] - u[len - 1];
    for i in 1..len - 1 {
        out[i] = u[i + 1] + u[i - 1] - 2.0 * u[i];
    }
    out
}

/// Reflection map `ψ_N : ℤ → Λ_N`.
///
/// Identity on `[-N, N]`; beyond `N` the line is folded with fold length
/// `2N+1`, so `N+1 ↦ N`, ..., `3N+1 ↦ -N`, `3N+2 ↦ -N`, ... The map is odd and
/// `(4N+2)`-periodic.
pub fn psi_n(n: usize, z: i64) -> i64 {
    let n = n as i64;
    let period = 4 * n + 2;
    let m = (z + n).rem_euclid(period);
    if m <= 2 * n {
        m - n
    } else {
        3 * n + 1 - m
    }
}

/// Continuum reflection map `ψ : ℝ → [-1, 1]`, 4-periodic, `ψ(r) = 2 - r` on `[1, 3]`.
pub fn psi_continuum(r: f64) -> f64 {
    let m = (r + 1.0).rem_euclid(4.0);
    if m <= 2.0 {
        m - 1.0
    } else {
        3.0 - m
    }
}

/// `Ψ_N(z) = N ψ(z/N)`, computed exactly on integers (period `4N`).
pub fn capital_psi_n(n: usize, z: i64) -> i64 {
    let n = n as i64;
    let m = (z + n).rem_euclid(4 * n);
    if m <= 2 * n {
        m - n
    } else {
        3 * n - m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(n: usize, k: usize) -> ModelParams {
        ModelParams::new(n, k, 1.0).unwrap()
    }

    #[test]
    fn rejects_overlapping_reservoirs() {
        assert!(ModelParams::new(2, 3, 1.0).is_err());
        assert!(ModelParams::new(1, 1, 1.0).is_ok());
        assert!(ModelParams::new(3, 0, 1.0).is_err());
        assert!(ModelParams::new(3, 1, -1.0).is_err());
        let p = params(5, 2);
        assert_eq!(p.epsilon() * p.n() as f64, 1.0);
        assert_eq!(p.i_plus(), 4..=5);
        assert_eq!(p.i_minus(), -5..=-4);
    }

    #[test]
    fn d_plus_examples() {
        let p = params(4, 2);
        let full = DensityProfile::constant(&p, 1.0).unwrap();
        for x in p.i_plus() {
            assert_eq!(d_plus(&p, &full, x).unwrap(), 0.0);
        }
        let mut v = vec![0.5; p.num_sites()];
        v[p.offset(4)] = 1.0;
        v[p.offset(3)] = 0.0;
        let u = DensityProfile::new(v, 0.0).unwrap();
        assert_eq!(d_plus(&p, &u, 4).unwrap(), 0.0);
        assert_eq!(d_plus(&p, &u, 3).unwrap(), 1.0);
        let half = DensityProfile::constant(&p, 0.5).unwrap();
        assert_eq!(d_plus(&p, &half, 4).unwrap(), 0.5);
        assert_eq!(d_plus(&p, &half, 3).unwrap(), 0.25);
        assert!(matches!(d_plus(&p, &half, 2), Err(Error::SiteOutOfDomain { .. })));
    }

    #[test]
    fn d_minus_examples() {
        let p = params(4, 2);
        let empty = DensityProfile::constant(&p, 0.0).unwrap();
        for x in p.i_minus() {
            assert_eq!(d_minus(&p, &empty, x).unwrap(), 0.0);
        }
        let p1 = params(4, 1);
        let mut v = vec![0.0; p1.num_sites()];
        v[0] = 1.0;
        let u = DensityProfile::new(v, 0.0).unwrap();
        assert_eq!(d_minus(&p1, &u, -4).unwrap(), 1.0);
        let half = DensityProfile::constant(&p, 0.5).unwrap();
        assert_eq!(d_minus(&p, &half, -4).unwrap(), 0.5);
        assert_eq!(d_minus(&p, &half, -3).unwrap(), 0.25);
        assert!(d_minus(&p, &half, -2).is_err());
    }

    #[test]
    fn block_forms_match_pointwise() {
        let p = params(6, 3);
        let u: Vec<f64> = (0..p.num_sites()).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let prof = DensityProfile::new(u.clone(), 0.0).unwrap();
        let plus = d_plus_block(&p, &u);
        for (h, x) in p.i_plus().enumerate() {
            assert!((plus[h] - d_plus(&p, &prof, x).unwrap()).abs() < 1e-15);
        }
        let minus = d_minus_block(&p, &u);
        for (h, x) in p.i_minus().enumerate() {
            assert!((minus[h] - d_minus(&p, &prof, x).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn laplacian_examples() {
        assert!(discrete_laplacian(&[0.3; 9]).iter().all(|&v| v == 0.0));
        let lin: Vec<f64> = (-4..=4).map(|x| x as f64).collect();
        let lap = discrete_laplacian(&lin);
        assert_eq!(lap[0], 1.0);
        assert_eq!(lap[8], -1.0);
        assert!(lap[1..8].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reflection_map_examples() {
        assert_eq!(psi_n(10, 5), 5);
        assert_eq!(psi_n(10, 11), 10);
        assert_eq!(psi_n(10, 32), -10);
        assert_eq!(psi_n(10, -11), -10);
        assert_eq!(psi_n(10, 31), -10);
        assert_eq!(psi_n(10, 33), -9);
        assert_eq!(psi_continuum(0.5), 0.5);
        assert_eq!(psi_continuum(1.5), 0.5);
        assert!((psi_continuum(4.3) - 0.3).abs() < 1e-12);
        assert_eq!(capital_psi_n(10, 3), 3);
        assert_eq!(capital_psi_n(10, 20), 0);
        assert_eq!(capital_psi_n(10, -10), -10);
    }

    #[test]
    fn unique_active_reservoir_site() {
        // every 0/1 reservoir pattern has at most one site with D± = 1, the cached one
        for k in 1..=8usize {
            let p = params(k + 2, k);
            for pattern in 0u32..(1 << k) {
                let mut occ = vec![0u8; p.num_sites()];
                for h in 0..k {
                    let bit = ((pattern >> h) & 1) as u8;
                    occ[p.num_sites() - k + h] = bit;
                    occ[h] = bit;
                }
                let c = Configuration::from_occupancy(&p, occ);
                let active_plus: Vec<i64> =
                    p.i_plus().filter(|&x| d_plus(&p, &c, x).unwrap() == 1.0).collect();
                assert!(active_plus.len() <= 1);
                assert_eq!(active_plus.first().copied(), c.top_empty_plus());
                let active_minus: Vec<i64> =
                    p.i_minus().filter(|&x| d_minus(&p, &c, x).unwrap() == 1.0).collect();
                assert!(active_minus.len() <= 1);
                assert_eq!(active_minus.first().copied(), c.bottom_occupied_minus());
                for x in p.i_plus() {
                    let d = d_plus(&p, &c, x).unwrap();
                    assert!(d == 0.0 || d == 1.0);
                }
            }
        }
    }

    #[test]
    fn birth_and_death_update_caches() {
        let p = params(5, 3);
        let mut c = Configuration::empty(&p);
        assert_eq!(c.top_empty_plus(), Some(5));
        assert_eq!(c.birth(), Some(5));
        assert_eq!(c.birth(), Some(4));
        assert_eq!(c.birth(), Some(3));
        assert_eq!(c.birth(), None);
        assert!(c.caches_consistent());
        let mut c = Configuration::full(&p);
        assert_eq!(c.death(), Some(-5));
        assert_eq!(c.death(), Some(-4));
        c.exchange(-4);
        assert!(c.caches_consistent());
        assert_eq!(c.bottom_occupied_minus(), Some(-4));
    }

    proptest! {
        #[test]
        fn psi_n_is_odd_periodic_and_in_range(n in 1usize..40, z in -400i64..400) {
            let v = psi_n(n, z);
            prop_assert!(v.abs() <= n as i64);
            prop_assert_eq!(psi_n(n, -z), -v);
            prop_assert_eq!(psi_n(n, z + 2 * (2 * n as i64 + 1)), v);
        }

        #[test]
        fn psi_n_window(n in 1usize..30, frac in -10.0f64..10.0) {
            let z = (frac * n as f64) as i64;
            prop_assert!(psi_n(n, z).abs() <= n as i64);
        }

        #[test]
        fn psi_continuum_properties(r in -20.0f64..20.0) {
            let v = psi_continuum(r);
            prop_assert!(v.abs() <= 1.0 + 1e-12);
            prop_assert!((psi_continuum(r + 4.0) - v).abs() < 1e-9);
            prop_assert!((psi_continuum(-r) + v).abs() < 1e-9);
            prop_assert!((psi_continuum(2.0 - r) - v).abs() < 1e-9);
        }

        #[test]
        fn d_operators_stay_in_unit_interval(vals in proptest::collection::vec(0.0f64..=1.0, 9)) {
            let p = params(4, 3);
            let u = DensityProfile::new(vals, 0.0).unwrap();
            for x in p.i_plus() {
                let d = d_plus(&p, &u, x).unwrap();
                prop_assert!((0.0..=1.0).contains(&d));
            }
            for x in p.i_minus() {
                let d = d_minus(&p, &u, x).unwrap();
                prop_assert!((0.0..=1.0).contains(&d));
            }
        }

        #[test]
        fn laplacian_sums_to_zero(vals in proptest::collection::vec(-5.0f64..5.0, 2..40)) {
            let s: f64 = discrete_laplacian(&vals).iter().sum();
            prop_assert!(s.abs() < 1e-9);
        }
    }
}
