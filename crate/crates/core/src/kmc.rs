//! Exact kinetic Monte Carlo for the generator `ε⁻²(L₀ + εL_b)`.
//!
//! Gillespie direct method: one exponential waiting time per event, event
//! classes chosen by inverse transform. Exchanges act on the set of
//! discordant bonds; births and deaths act on the unique active reservoir site.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Configuration, DensityProfile, ModelParams};

/// Rates of the three event classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRates {
    pub exchange_rate_per_active_bond: f64,
    pub birth_rate: f64,
    pub death_rate: f64,
}

impl EventRates {
    /// Nominal rates; birth and death are active only when their reservoir allows.
    pub fn new(params: &ModelParams) -> Self {
        let eps = params.epsilon();
        Self {
            exchange_rate_per_active_bond: 0.5 / (eps * eps),
            birth_rate: 0.5 * params.j() / eps,
            death_rate: 0.5 * params.j() / eps,
        }
    }

    /// Rates with inactive boundary mechanisms set to zero.
    pub fn for_configuration(params: &ModelParams, config: &Configuration) -> Self {
        let mut r = Self::new(params);
        if config.top_empty_plus().is_none() {
            r.birth_rate = 0.0;
        }
        if config.bottom_occupied_minus().is_none() {
            r.death_rate = 0.0;
        }
        r
    }

    /// Total exit rate of `config`.
    pub fn exit_rate(params: &ModelParams, config: &Configuration) -> f64 {
        let r = Self::for_configuration(params, config);
        let discordant = config.occupancy().windows(2).filter(|w| w[0] != w[1]).count();
        discordant as f64 * r.exchange_rate_per_active_bond + r.birth_rate + r.death_rate
    }
}

/// Independent Bernoulli occupancies with the given means.
pub fn sample_product_measure<R: Rng + ?Sized>(profile: &DensityProfile, params: &ModelParams, rng: &mut R) -> Configuration {
    let occupancy = profile.values().iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
    Configuration::from_occupancy(params, occupancy)
}

/// One transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// Occupancies of `bond` and `bond + 1` swapped.
    Exchange { bond: i64 },
    Birth { site: i64 },
    Death { site: i64 },
    /// No event can occur.
    Absorbed,
}

/// Index set of discordant bonds with O(1) insert and remove.
///
/// `members[..count]` lists the bonds; `position[i]` is the slot of bond `i`.
#[derive(Debug, Clone)]
struct BondSet {
    members: Vec<u32>,
    count: usize,
    position: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl BondSet {
    fn new(occupancy: &[u8]) -> Self {
        let bonds = occupancy.len() - 1;
        let mut set = Self { members: vec![0; bonds], count: 0, position: vec![ABSENT; bonds] };
        for i in 0..bonds {
            if occupancy[i] != occupancy[i + 1] {
                set.toggle(i);
            }
        }
        set
    }

    #[inline]
    fn len(&self) -> usize {
        self.count
    }

    #[inline]
    fn get(&self, slot: usize) -> usize {
        self.members[slot] as usize
    }

    /// Flips membership of bond `i` without data-dependent branches.
    #[inline(always)]
    fn toggle(&mut self, i: usize) {
        let p = self.position[i];
        let present = p != ABSENT;
        let len = self.count;
        // removal moves the last member into the freed slot; insertion appends
        let last = self.members[len.max(1) - 1];
        let slot = if present { p as usize } else { len };
        let moved = if present { last } else { i as u32 };
        self.members[slot] = moved;
        self.position[moved as usize] = slot as u32;
        self.position[i] = if present { ABSENT } else { len as u32 };
        self.count = if present { len.wrapping_sub(1) } else { len + 1 };
    }

    /// Re-evaluates bond `i` against the occupancy.
    #[inline]
    fn refresh(&mut self, occupancy: &[u8], i: usize) {
        let discordant = occupancy[i] != occupancy[i + 1];
        if discordant != (self.position[i] != ABSENT) {
            self.toggle(i);
        }
    }

    #[cfg(test)]
    fn consistent(&self, occupancy: &[u8]) -> bool {
        (0..self.position.len()).all(|i| {
            let p = self.position[i];
            let discordant = occupancy[i] != occupancy[i + 1];
            discordant == (p != ABSENT) && (!discordant || self.members[p as usize] as usize == i)
        }) && self.count == (0..self.position.len()).filter(|&i| occupancy[i] != occupancy[i + 1]).count()
    }
}

/// Single-replica simulator state.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ModelParams,
    config: Configuration,
    bonds: BondSet,
    rates: EventRates,
    inv_exchange: f64,
    time: f64,
}

impl Simulator {
    pub fn new(params: &ModelParams, config: Configuration) -> Self {
        let bonds = BondSet::new(config.occupancy());
        let rates = EventRates::new(params);
        Self { params: *params, config, bonds, rates, inv_exchange: 1.0 / rates.exchange_rate_per_active_bond, time: 0.0 }
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Total rate of the currently possible events.
    #[inline]
    pub fn total_rate(&self) -> f64 {
        let mut total = self.bonds.len() as f64 * self.rates.exchange_rate_per_active_bond;
        if self.config.top_empty_plus().is_some() {
            total += self.rates.birth_rate;
        }
        if self.config.bottom_occupied_minus().is_some() {
            total += self.rates.death_rate;
        }
        total
    }

    /// Picks an event given `u` uniform on `[0, total)` and applies it.
    #[inline]
    fn apply(&mut self, mut u: f64) -> Event {
        let ex = self.bonds.len() as f64 * self.rates.exchange_rate_per_active_bond;
        if u < ex {
            let idx = ((u * self.inv_exchange) as usize).min(self.bonds.len() - 1);
            let i = self.bonds.get(idx);
            self.config.exchange_offsets(i);
            // both endpoints flipped, so each neighbouring bond changes status
            if i > 0 {
                self.bonds.toggle(i - 1);
            }
            if i + 1 < self.bonds.position.len() {
                self.bonds.toggle(i + 1);
            }
            return Event::Exchange { bond: self.params.site(i) };
        }
        u -= ex;
        let birth_active = self.config.top_empty_plus().is_some();
        if birth_active && (u < self.rates.birth_rate || self.config.bottom_occupied_minus().is_none()) {
            let x = self.config.birth().expect("birth site cached");
            self.after_flip(x);
            return Event::Birth { site: x };
        }
        let x = self.config.death().expect("death site cached");
        self.after_flip(x);
        Event::Death { site: x }
    }

    #[inline]
    fn after_flip(&mut self, x: i64) {
        let i = self.params.offset(x);
        let occ = self.config.occupancy();
        if i > 0 {
            self.bonds.refresh(occ, i - 1);
        }
        if i + 1 < occ.len() {
            self.bonds.refresh(occ, i);
        }
        debug_assert!(self.config.caches_consistent());
    }

    /// Samples and applies the next event; returns it with its waiting time.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (Event, f64) {
        let total = self.total_rate();
        if total == 0.0 {
            return (Event::Absorbed, f64::INFINITY);
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        let u = rng.random::<f64>() * total;
        self.time += wait;
        (self.apply(u), wait)
    }
}

/// What to record along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSpec {
    /// Sorted nonnegative observation times.
    pub times: Vec<f64>,
    /// Bonds `(x, x+1)` whose signed crossings are counted.
    pub tracked_bonds: Vec<i64>,
}

/// Snapshot of one replica at the observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRecord {
    /// Occupancy at each observation time, offset-indexed.
    pub snapshots: Vec<Vec<u8>>,
    /// Cumulative births at each observation time.
    pub births: Vec<u64>,
    /// Cumulative deaths at each observation time.
    pub deaths: Vec<u64>,
    /// `crossings[t][b]`: cumulative left-to-right minus right-to-left jumps over tracked bond `b`.
    pub crossings: Vec<Vec<i64>>,
    /// Occupancy at time zero.
    pub initial: Vec<u8>,
    pub events: u64,
}

/// Runs one exact trajectory from `initial` and records the spec.
///
/// At an observation time the pending event is discarded and redrawn; the
/// waiting time is memoryless, so the law is unchanged.
pub fn simulate<R: Rng + ?Sized>(params: &ModelParams, initial: Configuration, spec: &RecordSpec, rng: &mut R) -> Result<ReplicaRecord> {
    if spec.times.iter().any(|t| !(*t >= 0.0)) || spec.times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParams("observation times must be sorted and nonnegative".into()));
    }
    let n = params.n_i64();
    let mut tracked = vec![-1i32; params.num_sites() - 1];
    for (b, &x) in spec.tracked_bonds.iter().enumerate() {
        if x < -n || x >= n {
            return Err(Error::SiteOutOfDomain { site: x, domain: "bonds [-N, N-1]" });
        }
        tracked[(x + n) as usize] = b as i32;
    }
    let initial_occ = initial.occupancy().to_vec();
    let mut sim = Simulator::new(params, initial);
    let mut births = 0u64;
    let mut deaths = 0u64;
    let mut events = 0u64;
    let mut crossings = vec![0i64; spec.tracked_bonds.len()];
    let mut rec = ReplicaRecord {
        snapshots: Vec::with_capacity(spec.times.len()),
        births: Vec::with_capacity(spec.times.len()),
        deaths: Vec::with_capacity(spec.times.len()),
        crossings: Vec::with_capacity(spec.times.len()),
        initial: initial_occ,
        events: 0,
    };
    let mut t = 0.0;
    for &t_obs in &spec.times {
        loop {
            let total = sim.total_rate();
            if total == 0.0 {
                break;
            }
            let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
            if t + wait > t_obs {
                break;
            }
            t += wait;
            let u = rng.random::<f64>() * total;
            events += 1;
            match sim.apply(u) {
                Event::Exchange { bond } => {
                    let i = (bond + n) as usize;
                    let b = tracked[i];
                    if b >= 0 {
                        // after the swap, a particle now at i+1 came from i
                        let moved_right = sim.config.occupancy()[i + 1] == 1;
                        crossings[b as usize] += if moved_right { 1 } else { -1 };
                    }
                }
                Event::Birth { .. } => births += 1,
                Event::Death { .. } => deaths += 1,
                Event::Absorbed => unreachable!(),
            }
        }
        t = t_obs;
        rec.snapshots.push(sim.config.occupancy().to_vec());
        rec.births.push(births);
        rec.deaths.push(deaths);
        rec.crossings.push(crossings.clone());
    }
    rec.events = events;
    Ok(rec)
}

/// Per-replica reduction to a fixed number of real values.
pub trait Observable: Sync {
    fn width(&self) -> usize;
    fn observe(&self, record: &ReplicaRecord, out: &mut [f64]);
}

/// `η(x, t_i)` for every site and observation time, flattened time-major.
#[derive(Debug, Clone, Copy)]
pub struct SiteOccupancy {
    pub sites: usize,
    pub times: usize,
}

impl Observable for SiteOccupancy {
    fn width(&self) -> usize {
        self.sites * self.times
    }

    fn observe(&self, record: &ReplicaRecord, out: &mut [f64]) {
        for (ti, snap) in record.snapshots.iter().enumerate() {
            for (i, &b) in snap.iter().enumerate() {
                out[ti * self.sites + i] = b as f64;
            }
        }
    }
}

/// Running mean and variance (Welford), mergeable (Chan et al.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(width: usize) -> Self {
        Self { count: 0, mean: vec![0.0; width], m2: vec![0.0; width] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.count.max(2) - 1) as f64;
        self.m2.iter().map(|s| (s / d).max(0.0)).collect()
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Replicas per work unit; fixed so results do not depend on the thread count.
const CHUNK: u64 = 64;

/// Replica `r` draws from stream `r` of the ChaCha8 generator keyed by `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Ensemble of `replicas` independent trajectories from product measures.
///
/// Returns one [`Moments`] per observable and the total event count.
/// Chunks run in parallel and merge in replica order, so output is bit-identical
/// for any thread count.
pub fn run_ensemble(
    params: &ModelParams,
    initial: &DensityProfile,
    spec: &RecordSpec,
    replicas: u64,
    seed: u64,
    observables: &[&dyn Observable],
) -> Result<(Vec<Moments>, u64)> {
    if initial.n() != params.n() {
        return Err(Error::InvalidParams("initial profile does not match the lattice".into()));
    }
    let chunks = replicas.div_ceil(CHUNK);
    let partials: Vec<Result<(Vec<Moments>, u64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc: Vec<Moments> = observables.iter().map(|o| Moments::new(o.width())).collect();
            let mut bufs: Vec<Vec<f64>> = observables.iter().map(|o| vec![0.0; o.width()]).collect();
            let mut events = 0;
            for r in c * CHUNK..((c + 1) * CHUNK).min(replicas) {
                let mut rng = replica_rng(seed, r);
                let config = sample_product_measure(initial, params, &mut rng);
                let rec = simulate(params, config, spec, &mut rng)?;
                events += rec.events;
                for ((o, a), b) in observables.iter().zip(&mut acc).zip(&mut bufs) {
                    o.observe(&rec, b);
                    a.push(b);
                }
            }
            Ok((acc, events))
        })
        .collect();
    let mut total: Vec<Moments> = observables.iter().map(|o| Moments::new(o.width())).collect();
    let mut events = 0;
    for p in partials {
        let (acc, ev) = p?;
        events += ev;
        for (t, a) in total.iter_mut().zip(&acc) {
            t.merge(a);
        }
    }
    Ok((total, events))
}

/// Per-site means and standard errors at each observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub site_means: Vec<Vec<f64>>,
    pub site_stderrs: Vec<Vec<f64>>,
    pub replica_count: u64,
    pub seed: u64,
}

pub fn ensemble_mean(
    params: &ModelParams,
    initial: &DensityProfile,
    observation_times: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<EnsembleStats> {
    if replicas < 2 {
        return Err(Error::InvalidParams("need at least two replicas".into()));
    }
    let spec = RecordSpec { times: observation_times.to_vec(), tracked_bonds: Vec::new() };
    let obs = SiteOccupancy { sites: params.num_sites(), times: observation_times.len() };
    let (m, _) = run_ensemble(params, initial, &spec, replicas, seed, &[&obs])?;
    let sites = params.num_sites();
    let se = m[0].stderr();
    Ok(EnsembleStats {
        times: observation_times.to_vec(),
        site_means: m[0].mean.chunks(sites).map(|c| c.to_vec()).collect(),
        site_stderrs: se.chunks(sites).map(|c| c.to_vec()).collect(),
        replica_count: replicas,
        seed,
    })
}
