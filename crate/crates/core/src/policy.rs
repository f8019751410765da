//! Caching policies behind one interface.
//!
//! A policy sees only local information: the slot index, its own cache
//! state, and the request counts its own users produced this slot. The
//! mean-field policy additionally holds the precomputed solver fields, which
//! are population statistics rather than peer state. Delivery outcomes are
//! fed back through `on_request_served` so set-based baselines can update
//! their content; whole-file baselines insert and evict instantaneously,
//! while the mean-field policy moves fractional cache states through the
//! drift law only.

use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{CacheControl, CacheState};
use crate::error::{Error, Result};
use crate::params::CostParams;
use crate::popularity::ZipfPopularity;
use crate::solver::{capacity_keys, enforce_capacity, CapacityRule, MfgSolution};

/// How a request was served.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryCase {
    /// From the default access point's cache.
    OwnCache,
    /// By another, fully cached access point.
    Alternative,
    /// By the default access point after a fronthaul retrieval.
    Retrieval,
}

/// Per-access-point caching policy.
pub trait CachingPolicy: Send {
    fn name(&self) -> &'static str;

    /// Caching rates for this slot, from local information only.
    fn placement(
        &mut self,
        slot: usize,
        cache: &CacheState,
        slot_requests: &[usize],
        params: &CostParams,
    ) -> Result<CacheControl>;

    /// Priority order for trimming growth at the capacity boundary: highest
    /// priority first. `None` means the policy keeps occupancy within
    /// capacity structurally (whole-file schemes).
    fn capacity_priority(&self, _slot: usize, _cache: &CacheState) -> Option<Vec<usize>> {
        None
    }

    /// Delivery feedback; set-based policies mutate their cache content
    /// here. Returns fronthaul load incurred by the update beyond what the
    /// delivery itself already charged (a cache fill behind a neighbor
    /// serve).
    fn on_request_served(
        &mut self,
        _file: usize,
        _case: DeliveryCase,
        _cache: &mut CacheState,
        _params: &CostParams,
    ) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Mfg,
    Mpc,
    Rc,
    Lru,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Mfg => "mfg",
            PolicyKind::Mpc => "mpc",
            PolicyKind::Rc => "rc",
            PolicyKind::Lru => "lru",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mfg" => Ok(PolicyKind::Mfg),
            "mpc" => Ok(PolicyKind::Mpc),
            "rc" => Ok(PolicyKind::Rc),
            "lru" => Ok(PolicyKind::Lru),
            other => Err(Error::InvalidParam(format!("unknown policy `{other}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Mean-field feedback policy
// ---------------------------------------------------------------------------

/// The solved feedback fields shared by every access point.
pub struct MfgPolicy {
    solution: Arc<MfgSolution>,
    rule: CapacityRule,
    capacity_bits: f64,
}

impl MfgPolicy {
    pub fn new(solution: Arc<MfgSolution>, rule: CapacityRule, capacity_bits: f64) -> Self {
        MfgPolicy {
            solution,
            rule,
            capacity_bits,
        }
    }

    /// Time level for a slot; errors past the solved horizon.
    fn level_for(&self, slot: usize) -> Result<usize> {
        let grid = &self.solution.grid;
        if slot >= grid.horizon_slots {
            return Err(Error::StalePolicy {
                slot,
                horizon: grid.horizon_slots,
            });
        }
        // With per-slot grids this is the slot index itself.
        let level = (slot as f64 / grid.dt_slots()).round() as usize;
        Ok(level.min(grid.nt - 1))
    }

    fn ranking_keys(&self, level: usize, cache: &CacheState) -> Vec<f64> {
        let grid = &self.solution.grid;
        let values: Vec<f64> = (0..self.solution.file_count())
            .map(|n| {
                let pos = grid.position_of_bits(cache.bits[n]);
                self.solution.value[n].sample_state(level, pos)
            })
            .collect();
        let gains = self.solution.gain_at(level);
        capacity_keys(self.rule, &values, &gains)
    }
}

impl CachingPolicy for MfgPolicy {
    fn name(&self) -> &'static str {
        "mfg"
    }

    fn placement(
        &mut self,
        slot: usize,
        cache: &CacheState,
        _slot_requests: &[usize],
        _params: &CostParams,
    ) -> Result<CacheControl> {
        let level = self.level_for(slot)?;
        let grid = &self.solution.grid;
        let mut control = CacheControl {
            rates: (0..self.solution.file_count())
                .map(|n| {
                    let pos = grid.position_of_bits(cache.bits[n]);
                    self.solution.policy[n].sample_state(level, pos)
                })
                .collect(),
        };
        control.clamp();

        // Mask files outside the retained set when occupancy already
        // exceeds capacity (growth trimming handles the boundary).
        let keys = self.ranking_keys(level, cache);
        let retained = enforce_capacity(&keys, cache, self.capacity_bits);
        for (rate, keep) in control.rates.iter_mut().zip(&retained) {
            if !keep {
                *rate = 0.0;
            }
        }
        Ok(control)
    }

    fn capacity_priority(&self, slot: usize, cache: &CacheState) -> Option<Vec<usize>> {
        let level = self.level_for(slot).ok()?;
        let keys = self.ranking_keys(level, cache);
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| {
            keys[a]
                .partial_cmp(&keys[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        Some(order)
    }
}

// ---------------------------------------------------------------------------
// Whole-file baselines
// ---------------------------------------------------------------------------

/// Fill-and-hold rates for a pinned file set: full rate while filling, the
/// discard-balancing rate once full, zero otherwise.
fn pinned_rates(
    selected: &[bool],
    cache: &CacheState,
    slot_requests: &[usize],
    params: &CostParams,
) -> CacheControl {
    let full = params.file_size_bits * (1.0 - 1e-12);
    let rates = selected
        .iter()
        .enumerate()
        .map(|(n, &keep)| {
            if !keep {
                0.0
            } else if cache.bits[n] >= full {
                params.discard_rate(slot_requests[n] as f64).min(1.0)
            } else {
                1.0
            }
        })
        .collect();
    CacheControl { rates }
}

/// Cache the most popular whole files and never adapt.
pub struct MpcPolicy {
    selected: Vec<bool>,
}

impl MpcPolicy {
    /// Select the `floor(C / S)` most popular files of the snapshot
    /// distribution (ties by lower index).
    pub fn new(popularity: &ZipfPopularity, params: &CostParams) -> Self {
        let n = popularity.file_count();
        let budget = params.whole_file_capacity().min(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            popularity.probabilities[b]
                .partial_cmp(&popularity.probabilities[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut selected = vec![false; n];
        for &file in order.iter().take(budget) {
            selected[file] = true;
        }
        MpcPolicy { selected }
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }
}

impl CachingPolicy for MpcPolicy {
    fn name(&self) -> &'static str {
        "mpc"
    }

    fn placement(
        &mut self,
        _slot: usize,
        cache: &CacheState,
        slot_requests: &[usize],
        params: &CostParams,
    ) -> Result<CacheControl> {
        Ok(pinned_rates(&self.selected, cache, slot_requests, params))
    }
}

/// Cache a uniformly random whole-file subset, fixed for the run.
pub struct RcPolicy {
    selected: Vec<bool>,
}

impl RcPolicy {
    pub fn new(file_count: usize, params: &CostParams, rng_seed: u64) -> Self {
        let budget = params.whole_file_capacity().min(file_count);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut files: Vec<usize> = (0..file_count).collect();
        files.shuffle(&mut rng);
        let mut selected = vec![false; file_count];
        for &file in files.iter().take(budget) {
            selected[file] = true;
        }
        RcPolicy { selected }
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }
}

impl CachingPolicy for RcPolicy {
    fn name(&self) -> &'static str {
        "rc"
    }

    fn placement(
        &mut self,
        _slot: usize,
        cache: &CacheState,
        slot_requests: &[usize],
        params: &CostParams,
    ) -> Result<CacheControl> {
        Ok(pinned_rates(&self.selected, cache, slot_requests, params))
    }
}

/// Least-recently-used whole-file cache. Hits refresh recency; every miss
/// inserts the file fully over the fronthaul (charged as retrieval traffic
/// at the empty state), evicting the stalest entry when full. When the miss
/// itself was served by a neighboring cache, the local fill is an extra
/// fronthaul charge on top of the delivery.
pub struct LruPolicy {
    /// Most recent first.
    stack: Vec<usize>,
    capacity_files: usize,
}

impl LruPolicy {
    pub fn new(params: &CostParams) -> Self {
        LruPolicy {
            stack: Vec::new(),
            capacity_files: params.whole_file_capacity(),
        }
    }

    pub fn cached_files(&self) -> &[usize] {
        &self.stack
    }

    fn touch(&mut self, file: usize) {
        if let Some(idx) = self.stack.iter().position(|&f| f == file) {
            self.stack.remove(idx);
        }
        self.stack.insert(0, file);
    }
}

impl CachingPolicy for LruPolicy {
    fn name(&self) -> &'static str {
        "lru"
    }

    fn placement(
        &mut self,
        _slot: usize,
        cache: &CacheState,
        slot_requests: &[usize],
        params: &CostParams,
    ) -> Result<CacheControl> {
        let mut selected = vec![false; cache.bits.len()];
        for &file in &self.stack {
            selected[file] = true;
        }
        Ok(pinned_rates(&selected, cache, slot_requests, params))
    }

    fn on_request_served(
        &mut self,
        file: usize,
        case: DeliveryCase,
        cache: &mut CacheState,
        params: &CostParams,
    ) -> f64 {
        match case {
            DeliveryCase::OwnCache => {
                self.touch(file);
                0.0
            }
            DeliveryCase::Retrieval | DeliveryCase::Alternative => {
                if self.capacity_files == 0 {
                    return 0.0;
                }
                let pre_bits = cache.bits[file];
                self.touch(file);
                cache.bits[file] = params.file_size_bits;
                if self.stack.len() > self.capacity_files {
                    let evicted = self.stack.pop().expect("stack non-empty");
                    cache.bits[evicted] = 0.0;
                }
                // A retrieval delivery already charged the fill through the
                // load model; a neighbor serve pays for its own fill here.
                if case == DeliveryCase::Alternative {
                    params.retrieval_load_coeff * (params.file_size_bits - pre_bits)
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_mfg, spike_density, Grid, SolverConfig};
    use crate::radio::MeanFieldRates;

    fn params() -> CostParams {
        CostParams::default()
    }

    #[test]
    fn mpc_selects_top_ranks() {
        let p = params(); // capacity = 5 files
        let pop = ZipfPopularity::new(15, 1.3).unwrap();
        let mpc = MpcPolicy::new(&pop, &p);
        let expected: Vec<bool> = (0..15).map(|n| n < 5).collect();
        assert_eq!(mpc.selected(), expected.as_slice());
    }

    #[test]
    fn mpc_caches_everything_when_capacity_allows() {
        let mut p = params();
        p.cache_capacity_bits = 15.0 * p.file_size_bits;
        let pop = ZipfPopularity::new(15, 1.3).unwrap();
        let mpc = MpcPolicy::new(&pop, &p);
        assert!(mpc.selected().iter().all(|&s| s));
    }

    #[test]
    fn mpc_ignores_permutations() {
        let p = params();
        let pop = ZipfPopularity::new(15, 1.3).unwrap();
        let mpc = MpcPolicy::new(&pop, &p);
        // A permuted snapshot changes nothing: selection is taken once from
        // the construction-time distribution.
        let permuted = pop.permuted(99);
        let from_permuted = MpcPolicy::new(&permuted, &p);
        assert_ne!(mpc.selected(), from_permuted.selected());
        assert_eq!(mpc.selected().iter().filter(|&&s| s).count(), 5);
    }

    #[test]
    fn rc_is_deterministic_and_sized() {
        let p = params();
        let a = RcPolicy::new(15, &p, 1234);
        let b = RcPolicy::new(15, &p, 1234);
        assert_eq!(a.selected(), b.selected());
        assert_eq!(a.selected().iter().filter(|&&s| s).count(), 5);

        let mut tiny = params();
        tiny.cache_capacity_bits = 0.5 * tiny.file_size_bits;
        let none = RcPolicy::new(15, &tiny, 7);
        assert!(none.selected().iter().all(|&s| !s));

        let mut huge = params();
        huge.cache_capacity_bits = 15.0 * huge.file_size_bits;
        let all = RcPolicy::new(15, &huge, 7);
        assert!(all.selected().iter().all(|&s| s));
    }

    fn lru_serve(lru: &mut LruPolicy, cache: &mut CacheState, p: &CostParams, file: usize) {
        let case = if cache.bits[file] >= 0.5 * p.file_size_bits {
            DeliveryCase::OwnCache
        } else {
            DeliveryCase::Retrieval
        };
        lru.on_request_served(file, case, cache, p);
    }

    #[test]
    fn lru_textbook_traces() {
        let mut p = params();
        p.cache_capacity_bits = 2.0 * p.file_size_bits;

        let mut lru = LruPolicy::new(&p);
        let mut cache = CacheState::empty(4);
        for file in [0usize, 1, 2] {
            lru_serve(&mut lru, &mut cache, &p, file);
        }
        let mut held: Vec<usize> = lru.cached_files().to_vec();
        held.sort_unstable();
        assert_eq!(held, vec![1, 2]);
        assert_eq!(cache.bits[0], 0.0);

        let mut lru = LruPolicy::new(&p);
        let mut cache = CacheState::empty(4);
        for file in [0usize, 1, 0, 2] {
            lru_serve(&mut lru, &mut cache, &p, file);
        }
        let mut held: Vec<usize> = lru.cached_files().to_vec();
        held.sort_unstable();
        assert_eq!(held, vec![0, 2]);
        assert_eq!(cache.bits[1], 0.0);

        let mut lru = LruPolicy::new(&p);
        let mut cache = CacheState::empty(4);
        for _ in 0..5 {
            lru_serve(&mut lru, &mut cache, &p, 3);
        }
        assert_eq!(lru.cached_files(), &[3]);
        assert_eq!(cache.total_bits(), p.file_size_bits);
    }

    fn solved_policy(p: &CostParams) -> Arc<MfgSolution> {
        let grid = Grid::per_slot(21, 10, p.file_size_bits).unwrap();
        let cfg = SolverConfig {
            max_iters: 20,
            tol: 1e-3,
            rho: 0.5,
            eps_diffusion: 0.0,
            kappa: 50.0,
            full_threshold_eps: 1e-3,
            max_substeps: 10_000,
            q_profile: vec![vec![0.3; grid.horizon_slots]; 3],
        };
        let rates = MeanFieldRates {
            own_bps: 1e7,
            alt_bps: 2e6,
        };
        let m0 = vec![spike_density(&grid, 0.0); 3];
        Arc::new(solve_mfg(&grid, &cfg, p, rates, &m0).unwrap())
    }

    #[test]
    fn mfg_interpolates_grid_values() {
        let p = params();
        let sol = solved_policy(&p);
        let mut pol = MfgPolicy::new(sol.clone(), CapacityRule::RetainMaxGain, p.cache_capacity_bits);

        // On-node states return the stored grid values.
        let grid = sol.grid;
        let j = 7;
        let cache = CacheState {
            bits: vec![grid.s_bits(j); 3],
        };
        let control = pol.placement(4, &cache, &[0, 0, 0], &p).unwrap();
        for n in 0..3 {
            assert_eq!(control.rates[n], sol.policy[n].get(4, j).clamp(0.0, 1.0));
        }

        // Midpoints return the mean of the neighboring nodes.
        let mid = 0.5 * (grid.s_bits(j) + grid.s_bits(j + 1));
        let cache = CacheState { bits: vec![mid; 3] };
        let control = pol.placement(4, &cache, &[0, 0, 0], &p).unwrap();
        for n in 0..3 {
            let expected = 0.5 * (sol.policy[n].get(4, j) + sol.policy[n].get(4, j + 1));
            assert!((control.rates[n] - expected.clamp(0.0, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn mfg_rejects_stale_slots() {
        let p = params();
        let sol = solved_policy(&p);
        let mut pol = MfgPolicy::new(sol, CapacityRule::RetainMaxGain, p.cache_capacity_bits);
        let cache = CacheState::empty(3);
        let err = pol.placement(10, &cache, &[0, 0, 0], &p).unwrap_err();
        assert!(matches!(err, Error::StalePolicy { .. }));
    }

    #[test]
    fn mfg_delegates_capacity_masking() {
        // Under the retain-min-value rule with occupancy above capacity,
        // only the lowest-value files keep a nonzero rate.
        let p = params();
        let sol = solved_policy(&p);
        let mut pol = MfgPolicy::new(sol.clone(), CapacityRule::RetainMinValue, p.file_size_bits);
        let s = p.file_size_bits;
        let cache = CacheState {
            bits: vec![s, s, s],
        };
        let level = 2;
        let values: Vec<f64> = (0..3)
            .map(|n| sol.value[n].sample_state(level, sol.grid.position_of_bits(s)))
            .collect();
        let retained = enforce_capacity(&values, &cache, p.file_size_bits);
        let control = pol.placement(level, &cache, &[0, 0, 0], &p).unwrap();
        for n in 0..3 {
            if !retained[n] {
                assert_eq!(control.rates[n], 0.0);
            }
        }
        assert_eq!(retained.iter().filter(|&&r| r).count(), 1);
    }
}
