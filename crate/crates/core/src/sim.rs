//! Slot-based fleet simulation.
//!
//! Each slot has two phases. In the placement phase every access point
//! queries its policy with local information, integrates the cache drift for
//! one slot, and is projected back under the capacity bound (growth is
//! trimmed in reverse priority order, so low-priority files lose their
//! increment first). In the delivery phase requests are resolved in user
//! order: served from the default access point's cache when it holds at
//! least half the file, otherwise by the fully cached peer with the best
//! rate, otherwise by the default access point over the fronthaul. Delay,
//! load and the weighted total cost accumulate per slot.

use serde::Serialize;

use crate::cost::{CacheControl, CacheState};
use crate::error::{Error, Result};
use crate::params::CostParams;
use crate::policy::{CachingPolicy, DeliveryCase};
use crate::radio::Topology;
use crate::request::RequestBatch;
use crate::solver::{Field, Grid};

/// Cache and bookkeeping for one access point.
#[derive(Debug, Clone)]
pub struct FapState {
    pub cache: CacheState,
}

impl FapState {
    pub fn empty(file_count: usize) -> Self {
        FapState {
            cache: CacheState::empty(file_count),
        }
    }
}

/// Aggregates of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotMetrics {
    pub slot: usize,
    pub delay_s: f64,
    pub load: f64,
    pub total_cost: f64,
    pub requests: usize,
    pub served_own: usize,
    pub served_alt: usize,
    pub served_retrieval: usize,
}

/// Run-level averages.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub policy: String,
    pub slots: usize,
    pub faps: usize,
    pub requests: usize,
    pub total_delay_s: f64,
    pub total_load: f64,
    pub total_cost: f64,
    pub delay_per_request_s: f64,
    pub load_per_fap_slot: f64,
    pub cost_per_slot: f64,
    pub served_own: usize,
    pub served_alt: usize,
    pub served_retrieval: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub per_slot: Vec<SlotMetrics>,
    /// Normalized cache-state histograms per (slot, file), on the solver's
    /// node cells, when recording is enabled.
    pub mean_field: Option<Vec<Vec<Vec<f64>>>>,
    pub summary: RunSummary,
}

/// The fleet: topology, precomputed rates, per-access-point caches and
/// policy objects.
pub struct Simulation<'a> {
    pub topology: &'a Topology,
    /// `rates[i][k]` in bits/s.
    pub rates: &'a [Vec<f64>],
    /// `neighbors[k]`: access points close enough to serve user `k` in the
    /// alternative delivery case.
    pub neighbors: &'a [Vec<usize>],
    pub params: &'a CostParams,
    pub file_count: usize,
    pub faps: Vec<FapState>,
    pub policies: Vec<Box<dyn CachingPolicy>>,
    slot_cursor: usize,
}

/// Resolution of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub serving_fap: usize,
    pub case: DeliveryCase,
}

/// Delivery-case resolution: own cache at half the file or more, otherwise
/// the fully cached neighboring access point with the largest rate,
/// otherwise fronthaul retrieval at the default access point.
pub fn resolve_delivery(
    user: usize,
    file: usize,
    topology: &Topology,
    faps: &[FapState],
    rates: &[Vec<f64>],
    candidates: &[usize],
    params: &CostParams,
) -> Delivery {
    let own = topology.association[user];
    let s = params.file_size_bits;
    if faps[own].cache.bits[file] >= 0.5 * s {
        return Delivery {
            serving_fap: own,
            case: DeliveryCase::OwnCache,
        };
    }
    let full = s * (1.0 - 1e-12);
    let mut best: Option<(usize, f64)> = None;
    for &j in candidates {
        if j == own || faps[j].cache.bits[file] < full {
            continue;
        }
        let rate = rates[j][user];
        if best.map_or(true, |(_, r)| rate > r) {
            best = Some((j, rate));
        }
    }
    match best {
        Some((j, _)) => Delivery {
            serving_fap: j,
            case: DeliveryCase::Alternative,
        },
        None => Delivery {
            serving_fap: own,
            case: DeliveryCase::Retrieval,
        },
    }
}

impl<'a> Simulation<'a> {
    pub fn new(
        topology: &'a Topology,
        rates: &'a [Vec<f64>],
        neighbors: &'a [Vec<usize>],
        params: &'a CostParams,
        file_count: usize,
        policies: Vec<Box<dyn CachingPolicy>>,
    ) -> Result<Self> {
        if policies.len() != topology.fap_count() {
            return Err(Error::InvalidParam(format!(
                "{} policies for {} access points",
                policies.len(),
                topology.fap_count()
            )));
        }
        if neighbors.len() != topology.user_count() {
            return Err(Error::InvalidParam(format!(
                "{} neighbor lists for {} users",
                neighbors.len(),
                topology.user_count()
            )));
        }
        Ok(Simulation {
            topology,
            rates,
            neighbors,
            params,
            file_count,
            faps: vec![FapState::empty(file_count); topology.fap_count()],
            policies,
            slot_cursor: 0,
        })
    }

    /// Requests per file observed by each access point in the batch.
    fn request_counts(&self, batch: &RequestBatch) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0usize; self.file_count]; self.topology.fap_count()];
        for (user, req) in batch.requests.iter().enumerate() {
            if let Some(file) = req {
                counts[self.topology.association[user]][*file] += 1;
            }
        }
        counts
    }

    /// Advance one slot: placement then delivery. Returns the slot metrics.
    pub fn step_slot(&mut self, batch: &RequestBatch) -> Result<SlotMetrics> {
        let slot = self.slot_cursor;
        let params = self.params;
        let s_size = params.file_size_bits;
        let capacity = params.cache_capacity_bits;
        let counts = self.request_counts(batch);

        let mut caching_load = 0.0;

        // Placement phase.
        for (i, fap) in self.faps.iter_mut().enumerate() {
            let control: CacheControl = {
                let mut c = self.policies[i].placement(slot, &fap.cache, &counts[i], params)?;
                c.clamp();
                c
            };

            let pre = fap.cache.bits.clone();
            for n in 0..self.file_count {
                let rate = control.rates[n];
                caching_load += params.caching_load_linear * rate
                    + 0.5 * params.caching_load_quad * rate * rate;
                let drift = s_size * (rate - params.discard_rate(counts[i][n] as f64));
                fap.cache.bits[n] = (pre[n] + drift).clamp(0.0, s_size);
            }

            // Capacity projection: remove growth in reverse priority order.
            let total = fap.cache.total_bits();
            if total > capacity {
                let order = self.policies[i]
                    .capacity_priority(slot, &fap.cache)
                    .unwrap_or_else(|| (0..self.file_count).collect());
                let mut overflow = total - capacity;
                for &file in order.iter().rev() {
                    if overflow <= 0.0 {
                        break;
                    }
                    let decayed = (pre[file]
                        - s_size * params.discard_rate(counts[i][file] as f64))
                    .clamp(0.0, s_size);
                    let growth = fap.cache.bits[file] - decayed;
                    if growth > 0.0 {
                        let cut = growth.min(overflow);
                        fap.cache.bits[file] -= cut;
                        overflow -= cut;
                    }
                }
                if overflow > 1e-6 {
                    return Err(Error::InconsistentState(format!(
                        "access point {i} exceeds capacity by {overflow} bits after trimming"
                    )));
                }
            }
        }

        // Delivery phase, resolved in user order.
        let mut delay = 0.0;
        let mut retrieval_load = 0.0;
        let mut requests = 0;
        let mut served = [0usize; 3];
        for (user, req) in batch.requests.iter().enumerate() {
            let Some(&file) = req.as_ref() else { continue };
            requests += 1;
            let delivery = resolve_delivery(
                user,
                file,
                self.topology,
                &self.faps,
                self.rates,
                &self.neighbors[user],
                params,
            );
            let rate = self.rates[delivery.serving_fap][user];
            if !(rate > 0.0) {
                return Err(Error::InvalidRate {
                    fap: delivery.serving_fap,
                    user,
                });
            }
            match delivery.case {
                DeliveryCase::OwnCache | DeliveryCase::Retrieval => {
                    let cached = self.faps[delivery.serving_fap].cache.bits[file];
                    delay += s_size / rate + (s_size - cached) / params.fronthaul_rate_bps;
                    retrieval_load += params.retrieval_load_coeff * (s_size - cached);
                    served[if delivery.case == DeliveryCase::OwnCache { 0 } else { 2 }] += 1;
                }
                DeliveryCase::Alternative => {
                    delay += s_size / rate;
                    served[1] += 1;
                }
            }
            let own = self.topology.association[user];
            retrieval_load += self.policies[own].on_request_served(
                file,
                delivery.case,
                &mut self.faps[own].cache,
                params,
            );
        }

        // Invariants: bounds, capacity, request conservation.
        for fap in &self.faps {
            fap.cache.check_invariants(params)?;
        }
        if served.iter().sum::<usize>() != requests {
            return Err(Error::InconsistentState(
                "served case counts do not add up to issued requests".into(),
            ));
        }

        let load = caching_load + retrieval_load;
        let metrics = SlotMetrics {
            slot,
            delay_s: delay,
            load,
            total_cost: params.delay_weight * delay + params.load_weight * load,
            requests,
            served_own: served[0],
            served_alt: served[1],
            served_retrieval: served[2],
        };
        self.slot_cursor += 1;
        Ok(metrics)
    }

    /// Run the whole batch sequence.
    pub fn run(
        &mut self,
        batches: &[RequestBatch],
        record_mean_field: Option<&Grid>,
        policy_name: &str,
    ) -> Result<RunOutput> {
        let mut per_slot = Vec::with_capacity(batches.len());
        let mut mean_field = record_mean_field.map(|_| Vec::with_capacity(batches.len()));
        for batch in batches {
            per_slot.push(self.step_slot(batch)?);
            if let (Some(frames), Some(grid)) = (mean_field.as_mut(), record_mean_field) {
                let frame: Vec<Vec<f64>> = (0..self.file_count)
                    .map(|n| self.node_histogram(n, grid))
                    .collect();
                frames.push(frame);
            }
        }

        let faps = self.topology.fap_count();
        let slots = batches.len();
        let requests: usize = per_slot.iter().map(|m| m.requests).sum();
        let total_delay: f64 = per_slot.iter().map(|m| m.delay_s).sum();
        let total_load: f64 = per_slot.iter().map(|m| m.load).sum();
        let total_cost: f64 = per_slot.iter().map(|m| m.total_cost).sum();
        let summary = RunSummary {
            policy: policy_name.to_string(),
            slots,
            faps,
            requests,
            total_delay_s: total_delay,
            total_load,
            total_cost,
            delay_per_request_s: if requests > 0 {
                total_delay / requests as f64
            } else {
                0.0
            },
            load_per_fap_slot: if faps * slots > 0 {
                total_load / (faps * slots) as f64
            } else {
                0.0
            },
            cost_per_slot: if slots > 0 {
                total_cost / slots as f64
            } else {
                0.0
            },
            served_own: per_slot.iter().map(|m| m.served_own).sum(),
            served_alt: per_slot.iter().map(|m| m.served_alt).sum(),
            served_retrieval: per_slot.iter().map(|m| m.served_retrieval).sum(),
        };
        Ok(RunOutput {
            per_slot,
            mean_field,
            summary,
        })
    }

    /// Normalized histogram of the fleet's cache states for one file over
    /// the solver's node cells.
    pub fn node_histogram(&self, file: usize, grid: &Grid) -> Vec<f64> {
        let states: Vec<f64> = self.faps.iter().map(|f| f.cache.bits[file]).collect();
        node_histogram_of(&states, grid)
    }
}

/// Normalized histogram of cache states (bits) over uniform bins covering
/// `[0, S]`.
pub fn empirical_mean_field(
    faps: &[FapState],
    file: usize,
    bins: usize,
    file_size_bits: f64,
) -> Vec<f64> {
    let mut histogram = vec![0.0; bins];
    if faps.is_empty() || bins == 0 {
        return histogram;
    }
    for fap in faps {
        let norm = (fap.cache.bits[file] / file_size_bits).clamp(0.0, 1.0);
        let bin = ((norm * bins as f64).floor() as usize).min(bins - 1);
        histogram[bin] += 1.0;
    }
    for h in &mut histogram {
        *h /= faps.len() as f64;
    }
    histogram
}

/// Normalized histogram over the solver's node cells (cell j is centered on
/// node j), comparable to a density row via `mass_j = m_j * ds`.
pub fn node_histogram_of(states_bits: &[f64], grid: &Grid) -> Vec<f64> {
    let mut histogram = vec![0.0; grid.ns];
    if states_bits.is_empty() {
        return histogram;
    }
    for &s in states_bits {
        let j = grid.position_of_bits(s).round() as usize;
        histogram[j.min(grid.ns - 1)] += 1.0;
    }
    for h in &mut histogram {
        *h /= states_bits.len() as f64;
    }
    histogram
}

/// Total-variation distance between a node histogram and a density row.
pub fn tv_distance_to_density(histogram: &[f64], density_row: &[f64], ds: f64) -> f64 {
    0.5 * histogram
        .iter()
        .zip(density_row)
        .map(|(h, m)| (h - m * ds).abs())
        .sum::<f64>()
}

/// Deterministically place `count` states at the quantiles of a density row
/// (stratified sampling, no randomness).
pub fn stratified_states(density_row: &[f64], grid: &Grid, count: usize) -> Vec<f64> {
    let ds = grid.ds();
    let masses: Vec<f64> = density_row.iter().map(|m| m * ds).collect();
    let mut states = Vec::with_capacity(count);
    let mut cell = 0;
    let mut cum = 0.0;
    for i in 0..count {
        let target = (i as f64 + 0.5) / count as f64;
        while cell < masses.len() - 1 && cum + masses[cell] < target {
            cum += masses[cell];
            cell += 1;
        }
        let inside = if masses[cell] > 0.0 {
            ((target - cum) / masses[cell]).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let norm = ((cell as f64 - 0.5 + inside) * ds).clamp(0.0, 1.0);
        states.push(norm * grid.file_size_bits);
    }
    states
}

/// Drive a fleet of caches for one file under a solved feedback field and
/// the expected request profile (no randomness). Returns the states in bits
/// at every time level, starting with the initial states.
pub fn drive_field_ensemble(
    policy: &Field,
    q_profile: &[f64],
    grid: &Grid,
    params: &CostParams,
    initial_bits: &[f64],
) -> Vec<Vec<f64>> {
    let mut states = initial_bits.to_vec();
    let mut trajectory = vec![states.clone()];
    let dt = grid.dt_slots();
    let s_size = grid.file_size_bits;
    for level in 0..grid.nt - 1 {
        let slot = grid.slot_of_level(level);
        let discard = params.discard_rate(q_profile[slot]);
        let fmax = (1.0 - discard).max(discard).max(1e-12);
        let n_sub = ((fmax * dt / grid.ds()).ceil() as usize).max(1);
        let dt_sub = dt / n_sub as f64;
        for _ in 0..n_sub {
            for s in states.iter_mut() {
                let c = policy
                    .sample_state(level, grid.position_of_bits(*s))
                    .clamp(0.0, 1.0);
                *s = (*s + s_size * (c - discard) * dt_sub).clamp(0.0, s_size);
            }
        }
        trajectory.push(states.clone());
    }
    trajectory
}
