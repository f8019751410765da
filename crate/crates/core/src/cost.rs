//! Cache-state dynamics, delivery-case conditions, delay and fronthaul load.
//!
//! The per-file cache state `s` lives in `[0, S]` and moves with
//!
//! ```text
//! ds/dt = S * (c - e^(a-1) * a^q)
//! ```
//!
//! where `c in [0, 1]` is the caching rate and `q` the request count. A
//! request is served in one of three ways: from the default access point's
//! cache (case 1, taken as cached once `s >= S/2`), by another access point
//! holding the whole file (case 2), or by the default access point after a
//! fronthaul retrieval (case 3). Cases 1 and 3 charge the wireless delay plus
//! the fronthaul share of the uncached bits; case 2 charges the alternative
//! wireless link only. Load combines a quadratic caching-effort term with the
//! retrieval traffic of cases 1 and 3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::CostParams;

/// Per-file cached bits for one access point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheState {
    pub bits: Vec<f64>,
}

impl CacheState {
    pub fn empty(file_count: usize) -> Self {
        CacheState {
            bits: vec![0.0; file_count],
        }
    }

    pub fn total_bits(&self) -> f64 {
        self.bits.iter().sum()
    }

    /// Check `0 <= s_n <= S` and the capacity bound.
    pub fn check_invariants(&self, params: &CostParams) -> Result<()> {
        for (n, &s) in self.bits.iter().enumerate() {
            if !(0.0..=params.file_size_bits).contains(&s) {
                return Err(Error::InconsistentState(format!(
                    "cache state of file {n} out of range: {s}"
                )));
            }
        }
        let total = self.total_bits();
        // Tolerate accumulated rounding at the capacity boundary.
        if total > params.cache_capacity_bits * (1.0 + 1e-9) {
            return Err(Error::InconsistentState(format!(
                "cache occupancy {total} exceeds capacity {}",
                params.cache_capacity_bits
            )));
        }
        Ok(())
    }
}

/// Per-file caching rates, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheControl {
    pub rates: Vec<f64>,
}

impl CacheControl {
    pub fn zeros(file_count: usize) -> Self {
        CacheControl {
            rates: vec![0.0; file_count],
        }
    }

    pub fn clamp(&mut self) {
        for r in &mut self.rates {
            *r = r.clamp(0.0, 1.0);
        }
    }
}

/// Net cache drift in bits per slot: `S * (c - e^(a-1) * a^q)`.
/// The caller integrates this over the slot and clamps to `[0, S]`.
pub fn cache_drift(s_bits: f64, rate: f64, requests: f64, params: &CostParams) -> f64 {
    debug_assert!((0.0..=params.file_size_bits).contains(&s_bits));
    params.file_size_bits * (rate - params.discard_rate(requests))
}

/// Occurrence-condition smoothing: the exact step or a logistic ramp of
/// steepness `kappa` (in units of the file size). `kappa = INFINITY` selects
/// the exact step with `H(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub kappa: f64,
}

impl Smoothing {
    pub const EXACT: Smoothing = Smoothing { kappa: f64::INFINITY };

    pub fn logistic(kappa: f64) -> Self {
        Smoothing { kappa }
    }

    /// Step value for the margin `x` (bits), relative to file size `S`.
    pub fn step(&self, x: f64, file_size_bits: f64) -> f64 {
        if self.kappa.is_infinite() {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 / (1.0 + (-self.kappa * x / file_size_bits).exp())
        }
    }
}

/// The three delivery-case weights. They always sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseConditions {
    /// Served from the default access point's cache (`s >= S/2`).
    pub own_cached: f64,
    /// Served by another, fully cached access point.
    pub alternative: f64,
    /// Served by the default access point via fronthaul retrieval.
    pub retrieval: f64,
}

/// Case weights from the local state and the alternative cache state:
/// `C1 = H(s - S/2)`, `C2 = (1 - C1) H(s_alt - S)`, `C3 = (1 - C1)(1 - H(s_alt - S))`.
pub fn case_conditions(
    s_bits: f64,
    alt_bits: f64,
    file_size_bits: f64,
    smoothing: Smoothing,
) -> CaseConditions {
    let own = smoothing.step(s_bits - 0.5 * file_size_bits, file_size_bits);
    let alt_full = smoothing.step(alt_bits - file_size_bits, file_size_bits);
    conditions_from_activation(own, alt_full)
}

/// Case weights when the alternative-cache activation is already known as a
/// probability (for example the population mass near the full state).
pub fn conditions_from_activation(own_cached: f64, alt_activation: f64) -> CaseConditions {
    CaseConditions {
        own_cached,
        alternative: (1.0 - own_cached) * alt_activation,
        retrieval: (1.0 - own_cached) * (1.0 - alt_activation),
    }
}

/// Per-request rates seen by one access point for one file in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryContext {
    /// Requests for the file this slot.
    pub requests: usize,
    /// Wireless rate to each requesting user, bits/s (length = requests).
    pub own_rates_bps: Vec<f64>,
    /// Rate offered by the alternative access point (mean-field value).
    pub alt_rate_bps: f64,
    /// Cache state of the alternative access points, bits.
    pub alt_bits: f64,
}

/// Total service delay of the slot's requests for one file, in seconds:
///
/// ```text
/// sum_k (C1 + C3) (S / R_k + (S - s) / R_F) + C2 * S / R_alt
/// ```
///
/// Conditions are evaluated exactly from `(s, alt_bits)`.
pub fn delay_cost(
    ctx: &DeliveryContext,
    s_bits: f64,
    file_size_bits: f64,
    fronthaul_rate_bps: f64,
) -> Result<f64> {
    if ctx.requests == 0 {
        return Ok(0.0);
    }
    let cases = case_conditions(s_bits, ctx.alt_bits, file_size_bits, Smoothing::EXACT);
    let own_weight = cases.own_cached + cases.retrieval;
    let fronthaul = (file_size_bits - s_bits) / fronthaul_rate_bps;
    let mut total = 0.0;
    for (k, &rate) in ctx.own_rates_bps.iter().enumerate() {
        if own_weight > 0.0 && !(rate > 0.0) {
            return Err(Error::InvalidRate { fap: usize::MAX, user: k });
        }
        if cases.alternative > 0.0 && !(ctx.alt_rate_bps > 0.0) {
            return Err(Error::InvalidRate { fap: usize::MAX, user: k });
        }
        total += own_weight * (file_size_bits / rate + fronthaul);
        total += cases.alternative * file_size_bits / ctx.alt_rate_bps;
    }
    Ok(total)
}

/// Fronthaul load of one file in one slot:
/// caching effort `eta1 c + eta2 c^2 / 2` plus retrieval traffic
/// `eta * q * (S - s) * (C1 + C3)`.
pub fn fronthaul_load(
    rate: f64,
    s_bits: f64,
    requests: f64,
    cases: &CaseConditions,
    params: &CostParams,
) -> f64 {
    let caching = params.caching_load_linear * rate + 0.5 * params.caching_load_quad * rate * rate;
    let retrieval = params.retrieval_load_coeff
        * requests
        * (params.file_size_bits - s_bits)
        * (cases.own_cached + cases.retrieval);
    caching + retrieval
}

/// Weighted total cost `omega1 * delay + omega2 * load`.
pub fn total_cost(delay_s: f64, load: f64, params: &CostParams) -> f64 {
    params.delay_weight * delay_s + params.load_weight * load
}
