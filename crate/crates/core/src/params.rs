//! Scalar model constants shared by the cost model, the solver and the
//! simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All scalar constants of the rate, cache and cost models.
///
/// Rates are bits per second, powers in watts, sizes in bits. `discard_base`
/// is the base `a` of the request-driven discard factor `e^(a-1) * a^q`; it
/// must lie strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// File size S in bits (all files equal size).
    pub file_size_bits: f64,
    /// Wireless transmission bandwidth W in Hz.
    pub bandwidth_hz: f64,
    /// Per access point transmission power P in watts.
    pub tx_power_w: f64,
    /// Noise power in watts.
    pub noise_w: f64,
    /// Fronthaul rate R_F in bits/s.
    pub fronthaul_rate_bps: f64,
    /// Base a of the discard factor, strictly in (0, 1).
    pub discard_base: f64,
    /// Retrieval load coefficient (eta).
    pub retrieval_load_coeff: f64,
    /// Linear caching load coefficient (eta_1).
    pub caching_load_linear: f64,
    /// Quadratic caching load coefficient (eta_2).
    pub caching_load_quad: f64,
    /// Delay weight in the total cost (omega_1).
    pub delay_weight: f64,
    /// Load weight in the total cost (omega_2).
    pub load_weight: f64,
    /// Cache capacity C in bits per access point.
    pub cache_capacity_bits: f64,
}

impl Default for CostParams {
    /// Reference parameter set: 100 MB files, 10 MHz bandwidth, 1 W transmit
    /// power, -77 dBm noise, and the load/cost coefficients used throughout
    /// the test suite. Capacity defaults to 5 files' worth of bits.
    fn default() -> Self {
        let file_size_bits = 8e8;
        CostParams {
            file_size_bits,
            bandwidth_hz: 1e7,
            tx_power_w: 1.0,
            noise_w: 1.9952623149688786e-11,
            fronthaul_rate_bps: 1e7,
            discard_base: 0.5,
            retrieval_load_coeff: 0.3,
            caching_load_linear: 1e-4,
            caching_load_quad: 0.05,
            delay_weight: 100.0,
            load_weight: 1e-6,
            cache_capacity_bits: 5.0 * file_size_bits,
        }
    }
}

impl CostParams {
    /// Check the structural invariants: strictly positive sizes and rates,
    /// `discard_base` in (0, 1), non-negative weights.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("file_size_bits", self.file_size_bits),
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("noise_w", self.noise_w),
            ("fronthaul_rate_bps", self.fronthaul_rate_bps),
            ("cache_capacity_bits", self.cache_capacity_bits),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.discard_base > 0.0 && self.discard_base < 1.0) {
            return Err(Error::InvalidParam(format!(
                "discard_base must lie strictly in (0, 1), got {}",
                self.discard_base
            )));
        }
        let non_negative = [
            ("retrieval_load_coeff", self.retrieval_load_coeff),
            ("caching_load_linear", self.caching_load_linear),
            ("caching_load_quad", self.caching_load_quad),
            ("delay_weight", self.delay_weight),
            ("load_weight", self.load_weight),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Request-driven discard rate `e^(a-1) * a^q`.
    ///
    /// Strictly decreasing in `q`: many requests keep a file alive, few
    /// requests flush it quickly. Fractional `q` is allowed so the solver can
    /// use expected request counts.
    pub fn discard_rate(&self, requests: f64) -> f64 {
        let a = self.discard_base;
        (a - 1.0).exp() * a.powf(requests)
    }

    /// Whole files that fit in the cache, `floor(C / S)`.
    pub fn whole_file_capacity(&self) -> usize {
        (self.cache_capacity_bits / self.file_size_bits).floor() as usize
    }
}
