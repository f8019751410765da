//! Content catalog and Zipf request popularity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A library of equally sized files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentCatalog {
    /// Number of files N (>= 1).
    pub file_count: usize,
    /// File size S in bits (> 0).
    pub file_size_bits: f64,
}

impl ContentCatalog {
    pub fn new(file_count: usize, file_size_bits: f64) -> Result<Self> {
        if file_count == 0 {
            return Err(Error::InvalidParam("file_count must be >= 1".into()));
        }
        if !(file_size_bits > 0.0) {
            return Err(Error::InvalidParam(format!(
                "file_size_bits must be > 0, got {file_size_bits}"
            )));
        }
        Ok(ContentCatalog {
            file_count,
            file_size_bits,
        })
    }
}

/// Per-file request probabilities following a rank-based power law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfPopularity {
    /// Skew exponent beta >= 0. Zero means uniform popularity.
    pub beta: f64,
    /// Probability of each file being requested, sums to 1.
    pub probabilities: Vec<f64>,
}

/// Probability vector `p_n = n^(-beta) / sum_j j^(-beta)` for `n = 1..=N`.
pub fn zipf_probabilities(file_count: usize, beta: f64) -> Result<Vec<f64>> {
    if file_count == 0 {
        return Err(Error::InvalidParam("file_count must be >= 1".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidParam(format!("beta must be >= 0, got {beta}")));
    }
    let weights: Vec<f64> = (1..=file_count).map(|n| (n as f64).powf(-beta)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

impl ZipfPopularity {
    pub fn new(file_count: usize, beta: f64) -> Result<Self> {
        Ok(ZipfPopularity {
            beta,
            probabilities: zipf_probabilities(file_count, beta)?,
        })
    }

    pub fn file_count(&self) -> usize {
        self.probabilities.len()
    }

    /// Reassign the probability masses to files by a uniformly random
    /// permutation. The multiset of probabilities is unchanged.
    pub fn permuted(&self, rng_seed: u64) -> ZipfPopularity {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut probabilities = self.probabilities.clone();
        probabilities.shuffle(&mut rng);
        ZipfPopularity {
            beta: self.beta,
            probabilities,
        }
    }
}

/// See [`ZipfPopularity::permuted`].
pub fn permute_popularity(popularity: &ZipfPopularity, rng_seed: u64) -> ZipfPopularity {
    popularity.permuted(rng_seed)
}

/// Piecewise-constant popularity over time: one `ZipfPopularity` per period
/// of `period_slots` slots. A static schedule is a single period.
#[derive(Debug, Clone)]
pub struct PopularitySchedule {
    pub period_slots: usize,
    pub periods: Vec<ZipfPopularity>,
}

impl PopularitySchedule {
    /// A single-period schedule that never changes.
    pub fn static_schedule(popularity: ZipfPopularity, slots: usize) -> Self {
        PopularitySchedule {
            period_slots: slots.max(1),
            periods: vec![popularity],
        }
    }

    /// Randomize the base distribution independently in each period.
    /// Period `j` uses the permutation seeded by `permutation_seeds[j]`.
    pub fn time_variant(
        base: &ZipfPopularity,
        period_slots: usize,
        permutation_seeds: &[u64],
    ) -> Self {
        let periods = permutation_seeds
            .iter()
            .map(|&seed| base.permuted(seed))
            .collect();
        PopularitySchedule {
            period_slots: period_slots.max(1),
            periods,
        }
    }

    pub fn period_of_slot(&self, slot: usize) -> usize {
        (slot / self.period_slots).min(self.periods.len() - 1)
    }

    pub fn at_slot(&self, slot: usize) -> &ZipfPopularity {
        &self.periods[self.period_of_slot(slot)]
    }

    pub fn total_slots(&self) -> usize {
        self.period_slots * self.periods.len()
    }
}
