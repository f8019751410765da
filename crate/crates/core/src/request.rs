//! Per-slot request generation and trace serialization.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::popularity::ZipfPopularity;

/// Requests issued in one slot: at most one file per user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestBatch {
    pub slot: usize,
    /// `requests[k]` is the file requested by user `k` (0-based file index),
    /// or `None` when the user is idle this slot.
    pub requests: Vec<Option<usize>>,
}

impl RequestBatch {
    pub fn request_count(&self) -> usize {
        self.requests.iter().filter(|r| r.is_some()).count()
    }
}

/// Draw one slot of requests.
///
/// Arrivals are Poisson per user, thinned to at most one request per user per
/// slot: each user requests with probability `min(1, lambda)` and the file is
/// drawn independently from the popularity distribution.
pub fn generate_requests(
    popularity: &ZipfPopularity,
    users: usize,
    lambda: f64,
    rng_seed: u64,
) -> RequestBatch {
    generate_requests_at(popularity, users, lambda, rng_seed, 0)
}

/// Same as [`generate_requests`] with an explicit slot label recorded in the
/// batch. The RNG stream is derived from `rng_seed` alone, so callers should
/// pass a per-slot seed.
pub fn generate_requests_at(
    popularity: &ZipfPopularity,
    users: usize,
    lambda: f64,
    rng_seed: u64,
    slot: usize,
) -> RequestBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let p_request = lambda.clamp(0.0, 1.0);
    let sampler = WeightedIndex::new(&popularity.probabilities)
        .expect("popularity probabilities are positive and normalized");
    let requests = (0..users)
        .map(|_| {
            if rng.random::<f64>() < p_request {
                Some(sampler.sample(&mut rng))
            } else {
                None
            }
        })
        .collect();
    RequestBatch { slot, requests }
}

/// Write request batches as `slot,user,file` rows (1-based file ids) so a run
/// can be replayed exactly.
pub fn write_trace<W: Write>(writer: W, batches: &[RequestBatch]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["slot", "user", "file"])?;
    for batch in batches {
        for (user, req) in batch.requests.iter().enumerate() {
            if let Some(file) = req {
                csv.write_record([
                    batch.slot.to_string(),
                    user.to_string(),
                    (file + 1).to_string(),
                ])?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

/// Read a trace written by [`write_trace`]. `users` fixes the batch width;
/// slots absent from the file come back as all-idle batches.
pub fn read_trace<R: Read>(reader: R, users: usize, slots: usize) -> Result<Vec<RequestBatch>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut batches: Vec<RequestBatch> = (0..slots)
        .map(|slot| RequestBatch {
            slot,
            requests: vec![None; users],
        })
        .collect();
    for record in csv.records() {
        let record = record?;
        let slot: usize = record[0].parse().map_err(|e| {
            crate::error::Error::InvalidParam(format!("bad slot in trace: {e}"))
        })?;
        let user: usize = record[1].parse().map_err(|e| {
            crate::error::Error::InvalidParam(format!("bad user in trace: {e}"))
        })?;
        let file: usize = record[2].parse().map_err(|e| {
            crate::error::Error::InvalidParam(format!("bad file in trace: {e}"))
        })?;
        if slot < slots && user < users && file >= 1 {
            batches[slot].requests[user] = Some(file - 1);
        }
    }
    Ok(batches)
}
