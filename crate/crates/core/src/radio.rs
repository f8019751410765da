//! Access point layout, wireless rates and the fading channel process.
//!
//! Access points sit on a square lattice with spacing `ifd` clipped to a
//! disk; users are uniform in the disk and associate with the nearest access
//! point. Rates follow the SINR law
//!
//! ```text
//! R = W * log2(1 + g * P / (sigma^2 + sum_j g_j * P_j))
//! ```
//!
//! with the interference sum running over every other access point, all
//! assumed to transmit at full power. Channel gains come from a power-law
//! path loss with a near-field clamp; the time-varying channel is available
//! as a mean-reverting process but the default experiments use the static
//! gains only.

use std::io::Write;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::CostParams;

/// Default path-loss exponent.
pub const DEFAULT_PATHLOSS_EXPONENT: f64 = 4.0;
/// Distances below this clamp to it, so the gain never exceeds 1.
pub const DEFAULT_MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Access point and user layout with the nearest-AP association map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub radius_m: f64,
    pub ifd_m: f64,
    pub fap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// `association[k]` is the index of user k's default access point.
    pub association: Vec<usize>,
}

impl Topology {
    pub fn fap_count(&self) -> usize {
        self.fap_positions.len()
    }

    pub fn user_count(&self) -> usize {
        self.user_positions.len()
    }

    /// Users served by access point `fap` (its cluster).
    pub fn cluster(&self, fap: usize) -> Vec<usize> {
        self.association
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == fap)
            .map(|(k, _)| k)
            .collect()
    }

    /// Access points within `radius_m` of each user: the candidates for
    /// serving a request from a neighboring cache.
    pub fn neighbor_lists(&self, radius_m: f64) -> Vec<Vec<usize>> {
        self.user_positions
            .iter()
            .map(|up| {
                self.fap_positions
                    .iter()
                    .enumerate()
                    .filter(|(_, fp)| fp.distance(up) <= radius_m)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }

    /// Path-loss gain between every access point and every user,
    /// `gains[i][k]`.
    pub fn gain_matrix(&self, pathloss_exponent: f64, min_distance_m: f64) -> Vec<Vec<f64>> {
        self.fap_positions
            .iter()
            .map(|fp| {
                self.user_positions
                    .iter()
                    .map(|up| static_gain_with(fp.distance(up), pathloss_exponent, min_distance_m))
                    .collect()
            })
            .collect()
    }

    /// Serialize as `entity,index,x,y,association` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["entity", "index", "x", "y", "association"])?;
        for (i, p) in self.fap_positions.iter().enumerate() {
            csv.write_record(["fap", &i.to_string(), &p.x.to_string(), &p.y.to_string(), ""])?;
        }
        for (k, p) in self.user_positions.iter().enumerate() {
            csv.write_record([
                "user",
                &k.to_string(),
                &p.x.to_string(),
                &p.y.to_string(),
                &self.association[k].to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Lattice access points clipped to the disk, i.i.d. uniform users, nearest
/// association with lowest-index tie break.
pub fn build_topology(radius_m: f64, ifd_m: f64, users: usize, rng_seed: u64) -> Result<Topology> {
    if !(radius_m > 0.0) {
        return Err(Error::InvalidParam(format!("radius must be > 0, got {radius_m}")));
    }
    // Spacings beyond the disk still leave the center point, so only
    // non-positive spacings are rejected here; configs bound the sweep.
    if !(ifd_m > 0.0) {
        return Err(Error::InvalidParam(format!("ifd must be > 0, got {ifd_m}")));
    }

    let mut fap_positions = Vec::new();
    let half_span = (radius_m / ifd_m).floor() as i64;
    for iy in -half_span..=half_span {
        for ix in -half_span..=half_span {
            let p = Point {
                x: ix as f64 * ifd_m,
                y: iy as f64 * ifd_m,
            };
            if p.x.hypot(p.y) <= radius_m {
                fap_positions.push(p);
            }
        }
    }
    if fap_positions.is_empty() {
        return Err(Error::EmptyTopology {
            radius: radius_m,
            ifd: ifd_m,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let user_positions: Vec<Point> = (0..users)
        .map(|_| {
            let r = radius_m * rng.random::<f64>().sqrt();
            let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            Point {
                x: r * theta.cos(),
                y: r * theta.sin(),
            }
        })
        .collect();

    let association = user_positions
        .iter()
        .map(|up| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, fp) in fap_positions.iter().enumerate() {
                let d = fp.distance(up);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        })
        .collect();

    Ok(Topology {
        radius_m,
        ifd_m,
        fap_positions,
        user_positions,
        association,
    })
}

/// Power-law path gain `max(d, d_min)^(-alpha)` with the default exponent
/// and clamp.
pub fn static_gain(distance_m: f64) -> f64 {
    static_gain_with(distance_m, DEFAULT_PATHLOSS_EXPONENT, DEFAULT_MIN_DISTANCE_M)
}

pub fn static_gain_with(distance_m: f64, pathloss_exponent: f64, min_distance_m: f64) -> f64 {
    distance_m.max(min_distance_m).powf(-pathloss_exponent)
}

/// SINR rate in bits/s. Interference sums the received power of every entry
/// in `interfering_gains` at full transmit power.
pub fn transmission_rate(
    serving_gain: f64,
    interfering_gains: &[f64],
    params: &CostParams,
) -> f64 {
    let signal = serving_gain * params.tx_power_w;
    let interference: f64 = interfering_gains
        .iter()
        .map(|g| g * params.tx_power_w)
        .sum();
    let sinr = signal / (params.noise_w + interference);
    params.bandwidth_hz * (1.0 + sinr).log2()
}

/// Rate matrix `rates[i][k]` for every pair, with all other access points
/// interfering.
pub fn rate_matrix(gains: &[Vec<f64>], params: &CostParams) -> Vec<Vec<f64>> {
    let fap_count = gains.len();
    let user_count = if fap_count == 0 { 0 } else { gains[0].len() };
    let mut rates = vec![vec![0.0; user_count]; fap_count];
    for k in 0..user_count {
        let total_power: f64 = (0..fap_count).map(|j| gains[j][k] * params.tx_power_w).sum();
        for i in 0..fap_count {
            let signal = gains[i][k] * params.tx_power_w;
            let interference = total_power - signal;
            let sinr = signal / (params.noise_w + interference);
            rates[i][k] = params.bandwidth_hz * (1.0 + sinr).log2();
        }
    }
    rates
}

/// Typical rates used by the solver's cost model: the mean rate from a user's
/// own access point and the mean best rate offered by a neighboring one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldRates {
    pub own_bps: f64,
    pub alt_bps: f64,
}

/// Average the own-AP rate and the best neighboring-AP rate over users.
/// `neighbors[k]` lists the candidate access points of user `k` (the own AP
/// is skipped); users with no other candidate fall back to their own rate.
pub fn mean_field_rates(
    topology: &Topology,
    rates: &[Vec<f64>],
    neighbors: &[Vec<usize>],
) -> MeanFieldRates {
    let users = topology.user_count();
    if users == 0 {
        return MeanFieldRates {
            own_bps: 1.0,
            alt_bps: 1.0,
        };
    }
    let mut own_sum = 0.0;
    let mut alt_sum = 0.0;
    for k in 0..users {
        let own = topology.association[k];
        own_sum += rates[own][k];
        let best_alt = neighbors[k]
            .iter()
            .filter(|&&j| j != own)
            .map(|&j| rates[j][k])
            .fold(0.0f64, f64::max);
        alt_sum += if best_alt > 0.0 { best_alt } else { rates[own][k] };
    }
    MeanFieldRates {
        own_bps: own_sum / users as f64,
        alt_bps: alt_sum / users as f64,
    }
}

/// Mean-reverting channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Long-term mean of the channel coefficient.
    pub mean: f64,
    /// Volatility of the driving noise.
    pub sigma: f64,
    /// Reversion speed parameter alpha; the effective rate toward the mean
    /// is alpha / 2.
    pub alpha: f64,
}

/// One Euler-Maruyama step of the mean-reverting channel:
/// `h' = h + (alpha/2) (mean - h) dt + sigma sqrt(dt) * noise`.
pub fn ou_step(h: f64, dt: f64, params: &OuParams, noise: f64) -> f64 {
    h + 0.5 * params.alpha * (params.mean - h) * dt + params.sigma * dt.sqrt() * noise
}
