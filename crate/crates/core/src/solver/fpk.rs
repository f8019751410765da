//! Forward transport of the population density.
//!
//! Finite-volume form of
//!
//! ```text
//! dm/dt + d/ds [ S (c(t,s) - e^(a-1) a^q) m ] = eps * d2m/ds2
//! ```
//!
//! with first-order upwind fluxes, zero-flux walls, and explicit Euler in
//! time under a CFL bound (sub-stepped when one slot exceeds it). Each node
//! acts as a cell of width `ds`; the scheme conserves `sum m ds` to rounding
//! by construction.

use crate::error::{Error, Result};
use crate::params::CostParams;

use super::grid::{check_density_row, Field, Grid};

/// March the density forward under the feedback control field.
///
/// `policy` holds the normalized caching rate at every (time level, node);
/// `q_profile` the per-slot expected requests; `initial` the normalized
/// density row at t = 0 (unit mass within 1e-6).
pub fn solve_fpk_forward(
    policy: &Field,
    q_profile: &[f64],
    initial: &[f64],
    grid: &Grid,
    params: &CostParams,
    artificial_diffusion: f64,
    max_substeps: usize,
) -> Result<Field> {
    check_density_row(initial, grid.ds(), 1e-6)?;

    let ns = grid.ns;
    let nt = grid.nt;
    let ds = grid.ds();
    let dt = grid.dt_slots();
    // Diffusion is configured in bits^2 per slot; the state axis is
    // normalized by the file size.
    let eps = artificial_diffusion / (grid.file_size_bits * grid.file_size_bits);

    let mut density = Field::zeros(nt, ns);
    density.row_mut(0).copy_from_slice(initial);

    let mut current = initial.to_vec();
    let mut next = vec![0.0f64; ns];
    let mut drift = vec![0.0f64; ns];

    for level in 0..nt - 1 {
        let slot = grid.slot_of_level(level);
        let discard = params.discard_rate(q_profile[slot]);

        // Node drifts in normalized state per slot, frozen over the step.
        let mut fmax = 0.0f64;
        for j in 0..ns {
            let c = policy.get(level, j);
            drift[j] = c - discard;
            fmax = fmax.max(drift[j].abs());
        }

        let rate = fmax / ds + 2.0 * eps / (ds * ds);
        let n_sub = ((rate * dt).ceil() as usize).max(1);
        if n_sub > max_substeps {
            return Err(Error::CflViolation {
                needed: n_sub,
                limit: max_substeps,
            });
        }
        let dt_sub = dt / n_sub as f64;

        let mass_before: f64 = current.iter().sum::<f64>() * ds;
        for _ in 0..n_sub {
            // Upwind interface fluxes; walls carry none.
            next.copy_from_slice(&current);
            let mut flux_left = 0.0;
            for j in 0..ns {
                let flux_right = if j + 1 < ns {
                    let f = 0.5 * (drift[j] + drift[j + 1]);
                    let advective = if f >= 0.0 {
                        f * current[j]
                    } else {
                        f * current[j + 1]
                    };
                    advective - eps * (current[j + 1] - current[j]) / ds
                } else {
                    0.0
                };
                next[j] = current[j] - dt_sub / ds * (flux_right - flux_left);
                flux_left = flux_right;
            }
            std::mem::swap(&mut current, &mut next);
        }

        // Positivity and conservation guards; upwind transport under the
        // CFL bound cannot produce meaningful negatives.
        let mut clipped = 0.0;
        for m in current.iter_mut() {
            if *m < 0.0 {
                clipped += -*m * ds;
                *m = 0.0;
            }
        }
        if clipped > 1e-9 {
            return Err(Error::InconsistentState(format!(
                "transport clipped {clipped:.3e} mass in one step"
            )));
        }
        let mass_after: f64 = current.iter().sum::<f64>() * ds;
        if (mass_after - mass_before).abs() > 1e-9 {
            return Err(Error::InconsistentState(format!(
                "transport mass drifted by {:.3e} in one step",
                mass_after - mass_before
            )));
        }

        density.row_mut(level + 1).copy_from_slice(&current);
    }

    Ok(density)
}

/// Population averages of one density row: the mean cache state in bits and
/// the mass at or above `S (1 - full_eps)` (the activation of the
/// alternative delivery route).
pub fn mean_field_averages(row: &[f64], grid: &Grid, full_eps: f64) -> (f64, f64) {
    let ds = grid.ds();
    let threshold = grid.file_size_bits * (1.0 - full_eps);
    let mut mean_bits = 0.0;
    let mut full_mass = 0.0;
    for (j, &m) in row.iter().enumerate() {
        let s = grid.s_bits(j);
        mean_bits += s * m * ds;
        if s >= threshold {
            full_mass += m * ds;
        }
    }
    (mean_bits, full_mass.min(1.0))
}
