//! Discretization of the (time, cache-state) rectangle.
//!
//! Time is measured in slots: the horizon covers `horizon_slots` slots and
//! carries `nt` node levels, so the numerical step is
//! `dt = horizon_slots / (nt - 1)` slots (one slot per step in the default
//! configuration, finer for refinement studies). The cache state is stored
//! normalized to `[0, 1]`; node `j` sits at `s_j = j * S / (ns - 1)` bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Cache-state nodes (>= 3).
    pub ns: usize,
    /// Time levels (>= 2).
    pub nt: usize,
    /// Slots spanned by the horizon; normally `nt - 1`.
    pub horizon_slots: usize,
    /// File size S in bits; the state axis covers `[0, S]`.
    pub file_size_bits: f64,
}

impl Grid {
    pub fn new(ns: usize, nt: usize, horizon_slots: usize, file_size_bits: f64) -> Result<Self> {
        if ns < 3 {
            return Err(Error::InvalidParam(format!("ns must be >= 3, got {ns}")));
        }
        if nt < 2 {
            return Err(Error::InvalidParam(format!("nt must be >= 2, got {nt}")));
        }
        if horizon_slots == 0 {
            return Err(Error::InvalidParam("horizon_slots must be >= 1".into()));
        }
        if !(file_size_bits > 0.0) {
            return Err(Error::InvalidParam(format!(
                "file_size_bits must be > 0, got {file_size_bits}"
            )));
        }
        Ok(Grid {
            ns,
            nt,
            horizon_slots,
            file_size_bits,
        })
    }

    /// Grid with one time level per slot boundary.
    pub fn per_slot(ns: usize, slots: usize, file_size_bits: f64) -> Result<Self> {
        Grid::new(ns, slots + 1, slots, file_size_bits)
    }

    /// Normalized state spacing.
    pub fn ds(&self) -> f64 {
        1.0 / (self.ns - 1) as f64
    }

    /// Time step in slots.
    pub fn dt_slots(&self) -> f64 {
        self.horizon_slots as f64 / (self.nt - 1) as f64
    }

    /// Normalized state of node `j`.
    pub fn s_norm(&self, j: usize) -> f64 {
        j as f64 / (self.ns - 1) as f64
    }

    /// State of node `j` in bits.
    pub fn s_bits(&self, j: usize) -> f64 {
        self.s_norm(j) * self.file_size_bits
    }

    /// Fraction of the horizon elapsed at time level `t` (0 at the start,
    /// 1 at the end).
    pub fn tau(&self, t: usize) -> f64 {
        t as f64 / (self.nt - 1) as f64
    }

    /// Slot index containing time level `t` (for piecewise-per-slot inputs).
    pub fn slot_of_level(&self, t: usize) -> usize {
        let slot = (self.tau(t) * self.horizon_slots as f64).floor() as usize;
        slot.min(self.horizon_slots - 1)
    }

    /// Fractional node position of a state given in bits, clamped to the axis.
    pub fn position_of_bits(&self, s_bits: f64) -> f64 {
        let norm = (s_bits / self.file_size_bits).clamp(0.0, 1.0);
        norm * (self.ns - 1) as f64
    }
}

/// A scalar field over the grid, time-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub nt: usize,
    pub ns: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(nt: usize, ns: usize) -> Self {
        Field {
            nt,
            ns,
            data: vec![0.0; nt * ns],
        }
    }

    /// Every time level holds a copy of `row`.
    pub fn tiled(nt: usize, row: &[f64]) -> Self {
        let ns = row.len();
        let mut data = Vec::with_capacity(nt * ns);
        for _ in 0..nt {
            data.extend_from_slice(row);
        }
        Field { nt, ns, data }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.ns..(t + 1) * self.ns]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.ns..(t + 1) * self.ns]
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.data[t * self.ns + j]
    }

    pub fn set(&mut self, t: usize, j: usize, value: f64) {
        self.data[t * self.ns + j] = value;
    }

    /// Linear interpolation along the state axis at a fixed time level.
    /// `position` is a fractional node index.
    pub fn sample_state(&self, t: usize, position: f64) -> f64 {
        let row = self.row(t);
        let clamped = position.clamp(0.0, (self.ns - 1) as f64);
        let lo = clamped.floor() as usize;
        if lo + 1 >= self.ns {
            return row[self.ns - 1];
        }
        let frac = clamped - lo as f64;
        row[lo] * (1.0 - frac) + row[lo + 1] * frac
    }

    /// Bilinear interpolation at fractional (time, state) node positions.
    pub fn sample(&self, t_position: f64, s_position: f64) -> f64 {
        let tc = t_position.clamp(0.0, (self.nt - 1) as f64);
        let t_lo = tc.floor() as usize;
        if t_lo + 1 >= self.nt {
            return self.sample_state(self.nt - 1, s_position);
        }
        let frac = tc - t_lo as f64;
        let a = self.sample_state(t_lo, s_position);
        let b = self.sample_state(t_lo + 1, s_position);
        a * (1.0 - frac) + b * frac
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Sup-norm distance between two fields.
pub fn sup_distance(a: &Field, b: &Field) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Normalized density row checks: non-negative and unit mass within `tol`.
pub fn check_density_row(row: &[f64], ds: f64, tol: f64) -> Result<()> {
    let mut mass = 0.0;
    for &m in row {
        if m < -1e-12 {
            return Err(Error::InvalidParam(format!("density has negative mass {m}")));
        }
        mass += m * ds;
    }
    if (mass - 1.0).abs() > tol {
        return Err(Error::InvalidParam(format!(
            "density mass {mass} differs from 1 by more than {tol}"
        )));
    }
    Ok(())
}

/// A one-cell spike (Dirac approximation) at the node nearest `s_bits`.
pub fn spike_density(grid: &Grid, s_bits: f64) -> Vec<f64> {
    let mut row = vec![0.0; grid.ns];
    let j = grid.position_of_bits(s_bits).round() as usize;
    row[j.min(grid.ns - 1)] = 1.0 / grid.ds();
    row
}

/// Uniform density over the whole state axis.
pub fn uniform_density(grid: &Grid) -> Vec<f64> {
    vec![1.0 / (grid.ns as f64 * grid.ds()); grid.ns]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_nodes() {
        let g = Grid::per_slot(101, 200, 8e8).unwrap();
        assert_eq!(g.ds(), 0.01);
        assert_eq!(g.dt_slots(), 1.0);
        assert_eq!(g.s_bits(0), 0.0);
        assert_eq!(g.s_bits(100), 8e8);
        assert_eq!(g.s_bits(50), 4e8);
        assert_eq!(g.tau(200), 1.0);
    }

    #[test]
    fn refined_grid_takes_fractional_slots() {
        let g = Grid::new(101, 401, 200, 8e8).unwrap();
        assert_eq!(g.dt_slots(), 0.5);
        assert_eq!(g.slot_of_level(0), 0);
        assert_eq!(g.slot_of_level(1), 0);
        assert_eq!(g.slot_of_level(2), 1);
        assert_eq!(g.slot_of_level(400), 199);
    }

    #[test]
    fn interpolation_identity_and_midpoint() {
        let mut f = Field::zeros(2, 3);
        f.set(0, 0, 1.0);
        f.set(0, 1, 3.0);
        f.set(0, 2, 5.0);
        assert_eq!(f.sample_state(0, 1.0), 3.0);
        assert_eq!(f.sample_state(0, 0.5), 2.0);
        assert_eq!(f.sample_state(0, 2.0), 5.0);
        // Past-the-end positions clamp.
        assert_eq!(f.sample_state(0, 7.0), 5.0);
    }

    #[test]
    fn spike_mass_is_one() {
        let g = Grid::per_slot(101, 10, 8e8).unwrap();
        let spike = spike_density(&g, 0.0);
        check_density_row(&spike, g.ds(), 1e-12).unwrap();
        let uni = uniform_density(&g);
        check_density_row(&uni, g.ds(), 1e-12).unwrap();
    }
}
