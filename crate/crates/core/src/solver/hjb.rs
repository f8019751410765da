//! Backward value-function solve.
//!
//! The per-file value function v(t, s) satisfies
//!
//! ```text
//! dv/dt + min_c [ S (c - e^(a-1) a^q) dv/ds + J(t, s, c) ] = 0,   v(T, .) = 0
//! ```
//!
//! with the per-slot running cost J built from the delay and load model and
//! the population inputs (expected requests, the mass of fully cached peers,
//! and the typical own/alternative rates). The minimization in `c` splits at
//! the zero-drift point `c = e^(a-1) a^q`: on each side the quadratic load
//! term gives a closed-form minimizer, and each side pairs with the one-sided
//! difference that matches its drift sign. The state axis is clamped, so at
//! the boundary nodes the outward drift component is dropped, which makes
//! holding (`c` equal to the discard rate) the natural control at the full
//! state.
//!
//! For speed the running cost is tabulated once per time level as
//! `J(s_j, c) = base[j] + lin c + quad c^2`; the sub-stepped sweep then runs
//! on plain arrays.

use serde::{Deserialize, Serialize};

use crate::cost::{conditions_from_activation, Smoothing};
use crate::error::{Error, Result};
use crate::params::CostParams;
use crate::radio::MeanFieldRates;

use super::grid::{Field, Grid};

/// Population-level inputs to the running cost for one file and one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldInputs {
    /// Expected requests per access point in the slot.
    pub requests: f64,
    /// Probability mass of peers holding the whole file (activates the
    /// alternative delivery route).
    pub full_mass: f64,
    /// Typical rate from a user's own access point, bits/s.
    pub own_rate_bps: f64,
    /// Typical best rate from any other access point, bits/s.
    pub alt_rate_bps: f64,
}

impl MeanFieldInputs {
    pub fn new(requests: f64, full_mass: f64, rates: MeanFieldRates) -> Self {
        MeanFieldInputs {
            requests,
            full_mass,
            own_rate_bps: rates.own_bps,
            alt_rate_bps: rates.alt_bps,
        }
    }
}

/// Closed-form minimizer of the Hamiltonian over the caching rate:
/// `c* = clamp(-(1/eta2) (S dv_ds / omega2 + eta1), 0, 1)`.
///
/// `dv_ds` is the per-bit value gradient. Degenerate weights fall back to the
/// appropriate limit: a vanishing gradient leaves `-eta1/eta2`, and a zero
/// load weight turns the control bang-bang on the gradient sign.
pub fn optimal_control(dv_ds: f64, params: &CostParams) -> f64 {
    let eta2 = params.caching_load_quad;
    if eta2 <= 0.0 {
        return 0.0;
    }
    let g = params.file_size_bits * dv_ds;
    let scaled = if g == 0.0 {
        0.0
    } else if params.load_weight > 0.0 {
        g / params.load_weight
    } else if g < 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    let raw = -(scaled + params.caching_load_linear) / eta2;
    raw.clamp(0.0, 1.0)
}

/// Per-slot running cost J(t, s, c) = omega1 D + omega2 O under the smoothed
/// case conditions, with the alternative route weighted by the peer full
/// mass.
pub fn stage_cost(
    s_bits: f64,
    rate: f64,
    inputs: &MeanFieldInputs,
    params: &CostParams,
    smoothing: Smoothing,
) -> f64 {
    let s_size = params.file_size_bits;
    let own_cached = smoothing.step(s_bits - 0.5 * s_size, s_size);
    let cases = conditions_from_activation(own_cached, inputs.full_mass);
    let own_weight = cases.own_cached + cases.retrieval;
    let uncached = (s_size - s_bits).max(0.0);

    let delay = inputs.requests
        * (own_weight * (s_size / inputs.own_rate_bps + uncached / params.fronthaul_rate_bps)
            + cases.alternative * s_size / inputs.alt_rate_bps);
    let load = params.caching_load_linear * rate
        + 0.5 * params.caching_load_quad * rate * rate
        + params.retrieval_load_coeff * inputs.requests * uncached * own_weight;
    params.delay_weight * delay + params.load_weight * load
}

/// Hamiltonian `S (c - e^(a-1) a^q) dv_ds + J(t, s, c)` in per-slot units.
pub fn hamiltonian(
    s_bits: f64,
    rate: f64,
    dv_ds: f64,
    inputs: &MeanFieldInputs,
    params: &CostParams,
    smoothing: Smoothing,
) -> f64 {
    let discard = params.discard_rate(inputs.requests);
    params.file_size_bits * (rate - discard) * dv_ds
        + stage_cost(s_bits, rate, inputs, params, smoothing)
}

/// Tabulated running cost at one time level:
/// `J(s_j, c) = base[j] + lin c + quad c^2`, with the slot's discard rate.
#[derive(Debug, Clone)]
pub struct LevelCost {
    pub base: Vec<f64>,
    pub lin: f64,
    pub quad: f64,
    pub discard: f64,
}

impl LevelCost {
    #[inline]
    fn cost(&self, j: usize, c: f64) -> f64 {
        self.base[j] + self.lin * c + self.quad * c * c
    }

    /// Unconstrained minimizer over `c` of `drift_coeff * c + J(., c)` where
    /// `drift_coeff = S * dv_ds`; clamped to [0, 1].
    #[inline]
    fn minimizer(&self, drift_coeff: f64) -> f64 {
        if self.quad > 0.0 {
            (-(drift_coeff + self.lin) / (2.0 * self.quad)).clamp(0.0, 1.0)
        } else if drift_coeff + self.lin < 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

/// Running cost evaluated on the grid, one table per time level; pluggable
/// so manufactured-solution problems drive the same scheme.
pub trait RunningCost: Sync {
    fn level_cost(&self, level: usize, grid: &Grid) -> LevelCost;
}

/// The standard cost model driven by per-slot mean-field inputs.
pub struct StandardCost<'a> {
    pub params: &'a CostParams,
    pub inputs: Vec<MeanFieldInputs>,
    pub smoothing: Smoothing,
}

impl RunningCost for StandardCost<'_> {
    fn level_cost(&self, level: usize, grid: &Grid) -> LevelCost {
        let slot = grid.slot_of_level(level);
        let inputs = &self.inputs[slot.min(self.inputs.len() - 1)];
        let base = (0..grid.ns)
            .map(|j| stage_cost(grid.s_bits(j), 0.0, inputs, self.params, self.smoothing))
            .collect();
        LevelCost {
            base,
            lin: self.params.load_weight * self.params.caching_load_linear,
            quad: 0.5 * self.params.load_weight * self.params.caching_load_quad,
            discard: self.params.discard_rate(inputs.requests),
        }
    }
}

/// One backward sweep of the grid. Returns the value function and the
/// feedback control extracted from it at every time level.
pub fn solve_hjb_backward<C: RunningCost + ?Sized>(
    cost: &C,
    grid: &Grid,
    max_substeps: usize,
) -> Result<(Field, Field)> {
    let ns = grid.ns;
    let nt = grid.nt;
    let ds_bits = grid.ds() * grid.file_size_bits;
    let dt = grid.dt_slots();

    let mut value = Field::zeros(nt, ns);
    let mut policy = Field::zeros(nt, ns);

    // Terminal level: v(T, .) = 0; policy minimizes the stage cost alone.
    {
        let model = cost.level_cost(nt - 1, grid);
        let zero = vec![0.0; ns];
        let row = extract_policy(&zero, &model, grid, ds_bits);
        policy.row_mut(nt - 1).copy_from_slice(&row);
    }

    let mut current = vec![0.0f64; ns];
    let mut scratch = vec![0.0f64; ns];

    for level in (0..nt - 1).rev() {
        // The cost table for the interval ending at this level.
        let model = cost.level_cost(level, grid);

        // CFL bound: normalized drift magnitude never exceeds
        // max(1 - discard, discard) <= 1.
        let fmax = (1.0 - model.discard).max(model.discard).max(1e-12);
        let n_sub = ((fmax * dt / grid.ds()).ceil() as usize).max(1);
        if n_sub > max_substeps {
            return Err(Error::CflViolation {
                needed: n_sub,
                limit: max_substeps,
            });
        }
        let dt_sub = dt / n_sub as f64;

        for _ in 0..n_sub {
            step_backward(&current, &mut scratch, &model, grid, ds_bits, dt_sub)?;
            std::mem::swap(&mut current, &mut scratch);
        }

        let max_abs = current.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !max_abs.is_finite() || max_abs > 1e300 {
            return Err(Error::NonFiniteValue {
                slot: grid.slot_of_level(level),
                magnitude: max_abs,
            });
        }

        value.row_mut(level).copy_from_slice(&current);
        let row = extract_policy(&current, &model, grid, ds_bits);
        policy.row_mut(level).copy_from_slice(&row);
    }

    Ok((value, policy))
}

/// Candidate minimization at one node. Returns (control, hamiltonian).
///
/// The control range splits at the zero-drift point: `c >= discard` drifts
/// up and pairs with the forward difference, `c <= discard` drifts down and
/// pairs with the backward difference. Boundary nodes drop the outward
/// branch because the dynamics clamp there. Ties resolve to the smaller
/// control.
#[inline]
fn best_control(
    j: usize,
    ns: usize,
    d_minus: f64,
    d_plus: f64,
    model: &LevelCost,
    s_size: f64,
) -> (f64, f64) {
    let discard = model.discard;
    let mut best_c = f64::INFINITY;
    let mut best_h = f64::INFINITY;

    // Upward branch with forward difference.
    let (c_up, h_up) = if j + 1 < ns {
        let coeff = s_size * d_plus;
        let c = model.minimizer(coeff).clamp(discard.min(1.0), 1.0);
        (c, coeff * (c - discard) + model.cost(j, c))
    } else {
        // Top wall: upward motion clamps, drift term vanishes; the cheapest
        // non-decreasing control is holding at the discard rate.
        let c = discard.clamp(0.0, 1.0);
        (c, model.cost(j, c))
    };
    if h_up < best_h || (h_up == best_h && c_up < best_c) {
        best_h = h_up;
        best_c = c_up;
    }

    // Downward branch with backward difference.
    let (c_dn, h_dn) = if j > 0 {
        let coeff = s_size * d_minus;
        let c = model.minimizer(coeff).clamp(0.0, discard.max(0.0).min(1.0));
        (c, coeff * (c - discard) + model.cost(j, c))
    } else {
        // Bottom wall: downward motion clamps; the cheapest control with no
        // upward drift is zero effort.
        (0.0, model.cost(j, 0.0))
    };
    if h_dn < best_h || (h_dn == best_h && c_dn < best_c) {
        best_h = h_dn;
        best_c = c_dn;
    }

    (best_c, best_h)
}

fn step_backward(
    later: &[f64],
    earlier: &mut [f64],
    model: &LevelCost,
    grid: &Grid,
    ds_bits: f64,
    dt_sub: f64,
) -> Result<()> {
    let ns = grid.ns;
    let s_size = grid.file_size_bits;
    for j in 0..ns {
        let d_plus = if j + 1 < ns {
            (later[j + 1] - later[j]) / ds_bits
        } else {
            0.0
        };
        let d_minus = if j > 0 {
            (later[j] - later[j - 1]) / ds_bits
        } else {
            0.0
        };
        let (_, h) = best_control(j, ns, d_minus, d_plus, model, s_size);
        earlier[j] = later[j] + dt_sub * h;

        // Discrete consistency: (v_later - v_earlier)/dt + H = 0 up to
        // rounding of the update itself.
        let residual = (later[j] - earlier[j]) / dt_sub + h;
        if residual.abs() > 1e-8 * h.abs().max(later[j].abs()).max(1.0) {
            return Err(Error::InconsistentState(format!(
                "hjb residual {residual:.3e} at node {j}"
            )));
        }
    }
    Ok(())
}

/// Feedback control at every node of a value row.
fn extract_policy(value_row: &[f64], model: &LevelCost, grid: &Grid, ds_bits: f64) -> Vec<f64> {
    let ns = grid.ns;
    let s_size = grid.file_size_bits;
    (0..ns)
        .map(|j| {
            let d_plus = if j + 1 < ns {
                (value_row[j + 1] - value_row[j]) / ds_bits
            } else {
                0.0
            };
            let d_minus = if j > 0 {
                (value_row[j] - value_row[j - 1]) / ds_bits
            } else {
                0.0
            };
            best_control(j, ns, d_minus, d_plus, model, s_size).0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> CostParams {
        CostParams::default()
    }

    #[test]
    fn control_vanishing_gradient_clamps_to_zero() {
        let p = params();
        // Raw value -eta1/eta2 = -0.002 clamps to 0.
        assert_eq!(optimal_control(0.0, &p), 0.0);
    }

    #[test]
    fn control_inversion_full_rate() {
        let p = params();
        let dv = -(p.load_weight / p.file_size_bits)
            * (p.caching_load_linear + p.caching_load_quad);
        assert_relative_eq!(optimal_control(dv, &p), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn control_inversion_half_rate() {
        let p = params();
        let dv = -(p.load_weight / p.file_size_bits)
            * (p.caching_load_linear + 0.5 * p.caching_load_quad);
        assert_relative_eq!(optimal_control(dv, &p), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn hamiltonian_zero_case() {
        let mut p = params();
        p.delay_weight = 0.0;
        p.load_weight = 0.0;
        let inputs = MeanFieldInputs {
            requests: 1.0,
            full_mass: 0.0,
            own_rate_bps: 1e7,
            alt_rate_bps: 1e7,
        };
        let h = hamiltonian(0.0, 0.3, 0.0, &inputs, &p, Smoothing::logistic(50.0));
        assert_eq!(h, 0.0);
    }

    #[test]
    fn hamiltonian_linear_in_gradient() {
        let p = params();
        let inputs = MeanFieldInputs {
            requests: 0.5,
            full_mass: 0.1,
            own_rate_bps: 1e7,
            alt_rate_bps: 5e6,
        };
        let s = 2e8;
        let c = 0.9; // positive drift factor: c > discard rate
        assert!(c > p.discard_rate(inputs.requests));
        let sm = Smoothing::logistic(50.0);
        let h1 = hamiltonian(s, c, 1e-6, &inputs, &p, sm);
        let h2 = hamiltonian(s, c, 2e-6, &inputs, &p, sm);
        assert!(h2 > h1);
    }

    #[test]
    fn tabulated_cost_matches_stage_cost() {
        let p = params();
        let grid = Grid::per_slot(21, 4, p.file_size_bits).unwrap();
        let inputs = MeanFieldInputs {
            requests: 0.7,
            full_mass: 0.2,
            own_rate_bps: 1e7,
            alt_rate_bps: 3e6,
        };
        let sm = Smoothing::logistic(50.0);
        let cost = StandardCost {
            params: &p,
            inputs: vec![inputs; grid.horizon_slots],
            smoothing: sm,
        };
        let model = cost.level_cost(1, &grid);
        for j in [0usize, 5, 20] {
            for c in [0.0, 0.3, 1.0] {
                let direct = stage_cost(grid.s_bits(j), c, &inputs, &p, sm);
                assert_relative_eq!(model.cost(j, c), direct, max_relative = 1e-12);
            }
        }
    }

    /// Brute-force check of the closed-form control at one state: argmin of
    /// the Hamiltonian over a 101-point control grid, within one grid step.
    ///
    /// States with interior optima use small request counts: the control
    /// resolves differences of order omega2*eta2*dc^2 ~ 1e-12, so the
    /// c-independent delay base must stay small enough for f64 to resolve
    /// them in the brute force.
    fn check_argmin_state(
        p: &CostParams,
        s: f64,
        q: f64,
        full_mass: f64,
        own: f64,
        alt: f64,
        dv: f64,
    ) {
        let sm = Smoothing::logistic(50.0);
        let inputs = MeanFieldInputs {
            requests: q,
            full_mass,
            own_rate_bps: own,
            alt_rate_bps: alt,
        };
        let closed = optimal_control(dv, p);
        let mut best_c = 0.0;
        let mut best_h = f64::INFINITY;
        for k in 0..=100 {
            let c = k as f64 / 100.0;
            let h = hamiltonian(s, c, dv, &inputs, p, sm);
            if h < best_h {
                best_h = h;
                best_c = c;
            }
        }
        assert!(
            (closed - best_c).abs() <= 0.01 + 1e-12,
            "closed {closed} vs grid {best_c} at dv={dv:.3e}, q={q:.3e}"
        );
    }

    #[test]
    fn closed_form_matches_brute_force_argmin() {
        let p = params();
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for i in 0..100 {
            let s = next() * p.file_size_bits;
            let full_mass = next();
            let own = 1e6 + next() * 1e8;
            let alt = 1e6 + next() * 1e8;
            if i % 2 == 0 {
                // Interior optimum: gradient inside the inversion window.
                let q = next() * 0.05;
                let u = -0.5 + 2.0 * next();
                let dv = -(p.load_weight / p.file_size_bits)
                    * (p.caching_load_linear + u * p.caching_load_quad);
                check_argmin_state(&p, s, q, full_mass, own, alt, dv);
            } else {
                // Saturated optimum: gradient far outside the window.
                let q = next() * 4.0;
                let magnitude = 10f64.powf(1.0 + 3.0 * next());
                let sign = if next() < 0.5 { -1.0 } else { 1.0 };
                let dv = sign
                    * magnitude
                    * (p.load_weight / p.file_size_bits)
                    * (p.caching_load_linear + p.caching_load_quad);
                check_argmin_state(&p, s, q, full_mass, own, alt, dv);
            }
        }
    }
}
