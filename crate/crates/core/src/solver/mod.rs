//! Per-file coupled backward/forward solves and the capacity rule.

pub mod fpk;
pub mod grid;
pub mod hjb;
pub mod mfg;

pub use fpk::{mean_field_averages, solve_fpk_forward};
pub use grid::{check_density_row, spike_density, sup_distance, uniform_density, Field, Grid};
pub use hjb::{hamiltonian, optimal_control, solve_hjb_backward, MeanFieldInputs, RunningCost, StandardCost};
pub use mfg::{capacity_keys, enforce_capacity, solve_mfg, CapacityRule, MfgSolution, SolverConfig};
