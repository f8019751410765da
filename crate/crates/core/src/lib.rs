//! Dynamic edge caching for dense fog access networks.
//!
//! The crate has three layers:
//!
//! - a cost model for request service delay and fronthaul traffic load over
//!   continuous per-file cache states ([`cost`], [`radio`], [`params`]);
//! - a per-file solver that couples a backward value equation with a forward
//!   population-density transport and iterates them to a fixed point,
//!   yielding a feedback caching rate on a (time, cache-state) grid
//!   ([`solver`]);
//! - a slot-based fleet simulator that scores that policy against classical
//!   whole-file baselines under seeded request streams ([`sim`], [`policy`],
//!   [`bench`]).
//!
//! The `mfcache` binary drives experiments from TOML configs; see the README
//! for the CLI surface and output schemas.

pub mod bench;
pub mod config;
pub mod cost;
pub mod error;
pub mod params;
pub mod policy;
pub mod popularity;
pub mod radio;
pub mod request;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use params::CostParams;
