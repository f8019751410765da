//! Experiment configuration: a TOML tree with an `include` key that pulls in
//! a defaults file, field-level validation diagnostics, a canonical content
//! hash, and the seed-splitting rule used by every stochastic component.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::CostParams;
use crate::policy::PolicyKind;
use crate::solver::CapacityRule;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub radius_m: f64,
    pub ifd_m: f64,
    pub users: usize,
    pub pathloss_exponent: f64,
    pub min_distance_m: f64,
    /// Neighboring access points (alternative delivery candidates) lie
    /// within this multiple of the deployment spacing from a user.
    pub neighbor_radius_ifd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSection {
    pub files: usize,
    pub file_size_bits: f64,
    pub cache_capacity_bits: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopularitySection {
    pub beta: f64,
    pub period_slots: usize,
    pub time_variant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalsSection {
    pub lambda_per_user: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub noise_w: f64,
    pub fronthaul_rate_bps: f64,
    pub discard_base: f64,
    pub eta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub omega1: f64,
    pub omega2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub ns: usize,
    pub nt: usize,
    pub rho: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub kappa: f64,
    pub full_threshold_eps: f64,
    pub artificial_diffusion: f64,
    pub capacity_rule: CapacityRule,
    pub max_substeps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub slots: usize,
    pub policies: Vec<String>,
    pub master_seed: u64,
    pub seed_count: usize,
    pub record_mean_field: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub ifd_m: Vec<f64>,
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Section {
    pub periods: usize,
    pub ifd_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySection,
    pub catalog: CatalogSection,
    pub popularity: PopularitySection,
    pub arrivals: ArrivalsSection,
    pub cost: CostSection,
    pub solver: SolverSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub fig2: Fig2Section,
}

impl ExperimentConfig {
    /// Load a config file, resolving `include` chains (nearest file wins).
    pub fn load(path: &Path) -> Result<Self> {
        let merged = load_merged_value(path, 0)?;
        let deserializer = merged.clone();
        let config: ExperimentConfig = serde_path_to_error::deserialize(deserializer)
            .map_err(|e| Error::Config {
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.cost_params().validate().map_err(|e| Error::Config {
            field: "cost".into(),
            message: e.to_string(),
        })?;
        if self.catalog.files == 0 {
            return Err(Error::Config {
                field: "catalog.files".into(),
                message: "must be >= 1".into(),
            });
        }
        if !(self.popularity.beta >= 0.0) {
            return Err(Error::Config {
                field: "popularity.beta".into(),
                message: format!("must be >= 0, got {}", self.popularity.beta),
            });
        }
        if self.popularity.period_slots == 0 {
            return Err(Error::Config {
                field: "popularity.period_slots".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.run.slots == 0 {
            return Err(Error::Config {
                field: "run.slots".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.run.seed_count == 0 {
            return Err(Error::Config {
                field: "run.seed_count".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.solver.ns < 3 || self.solver.nt < 2 {
            return Err(Error::Config {
                field: "solver".into(),
                message: format!("ns >= 3 and nt >= 2 required, got ns={} nt={}", self.solver.ns, self.solver.nt),
            });
        }
        if !(self.solver.rho > 0.0 && self.solver.rho <= 1.0) {
            return Err(Error::Config {
                field: "solver.rho".into(),
                message: format!("must lie in (0, 1], got {}", self.solver.rho),
            });
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config {
                field: "solver.tol".into(),
                message: "must be > 0".into(),
            });
        }
        if !(self.topology.radius_m > 0.0) {
            return Err(Error::Config {
                field: "topology.radius_m".into(),
                message: "must be > 0".into(),
            });
        }
        let check_ifd = |field: &str, v: f64| -> Result<()> {
            if !(v > 0.0 && v <= 2.0 * self.topology.radius_m) {
                return Err(Error::Config {
                    field: field.into(),
                    message: format!("ifd {v} outside (0, 2*radius]"),
                });
            }
            Ok(())
        };
        check_ifd("topology.ifd_m", self.topology.ifd_m)?;
        for v in &self.sweep.ifd_m {
            check_ifd("sweep.ifd_m", *v)?;
        }
        check_ifd("fig2.ifd_m", self.fig2.ifd_m)?;
        if self.sweep.ifd_m.is_empty() || self.sweep.betas.is_empty() {
            return Err(Error::Config {
                field: "sweep".into(),
                message: "ifd_m and betas must be non-empty".into(),
            });
        }
        if self.fig2.periods == 0 {
            return Err(Error::Config {
                field: "fig2.periods".into(),
                message: "must be >= 1".into(),
            });
        }
        for name in &self.run.policies {
            name.parse::<PolicyKind>().map_err(|e| Error::Config {
                field: "run.policies".into(),
                message: e.to_string(),
            })?;
        }
        let unique: BTreeSet<&String> = self.run.policies.iter().collect();
        if unique.len() != self.run.policies.len() {
            return Err(Error::Config {
                field: "run.policies".into(),
                message: "duplicate policy names".into(),
            });
        }
        Ok(())
    }

    pub fn cost_params(&self) -> CostParams {
        CostParams {
            file_size_bits: self.catalog.file_size_bits,
            bandwidth_hz: self.cost.bandwidth_hz,
            tx_power_w: self.cost.tx_power_w,
            noise_w: self.cost.noise_w,
            fronthaul_rate_bps: self.cost.fronthaul_rate_bps,
            discard_base: self.cost.discard_base,
            retrieval_load_coeff: self.cost.eta,
            caching_load_linear: self.cost.eta1,
            caching_load_quad: self.cost.eta2,
            delay_weight: self.cost.omega1,
            load_weight: self.cost.omega2,
            cache_capacity_bits: self.catalog.cache_capacity_bits,
        }
    }

    pub fn policy_kinds(&self) -> Vec<PolicyKind> {
        self.run
            .policies
            .iter()
            .map(|p| p.parse().expect("validated"))
            .collect()
    }

    /// Canonical TOML echo of the merged config.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Content hash identifying the effective config (first 16 hex chars of
    /// the SHA-256 of the canonical echo).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_toml().as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }
}

fn load_merged_value(path: &Path, depth: usize) -> Result<toml::Value> {
    if depth > 8 {
        return Err(Error::Config {
            field: "include".into(),
            message: "include chain deeper than 8 levels".into(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        field: "include".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let table: toml::Table = text.parse().map_err(|e| Error::Config {
        field: path.display().to_string(),
        message: format!("toml parse error: {e}"),
    })?;
    let mut value = toml::Value::Table(table);

    let include = value
        .as_table()
        .and_then(|t| t.get("include"))
        .and_then(|v| v.as_str())
        .map(PathBuf::from);
    if let Some(table) = value.as_table_mut() {
        table.remove("include");
    }

    if let Some(rel) = include {
        let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
        let include_path = base_dir.join(rel);
        let mut base = load_merged_value(&include_path, depth + 1)?;
        merge_value(&mut base, value);
        Ok(base)
    } else {
        Ok(value)
    }
}

/// Overlay `over` on `base`: tables merge recursively, everything else
/// replaces.
fn merge_value(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(base_table), toml::Value::Table(over_table)) => {
            for (key, over_val) in over_table {
                match base_table.get_mut(&key) {
                    Some(base_val) => merge_value(base_val, over_val),
                    None => {
                        base_table.insert(key, over_val);
                    }
                }
            }
        }
        (slot, over) => *slot = over,
    }
}

/// Derive a named child seed from a master seed. Every stochastic component
/// draws from its own `(label, index)` stream:
/// `seed = first 8 bytes of SHA-256(master_le || label || index_le)`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest >= 8 bytes"))
}
