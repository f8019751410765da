//! Experiment driver: builds worlds from a config, runs the solver and the
//! fleet simulation, sweeps parameters in parallel, and writes the result
//! files. CSV bodies are deterministic for a fixed config and master seed;
//! wall-clock information goes to a separate metadata file.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{derive_seed, ExperimentConfig};
use crate::error::{Error, Result};
use crate::params::CostParams;
use crate::policy::{CachingPolicy, LruPolicy, MfgPolicy, MpcPolicy, PolicyKind, RcPolicy};
use crate::popularity::{PopularitySchedule, ZipfPopularity};
use crate::radio::{build_topology, mean_field_rates, rate_matrix, MeanFieldRates, Topology};
use crate::request::{generate_requests_at, RequestBatch};
use crate::sim::{RunOutput, Simulation};
use crate::solver::{solve_mfg, spike_density, Grid, MfgSolution, SolverConfig};

/// Everything a run needs besides the policy: geometry, rates, popularity
/// schedule and scalar parameters.
pub struct World {
    pub topology: Topology,
    pub rates: Vec<Vec<f64>>,
    pub neighbors: Vec<Vec<usize>>,
    pub mf_rates: MeanFieldRates,
    pub schedule: PopularitySchedule,
    pub base_popularity: ZipfPopularity,
    pub params: CostParams,
    pub slots: usize,
    pub run_seed: u64,
    pub lambda_per_user: f64,
}

impl World {
    /// Expected per-access-point requests per file and slot, the profile the
    /// solver sees: `(K / I) * min(1, lambda) * p_file(slot)`.
    pub fn q_profile(&self) -> Vec<Vec<f64>> {
        let per_fap = self.topology.user_count() as f64 / self.topology.fap_count() as f64;
        let lambda = self.lambda().min(1.0);
        (0..self.base_popularity.file_count())
            .map(|n| {
                (0..self.slots)
                    .map(|slot| per_fap * lambda * self.schedule.at_slot(slot).probabilities[n])
                    .collect()
            })
            .collect()
    }

    fn lambda(&self) -> f64 {
        self.lambda_per_user
    }

    pub fn request_batches(&self) -> Vec<RequestBatch> {
        (0..self.slots)
            .map(|slot| {
                generate_requests_at(
                    self.schedule.at_slot(slot),
                    self.topology.user_count(),
                    self.lambda_per_user,
                    derive_seed(self.run_seed, "requests", slot as u64),
                    slot,
                )
            })
            .collect()
    }
}

/// Build the world for one run. Users are placed from the run's `users`
/// stream; time-variant schedules permute the popularity from the
/// `permute` stream, one seed per period (the first period is permuted too,
/// so a static snapshot never matches by construction).
pub fn build_world(
    config: &ExperimentConfig,
    ifd_m: f64,
    beta: f64,
    slots: usize,
    run_seed: u64,
) -> Result<World> {
    let params = config.cost_params();
    let topology = build_topology(
        config.topology.radius_m,
        ifd_m,
        config.topology.users,
        derive_seed(run_seed, "users", 0),
    )?;
    let gains = topology.gain_matrix(
        config.topology.pathloss_exponent,
        config.topology.min_distance_m,
    );
    let rates = rate_matrix(&gains, &params);
    let neighbors = topology.neighbor_lists(config.topology.neighbor_radius_ifd * ifd_m);
    let mf_rates = mean_field_rates(&topology, &rates, &neighbors);

    let base_popularity = ZipfPopularity::new(config.catalog.files, beta)?;
    let schedule = if config.popularity.time_variant {
        let periods = slots.div_ceil(config.popularity.period_slots);
        let seeds: Vec<u64> = (0..periods)
            .map(|j| derive_seed(run_seed, "permute", j as u64))
            .collect();
        PopularitySchedule::time_variant(&base_popularity, config.popularity.period_slots, &seeds)
    } else {
        PopularitySchedule::static_schedule(base_popularity.clone(), slots)
    };

    Ok(World {
        topology,
        rates,
        neighbors,
        mf_rates,
        schedule,
        base_popularity,
        params,
        slots,
        run_seed,
        lambda_per_user: config.arrivals.lambda_per_user,
    })
}

/// Solve the feedback policy for a world.
pub fn solve_world(
    config: &ExperimentConfig,
    world: &World,
    grid: &Grid,
) -> Result<MfgSolution> {
    let solver_config = SolverConfig {
        max_iters: config.solver.max_iters,
        tol: config.solver.tol,
        rho: config.solver.rho,
        eps_diffusion: config.solver.artificial_diffusion,
        kappa: config.solver.kappa,
        full_threshold_eps: config.solver.full_threshold_eps,
        max_substeps: config.solver.max_substeps,
        q_profile: world.q_profile(),
    };
    let m0: Vec<Vec<f64>> = (0..config.catalog.files)
        .map(|_| spike_density(grid, 0.0))
        .collect();
    solve_mfg(grid, &solver_config, &world.params, world.mf_rates, &m0)
}

fn make_policies(
    kind: PolicyKind,
    config: &ExperimentConfig,
    world: &World,
    solution: Option<&Arc<MfgSolution>>,
    capacity_bits: f64,
) -> Result<Vec<Box<dyn CachingPolicy>>> {
    let faps = world.topology.fap_count();
    let policies: Vec<Box<dyn CachingPolicy>> = match kind {
        PolicyKind::Mfg => {
            let solution = solution
                .ok_or_else(|| Error::InvalidParam("mfg policy requires a solved field".into()))?;
            (0..faps)
                .map(|_| {
                    Box::new(MfgPolicy::new(
                        Arc::clone(solution),
                        config.solver.capacity_rule,
                        capacity_bits,
                    )) as Box<dyn CachingPolicy>
                })
                .collect()
        }
        PolicyKind::Mpc => (0..faps)
            .map(|_| {
                Box::new(MpcPolicy::new(&world.base_popularity, &world.params))
                    as Box<dyn CachingPolicy>
            })
            .collect(),
        PolicyKind::Rc => (0..faps)
            .map(|i| {
                Box::new(RcPolicy::new(
                    config.catalog.files,
                    &world.params,
                    derive_seed(world.run_seed, "rc", i as u64),
                )) as Box<dyn CachingPolicy>
            })
            .collect(),
        PolicyKind::Lru => (0..faps)
            .map(|_| Box::new(LruPolicy::new(&world.params)) as Box<dyn CachingPolicy>)
            .collect(),
    };
    Ok(policies)
}

/// One full policy run over a prepared world: deterministic given the
/// config and the world's run seed.
pub fn run_policy(
    config: &ExperimentConfig,
    world: &World,
    kind: PolicyKind,
    solution: Option<&Arc<MfgSolution>>,
    batches: &[RequestBatch],
    record_grid: Option<&Grid>,
) -> Result<RunOutput> {
    let policies = make_policies(kind, config, world, solution, world.params.cache_capacity_bits)?;
    let mut sim = Simulation::new(
        &world.topology,
        &world.rates,
        &world.neighbors,
        &world.params,
        config.catalog.files,
        policies,
    )?;
    sim.run(batches, record_grid, kind.name())
        .map_err(|e| e.with_run(format!("policy={} seed={}", kind.name(), world.run_seed)))
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), body)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Grid fields as `file,t_index,s_index,value` rows.
fn grid_csv(fields: &[crate::solver::Field], hash: &str) -> String {
    let mut out = String::from("file,t_index,s_index,value,config_hash\n");
    for (n, field) in fields.iter().enumerate() {
        for t in 0..field.nt {
            for j in 0..field.ns {
                out.push_str(&format!("{n},{t},{j},{},{hash}\n", fmt(field.get(t, j))));
            }
        }
    }
    out
}

fn residuals_csv(solution: &MfgSolution, hash: &str) -> String {
    let mut out = String::from("file,iteration,residual,config_hash\n");
    for (n, history) in solution.residuals.iter().enumerate() {
        for (k, r) in history.iter().enumerate() {
            out.push_str(&format!("{n},{k},{},{hash}\n", fmt(*r)));
        }
    }
    out
}

fn metrics_csv(runs: &[(String, RunOutput)], hash: &str) -> String {
    let mut out = String::from("slot,policy,delay,load,cost,case1,case2,case3,config_hash\n");
    for (policy, run) in runs {
        for m in &run.per_slot {
            out.push_str(&format!(
                "{},{policy},{},{},{},{},{},{},{hash}\n",
                m.slot,
                fmt(m.delay_s),
                fmt(m.load),
                fmt(m.total_cost),
                m.served_own,
                m.served_alt,
                m.served_retrieval
            ));
        }
    }
    out
}

fn meanfield_csv(runs: &[(String, RunOutput)], hash: &str) -> String {
    let mut out = String::from("slot,policy,file,bin,mass,config_hash\n");
    for (policy, run) in runs {
        let Some(frames) = &run.mean_field else { continue };
        for (slot, frame) in frames.iter().enumerate() {
            for (file, histogram) in frame.iter().enumerate() {
                for (bin, mass) in histogram.iter().enumerate() {
                    if *mass > 0.0 {
                        out.push_str(&format!(
                            "{slot},{policy},{file},{bin},{},{hash}\n",
                            fmt(*mass)
                        ));
                    }
                }
            }
        }
    }
    out
}

fn metadata_json(command: &str, elapsed: std::time::Duration) -> String {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    serde_json::to_string_pretty(&json!({
        "command": command,
        "finished_unix_s": now,
        "elapsed_s": elapsed.as_secs_f64(),
    }))
    .expect("metadata serializes")
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: Vec<usize>,
    pub final_residuals: Vec<f64>,
}

impl SolveReport {
    fn from_solution(solution: &MfgSolution) -> Self {
        SolveReport {
            converged: solution.all_converged(),
            iterations: solution.iterations.clone(),
            final_residuals: solution
                .residuals
                .iter()
                .map(|h| h.last().copied().unwrap_or(0.0))
                .collect(),
        }
    }
}

/// `solve`: write the value, policy and density grids, the residual
/// histories, and a summary. Returns whether every file converged.
pub fn cmd_solve(config: &ExperimentConfig, out_dir: &Path) -> Result<bool> {
    let started = std::time::Instant::now();
    let hash = config.content_hash();
    let run_seed = derive_seed(config.run.master_seed, "run", 0);
    let world = build_world(config, config.topology.ifd_m, config.popularity.beta, config.run.slots, run_seed)?;
    let grid = Grid::new(
        config.solver.ns,
        config.solver.nt,
        config.run.slots,
        world.params.file_size_bits,
    )?;
    let solution = solve_world(config, &world, &grid)?;

    write_file(out_dir, "value_function.csv", &grid_csv(&solution.value, &hash))?;
    write_file(out_dir, "policy.csv", &grid_csv(&solution.policy, &hash))?;
    write_file(out_dir, "density.csv", &grid_csv(&solution.density, &hash))?;
    write_file(out_dir, "residuals.csv", &residuals_csv(&solution, &hash))?;

    let report = SolveReport::from_solution(&solution);
    let summary = serde_json::to_string_pretty(&json!({
        "config_hash": hash,
        "config": serde_json::to_value(config)?,
        "solver": report,
    }))?;
    write_file(out_dir, "summary.json", &summary)?;
    write_file(out_dir, "metadata.json", &metadata_json("solve", started.elapsed()))?;
    Ok(solution.all_converged())
}

/// `simulate`: one seed, every configured policy, shared request streams.
pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<bool> {
    let started = std::time::Instant::now();
    let hash = config.content_hash();
    let run_seed = derive_seed(config.run.master_seed, "run", 0);
    let world = build_world(config, config.topology.ifd_m, config.popularity.beta, config.run.slots, run_seed)?;
    let grid = Grid::per_slot(config.solver.ns, config.run.slots, world.params.file_size_bits)?;

    let kinds = config.policy_kinds();
    let needs_mfg = kinds.contains(&PolicyKind::Mfg);
    let solution = if needs_mfg {
        Some(Arc::new(solve_world(config, &world, &grid)?))
    } else {
        None
    };

    let batches = world.request_batches();
    let record = config.run.record_mean_field.then_some(&grid);
    let mut runs = Vec::new();
    for kind in kinds {
        let out = run_policy(config, &world, kind, solution.as_ref(), &batches, record)?;
        runs.push((kind.name().to_string(), out));
    }

    write_file(out_dir, "metrics.csv", &metrics_csv(&runs, &hash))?;
    if config.run.record_mean_field {
        write_file(out_dir, "meanfield.csv", &meanfield_csv(&runs, &hash))?;
    }
    if let Some(solution) = &solution {
        write_file(out_dir, "residuals.csv", &residuals_csv(solution, &hash))?;
    }

    let summaries: Vec<_> = runs.iter().map(|(_, r)| r.summary.clone()).collect();
    let summary = serde_json::to_string_pretty(&json!({
        "config_hash": hash,
        "config": serde_json::to_value(config)?,
        "runs": summaries,
        "solver": solution.as_ref().map(|s| SolveReport::from_solution(s)),
    }))?;
    write_file(out_dir, "summary.json", &summary)?;
    write_file(out_dir, "metadata.json", &metadata_json("simulate", started.elapsed()))?;
    Ok(solution.map_or(true, |s| s.all_converged()))
}

/// One sweep sample.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub policy: String,
    pub ifd_m: f64,
    /// Seed index, or "median" for the aggregate row.
    pub seed: String,
    pub avg_delay_s: f64,
    pub avg_load_per_fap_slot: f64,
    pub avg_cost_per_slot: f64,
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Aggregated statistics of a sweep, used by the summary and the
/// acceptance checks.
#[derive(Debug, Clone, Serialize)]
pub struct SweepStats {
    /// Median curves keyed by `(beta, policy)` in sweep order of ifd.
    pub medians: Vec<SweepRow>,
    /// Mean relative total-cost advantage of the feedback policy over the
    /// static popularity baseline, per beta.
    pub mfg_advantage_by_beta: Vec<(f64, f64)>,
}

pub fn cmd_fig1(config: &ExperimentConfig, out_dir: &Path) -> Result<SweepStats> {
    let started = std::time::Instant::now();
    let hash = config.content_hash();
    let kinds = config.policy_kinds();
    if !kinds.contains(&PolicyKind::Mfg) || !kinds.contains(&PolicyKind::Mpc) {
        return Err(Error::InvalidParam(
            "the sweep needs at least the mfg and mpc policies".into(),
        ));
    }

    let seeds: Vec<u64> = (0..config.run.seed_count)
        .map(|i| derive_seed(config.run.master_seed, "run", i as u64))
        .collect();

    // Independent jobs: (beta, ifd, seed) worlds; policies share the world
    // and the request stream.
    let mut jobs = Vec::new();
    for &beta in &config.sweep.betas {
        for &ifd in &config.sweep.ifd_m {
            for (seed_idx, &seed) in seeds.iter().enumerate() {
                jobs.push((beta, ifd, seed_idx, seed));
            }
        }
    }

    let rows: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(beta, ifd, seed_idx, seed)| -> Result<Vec<SweepRow>> {
            let world = build_world(config, ifd, beta, config.run.slots, seed)?;
            let grid =
                Grid::per_slot(config.solver.ns, config.run.slots, world.params.file_size_bits)?;
            let solution = Arc::new(solve_world(config, &world, &grid)?);
            let batches = world.request_batches();
            let mut out = Vec::new();
            for &kind in &kinds {
                let run = run_policy(config, &world, kind, Some(&solution), &batches, None)?;
                out.push(SweepRow {
                    beta,
                    policy: kind.name().to_string(),
                    ifd_m: ifd,
                    seed: seed_idx.to_string(),
                    avg_delay_s: run.summary.delay_per_request_s,
                    avg_load_per_fap_slot: run.summary.load_per_fap_slot,
                    avg_cost_per_slot: run.summary.cost_per_slot,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = rows.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.beta
            .partial_cmp(&b.beta)
            .unwrap()
            .then(a.policy.cmp(&b.policy))
            .then(a.ifd_m.partial_cmp(&b.ifd_m).unwrap())
            .then(a.seed.cmp(&b.seed))
    });

    // Seed medians per (beta, policy, ifd).
    let mut medians = Vec::new();
    for &beta in &config.sweep.betas {
        for &kind in &kinds {
            for &ifd in &config.sweep.ifd_m {
                let select = |f: fn(&SweepRow) -> f64| -> f64 {
                    let mut vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| {
                            r.beta == beta && r.ifd_m == ifd && r.policy == kind.name()
                        })
                        .map(f)
                        .collect();
                    median(&mut vals)
                };
                medians.push(SweepRow {
                    beta,
                    policy: kind.name().to_string(),
                    ifd_m: ifd,
                    seed: "median".to_string(),
                    avg_delay_s: select(|r| r.avg_delay_s),
                    avg_load_per_fap_slot: select(|r| r.avg_load_per_fap_slot),
                    avg_cost_per_slot: select(|r| r.avg_cost_per_slot),
                });
            }
        }
    }

    let mut csv = String::from(
        "beta,policy,ifd_m,seed,avg_delay_s,avg_load_per_fap_slot,avg_cost_per_slot,config_hash\n",
    );
    for r in rows.iter().chain(medians.iter()) {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{hash}\n",
            fmt(r.beta),
            r.policy,
            fmt(r.ifd_m),
            r.seed,
            fmt(r.avg_delay_s),
            fmt(r.avg_load_per_fap_slot),
            fmt(r.avg_cost_per_slot)
        ));
    }
    write_file(out_dir, "sweep.csv", &csv)?;

    // Advantage of the feedback policy over the static baseline per beta.
    let mut advantage = Vec::new();
    for &beta in &config.sweep.betas {
        let mut ratios = Vec::new();
        for &ifd in &config.sweep.ifd_m {
            let cost_of = |policy: &str| -> f64 {
                medians
                    .iter()
                    .find(|r| r.beta == beta && r.ifd_m == ifd && r.policy == policy)
                    .map(|r| r.avg_cost_per_slot)
                    .unwrap_or(f64::NAN)
            };
            let mpc = cost_of("mpc");
            let mfg = cost_of("mfg");
            if mpc.is_finite() && mfg.is_finite() && mpc > 0.0 {
                ratios.push((mpc - mfg) / mpc);
            }
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
        advantage.push((beta, mean));
    }

    let stats = SweepStats {
        medians,
        mfg_advantage_by_beta: advantage,
    };
    let summary = serde_json::to_string_pretty(&json!({
        "config_hash": hash,
        "config": serde_json::to_value(config)?,
        "medians": stats.medians,
        "mfg_advantage_by_beta": stats.mfg_advantage_by_beta,
    }))?;
    write_file(out_dir, "summary.json", &summary)?;
    write_file(out_dir, "metadata.json", &metadata_json("fig1", started.elapsed()))?;
    Ok(stats)
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Row {
    /// Period index, or "overall".
    pub period: String,
    pub policy: String,
    /// Seed index, or "median".
    pub seed: String,
    pub avg_cost_per_slot: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Stats {
    pub rows: Vec<Fig2Row>,
    /// Overall median cost per policy.
    pub overall: Vec<(String, f64)>,
    /// Relative reduction of the feedback policy against each baseline.
    pub reductions: Vec<(String, f64)>,
}

pub fn cmd_fig2(config: &ExperimentConfig, out_dir: &Path) -> Result<Fig2Stats> {
    let started = std::time::Instant::now();
    let hash = config.content_hash();
    if config.fig2.periods < 2 {
        return Err(Error::InvalidParam(
            "time-variant comparison needs at least 2 periods".into(),
        ));
    }
    let kinds = config.policy_kinds();
    let slots = config.fig2.periods * config.popularity.period_slots;
    let mut tv_config = config.clone();
    tv_config.popularity.time_variant = true;

    let seeds: Vec<u64> = (0..config.run.seed_count)
        .map(|i| derive_seed(config.run.master_seed, "run", i as u64))
        .collect();

    let per_seed: Vec<Vec<(usize, String, Vec<f64>)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(seed_idx, &seed)| -> Result<Vec<(usize, String, Vec<f64>)>> {
            let world = build_world(&tv_config, config.fig2.ifd_m, config.popularity.beta, slots, seed)?;
            let grid = Grid::per_slot(config.solver.ns, slots, world.params.file_size_bits)?;
            let needs_mfg = kinds.contains(&PolicyKind::Mfg);
            let solution = if needs_mfg {
                Some(Arc::new(solve_world(&tv_config, &world, &grid)?))
            } else {
                None
            };
            let batches = world.request_batches();
            let mut out = Vec::new();
            for &kind in &kinds {
                let run = run_policy(&tv_config, &world, kind, solution.as_ref(), &batches, None)?;
                // Per-period averages of the slot cost.
                let period_costs: Vec<f64> = (0..config.fig2.periods)
                    .map(|p| {
                        let lo = p * config.popularity.period_slots;
                        let hi = lo + config.popularity.period_slots;
                        let span = &run.per_slot[lo..hi];
                        span.iter().map(|m| m.total_cost).sum::<f64>() / span.len() as f64
                    })
                    .collect();
                out.push((seed_idx, kind.name().to_string(), period_costs));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<(usize, String, Vec<f64>)> = per_seed.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for (seed_idx, policy, period_costs) in &samples {
        for (p, cost) in period_costs.iter().enumerate() {
            rows.push(Fig2Row {
                period: p.to_string(),
                policy: policy.clone(),
                seed: seed_idx.to_string(),
                avg_cost_per_slot: *cost,
            });
        }
        let overall = period_costs.iter().sum::<f64>() / period_costs.len() as f64;
        rows.push(Fig2Row {
            period: "overall".to_string(),
            policy: policy.clone(),
            seed: seed_idx.to_string(),
            avg_cost_per_slot: overall,
        });
    }
    rows.sort_by(|a, b| {
        a.policy
            .cmp(&b.policy)
            .then(a.period.cmp(&b.period))
            .then(a.seed.cmp(&b.seed))
    });

    // Seed medians per (policy, period) and overall medians per policy.
    let mut median_rows = Vec::new();
    let mut overall = Vec::new();
    for &kind in &kinds {
        let mut periods: Vec<String> = (0..config.fig2.periods).map(|p| p.to_string()).collect();
        periods.push("overall".to_string());
        for period in periods {
            let mut vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.policy == kind.name() && r.period == period && r.seed != "median")
                .map(|r| r.avg_cost_per_slot)
                .collect();
            let m = median(&mut vals);
            median_rows.push(Fig2Row {
                period: period.clone(),
                policy: kind.name().to_string(),
                seed: "median".to_string(),
                avg_cost_per_slot: m,
            });
            if period == "overall" {
                overall.push((kind.name().to_string(), m));
            }
        }
    }
    rows.extend(median_rows);

    let mfg_cost = overall
        .iter()
        .find(|(p, _)| p == "mfg")
        .map(|(_, c)| *c)
        .unwrap_or(f64::NAN);
    let reductions: Vec<(String, f64)> = overall
        .iter()
        .filter(|(p, _)| p != "mfg")
        .map(|(p, c)| (p.clone(), 1.0 - mfg_cost / c))
        .collect();

    let mut csv = String::from("period,policy,seed,avg_cost_per_slot,config_hash\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{hash}\n",
            r.period,
            r.policy,
            r.seed,
            fmt(r.avg_cost_per_slot)
        ));
    }
    write_file(out_dir, "fig2.csv", &csv)?;

    let stats = Fig2Stats {
        rows,
        overall,
        reductions,
    };
    let summary = serde_json::to_string_pretty(&json!({
        "config_hash": hash,
        "config": serde_json::to_value(&tv_config)?,
        "overall_median_cost_per_slot": stats.overall,
        "mfg_reduction_vs_baseline": stats.reductions,
        "reference_reductions_pct": {"mpc": 33.0, "lru": 25.0},
    }))?;
    write_file(out_dir, "summary.json", &summary)?;
    write_file(out_dir, "metadata.json", &metadata_json("fig2", started.elapsed()))?;
    Ok(stats)
}
