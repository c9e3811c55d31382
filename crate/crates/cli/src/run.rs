//! Experiment orchestration: cells are built from the configuration, run on
//! a worker pool and turned into result rows.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use mpsmagic::dmrg::{dmrg_from_state, dmrg_ground_state};
use mpsmagic::markov::{estimate_mutual_info2_run, estimate_w_run, ChainRun};
use mpsmagic::pauli::dense::brute_force_sre;
use mpsmagic::pauli_mps::DEFAULT_EXACT_ENV_CAP;
use mpsmagic::stats::DEFAULT_WINDOW_C;
use mpsmagic::{
    autocorr_function, build_mpo, estimate_long_range_magic, estimate_sre_markov, estimate_sre_seeded, fit_inverse_chi_squared,
    integrated_autocorr_time, long_range_magic_pauli_mps, sre_replica, ChainTrace, Error, Estimate, FitPoint, MarkovConfig, ModelParams,
    Mps, PauliMps, QuditAlgebra, ReplicaMode,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{CacheKey, StateCache};
use crate::config::{ExperimentConfig, ExperimentKind, ReplicaChoice, SamplerMethod};
use crate::rows::{revision, ResultRow};

/// A cell that could not be completed; the run goes on without it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub cell: String,
    pub error: String,
}

/// A pass/fail comparison between methods (oracle-check runs).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
    pub checks: Vec<Check>,
}

#[derive(Clone, Copy, Debug)]
enum Cell {
    Scan { n: usize, chi: usize, jz: f64, d: f64 },
    Size { n: usize, chi: usize },
    ChiLadder { n: usize },
}

impl Cell {
    fn label(&self) -> String {
        match *self {
            Cell::Scan { n, chi, jz, d } => format!("N={n} chi={chi} jz={jz} d={d}"),
            Cell::Size { n, chi } => format!("N={n} chi={chi}"),
            Cell::ChiLadder { n } => format!("N={n} chi ladder"),
        }
    }

    fn n(&self) -> usize {
        match *self {
            Cell::Scan { n, .. } | Cell::Size { n, .. } | Cell::ChiLadder { n } => n,
        }
    }
}

/// Deterministic per-cell seed, independent of scheduling.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

#[derive(Default)]
struct CellOutput {
    rows: Vec<ResultRow>,
    checks: Vec<Check>,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    cache: StateCache,
    revision: String,
    alg: QuditAlgebra,
}

struct RowSpec<'a> {
    params: &'a str,
    n: usize,
    chi: Option<usize>,
    method: &'a str,
}

impl<'a> Runner<'a> {
    fn row(&self, at: &RowSpec<'_>, observable: &str, value: f64, start: Instant) -> ResultRow {
        ResultRow {
            experiment_id: self.cfg.id.clone(),
            params: at.params.to_string(),
            n: at.n,
            chi: at.chi,
            method: at.method.to_string(),
            observable: observable.to_string(),
            value,
            std_error: None,
            tau: None,
            n_samples: None,
            wall_time: start.elapsed().as_secs_f64(),
            seed: None,
            revision: self.revision.clone(),
        }
    }

    /// A row for a stochastic estimate, optionally divided by `scale`.
    fn estimate_row(&self, at: &RowSpec<'_>, observable: &str, e: &Estimate, scale: f64, seed: u64, start: Instant) -> ResultRow {
        ResultRow {
            std_error: Some(e.std_error / scale),
            tau: e.tau,
            n_samples: Some(e.n_samples),
            seed: Some(seed),
            ..self.row(at, observable, e.mean / scale, start)
        }
    }

    fn ground_state(&self, n: usize, jz: f64, d: f64, chi: usize, warm: Option<&Mps>) -> Result<Mps> {
        let key = CacheKey { jz, d, n_sites: n, chi, seed: self.cfg.sampler.seed, n_sweeps: self.cfg.dmrg.n_sweeps, warm: warm.is_some() };
        if let Some(s) = self.cache.get(&key) {
            log::info!("cache hit {}", key.file_name());
            return Ok(s);
        }
        let mpo = build_mpo::<f64>(&ModelParams::new(n, jz, d)?)?;
        let settings = mpsmagic::DmrgSettings { chi_max: chi, ..self.cfg.dmrg.clone() };
        let r = match warm {
            Some(init) => dmrg_from_state(&mpo, &settings, init)?,
            None => dmrg_ground_state(&mpo, &settings, self.cfg.sampler.seed)?,
        };
        if !r.converged {
            log::warn!("DMRG N={n} chi={chi} jz={jz} d={d} did not converge in {} sweeps", settings.n_sweeps);
        }
        self.cache.put(&key, &r.state)?;
        Ok(r.state)
    }

    fn markov_config(&self, seed: u64) -> MarkovConfig {
        let s = &self.cfg.sampler;
        MarkovConfig {
            move_mix: s.move_mix,
            scramble_mix: s.scramble_mix,
            burn_in: s.burn_in,
            thinning: s.thinning,
            n_samples: s.n_samples,
            seed,
            ..MarkovConfig::default()
        }
    }

    fn replica_mode(&self, chi: usize) -> ReplicaMode {
        match self.cfg.replica_mode {
            ReplicaChoice::Exact => ReplicaMode::Exact,
            ReplicaChoice::Compressed => ReplicaMode::Compressed { chi_p: self.cfg.chi_p_factor * chi },
        }
    }

    /// Whether the exact replica contraction fits the environment cap for
    /// a state of bond dimension `chi` (Pauli bond `chi^2`, `2n` replicas).
    fn exact_feasible(chi: usize, n: usize) -> bool {
        (chi * chi).checked_pow(2 * n as u32).is_some_and(|v| v <= DEFAULT_EXACT_ENV_CAP)
    }

    fn pauli_mps(&self, psi: &Mps, mode: ReplicaMode) -> Result<PauliMps<f64>> {
        Ok(match mode {
            ReplicaMode::Exact => PauliMps::from_state(&self.alg, psi)?,
            ReplicaMode::Compressed { chi_p } => PauliMps::from_state_truncated(&self.alg, psi, chi_p)?,
        })
    }

    fn dump_trace(&self, name: &str, run: &ChainRun) -> Result<()> {
        if !self.cfg.sampler.dump_samples {
            return Ok(());
        }
        let dir = self.cfg.out_dir.join("samples");
        std::fs::create_dir_all(&dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{}_{name}.csv", self.cfg.id)))?;
        w.write_record(["step", "log_abs", "observable"])?;
        for (i, (l, o)) in run.log_abs.iter().zip(&run.observable).enumerate() {
            w.write_record([i.to_string(), l.to_string(), o.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn run_cell(&self, cell: Cell, idx: usize) -> Result<CellOutput> {
        let cfg = self.cfg;
        let (jz0, d0) = (cfg.model.jz, cfg.model.d);
        let base_params = cfg.params_label(jz0, d0);
        let seed_of = |n: usize, chi: usize, tag: u64| derive_seed(cfg.sampler.seed, &[idx as u64, n as u64, chi as u64, tag]);
        let mut out = CellOutput::default();
        match (cfg.kind, cell) {
            (ExperimentKind::PhaseScan, Cell::Scan { n, chi, jz, d }) => {
                let start = Instant::now();
                let psi = self.ground_state(n, jz, d, chi, None)?;
                let seed = seed_of(n, chi, 0);
                let e = estimate_sre_seeded(&psi, 1.0, cfg.sampler.n_samples, seed, 1)?;
                let params = cfg.params_label(jz, d);
                let at = RowSpec { params: &params, n, chi: Some(chi), method: "perfect" };
                out.rows.push(self.estimate_row(&at, "m1", &e, n as f64, seed, start));
            }
            (ExperimentKind::FullStateSre, Cell::Size { n, chi }) => {
                let start = Instant::now();
                let psi = self.ground_state(n, jz0, d0, chi, None)?;
                let s_half = psi.entanglement_entropy(n / 2)?;
                out.rows.push(self.row(&RowSpec { params: &base_params, n, chi: Some(chi), method: "dmrg" }, "S_half", s_half, start));
                for (k, &order) in cfg.renyi.iter().enumerate() {
                    let start = Instant::now();
                    let obs = format!("m{order}");
                    let seed = seed_of(n, chi, k as u64);
                    match cfg.sampler.method {
                        SamplerMethod::Perfect => {
                            let e = estimate_sre_seeded(&psi, order, cfg.sampler.n_samples, seed, 1)?;
                            let at = RowSpec { params: &base_params, n, chi: Some(chi), method: "perfect" };
                            out.rows.push(self.estimate_row(&at, &obs, &e, n as f64, seed, start));
                        }
                        SamplerMethod::Markov => {
                            let e = estimate_sre_markov(&psi, order, &self.markov_config(seed))?;
                            let at = RowSpec { params: &base_params, n, chi: Some(chi), method: "markov" };
                            out.rows.push(self.estimate_row(&at, &obs, &e, n as f64, seed, start));
                        }
                        SamplerMethod::PauliMps => {
                            let mode = self.replica_mode(chi);
                            let r = sre_replica(&self.pauli_mps(&psi, mode)?, order as usize, mode, false)?;
                            let method = format!("pauli-mps-{}", mode.name());
                            let at = RowSpec { params: &base_params, n, chi: Some(chi), method: &method };
                            out.rows.push(self.row(&at, &obs, r.value / n as f64, start));
                        }
                    }
                }
            }
            (ExperimentKind::SreVsChi, Cell::ChiLadder { n }) => {
                let mut chis = cfg.chis.clone();
                chis.sort_unstable();
                chis.dedup();
                let mut prev: Option<Mps> = None;
                let (mut m1_points, mut m2_points) = (Vec::new(), Vec::new());
                for chi in chis {
                    let start = Instant::now();
                    let psi = self.ground_state(n, jz0, d0, chi, prev.as_ref())?;
                    let at = RowSpec { params: &base_params, n, chi: Some(chi), method: "dmrg" };
                    out.rows.push(self.row(&at, "S_half", psi.entanglement_entropy(n / 2)?, start));
                    let start = Instant::now();
                    let seed = seed_of(n, chi, 1);
                    let e = estimate_sre_seeded(&psi, 1.0, cfg.sampler.n_samples, seed, 1)?;
                    let at = RowSpec { params: &base_params, n, chi: Some(chi), method: "perfect" };
                    out.rows.push(self.estimate_row(&at, "m1", &e, n as f64, seed, start));
                    m1_points.push(FitPoint::with_error(chi as f64, e.mean / n as f64, e.std_error / n as f64));
                    let start = Instant::now();
                    let mode = self.replica_mode(chi);
                    let r = sre_replica(&self.pauli_mps(&psi, mode)?, 2, mode, false)?;
                    let method = format!("pauli-mps-{}", mode.name());
                    let at = RowSpec { params: &base_params, n, chi: Some(chi), method: &method };
                    out.rows.push(self.row(&at, "m2", r.value / n as f64, start));
                    out.rows.push(self.row(&at, "truncation_weight", r.accumulated_truncation_weight, start));
                    m2_points.push(FitPoint::new(chi as f64, r.value / n as f64));
                    prev = Some(psi);
                }
                if m1_points.len() >= 3 {
                    for (obs, points) in [("m1", &m1_points), ("m2", &m2_points)] {
                        let start = Instant::now();
                        let f = fit_inverse_chi_squared(points)?;
                        let at = RowSpec { params: &base_params, n, chi: None, method: "fit" };
                        out.rows.push(ResultRow { std_error: Some(f.m0_err), ..self.row(&at, &format!("{obs}_fit_m0"), f.m0, start) });
                        out.rows.push(ResultRow { std_error: Some(f.c_err), ..self.row(&at, &format!("{obs}_fit_c"), f.c, start) });
                        out.rows.push(self.row(&at, &format!("{obs}_fit_r2"), f.r_squared, start));
                    }
                }
            }
            (ExperimentKind::MutualInfo, Cell::Size { n, chi }) => {
                let psi = self.ground_state(n, jz0, d0, chi, None)?;
                let (a, b) = cfg.partition.blocks(n)?;
                let params = format!("{base_params};partition={:?}", cfg.partition);
                let start = Instant::now();
                let seed = seed_of(n, chi, 2);
                let (e, run) = estimate_mutual_info2_run(&psi, &a, &b, &self.markov_config(seed))?;
                self.dump_trace(&format!("N{n}_chi{chi}_I2"), &run)?;
                let at = RowSpec { params: &params, n, chi: Some(chi), method: "markov" };
                out.rows.push(self.estimate_row(&at, "I2", &e, 1.0, seed, start));
                let start = Instant::now();
                match psi.mutual_info_renyi2_exact(&a, &b) {
                    Ok(v) => out.rows.push(self.row(&RowSpec { method: "swap-oracle", ..at }, "I2", v, start)),
                    Err(Error::ContractionTooLarge(msg)) => log::info!("swap oracle skipped at N={n} chi={chi}: {msg}"),
                    Err(e) => return Err(e.into()),
                }
            }
            (ExperimentKind::LongRangeMagic, Cell::Size { n, chi }) => {
                let psi = self.ground_state(n, jz0, d0, chi, None)?;
                let (a, b) = cfg.partition.blocks(n)?;
                let params = format!("{base_params};partition={:?}", cfg.partition);
                let start = Instant::now();
                let seed = seed_of(n, chi, 3);
                let lr = estimate_long_range_magic(&psi, &a, &b, &self.markov_config(seed))?;
                let at = RowSpec { params: &params, n, chi: Some(chi), method: "markov" };
                for (obs, e) in [("L", &lr.long_range), ("I2", &lr.mutual_info), ("W", &lr.w)] {
                    out.rows.push(self.estimate_row(&at, obs, e, 1.0, seed, start));
                }
                let mode = self.replica_mode(chi);
                if mode != ReplicaMode::Exact || Self::exact_feasible(psi.max_bond(), 2) {
                    let start = Instant::now();
                    let r = long_range_magic_pauli_mps(&self.alg, &psi, &a, &b, mode)?;
                    let method = format!("pauli-mps-{}", mode.name());
                    let at = RowSpec { method: &method, ..at };
                    out.rows.push(self.row(&at, "L", r.long_range, start));
                    out.rows.push(self.row(&at, "truncation_weight", r.accumulated_truncation_weight, start));
                }
            }
            (ExperimentKind::Autocorr, Cell::Size { n, chi }) => {
                let psi = self.ground_state(n, jz0, d0, chi, None)?;
                let (a, b) = cfg.partition.blocks(n)?;
                let params = format!("{base_params};partition={:?}", cfg.partition);
                for (tag, obs) in [(4u64, "I2"), (5, "W")] {
                    let start = Instant::now();
                    let seed = seed_of(n, chi, tag);
                    let mc = self.markov_config(seed);
                    let (e, run) = if obs == "I2" { estimate_mutual_info2_run(&psi, &a, &b, &mc)? } else { estimate_w_run(&psi, &a, &b, &mc)? };
                    self.dump_trace(&format!("N{n}_chi{chi}_{obs}"), &run)?;
                    let at = RowSpec { params: &params, n, chi: Some(chi), method: "markov" };
                    out.rows.push(self.estimate_row(&at, obs, &e, 1.0, seed, start));
                    let trace = ChainTrace::new(run.observable.clone(), obs)?;
                    let t = integrated_autocorr_time(&trace, DEFAULT_WINDOW_C)?;
                    // Madras-Sokal variance of the windowed estimator
                    let err = t.tau * (2.0 * (2.0 * t.window as f64 + 1.0) / run.observable.len() as f64).sqrt();
                    out.rows.push(ResultRow {
                        std_error: Some(err),
                        tau: Some(t.tau),
                        n_samples: Some(run.observable.len()),
                        seed: Some(seed),
                        ..self.row(&at, &format!("tau_{obs}"), t.tau, start)
                    });
                    let t_max = (5 * t.window).clamp(1, run.observable.len() - 1);
                    write_autocorr_table(&cfg.out_dir, &format!("{}_N{n}_chi{chi}_{obs}", cfg.id), &autocorr_function(&trace, t_max)?)?;
                }
            }
            (ExperimentKind::OracleCheck, Cell::Size { n, chi }) => {
                let start = Instant::now();
                let seed = seed_of(n, chi, 6);
                let psi = Mps::random(n, 3, chi, seed)?.normalized()?;
                let v = psi.to_dense(1 << 20)?;
                let params = format!("random;seed={seed}");
                let at = RowSpec { params: &params, n, chi: Some(chi), method: "brute-force" };
                for &order in &cfg.renyi {
                    out.rows.push(self.row(&at, &format!("M{order}"), brute_force_sre(&self.alg, &v, order)?, start));
                }
                let brute1 = brute_force_sre(&self.alg, &v, 1.0)?;
                let brute2 = brute_force_sre(&self.alg, &v, 2.0)?;
                let start = Instant::now();
                let replica = sre_replica(&PauliMps::from_state(&self.alg, &psi)?, 2, ReplicaMode::Exact, false)?.value;
                out.rows.push(self.row(&RowSpec { method: "pauli-mps-exact", ..at }, "M2", replica, start));
                let start = Instant::now();
                let perfect = estimate_sre_seeded(&psi, 1.0, cfg.sampler.n_samples, seed, 1)?;
                out.rows.push(self.estimate_row(&RowSpec { method: "perfect", ..at }, "M1", &perfect, 1.0, seed, start));
                let start = Instant::now();
                let markov = estimate_sre_markov(&psi, 2.0, &self.markov_config(seed))?;
                out.rows.push(self.estimate_row(&RowSpec { method: "markov", ..at }, "M2", &markov, 1.0, seed, start));
                let label = cell.label();
                let diff = (replica - brute2).abs();
                out.checks.push(Check { name: format!("{label}: replica M2 vs brute force"), pass: diff < 1e-9, detail: format!("|diff| = {diff:.2e} (< 1e-9)") });
                for (method, e, exact) in [("perfect M1", perfect, brute1), ("markov M2", markov, brute2)] {
                    let z = e.z_score(exact);
                    out.checks.push(Check { name: format!("{label}: {method} vs brute force"), pass: z <= 3.0, detail: format!("z = {z:.2} (<= 3)") });
                }
            }
            (kind, cell) => unreachable!("cell {cell:?} is never built for {}", kind.name()),
        }
        Ok(out)
    }
}

fn write_autocorr_table(out_dir: &Path, name: &str, rho: &[f64]) -> Result<()> {
    let dir = out_dir.join("autocorr");
    std::fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
    w.write_record(["t", "rho"])?;
    for (t, r) in rho.iter().enumerate() {
        w.write_record([t.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    match cfg.kind {
        ExperimentKind::PhaseScan => {
            let g = cfg.grid.expect("validated phase-scan config has a grid");
            for &n in &cfg.sizes {
                for &chi in &cfg.chis {
                    for jz in g.jz.values() {
                        for d in g.d.values() {
                            out.push(Cell::Scan { n, chi, jz, d });
                        }
                    }
                }
            }
        }
        ExperimentKind::SreVsChi => out.extend(cfg.sizes.iter().map(|&n| Cell::ChiLadder { n })),
        _ => {
            for &n in &cfg.sizes {
                for &chi in &cfg.chis {
                    out.push(Cell::Size { n, chi });
                }
            }
        }
    }
    out
}

/// Runs every cell of the experiment on `threads` workers. Cell failures are
/// recorded as NaN rows plus an entry in `failures`; the other cells still run.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let runner = Runner { cfg, cache: StateCache::new(&cfg.cache_dir), revision: revision(), alg: QuditAlgebra::qutrit() };
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
    let list = cells(cfg);
    let results: Vec<(Cell, Result<CellOutput>)> =
        pool.install(|| list.par_iter().enumerate().map(|(i, &c)| (c, runner.run_cell(c, i))).collect());
    let mut out = RunOutput::default();
    for (cell, res) in results {
        match res {
            Ok(o) => {
                out.rows.extend(o.rows);
                out.checks.extend(o.checks);
            }
            Err(e) => {
                let error = format!("{e:#}");
                log::error!("{}: {error}", cell.label());
                let (params, chi) = match cell {
                    Cell::Scan { jz, d, chi, .. } => (cfg.params_label(jz, d), Some(chi)),
                    Cell::Size { chi, .. } => (cfg.params_label(cfg.model.jz, cfg.model.d), Some(chi)),
                    Cell::ChiLadder { .. } => (cfg.params_label(cfg.model.jz, cfg.model.d), None),
                };
                let at = RowSpec { params: &params, n: cell.n(), chi, method: "failed" };
                out.rows.push(runner.row(&at, "error", f64::NAN, Instant::now()));
                out.failures.push(Failure { cell: cell.label(), error });
            }
        }
    }
    Ok(out)
}
