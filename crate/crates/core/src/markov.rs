//! Metropolis chains over Pauli strings on a subsystem support.
//!
//! The chain samples `Pi_P ∝ |Tr(rho P)|^k` where `k` is the weight
//! exponent (`2n`). Proposals multiply the current string by `Z_i` or
//! `Z_i^+` (equal probability), by `X_i^+ X_j` for an ordered pair of
//! support sites, or, when `scramble_mix > 0`, by uniformly random
//! single-site operators on a random pair of support sites. The first two
//! kinds conserve `sum_i a'_i mod d` and suffice for states with a U(1)
//! symmetry and a dense Pauli spectrum; scramble moves make the chain
//! ergodic for any state, including stabilizer-like states whose nonzero
//! strings are isolated. Every kernel is symmetric, so Metropolis
//! acceptance `min(1, w'/w)` gives detailed balance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::mps::{transfer_left, Environments, MatrixProductState};
use crate::partition::Partition;
use crate::pauli::{PauliString, QuditAlgebra};
use crate::sampling::Estimate;
use crate::scalar::{cabs, czero, to_f64, Real};
use crate::stats::{integrated_autocorr_time, jackknife, log_mean_exp, ChainTrace, DEFAULT_WINDOW_C};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkovConfig {
    /// Exponent `k` of `Pi_P ∝ |Tr(rho P)|^k`.
    pub weight_exponent: f64,
    /// Probability of a single-site `Z` / `Z^+` move.
    pub move_mix: f64,
    /// Probability of a scramble move; the remainder goes to two-site
    /// `X_i^+ X_j` moves.
    pub scramble_mix: f64,
    /// Steps discarded before recording; `None` means `10 N`.
    pub burn_in: Option<usize>,
    /// Steps between recorded samples; `None` means `N`.
    pub thinning: Option<usize>,
    pub n_samples: usize,
    pub seed: u64,
    /// Steps between from-scratch recomputations of the cached weight.
    pub recompute_every: usize,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            weight_exponent: 4.0,
            move_mix: 0.5,
            scramble_mix: 0.0,
            burn_in: None,
            thinning: None,
            n_samples: 10_000,
            seed: 0,
            recompute_every: 1000,
        }
    }
}

impl MarkovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.move_mix) || !(0.0..=1.0).contains(&self.scramble_mix) {
            return Err(Error::InvalidArgument("move probabilities must lie in [0, 1]".into()));
        }
        if self.move_mix + self.scramble_mix > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument("move_mix + scramble_mix must not exceed 1".into()));
        }
        if !(self.weight_exponent > 0.0) {
            return Err(Error::InvalidArgument("weight exponent must be positive".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::TraceTooShort(self.n_samples));
        }
        if self.recompute_every == 0 {
            return Err(Error::InvalidArgument("recompute_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn burn_in_for(&self, n_sites: usize) -> usize {
        self.burn_in.unwrap_or(10 * n_sites)
    }

    pub fn thinning_for(&self, n_sites: usize) -> usize {
        self.thinning.unwrap_or(n_sites).max(1)
    }
}

/// A proposed multiplication: `(support position, da, da')` pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Move {
    pub changes: Vec<(usize, i64, i64)>,
}

/// Symmetric proposal kernel over a support of `len` positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    len: usize,
    d: usize,
    p_z: f64,
    p_scramble: f64,
}

impl Proposal {
    pub fn new(len: usize, d: usize, move_mix: f64, scramble_mix: f64) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidPartition("empty support".into()));
        }
        let (mut p_z, p_scramble) = (move_mix, scramble_mix);
        if len == 1 && p_z + p_scramble < 1.0 {
            log::warn!("single-site support: two-site moves disabled");
            p_z = 1.0 - p_scramble;
        }
        Ok(Self { len, d, p_z, p_scramble })
    }

    fn p_pair(&self) -> f64 {
        (1.0 - self.p_z - self.p_scramble).max(0.0)
    }

    fn pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let i = rng.random_range(0..self.len);
        let mut j = rng.random_range(0..self.len - 1);
        if j >= i {
            j += 1;
        }
        (i, j)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Move {
        let u = rng.random::<f64>();
        if u < self.p_z {
            let sign = if rng.random::<bool>() { 1 } else { -1 };
            Move { changes: vec![(rng.random_range(0..self.len), sign, 0)] }
        } else if u < self.p_z + self.p_scramble || self.len == 1 {
            let d = self.d as i64;
            let sites = if self.len == 1 {
                vec![0]
            } else {
                let (i, j) = self.pair(rng);
                vec![i, j]
            };
            Move { changes: sites.into_iter().map(|i| (i, rng.random_range(0..d), rng.random_range(0..d))).collect() }
        } else {
            let (i, j) = self.pair(rng);
            Move { changes: vec![(i, 0, -1), (j, 0, 1)] }
        }
    }

    /// Every string reachable in one move with its probability (moves that
    /// reach the same string are merged).
    pub fn distribution(&self, p: &PauliString) -> Vec<(PauliString, f64)> {
        let n = self.len as f64;
        let d = self.d as i64;
        let mut out: Vec<(PauliString, f64)> = Vec::new();
        let mut push = |q: PauliString, w: f64| {
            if w <= 0.0 {
                return;
            }
            match out.iter_mut().find(|(s, _)| *s == q) {
                Some(e) => e.1 += w,
                None => out.push((q, w)),
            }
        };
        let labels: Vec<(i64, i64)> = (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).collect();
        for i in 0..self.len {
            for sign in [1, -1] {
                push(self.apply(p, &Move { changes: vec![(i, sign, 0)] }), self.p_z / (2.0 * n));
            }
            if self.len == 1 {
                for &(a, b) in &labels {
                    push(self.apply(p, &Move { changes: vec![(i, a, b)] }), self.p_scramble / (d * d) as f64);
                }
            }
            for j in 0..self.len {
                if i != j {
                    push(self.apply(p, &Move { changes: vec![(i, 0, -1), (j, 0, 1)] }), self.p_pair() / (n * (n - 1.0)));
                    for &(a, b) in &labels {
                        for &(c, e) in &labels {
                            let w = self.p_scramble / (n * (n - 1.0)) / (d * d * d * d) as f64;
                            push(self.apply(p, &Move { changes: vec![(i, a, b), (j, c, e)] }), w);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn apply(&self, p: &PauliString, m: &Move) -> PauliString {
        let d = self.d as i64;
        let mut q = p.clone();
        for &(pos, da, dap) in &m.changes {
            let (a, ap) = q.get(pos);
            q.set(pos, (a as i64 + da).rem_euclid(d) as usize, (ap as i64 + dap).rem_euclid(d) as usize, self.d);
        }
        q
    }
}

/// `ln |Tr(rho P)|` evaluator with left caches along the support.
struct SupportOracle<'a, T: Real> {
    state: &'a MatrixProductState<T>,
    env: &'a Environments<T>,
    alg: QuditAlgebra,
    sites: Vec<usize>,
    ops: Vec<Vec<CMatrix<T>>>,
}

impl<'a, T: Real> SupportOracle<'a, T> {
    fn new(state: &'a MatrixProductState<T>, env: &'a Environments<T>, sites: Vec<usize>) -> Result<Self> {
        let alg = QuditAlgebra::new(state.local_dim())?;
        if let Some(&last) = sites.last() {
            if last >= state.n_sites() {
                return Err(Error::IndexOutOfRange { index: last, len: state.n_sites() });
            }
        }
        let d = alg.d();
        let ops = (0..d).map(|a| (0..d).map(|ap| alg.unphased_matrix(a, ap)).collect()).collect();
        Ok(Self { state, env, alg, sites, ops })
    }

    fn op(&self, e: (usize, usize)) -> Option<&CMatrix<T>> {
        if e == (0, 0) {
            None
        } else {
            Some(&self.ops[e.0][e.1])
        }
    }

    /// Recomputes the caches from support position `from` on; returns
    /// `ln |Tr|` and the new cache tail.
    fn evaluate(&self, p: &PauliString, cache: &[(CMatrix<T>, T)], from: usize) -> (f64, Vec<(CMatrix<T>, T)>) {
        let m = self.sites.len();
        let (mut e, mut lg, start) = if from == 0 {
            let (l, lg) = self.env.left(self.sites[0]);
            (l.clone(), lg, self.sites[0])
        } else {
            let (c, lg) = &cache[from - 1];
            (c.clone(), *lg, self.sites[from - 1] + 1)
        };
        let mut tail = Vec::with_capacity(m - from);
        let mut pos = from;
        for j in start..=self.sites[m - 1] {
            let op = if self.sites[pos] == j {
                let o = self.op(p.get(pos));
                pos += 1;
                Some(o)
            } else {
                None
            };
            e = transfer_left(&e, self.state.tensor(j), op.flatten());
            lg += crate::mps::rescale_env(&mut e);
            if op.is_some() {
                tail.push((e.clone(), lg));
            }
        }
        (self.close(&e, lg), tail)
    }

    fn close(&self, e: &CMatrix<T>, lg: T) -> f64 {
        let (r, rlog) = self.env.right(self.sites[self.sites.len() - 1] + 1);
        let mut tr = czero::<T>();
        for a in 0..e.nrows() {
            for b in 0..e.ncols() {
                tr += e[(a, b)] * r[(b, a)];
            }
        }
        let mag = to_f64(cabs(tr));
        if mag == 0.0 {
            return f64::NEG_INFINITY;
        }
        mag.ln() + to_f64(lg + rlog - self.env.log_norm_sqr())
    }

    /// `ln |Tr(rho P)|` for a string on an arbitrary sub-support.
    fn log_abs_on(&self, sites: &[usize], p: &PauliString) -> Result<f64> {
        let refs: Vec<(usize, &CMatrix<T>)> =
            sites.iter().zip(p.exponents()).filter_map(|(&j, &e)| self.op(e).map(|o| (j, o))).collect();
        let t = self.env.expectation(self.state, &refs)?;
        let mag = to_f64(cabs(t));
        Ok(if mag == 0.0 { f64::NEG_INFINITY } else { mag.ln() })
    }
}

/// Outcome of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRun {
    /// `ln |Tr(rho P)|` at each recorded sample.
    pub log_abs: Vec<f64>,
    /// Observable recorded alongside (estimator-specific).
    pub observable: Vec<f64>,
    pub acceptance_rate: f64,
    /// Largest relative disagreement between cached and recomputed weights.
    pub max_cache_deviation: f64,
    pub steps: usize,
}

/// A Metropolis chain over strings on `support`.
pub struct PauliChain<'a, T: Real> {
    oracle: SupportOracle<'a, T>,
    proposal: Proposal,
    exponent: f64,
    string: PauliString,
    log_abs: f64,
    cache: Vec<(CMatrix<T>, T)>,
    accepted: usize,
    steps: usize,
    recompute_every: usize,
    max_cache_deviation: f64,
}

impl<'a, T: Real> PauliChain<'a, T> {
    /// Starts at the identity string, whose weight is 1.
    pub fn new(state: &'a MatrixProductState<T>, env: &'a Environments<T>, support: &Partition, config: &MarkovConfig) -> Result<Self> {
        config.validate()?;
        let sites = support.site_vec();
        let oracle = SupportOracle::new(state, env, sites)?;
        let proposal = Proposal::new(support.len(), state.local_dim(), config.move_mix, config.scramble_mix)?;
        let string = PauliString::identity(support.len());
        let (log_abs, cache) = oracle.evaluate(&string, &[], 0);
        if !log_abs.is_finite() {
            return Err(Error::NullState);
        }
        Ok(Self {
            oracle,
            proposal,
            exponent: config.weight_exponent,
            string,
            log_abs,
            cache,
            accepted: 0,
            steps: 0,
            recompute_every: config.recompute_every,
            max_cache_deviation: 0.0,
        })
    }

    pub fn string(&self) -> &PauliString {
        &self.string
    }

    /// `ln |Tr(rho P)|` of the current string.
    pub fn log_abs(&self) -> f64 {
        self.log_abs
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    pub fn max_cache_deviation(&self) -> f64 {
        self.max_cache_deviation
    }

    /// Metropolis acceptance of `ln w' - ln w`.
    pub fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
        if log_ratio >= 0.0 {
            return true;
        }
        if log_ratio == f64::NEG_INFINITY || log_ratio.is_nan() {
            return false;
        }
        rng.random::<f64>().ln() < log_ratio
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let mv = self.proposal.draw(rng);
        let cand = self.proposal.apply(&self.string, &mv);
        let from = mv.changes.iter().map(|c| c.0).min().unwrap_or(0);
        let (la, tail) = self.oracle.evaluate(&cand, &self.cache, from);
        let ok = Self::accept(self.exponent * (la - self.log_abs), rng);
        if ok {
            self.string = cand;
            self.log_abs = la;
            self.cache.truncate(from);
            self.cache.extend(tail);
            self.accepted += 1;
        }
        self.steps += 1;
        if self.steps % self.recompute_every == 0 {
            self.refresh();
        }
        ok
    }

    /// Recomputes the weight from scratch and records the drift.
    fn refresh(&mut self) {
        let (la, cache) = self.oracle.evaluate(&self.string, &[], 0);
        let dev = (self.exponent * (la - self.log_abs)).exp_m1().abs();
        if dev > 1e-8 {
            log::warn!("weight cache drifted by {dev:e}; replaced by the recomputed value");
        }
        self.max_cache_deviation = self.max_cache_deviation.max(dev);
        self.log_abs = la;
        self.cache = cache;
    }

    /// Burn-in, then `n_samples` recordings spaced by `thinning` steps;
    /// `observe` maps the current chain to the recorded observable.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        burn_in: usize,
        thinning: usize,
        n_samples: usize,
        rng: &mut R,
        mut observe: impl FnMut(&Self) -> Result<f64>,
    ) -> Result<ChainRun> {
        for _ in 0..burn_in {
            self.step(rng);
        }
        self.accepted = 0;
        self.steps = 0;
        let mut log_abs = Vec::with_capacity(n_samples);
        let mut obs = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            for _ in 0..thinning {
                self.step(rng);
            }
            log_abs.push(self.log_abs);
            obs.push(observe(self)?);
        }
        Ok(ChainRun {
            log_abs,
            observable: obs,
            acceptance_rate: self.acceptance_rate(),
            max_cache_deviation: self.max_cache_deviation,
            steps: self.steps,
        })
    }

    /// `ln |Tr(rho_X P_X)|` for the restriction of the current string to
    /// the support positions `positions` (sites `sites`).
    fn log_abs_restricted(&self, positions: &[usize]) -> Result<f64> {
        let sites: Vec<usize> = positions.iter().map(|&p| self.oracle.sites[p]).collect();
        let sub = PauliString::new(positions.iter().map(|&p| self.string.get(p)).collect(), self.oracle.alg.d());
        self.oracle.log_abs_on(&sites, &sub)
    }
}

/// Estimate of `-ln <f>` with a jackknife error over blocks several
/// autocorrelation times long.
fn minus_log_mean(obs: &[f64], run: &ChainRun) -> Result<Estimate> {
    let tau = match integrated_autocorr_time(&ChainTrace::new(obs.to_vec(), "observable")?, DEFAULT_WINDOW_C) {
        Ok(t) => t.tau.max(1.0),
        Err(Error::ConstantTrace) => 1.0,
        Err(e) => return Err(e),
    };
    let logs: Vec<f64> = obs.iter().map(|x| x.ln()).collect();
    let block = (5.0 * tau).ceil() as usize;
    let n_blocks = (obs.len() / block.max(1)).clamp(2, 100);
    let (value, err) = jackknife(&logs, n_blocks, |v| -log_mean_exp(v))?;
    Ok(Estimate { mean: value, std_error: err, n_samples: obs.len(), tau: Some(tau), acceptance_rate: Some(run.acceptance_rate) })
}

/// Chain on `A ∪ B` with exponent `k`, recording
/// `|Tr rho_A P_A|^k |Tr rho_B P_B|^k / |Tr rho_AB P_AB|^k`.
fn ratio_chain<T: Real>(
    state: &MatrixProductState<T>,
    a: &Partition,
    b: &Partition,
    config: &MarkovConfig,
    k: f64,
    stream: u64,
) -> Result<(Estimate, ChainRun)> {
    a.ensure_disjoint(b)?;
    let n = state.n_sites();
    let ab = a.union(b, n)?;
    let env = Environments::new(state);
    let cfg = MarkovConfig { weight_exponent: k, ..config.clone() };
    let mut chain = PauliChain::new(state, &env, &ab, &cfg)?;
    let sites = ab.site_vec();
    let pos_a: Vec<usize> = sites.iter().enumerate().filter(|(_, s)| a.contains(**s)).map(|(p, _)| p).collect();
    let pos_b: Vec<usize> = sites.iter().enumerate().filter(|(_, s)| b.contains(**s)).map(|(p, _)| p).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let run = chain.run(cfg.burn_in_for(n), cfg.thinning_for(n), cfg.n_samples, &mut rng, |c| {
        let la = c.log_abs_restricted(&pos_a)?;
        let lb = c.log_abs_restricted(&pos_b)?;
        Ok((k * (la + lb - c.log_abs())).exp())
    })?;
    let est = minus_log_mean(&run.observable, &run)?;
    Ok((est, run))
}

/// `W(rho_AB)` from a chain sampling `Pi ∝ |Tr(rho_AB P)|^4`.
pub fn estimate_w<T: Real>(state: &MatrixProductState<T>, a: &Partition, b: &Partition, config: &MarkovConfig) -> Result<Estimate> {
    Ok(estimate_w_run(state, a, b, config)?.0)
}

/// As [`estimate_w`], also returning the chain trace.
pub fn estimate_w_run<T: Real>(
    state: &MatrixProductState<T>,
    a: &Partition,
    b: &Partition,
    config: &MarkovConfig,
) -> Result<(Estimate, ChainRun)> {
    ratio_chain(state, a, b, config, 4.0, 0)
}

/// Renyi-2 mutual information from a chain sampling `Xi ∝ |Tr(rho_AB P)|^2`.
pub fn estimate_mutual_info2<T: Real>(state: &MatrixProductState<T>, a: &Partition, b: &Partition, config: &MarkovConfig) -> Result<Estimate> {
    Ok(estimate_mutual_info2_run(state, a, b, config)?.0)
}

/// As [`estimate_mutual_info2`], also returning the chain trace.
pub fn estimate_mutual_info2_run<T: Real>(
    state: &MatrixProductState<T>,
    a: &Partition,
    b: &Partition,
    config: &MarkovConfig,
) -> Result<(Estimate, ChainRun)> {
    ratio_chain(state, a, b, config, 2.0, 1)
}

/// Long-range magic `L = I - W` from two independent chains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRangeEstimate {
    pub long_range: Estimate,
    pub mutual_info: Estimate,
    pub w: Estimate,
}

pub fn estimate_long_range_magic<T: Real>(
    state: &MatrixProductState<T>,
    a: &Partition,
    b: &Partition,
    config: &MarkovConfig,
) -> Result<LongRangeEstimate> {
    let mutual_info = estimate_mutual_info2(state, a, b, config)?;
    let w = estimate_w(state, a, b, config)?;
    Ok(LongRangeEstimate { long_range: mutual_info.difference(&w), mutual_info, w })
}

/// `M_n` of the full state from a chain sampling `Xi_P ∝ |Tr(rho P)|^2`,
/// averaging `Xi^{n-1}`.
pub fn estimate_sre_markov<T: Real>(state: &MatrixProductState<T>, n: f64, config: &MarkovConfig) -> Result<Estimate> {
    let sites = state.n_sites();
    let full = Partition::block(0..sites, sites)?;
    let env = Environments::new(state);
    let cfg = MarkovConfig { weight_exponent: 2.0, ..config.clone() };
    let mut chain = PauliChain::new(state, &env, &full, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let run = chain.run(cfg.burn_in_for(sites), cfg.thinning_for(sites), cfg.n_samples, &mut rng, |c| Ok(c.log_abs()))?;
    let nd = sites as f64 * (state.local_dim() as f64).ln();
    // ln Xi = 2 ln|t| - N ln d
    let log_xi: Vec<f64> = run.log_abs.iter().map(|l| 2.0 * l - nd).collect();
    let tau = match integrated_autocorr_time(&ChainTrace::new(log_xi.clone(), "ln Xi")?, DEFAULT_WINDOW_C) {
        Ok(t) => t.tau.max(1.0),
        Err(Error::ConstantTrace) => 1.0,
        Err(e) => return Err(e),
    };
    let block = (5.0 * tau).ceil() as usize;
    let n_blocks = (log_xi.len() / block.max(1)).clamp(2, 100);
    let (mean, err) = if (n - 1.0).abs() < 1e-12 {
        jackknife(&log_xi, n_blocks, |v| -crate::stats::mean(v) - nd)?
    } else {
        let scaled: Vec<f64> = log_xi.iter().map(|x| (n - 1.0) * x).collect();
        jackknife(&scaled, n_blocks, |v| log_mean_exp(v) / (1.0 - n) - nd)?
    };
    Ok(Estimate { mean, std_error: err, n_samples: log_xi.len(), tau: Some(tau), acceptance_rate: Some(run.acceptance_rate) })
}
