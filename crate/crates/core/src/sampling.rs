//! Perfect (autoregressive) sampling of Pauli strings from
//! `Xi_P = |<psi|P|psi>|^2 / d^N`.
//!
//! For a right-canonical state the marginal of a prefix `alpha_1..alpha_j`
//! is `||E_j||_F^2 / d^j` with `E_j = sum_{s,t} (T_alpha)_{st} A^{s+} E_{j-1} A^t`,
//! because the right-canonical tail is unital under the depolarizing sum
//! over the remaining strings. Sampling thus only carries one `chi x chi`
//! environment. Per site the `d^2` products `G_{st} = A^{s+} E A^t` are
//! formed once; since `T_alpha` is monomial, each `E'_alpha` is a
//! combination of `d` of them and its norm follows from a `d x d` Gram
//! matrix, so the cost is `O(d^2 chi^3)` per site.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frob2, matmul, CMatrix, Op};
use crate::mps::MatrixProductState;
use crate::pauli::{PauliString, QuditAlgebra};
use crate::scalar::{czero, to_f64, Real};
use crate::stats::{jackknife, log_mean_exp, mean, naive_std_error};

/// One sampled string with its probability `Xi_P`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub string: PauliString,
    pub probability: f64,
    pub log_probability: f64,
}

/// A Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Integrated autocorrelation time (Markov chains only).
    pub tau: Option<f64>,
    pub acceptance_rate: Option<f64>,
}

impl Estimate {
    pub fn new(mean: f64, std_error: f64, n_samples: usize) -> Self {
        Self { mean, std_error, n_samples, tau: None, acceptance_rate: None }
    }

    /// `self - other` with errors added in quadrature.
    pub fn difference(&self, other: &Estimate) -> Estimate {
        Estimate::new(self.mean - other.mean, self.std_error.hypot(other.std_error), self.n_samples.min(other.n_samples))
    }

    /// Number of standard errors separating the estimate from `value`.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.mean - value).abs() / self.std_error
        } else if self.mean == value {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Number of jackknife blocks used for nonlinear estimators.
pub const JACKKNIFE_BLOCKS: usize = 100;

/// Independent RNG streams used by batched sampling; results do not
/// depend on the number of worker threads.
pub const SAMPLE_STREAMS: u64 = 16;

/// Autoregressive sampler over a right-canonical state.
pub struct PerfectSampler<'a, T: Real> {
    state: &'a MatrixProductState<T>,
    d: usize,
    /// `phases[alpha][t]`: the entry of `T_alpha` in column `t`.
    phases: Vec<Vec<Complex<T>>>,
}

impl<'a, T: Real> PerfectSampler<'a, T> {
    pub fn new(state: &'a MatrixProductState<T>) -> Result<Self> {
        if state.center() != Some(0) {
            return Err(Error::RequiresRightCanonical);
        }
        let alg = QuditAlgebra::new(state.local_dim())?;
        let d = alg.d();
        let phases = (0..d * d)
            .map(|al| {
                let (a, ap) = alg.unlabel(al);
                alg.monomial_values::<T>(a, ap)
            })
            .collect();
        Ok(Self { state, d, phases })
    }

    /// `G[s * d + t] = A^{s+} E A^t` for site `j`.
    fn products(&self, env: &CMatrix<T>, j: usize) -> Vec<CMatrix<T>> {
        let a = self.state.tensor(j);
        let d = self.d;
        let f: Vec<CMatrix<T>> = (0..d).map(|t| matmul(env, Op::N, &a.slice(t), Op::N)).collect();
        let mut g = Vec::with_capacity(d * d);
        for s in 0..d {
            for ft in &f {
                g.push(matmul(&a.slice(s), Op::H, ft, Op::N));
            }
        }
        g
    }

    /// Unnormalized conditional weights `||E'_alpha||^2 / d` of all labels.
    fn weights(&self, g: &[CMatrix<T>]) -> Vec<f64> {
        let d = self.d;
        let mut w = vec![0.0; d * d];
        for ap in 0..d {
            let blocks: Vec<&CMatrix<T>> = (0..d).map(|t| &g[((t + ap) % d) * d + t]).collect();
            let mut gram = vec![czero::<T>(); d * d];
            for t in 0..d {
                for u in t..d {
                    let v = blocks[t].iter().zip(blocks[u].iter()).fold(czero::<T>(), |acc, (x, y)| acc + x.conj() * y);
                    gram[t * d + u] = v;
                    gram[u * d + t] = v.conj();
                }
            }
            for a in 0..d {
                let ph = &self.phases[a * d + ap];
                let mut acc = czero::<T>();
                for t in 0..d {
                    for u in 0..d {
                        acc += ph[t].conj() * ph[u] * gram[t * d + u];
                    }
                }
                w[a * d + ap] = to_f64(acc.re).max(0.0) / d as f64;
            }
        }
        w
    }

    fn advance(&self, g: &[CMatrix<T>], alpha: usize) -> CMatrix<T> {
        let d = self.d;
        let ap = alpha % d;
        let ph = &self.phases[alpha];
        let mut e = g[ap * d].clone() * ph[0];
        for t in 1..d {
            e.zip_apply(&g[((t + ap) % d) * d + t], |x, y| *x += ph[t] * y);
        }
        e
    }

    fn normalize(e: &mut CMatrix<T>) {
        let n = frob2(e).sqrt();
        if n > T::zero() {
            *e /= Complex::new(n, T::zero());
        }
    }

    /// Draws one string with probability exactly `Xi_P`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SampleRecord> {
        let n = self.state.n_sites();
        let mut env = CMatrix::from_element(1, 1, crate::scalar::cone::<T>());
        let mut labels = Vec::with_capacity(n);
        let mut logp = 0.0;
        for j in 0..n {
            let g = self.products(&env, j);
            let w = self.weights(&g);
            let total: f64 = w.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::NullState);
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (al, &x) in w.iter().enumerate() {
                if x > 0.0 {
                    acc += x;
                    pick = Some(al);
                    if u < acc {
                        break;
                    }
                }
            }
            let al = pick.ok_or(Error::NullState)?;
            logp += (w[al] / total).ln();
            labels.push(al);
            env = self.advance(&g, al);
            Self::normalize(&mut env);
        }
        let string = PauliString::from_labels(&labels, self.d);
        Ok(SampleRecord { string, probability: logp.exp(), log_probability: logp })
    }

    /// Conditional probabilities `p(alpha_j | alpha_1..alpha_{j-1})` along a
    /// given string; their product is `Xi_P`.
    pub fn conditionals(&self, string: &PauliString) -> Result<Vec<Vec<f64>>> {
        let n = self.state.n_sites();
        if string.len() != n {
            return Err(Error::MismatchedSupport(string.len(), n));
        }
        let mut env = CMatrix::from_element(1, 1, crate::scalar::cone::<T>());
        let mut out = Vec::with_capacity(n);
        for (j, al) in string.labels(self.d).into_iter().enumerate() {
            let g = self.products(&env, j);
            let w = self.weights(&g);
            let total: f64 = w.iter().sum();
            out.push(w.iter().map(|x| x / total).collect());
            env = self.advance(&g, al);
            Self::normalize(&mut env);
        }
        Ok(out)
    }

    /// `ln Xi_P` from the chain of conditionals.
    pub fn log_probability(&self, string: &PauliString) -> Result<f64> {
        let labels = string.labels(self.d);
        Ok(self.conditionals(string)?.iter().zip(labels).map(|(p, al)| p[al].ln()).sum())
    }
}

/// Draws one string from `Xi_P` of a right-canonical state.
pub fn sample_pauli_string<T: Real, R: Rng + ?Sized>(state: &MatrixProductState<T>, rng: &mut R) -> Result<SampleRecord> {
    PerfectSampler::new(state)?.sample(rng)
}

/// `n_samples` strings split over [`SAMPLE_STREAMS`] ChaCha streams of
/// `seed`, processed by up to `threads` workers.
pub fn sample_batch<T: Real>(
    state: &MatrixProductState<T>,
    n_samples: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<SampleRecord>> {
    let sampler = PerfectSampler::new(state)?;
    let streams = SAMPLE_STREAMS as usize;
    let counts: Vec<usize> = (0..streams).map(|k| n_samples / streams + usize::from(k < n_samples % streams)).collect();
    let run = |k: usize| -> Result<Vec<SampleRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        (0..counts[k]).map(|_| sampler.sample(&mut rng)).collect()
    };
    let threads = threads.clamp(1, streams);
    let mut chunks: Vec<Option<Result<Vec<SampleRecord>>>> = (0..streams).map(|_| None).collect();
    if threads == 1 {
        for (k, c) in chunks.iter_mut().enumerate() {
            *c = Some(run(k));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let run = &run;
                    scope.spawn(move || (w..streams).step_by(threads).map(|k| (k, run(k))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (k, r) in h.join().expect("sampling worker panicked") {
                    chunks[k] = Some(r);
                }
            }
        });
    }
    let mut out = Vec::with_capacity(n_samples);
    for c in chunks {
        out.extend(c.expect("every stream processed")?);
    }
    Ok(out)
}

/// SRE estimate from `ln Xi_P` samples of an `n_sites`-site chain:
/// `-<ln Xi> - N ln d` for `n = 1`, otherwise
/// `ln<Xi^{n-1}> / (1 - n) - N ln d` with a jackknife error.
pub fn sre_from_log_probabilities(log_xi: &[f64], n: f64, n_sites: usize, d: usize) -> Result<Estimate> {
    if log_xi.len() < 2 {
        return Err(Error::TraceTooShort(log_xi.len()));
    }
    if !(n >= 0.0) {
        return Err(Error::InvalidArgument("Renyi index must be >= 0".into()));
    }
    let offset = n_sites as f64 * (d as f64).ln();
    let s = log_xi.len();
    if (n - 1.0).abs() < 1e-12 {
        return Ok(Estimate::new(-mean(log_xi) - offset, naive_std_error(log_xi), s));
    }
    let scaled: Vec<f64> = log_xi.iter().map(|x| (n - 1.0) * x).collect();
    let stat = |v: &[f64]| log_mean_exp(v) / (1.0 - n) - offset;
    let (value, err) = jackknife(&scaled, JACKKNIFE_BLOCKS.min(s), stat)?;
    Ok(Estimate::new(value, err, s))
}

fn warn_exponential(n: f64, n_sites: usize) {
    if (n - 1.0).abs() > 1e-12 && n_sites > 12 {
        log::warn!("SRE index {n} != 1 from perfect samples: the sample complexity grows exponentially with N = {n_sites}");
    }
}

/// Perfect-sampling estimate of `M_n`.
pub fn estimate_sre<T: Real, R: Rng + ?Sized>(
    state: &MatrixProductState<T>,
    n: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::TraceTooShort(n_samples));
    }
    warn_exponential(n, state.n_sites());
    let sampler = PerfectSampler::new(state)?;
    let logs: Vec<f64> = (0..n_samples).map(|_| sampler.sample(rng).map(|r| r.log_probability)).collect::<Result<_>>()?;
    sre_from_log_probabilities(&logs, n, state.n_sites(), state.local_dim())
}

/// As [`estimate_sre`], drawing through [`sample_batch`].
pub fn estimate_sre_seeded<T: Real>(
    state: &MatrixProductState<T>,
    n: f64,
    n_samples: usize,
    seed: u64,
    threads: usize,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::TraceTooShort(n_samples));
    }
    warn_exponential(n, state.n_sites());
    let logs: Vec<f64> = sample_batch(state, n_samples, seed, threads)?.iter().map(|r| r.log_probability).collect();
    sre_from_log_probabilities(&logs, n, state.n_sites(), state.local_dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Partition;
    use crate::pauli::dense::{brute_force_sre, dense_pauli_spectrum, DenseInput};
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn product_zero_state_emits_clock_strings() {
        let psi = MatrixProductState::<f64>::product_state(&[0, 0, 0], 3).unwrap();
        let s = PerfectSampler::new(&psi).unwrap();
        let mut r = rng(1);
        for _ in 0..200 {
            let rec = s.sample(&mut r).unwrap();
            assert!(rec.string.exponents().iter().all(|e| e.1 == 0));
            assert!((rec.probability - 1.0 / 27.0).abs() < 1e-12);
        }
        let c = s.conditionals(&PauliString::identity(3)).unwrap();
        for p in &c {
            for (al, &x) in p.iter().enumerate() {
                let want = if al % 3 == 0 { 1.0 / 3.0 } else { 0.0 };
                assert!((x - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn requires_right_canonical_gauge() {
        let psi = MatrixProductState::<f64>::random(4, 3, 2, 0).unwrap().canonicalize(2).unwrap();
        assert!(matches!(PerfectSampler::new(&psi), Err(Error::RequiresRightCanonical)));
    }

    #[test]
    fn conditionals_sum_to_one_and_multiply_to_xi() {
        let a = QuditAlgebra::qutrit();
        let psi = MatrixProductState::<f64>::random(4, 3, 3, 11).unwrap().canonicalize(0).unwrap();
        let s = PerfectSampler::new(&psi).unwrap();
        let full = Partition::block(0..4, 4).unwrap();
        let mut r = rng(2);
        for _ in 0..50 {
            let rec = s.sample(&mut r).unwrap();
            // unnormalized weights, before division by their total
            let mut env = CMatrix::from_element(1, 1, crate::scalar::cone::<f64>());
            for (j, al) in rec.string.labels(3).into_iter().enumerate() {
                let g = s.products(&env, j);
                let w = s.weights(&g);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                env = s.advance(&g, al);
                PerfectSampler::<f64>::normalize(&mut env);
            }
            let t = psi.expectation_pauli_string(&a, &rec.string, &full).unwrap();
            let xi = t.norm_sqr() / 81.0;
            assert!((rec.probability - xi).abs() < 1e-10, "{} vs {xi}", rec.probability);
            assert!((rec.log_probability.exp() - rec.probability).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_frequencies_match_dense_spectrum() {
        let a = QuditAlgebra::qutrit();
        let psi = MatrixProductState::<f64>::random(3, 3, 2, 5).unwrap().canonicalize(0).unwrap();
        let spectrum = dense_pauli_spectrum(&a, DenseInput::Vector(&psi.to_dense(1000).unwrap())).unwrap();
        let xi: Vec<f64> = spectrum.values.iter().map(|z| z.norm_sqr() / 27.0).collect();
        let n = 100_000;
        let recs = sample_batch(&psi, n, 3, 1).unwrap();
        let mut counts = vec![0usize; 729];
        for r in &recs {
            let idx = r.string.labels(3).iter().fold(0, |acc, &l| acc * 9 + l);
            counts[idx] += 1;
        }
        // chi-square over bins with expected count >= 5, the rest pooled
        let mut chi2 = 0.0;
        let mut dof = 0usize;
        let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
        for (c, p) in counts.iter().zip(&xi) {
            let e = p * n as f64;
            if e >= 5.0 {
                chi2 += (*c as f64 - e).powi(2) / e;
                dof += 1;
            } else {
                pooled_o += *c as f64;
                pooled_e += e;
                assert!(p > &1e-30 || *c == 0, "string with zero weight sampled");
            }
        }
        if pooled_e >= 5.0 {
            chi2 += (pooled_o - pooled_e).powi(2) / pooled_e;
            dof += 1;
        }
        let k = (dof - 1) as f64;
        // Wilson-Hilferty upper 1% quantile
        let z = 2.326;
        let crit = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 {chi2} dof {k} crit {crit}");
    }

    #[test]
    fn ghz_is_stabilizer() {
        let psi = MatrixProductState::<f64>::ghz(3, 3).unwrap().canonicalize(0).unwrap();
        let e = estimate_sre(&psi, 1.0, 2000, &mut rng(4)).unwrap();
        assert!(e.mean.abs() < 3.0 * e.std_error.max(1e-12), "{e:?}");
        assert!(e.mean.abs() < 1e-10);
    }

    #[test]
    fn random_state_matches_brute_force() {
        let a = QuditAlgebra::qutrit();
        let psi = MatrixProductState::<f64>::random(4, 3, 4, 21).unwrap().canonicalize(0).unwrap();
        let dense = psi.to_dense(1 << 12).unwrap();
        let m1 = brute_force_sre(&a, &dense, 1.0).unwrap();
        let e1 = estimate_sre_seeded(&psi, 1.0, 10_000, 7, 1).unwrap();
        assert!(e1.z_score(m1) < 3.0, "{e1:?} vs {m1}");
        let m2 = brute_force_sre(&a, &dense, 2.0).unwrap();
        let e2 = estimate_sre_seeded(&psi, 2.0, 100_000, 8, 2).unwrap();
        assert!(e2.z_score(m2) < 3.0, "{e2:?} vs {m2}");
    }

    #[test]
    fn batches_do_not_depend_on_thread_count() {
        let psi = MatrixProductState::<f64>::random(5, 3, 3, 2).unwrap().canonicalize(0).unwrap();
        let a = sample_batch(&psi, 300, 9, 1).unwrap();
        let b = sample_batch(&psi, 300, 9, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
    }

    #[test]
    fn works_in_single_precision() {
        let psi = MatrixProductState::<f64>::random(4, 3, 3, 3).unwrap().canonicalize(0).unwrap();
        let p32 = psi.cast::<f32>();
        let s64 = PerfectSampler::new(&psi).unwrap();
        let s32 = PerfectSampler::new(&p32).unwrap();
        let rec = s64.sample(&mut rng(3)).unwrap();
        let l32 = s32.log_probability(&rec.string).unwrap();
        assert!((l32 - rec.log_probability).abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn recorded_probability_is_exact(seed in 0u64..500, chi in 1usize..4) {
            let a = QuditAlgebra::qutrit();
            let psi = MatrixProductState::<f64>::random(3, 3, chi, seed).unwrap().canonicalize(0).unwrap();
            let rec = sample_pauli_string(&psi, &mut rng(seed)).unwrap();
            let full = Partition::block(0..3, 3).unwrap();
            let xi = psi.expectation_pauli_string(&a, &rec.string, &full).unwrap().norm_sqr() / 27.0;
            prop_assert!((rec.probability - xi).abs() < 1e-10);
        }
    }
}
