//! Pauli-basis MPS and replica contractions.
//!
//! The coefficients `c_alpha = Tr(rho T_alpha) / d^{N/2}` of a pure state form
//! an MPS with physical dimension `d^2` and bond dimension `chi^2`, with site
//! tensors `B^alpha = sum_{st} conj(A^s) (x) A^t (T_alpha)_{st} / sqrt(d)`.
//! For a normalized pure state `sum |c|^2 = 1`. Tracing out a site fixes its
//! label to the identity with weight `sqrt(d)`, which leaves the coefficients
//! `Tr(rho_A T_alpha) / d^{|A|/2}` of the reduced state.
//!
//! Stabilizer Renyi entropies follow from power sums `sum |c|^{2n}`:
//! exactly, by contracting `2n` replicas that share the physical index, or
//! approximately, by building the elementwise product `|c|^2` with bond
//! compression to `chi_P` after every multiplication.

use nalgebra::{DMatrixView, Dyn};
use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{frob2, gemm, matmul, svd_truncated, truncated_left_factor, CMatrix, Op};
use crate::mps::{MatrixProductState, SiteTensor};
use crate::partition::Partition;
use crate::pauli::{PauliString, QuditAlgebra};
use crate::scalar::{cabs, cone, creal, czero, from_usize, Real};

/// Largest replica environment (number of complex entries) the exact
/// contraction accepts by default; for `n = 2` this admits Pauli bond
/// dimension 32, i.e. source bond dimension 5.
pub const DEFAULT_EXACT_ENV_CAP: usize = 1 << 20;

/// Pauli-basis coefficients of a (reduced) state as an MPS over the sites
/// that have not been traced out.
#[derive(Clone, Debug)]
pub struct PauliMps<T: Real> {
    mps: MatrixProductState<T>,
    d: usize,
    sites: Vec<usize>,
    n_source: usize,
    truncation_weight: T,
}

fn all_pairs(dim: usize) -> Vec<(usize, usize)> {
    (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).collect()
}

/// Pauli tensor of one site restricted to the given (bra, ket) bond pairs.
fn pauli_site<T: Real>(alg: &QuditAlgebra, a: &SiteTensor<T>, left: &[(usize, usize)], right: &[(usize, usize)]) -> SiteTensor<T> {
    let d = alg.d();
    let norm = creal(T::one() / from_usize::<T>(d).sqrt());
    let values: Vec<Vec<Complex<T>>> = (0..d * d)
        .map(|al| {
            let (x, xp) = alg.unlabel(al);
            alg.monomial_values(x, xp)
        })
        .collect();
    let slices: Vec<CMatrix<T>> = (0..d).map(|s| a.slice(s).into_owned()).collect();
    SiteTensor::from_fn(left.len(), d * d, right.len(), |l, al, r| {
        let (i, j) = left[l];
        let (ip, jp) = right[r];
        let (_, xp) = alg.unlabel(al);
        let mut acc = czero::<T>();
        for t in 0..d {
            let s = (t + xp) % d;
            acc += values[al][t] * slices[s][(i, ip)].conj() * slices[t][(j, jp)];
        }
        acc * norm
    })
}

fn check_algebra<T: Real>(alg: &QuditAlgebra, state: &MatrixProductState<T>) -> Result<()> {
    if alg.d() != state.local_dim() {
        return Err(Error::DimensionMismatch(format!(
            "algebra has d = {} but the state has local dimension {}",
            alg.d(),
            state.local_dim()
        )));
    }
    alg.heisenberg_weyl_matrix::<T>(0, 0)?;
    Ok(())
}

fn null_log<T: Real>() -> T {
    T::min_value().unwrap_or(-T::one() / T::default_epsilon())
}

/// Divides `m` by its Frobenius norm and returns the log of that norm.
fn rescale<T: Real>(m: &mut CMatrix<T>) -> Result<T> {
    let n = frob2(m).sqrt();
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::NullState);
    }
    *m /= creal(n);
    Ok(n.ln())
}

impl<T: Real> PauliMps<T> {
    /// Exact Pauli-MPS; bond dimensions are the squares of the source bonds.
    /// The state is normalized on the fly.
    pub fn from_state(alg: &QuditAlgebra, state: &MatrixProductState<T>) -> Result<Self> {
        check_algebra(alg, state)?;
        let (ln_norm2, _) = state.inner_log(state)?;
        if ln_norm2 <= null_log() {
            return Err(Error::NullState);
        }
        let tensors = state
            .tensors()
            .iter()
            .map(|a| pauli_site(alg, a, &all_pairs(a.left()), &all_pairs(a.right())))
            .collect();
        let log_scale = state.log_scale() + state.log_scale() - ln_norm2;
        let n = state.n_sites();
        Ok(Self {
            mps: MatrixProductState::with_gauge(tensors, alg.d() * alg.d(), None, log_scale)?,
            d: alg.d(),
            sites: (0..n).collect(),
            n_source: n,
            truncation_weight: T::zero(),
        })
    }

    /// Pauli-MPS truncated to bond dimension `chi_p`.
    ///
    /// With the source in Schmidt form, the operator Schmidt values of
    /// `|psi><psi|` across a bond are the products `lambda_i lambda_j`, and
    /// the Pauli map is unitary, so each bond keeps the `chi_p` largest
    /// products. The full `chi^2` bond is never formed. The discarded
    /// squared weight, summed over bonds, is reported as truncation weight.
    pub fn from_state_truncated(alg: &QuditAlgebra, state: &MatrixProductState<T>, chi_p: usize) -> Result<Self> {
        check_algebra(alg, state)?;
        if chi_p == 0 {
            return Err(Error::InvalidArgument("chi_P must be >= 1".into()));
        }
        let d = state.local_dim();
        let n = state.n_sites();
        let mut ts: Vec<SiteTensor<T>> = state.canonicalize(0)?.tensors().to_vec();
        let mut lambdas: Vec<Vec<T>> = Vec::with_capacity(n.saturating_sub(1));
        for j in 0..n - 1 {
            let svd = svd_truncated(ts[j].left_matrix().clone(), usize::MAX, T::zero());
            let mut carry = svd.vt;
            for (k, s) in svd.s.iter().enumerate() {
                let mut row = carry.row_mut(k);
                row *= creal(*s);
            }
            ts[j] = SiteTensor::from_left_matrix(svd.u, d);
            ts[j + 1] = ts[j + 1].absorb_left(&carry);
            let total = svd.s.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
            if !(total > T::zero()) {
                return Err(Error::NullState);
            }
            lambdas.push(svd.s.iter().map(|&x| x / total).collect());
        }
        let last = ts[n - 1].norm_sqr().sqrt();
        if !(last > T::zero()) {
            return Err(Error::NullState);
        }
        ts[n - 1].scale(creal(T::one() / last));
        let mut keep: Vec<Vec<(usize, usize)>> = vec![vec![(0, 0)]];
        let mut weight = T::zero();
        for lam in &lambdas {
            let mut pairs = all_pairs(lam.len());
            pairs.sort_by(|p, q| {
                (lam[q.0] * lam[q.1]).partial_cmp(&(lam[p.0] * lam[p.1])).unwrap_or(std::cmp::Ordering::Equal)
            });
            let kept = chi_p.min(pairs.len());
            for &(i, j) in &pairs[kept..] {
                let w = lam[i] * lam[j];
                weight += w * w;
            }
            pairs.truncate(kept);
            keep.push(pairs);
        }
        keep.push(vec![(0, 0)]);
        let tensors = ts.iter().enumerate().map(|(j, a)| pauli_site(alg, a, &keep[j], &keep[j + 1])).collect();
        Ok(Self {
            mps: MatrixProductState::with_gauge(tensors, d * d, None, T::zero())?,
            d,
            sites: (0..n).collect(),
            n_source: n,
            truncation_weight: weight,
        })
    }

    pub fn local_dim(&self) -> usize {
        self.d
    }

    /// Number of remaining (untraced) sites.
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Source-chain indices of the remaining sites, ascending.
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn n_source_sites(&self) -> usize {
        self.n_source
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.mps.bond_dims()
    }

    pub fn max_bond(&self) -> usize {
        self.mps.max_bond()
    }

    /// Squared weight discarded while building this Pauli-MPS.
    pub fn truncation_weight(&self) -> T {
        self.truncation_weight
    }

    /// The coefficients as an MPS with local dimension `d^2`, labels
    /// `alpha = a d + a'`.
    pub fn as_mps(&self) -> &MatrixProductState<T> {
        &self.mps
    }

    /// Traces out `traced` (source-chain indices) by projecting each of those
    /// sites onto the identity label with weight `sqrt(d)`.
    pub fn trace_out(&self, traced: &Partition) -> Result<Self> {
        let tr = traced.site_vec();
        if let Some(&s) = tr.iter().find(|s| !self.sites.contains(s)) {
            return Err(Error::InvalidPartition(format!("site {s} is not present in this Pauli-MPS")));
        }
        if tr.is_empty() {
            return Ok(self.clone());
        }
        if tr.len() == self.sites.len() {
            return Err(Error::InvalidPartition("tracing out every site leaves a scalar".into()));
        }
        let sqrt_d = creal(from_usize::<T>(self.d).sqrt());
        let mut log = self.mps.log_scale();
        let mut out: Vec<SiteTensor<T>> = Vec::new();
        let mut sites = Vec::new();
        let mut pending: Option<CMatrix<T>> = None;
        for (t, &site) in self.mps.tensors().iter().zip(&self.sites) {
            if traced.contains(site) {
                let m = t.slice(0).into_owned() * sqrt_d;
                let mut p = match pending.take() {
                    Some(p) => matmul(&p, Op::N, &m, Op::N),
                    None => m,
                };
                log += rescale(&mut p)?;
                pending = Some(p);
            } else {
                out.push(match pending.take() {
                    Some(p) => t.absorb_left(&p),
                    None => t.clone(),
                });
                sites.push(site);
            }
        }
        if let Some(p) = pending {
            let last = out.pop().expect("at least one site is kept");
            out.push(last.absorb_right(&p));
        }
        Ok(Self {
            mps: MatrixProductState::with_gauge(out, self.d * self.d, None, log)?,
            d: self.d,
            sites,
            n_source: self.n_source,
            truncation_weight: self.truncation_weight,
        })
    }

    /// Reduced Pauli-MPS of `keep`, tracing out every other remaining site.
    pub fn reduce_to(&self, keep: &Partition) -> Result<Self> {
        if let Some(s) = keep.sites().find(|s| !self.sites.contains(s)) {
            return Err(Error::InvalidPartition(format!("site {s} is not present in this Pauli-MPS")));
        }
        let traced: Vec<usize> = self.sites.iter().copied().filter(|&s| !keep.contains(s)).collect();
        if traced.is_empty() {
            return Ok(self.clone());
        }
        self.trace_out(&Partition::from_sites(&traced, self.n_source)?)
    }

    /// Coefficient of one string on the remaining sites.
    pub fn component(&self, string: &PauliString) -> Result<Complex<T>> {
        if string.len() != self.n_sites() {
            return Err(Error::MismatchedSupport(string.len(), self.n_sites()));
        }
        let mut v = CMatrix::from_element(1, 1, cone::<T>());
        let mut log = self.mps.log_scale();
        for (t, &(a, ap)) in self.mps.tensors().iter().zip(string.exponents()) {
            v = matmul(&v, Op::N, &t.slice((a % self.d) * self.d + ap % self.d), Op::N);
            let n = frob2(&v).sqrt();
            if !(n > T::zero()) {
                return Ok(czero());
            }
            v /= creal(n);
            log += n.ln();
        }
        Ok(v[(0, 0)] * creal(log.exp()))
    }

    /// `ln sum_alpha |c_alpha|^{2n}` by exact contraction of `2n` replicas.
    ///
    /// The environment holds one bond index per replica. Each replica's
    /// tensor is applied to the leading axis, which is then rotated to the
    /// back, so after `2n` steps the axis order is restored.
    pub fn log_power_sum(&self, n: usize, env_cap: usize) -> Result<T> {
        if n == 0 {
            return Err(Error::InvalidArgument("power sums need n >= 1".into()));
        }
        let reps = 2 * n;
        let dmax = self.max_bond();
        let size = (dmax as u128).checked_pow(reps as u32).unwrap_or(u128::MAX);
        if size > env_cap as u128 {
            return Err(Error::ContractionTooLarge(format!(
                "exact {reps}-replica contraction needs {size} environment entries (cap {env_cap})"
            )));
        }
        let p = self.d * self.d;
        let mut env = CMatrix::from_element(1, 1, cone::<T>());
        let mut log = T::zero();
        for t in self.mps.tensors() {
            let l = t.left();
            let mut next: Option<CMatrix<T>> = None;
            for al in 0..p {
                let b = t.slice(al);
                let mut e: Option<CMatrix<T>> = None;
                for k in 0..reps {
                    let op = if k % 2 == 0 { Op::T } else { Op::H };
                    let src: &[Complex<T>] = match &e {
                        Some(m) => m.as_slice(),
                        None => env.as_slice(),
                    };
                    let rest = src.len() / l;
                    let view = DMatrixView::from_slice(src, l, rest);
                    let y = matmul(&b, op, &view, Op::N);
                    e = Some(y.transpose());
                }
                let e = e.expect("at least two replicas");
                next = Some(match next {
                    Some(acc) => acc + e,
                    None => e,
                });
            }
            let mut next = next.expect("at least one label");
            let n2 = frob2(&next).sqrt();
            if !(n2 > T::zero()) {
                return Ok(null_log());
            }
            next /= creal(n2);
            log += n2.ln();
            let len = next.len();
            env = next.reshape_generic(Dyn(len), Dyn(1));
        }
        let z = env[0];
        if !(z.re > T::zero()) {
            return Ok(null_log());
        }
        Ok(log + z.re.ln() + from_usize::<T>(reps) * self.mps.log_scale())
    }

    /// `ln sum_alpha |c_alpha|^2`.
    pub fn log_norm_sqr(&self) -> Result<T> {
        Ok(self.mps.inner_log(&self.mps)?.0)
    }
}

impl<T: Real> MatrixProductState<T> {
    pub fn to_pauli_mps(&self, alg: &QuditAlgebra) -> Result<PauliMps<T>> {
        PauliMps::from_state(alg, self)
    }
}

/// Mirror image of a chain: site order and bond directions reversed.
fn reversed<T: Real>(m: &MatrixProductState<T>) -> Result<MatrixProductState<T>> {
    let tensors = m
        .tensors()
        .iter()
        .rev()
        .map(|t| SiteTensor::from_fn(t.right(), t.phys(), t.left(), |a, s, b| t.get(b, s, a)))
        .collect();
    MatrixProductState::with_gauge(tensors, m.local_dim(), None, m.log_scale())
}

/// Elementwise product `x_alpha y_alpha` (optionally conjugated factors) by a
/// left-to-right zip-up, truncating every bond to `chi`. Returns the product
/// and the summed discarded weight fractions.
fn zip_product<T: Real>(
    x: &MatrixProductState<T>,
    conj_x: bool,
    y: &MatrixProductState<T>,
    conj_y: bool,
    chi: usize,
) -> Result<(MatrixProductState<T>, T)> {
    let p = x.local_dim();
    let n = x.n_sites();
    let opx = if conj_x { Op::H } else { Op::T };
    let opy = if conj_y { Op::H } else { Op::T };
    // carry: axes (ix, iy, rho) column-major, as a (dxl * dyl) x r matrix
    let mut carry = CMatrix::from_element(1, 1, cone::<T>());
    let mut log = x.log_scale() + y.log_scale();
    let mut weight = T::zero();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (xt, yt) = (x.tensor(k), y.tensor(k));
        let (dxl, dxr, dyl, dyr) = (xt.left(), xt.right(), yt.left(), yt.right());
        let r = carry.ncols();
        let mut m = CMatrix::from_element(p * r, dxr * dyr, czero::<T>());
        for al in 0..p {
            let c0 = DMatrixView::from_slice(carry.as_slice(), dxl, dyl * r);
            let s1 = matmul(&xt.slice(al), opx, &c0, Op::N).transpose();
            let v = DMatrixView::from_slice(s1.as_slice(), dyl, r * dxr);
            let s2 = matmul(&yt.slice(al), opy, &v, Op::N);
            for jy in 0..dyr {
                for jx in 0..dxr {
                    for rho in 0..r {
                        m[(al * r + rho, jx + dxr * jy)] = s2[(jy, rho + r * jx)];
                    }
                }
            }
        }
        if k == n - 1 {
            log += rescale(&mut m)?;
            out.push(SiteTensor::from_left_matrix(m, p));
        } else {
            let (u, mut rr, w) = truncated_left_factor(m, chi, T::zero());
            weight += w;
            out.push(SiteTensor::from_left_matrix(u, p));
            log += rescale(&mut rr)?;
            carry = rr.transpose();
        }
    }
    Ok((MatrixProductState::with_gauge(out, p, None, log)?, weight))
}

/// `(ln |z|, z / |z|)` for `z = sum_alpha x_alpha y_alpha`.
fn close_product<T: Real>(x: &MatrixProductState<T>, y: &MatrixProductState<T>) -> Result<(T, Complex<T>)> {
    let mut env = CMatrix::from_element(1, 1, cone::<T>());
    let mut log = x.log_scale() + y.log_scale();
    for (xt, yt) in x.tensors().iter().zip(y.tensors()) {
        let mut next = CMatrix::from_element(xt.right(), yt.right(), czero::<T>());
        for al in 0..x.local_dim() {
            let f = matmul(&env, Op::N, &yt.slice(al), Op::N);
            gemm(cone(), &xt.slice(al), Op::T, &f, Op::N, cone(), &mut next);
        }
        let n = frob2(&next).sqrt();
        if !(n > T::zero()) {
            return Ok((null_log(), czero()));
        }
        next /= creal(n);
        log += n.ln();
        env = next;
    }
    let z = env[(0, 0)];
    let a = cabs(z);
    if !(a > T::zero()) {
        return Ok((null_log(), czero()));
    }
    Ok((log + a.ln(), z / creal(a)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaMode {
    Exact,
    Compressed { chi_p: usize },
}

impl ReplicaMode {
    pub fn name(&self) -> &'static str {
        match self {
            ReplicaMode::Exact => "exact",
            ReplicaMode::Compressed { .. } => "compressed",
        }
    }

    pub fn chi_p(&self) -> Option<usize> {
        match self {
            ReplicaMode::Exact => None,
            ReplicaMode::Compressed { chi_p } => Some(*chi_p),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReplicaResult<T: Real> {
    pub value: T,
    pub mode: ReplicaMode,
    pub chi_p: Option<usize>,
    /// Discarded squared weight accumulated over every truncation, including
    /// the one that built the input Pauli-MPS.
    pub accumulated_truncation_weight: T,
}

/// Stabilizer Renyi entropy of index `n >= 2` from a Pauli-MPS.
///
/// Pure: `M_n = ln(sum |c|^{2n} / (sum |c|^2)^n) / (1 - n) - N ln d`, where the
/// denominator is 1 for an exact normalized input and renormalizes truncated
/// coefficients. Mixed: `M~_n = ln(sum |c|^{2n} / sum |c|^2) / (1 - n) - |A| ln d`.
pub fn sre_replica<T: Real>(pmps: &PauliMps<T>, n: usize, mode: ReplicaMode, for_mixed: bool) -> Result<ReplicaResult<T>> {
    sre_replica_with_cap(pmps, n, mode, for_mixed, DEFAULT_EXACT_ENV_CAP)
}

pub fn sre_replica_with_cap<T: Real>(
    pmps: &PauliMps<T>,
    n: usize,
    mode: ReplicaMode,
    for_mixed: bool,
    env_cap: usize,
) -> Result<ReplicaResult<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("replica contraction needs an integer index n >= 2".into()));
    }
    let (ln_num, ln_den, weight) = match mode {
        ReplicaMode::Exact => (pmps.log_power_sum(n, env_cap)?, pmps.log_power_sum(1, env_cap)?, T::zero()),
        ReplicaMode::Compressed { chi_p } => {
            if chi_p == 0 {
                return Err(Error::InvalidArgument("chi_P must be >= 1".into()));
            }
            let (c, w0) = if pmps.max_bond() > chi_p {
                let ln_norm2 = pmps.log_norm_sqr()?;
                let (c, w) = pmps.mps.compress(chi_p, T::zero())?;
                let half = ln_norm2 / (T::one() + T::one());
                (MatrixProductState::with_gauge(c.tensors().to_vec(), c.local_dim(), c.center(), half)?, w)
            } else {
                (pmps.mps.clone(), T::zero())
            };
            // right-canonical factors make each left-to-right truncation see an
            // orthonormal remainder; later products alternate direction
            let c = c.canonicalize(0)?;
            let (q, mut w) = zip_product(&c, false, &c, true, chi_p)?;
            w += w0;
            let mut prod = q.clone();
            for step in 2..n {
                let (next, wi) = if step % 2 == 0 {
                    let (r, wi) = zip_product(&reversed(&prod)?, false, &reversed(&q)?, false, chi_p)?;
                    (reversed(&r)?, wi)
                } else {
                    zip_product(&prod, false, &q, false, chi_p)?
                };
                prod = next;
                w += wi;
            }
            let (ln_num, phase) = close_product(&prod, &q)?;
            if !(phase.re > T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "compressed contraction lost positivity at chi_P = {chi_p}; increase chi_P"
                )));
            }
            (ln_num + phase.re.ln(), c.inner_log(&c)?.0, w)
        }
    };
    let nf = from_usize::<T>(n);
    let size = from_usize::<T>(pmps.n_sites()) * from_usize::<T>(pmps.d).ln();
    let ratio = if for_mixed { ln_num - ln_den } else { ln_num - nf * ln_den };
    Ok(ReplicaResult {
        value: ratio / (T::one() - nf) - size,
        mode,
        chi_p: mode.chi_p(),
        accumulated_truncation_weight: weight + pmps.truncation_weight,
    })
}

/// `M~_2` of `A u B`, `A`, `B` and the long-range magic
/// `L = M~_2(AB) - M~_2(A) - M~_2(B)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PauliMpsLongRange<T: Real> {
    pub long_range: T,
    pub m2_ab: T,
    pub m2_a: T,
    pub m2_b: T,
    pub mode: ReplicaMode,
    pub accumulated_truncation_weight: T,
}

/// Long-range magic from reduced Pauli-MPS. `Exact` builds the full `chi^2`
/// Pauli-MPS; `Compressed` truncates it to `chi_P` first.
pub fn long_range_magic_pauli_mps<T: Real>(
    alg: &QuditAlgebra,
    state: &MatrixProductState<T>,
    a: &Partition,
    b: &Partition,
    mode: ReplicaMode,
) -> Result<PauliMpsLongRange<T>> {
    let ab = a.union(b, state.n_sites())?;
    let full = match mode {
        ReplicaMode::Exact => PauliMps::from_state(alg, state)?,
        ReplicaMode::Compressed { chi_p } => PauliMps::from_state_truncated(alg, state, chi_p)?,
    };
    let m = |part: &Partition| sre_replica(&full.reduce_to(part)?, 2, mode, true);
    let (rab, ra, rb) = (m(&ab)?, m(a)?, m(b)?);
    Ok(PauliMpsLongRange {
        long_range: rab.value - ra.value - rb.value,
        m2_ab: rab.value,
        m2_a: ra.value,
        m2_b: rb.value,
        mode,
        accumulated_truncation_weight: rab.accumulated_truncation_weight
            + ra.accumulated_truncation_weight
            + rb.accumulated_truncation_weight,
    })
}

#[cfg(test)]
mod tests;
