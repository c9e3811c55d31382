//! Finite matrix product states with open boundaries.
//!
//! A state on `N` sites of local dimension `d` is stored as `N` rank-3 site
//! tensors `A[a, s, b]` (left bond, physical, right bond). Each tensor keeps
//! its data as one column-major `(d * left) x right` matrix whose row index is
//! `s * left + a`, so that every physical slice `A^s` is a strided view that
//! feeds GEMM directly, and the same buffer is the left-grouped matrix used
//! by QR/SVD.
//!
//! The represented vector is `exp(log_scale) * sum_s A^{s_1} ... A^{s_N} |s>`;
//! gauge moves push norm factors into `log_scale` so long chains never
//! under- or overflow.

mod canonical;
mod expectation;
pub mod io;
mod replica;

pub use canonical::SchmidtSpectrum;
pub use expectation::{transfer_left, transfer_right, Environments};
pub(crate) use expectation::rescale as rescale_env;
pub use replica::DEFAULT_REPLICA_CHI_CAP;

use nalgebra::DMatrixView;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{frob2, gemm, matmul, CMatrix, Op};
use crate::scalar::{cone, czero, from_usize, lit, Real};

/// One MPS site tensor `A[a, s, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor<T: Real> {
    left: usize,
    phys: usize,
    right: usize,
    data: CMatrix<T>,
}

impl<T: Real> SiteTensor<T> {
    pub fn zeros(left: usize, phys: usize, right: usize) -> Self {
        Self { left, phys, right, data: CMatrix::from_element(phys * left, right, czero()) }
    }

    pub fn from_fn(left: usize, phys: usize, right: usize, mut f: impl FnMut(usize, usize, usize) -> Complex<T>) -> Self {
        let data = CMatrix::from_fn(phys * left, right, |row, b| f(row % left, row / left, b));
        Self { left, phys, right, data }
    }

    /// Wraps a `(phys * left) x right` matrix with row index `s * left + a`.
    pub fn from_left_matrix(m: CMatrix<T>, phys: usize) -> Self {
        assert_eq!(m.nrows() % phys, 0);
        let left = m.nrows() / phys;
        let right = m.ncols();
        Self { left, phys, right, data: m }
    }

    /// Builds from a `left x (phys * right)` matrix with column index `s * right + b`.
    pub fn from_right_matrix(m: &CMatrix<T>, phys: usize) -> Self {
        assert_eq!(m.ncols() % phys, 0);
        let left = m.nrows();
        let right = m.ncols() / phys;
        let mut t = Self::zeros(left, phys, right);
        for s in 0..phys {
            t.data.rows_mut(s * left, left).copy_from(&m.columns(s * right, right));
        }
        t
    }

    pub fn left(&self) -> usize {
        self.left
    }
    pub fn right(&self) -> usize {
        self.right
    }
    pub fn phys(&self) -> usize {
        self.phys
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> Complex<T> {
        self.data[(s * self.left + a, b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, s: usize, b: usize, v: Complex<T>) {
        self.data[(s * self.left + a, b)] = v;
    }

    /// The physical slice `A^s` as a `left x right` view.
    pub fn slice(&self, s: usize) -> DMatrixView<'_, Complex<T>> {
        self.data.view((s * self.left, 0), (self.left, self.right))
    }

    /// The `(phys * left) x right` matrix.
    pub fn left_matrix(&self) -> &CMatrix<T> {
        &self.data
    }

    pub fn into_left_matrix(self) -> CMatrix<T> {
        self.data
    }

    /// The `left x (phys * right)` matrix.
    pub fn right_matrix(&self) -> CMatrix<T> {
        let mut m = CMatrix::from_element(self.left, self.phys * self.right, czero());
        for s in 0..self.phys {
            m.columns_mut(s * self.right, self.right).copy_from(&self.slice(s));
        }
        m
    }

    /// `A^s <- m * A^s` for every slice.
    pub fn absorb_left(&self, m: &CMatrix<T>) -> Self {
        assert_eq!(m.ncols(), self.left);
        let mut out = Self::zeros(m.nrows(), self.phys, self.right);
        for s in 0..self.phys {
            let nl = out.left;
            let mut dst = out.data.view_mut((s * nl, 0), (nl, self.right));
            gemm(cone(), m, Op::N, &self.slice(s), Op::N, czero(), &mut dst);
        }
        out
    }

    /// `A^s <- A^s * m` for every slice.
    pub fn absorb_right(&self, m: &CMatrix<T>) -> Self {
        assert_eq!(m.nrows(), self.right);
        let data = matmul(&self.data, Op::N, m, Op::N);
        Self { left: self.left, phys: self.phys, right: m.ncols(), data }
    }

    pub fn scale(&mut self, f: Complex<T>) {
        self.data *= f;
    }

    pub fn norm_sqr(&self) -> T {
        frob2(&self.data)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self { left: self.left, phys: self.phys, right: self.right, data: self.data.map(f) }
    }

    /// Converts the scalar type, e.g. `f64 -> f32`.
    pub fn cast<U: Real>(&self) -> SiteTensor<U> {
        SiteTensor {
            left: self.left,
            phys: self.phys,
            right: self.right,
            data: self.data.map(|z| {
                Complex::new(
                    U::from_f64(z.re.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero),
                    U::from_f64(z.im.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero),
                )
            }),
        }
    }
}

/// Matrix product state with open boundary conditions.
#[derive(Clone, Debug)]
pub struct MatrixProductState<T: Real> {
    tensors: Vec<SiteTensor<T>>,
    local_dim: usize,
    center: Option<usize>,
    log_scale: T,
}

impl<T: Real> MatrixProductState<T> {
    /// Validates boundary and adjacent bond dimensions.
    pub fn new(tensors: Vec<SiteTensor<T>>, local_dim: usize) -> Result<Self> {
        Self::with_gauge(tensors, local_dim, None, T::zero())
    }

    pub(crate) fn with_gauge(
        tensors: Vec<SiteTensor<T>>,
        local_dim: usize,
        center: Option<usize>,
        log_scale: T,
    ) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidArgument("an MPS needs at least one site".into()));
        }
        if tensors[0].left != 1 || tensors[tensors.len() - 1].right != 1 {
            return Err(Error::DimensionMismatch("boundary bonds must have dimension 1".into()));
        }
        for (j, t) in tensors.iter().enumerate() {
            if t.phys != local_dim {
                return Err(Error::DimensionMismatch(format!(
                    "site {j} has physical dimension {} (expected {local_dim})",
                    t.phys
                )));
            }
        }
        for (j, w) in tensors.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::DimensionMismatch(format!(
                    "bond {} : {} vs {}",
                    j + 1,
                    w[0].right,
                    w[1].left
                )));
            }
        }
        if let Some(c) = center {
            if c >= tensors.len() {
                return Err(Error::IndexOutOfRange { index: c, len: tensors.len() });
            }
        }
        Ok(Self { tensors, local_dim, center, log_scale })
    }

    /// Computational-basis product state `|s_1 s_2 ... s_N>`.
    pub fn product_state(config: &[usize], local_dim: usize) -> Result<Self> {
        let tensors = config
            .iter()
            .map(|&s| {
                if s >= local_dim {
                    return Err(Error::InvalidArgument(format!("basis index {s} >= d = {local_dim}")));
                }
                let mut t = SiteTensor::zeros(1, local_dim, 1);
                t.set(0, s, 0, cone());
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_gauge(tensors, local_dim, Some(0), T::zero())
    }

    /// Product state from per-site amplitude vectors (normalized on return).
    pub fn product_from_vectors(vectors: &[Vec<Complex<T>>]) -> Result<Self> {
        let d = vectors.first().map(|v| v.len()).unwrap_or(0);
        let tensors = vectors
            .iter()
            .map(|v| {
                if v.len() != d {
                    return Err(Error::DimensionMismatch("site vectors differ in length".into()));
                }
                Ok(SiteTensor::from_fn(1, d, 1, |_, s, _| v[s]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(tensors, d)?.canonicalize(0)?.with_unit_scale())
    }

    /// GHZ state `(|0...0> + ... + |d-1...d-1>) / sqrt(d)` with bond dimension `d`.
    pub fn ghz(n_sites: usize, local_dim: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidArgument("GHZ state needs at least two sites".into()));
        }
        let d = local_dim;
        let amp = Complex::new(T::one() / from_usize::<T>(d).sqrt(), T::zero());
        let tensors = (0..n_sites)
            .map(|j| {
                let l = if j == 0 { 1 } else { d };
                let r = if j == n_sites - 1 { 1 } else { d };
                SiteTensor::from_fn(l, d, r, |a, s, b| {
                    let ok = (l == 1 || a == s) && (r == 1 || b == s);
                    if !ok {
                        czero()
                    } else if j == 0 {
                        amp
                    } else {
                        cone()
                    }
                })
            })
            .collect();
        Ok(Self::new(tensors, d)?.canonicalize(0)?.with_unit_scale())
    }

    /// Uniform superposition of all basis states (a product state).
    pub fn uniform_superposition(n_sites: usize, local_dim: usize) -> Result<Self> {
        let v = vec![cone::<T>(); local_dim];
        Self::product_from_vectors(&vec![v; n_sites])
    }

    /// Random complex-Gaussian MPS, normalized and right-canonical.
    ///
    /// Bonds are `min(chi, d^k, d^(N-k))`; identical seeds give identical tensors.
    pub fn random(n_sites: usize, local_dim: usize, chi: usize, seed: u64) -> Result<Self> {
        if n_sites == 0 || local_dim == 0 || chi == 0 {
            return Err(Error::InvalidArgument("random MPS needs N, d, chi >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bond = |k: usize| -> usize {
            let mut b = chi;
            let mut left = 1usize;
            for _ in 0..k {
                left = left.saturating_mul(local_dim);
            }
            let mut right = 1usize;
            for _ in 0..(n_sites - k) {
                right = right.saturating_mul(local_dim);
            }
            b = b.min(left).min(right);
            b
        };
        let tensors = (0..n_sites)
            .map(|j| {
                let (l, r) = (bond(j), bond(j + 1));
                SiteTensor::from_fn(l, local_dim, r, |_, _, _| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex::new(lit(re), lit(im))
                })
            })
            .collect();
        let mut st = Self::new(tensors, local_dim)?.canonicalize(0)?;
        st.log_scale = T::zero();
        Ok(st)
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn log_scale(&self) -> T {
        self.log_scale
    }

    pub fn tensors(&self) -> &[SiteTensor<T>] {
        &self.tensors
    }

    pub fn tensor(&self, j: usize) -> &SiteTensor<T> {
        &self.tensors[j]
    }

    /// Bond dimensions `[1, chi_1, ..., chi_{N-1}, 1]`.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.tensors.iter().map(|t| t.left).collect();
        v.push(1);
        v
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Replaces the tensor of site `j`; drops the gauge metadata.
    pub fn set_tensor(&mut self, j: usize, t: SiteTensor<T>) -> Result<()> {
        if j >= self.tensors.len() {
            return Err(Error::IndexOutOfRange { index: j, len: self.tensors.len() });
        }
        let old = &self.tensors[j];
        if t.left != old.left || t.right != old.right || t.phys != old.phys {
            return Err(Error::DimensionMismatch(format!("site {j} tensor shape changed")));
        }
        self.tensors[j] = t;
        self.center = None;
        Ok(())
    }

    /// Drops the global log-scale factor, leaving the tensors untouched.
    pub fn with_unit_scale(mut self) -> Self {
        self.log_scale = T::zero();
        self
    }

    /// `(ln |<self|other>|, phase)` with per-site rescaling.
    pub fn inner_log(&self, other: &Self) -> Result<(T, Complex<T>)> {
        if self.n_sites() != other.n_sites() || self.local_dim != other.local_dim {
            return Err(Error::DimensionMismatch("inner product of different chains".into()));
        }
        let mut env = CMatrix::from_element(1, 1, cone::<T>());
        let mut log_acc = T::zero();
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            let mut next = CMatrix::from_element(a.right, b.right, czero());
            for s in 0..self.local_dim {
                let f = matmul(&env, Op::N, &b.slice(s), Op::N);
                gemm(cone(), &a.slice(s), Op::H, &f, Op::N, cone(), &mut next);
            }
            let n = frob2(&next).sqrt();
            if n <= T::zero() {
                return Ok((T::min_value().unwrap_or(-T::one() / T::default_epsilon()), czero()));
            }
            next /= Complex::new(n, T::zero());
            log_acc += n.ln();
            env = next;
        }
        let z = env[(0, 0)];
        let m = crate::scalar::cabs(z);
        if m <= T::zero() {
            return Ok((T::min_value().unwrap_or(-T::one() / T::default_epsilon()), czero()));
        }
        Ok((log_acc + m.ln() + self.log_scale + other.log_scale, z / Complex::new(m, T::zero())))
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        let (l, phase) = self.inner_log(other)?;
        Ok(phase * Complex::new(l.exp(), T::zero()))
    }

    pub fn norm_squared(&self) -> Result<T> {
        Ok(self.inner(self)?.re)
    }

    /// Dense amplitude vector, site 0 most significant.
    pub fn to_dense(&self, max_dim: usize) -> Result<Vec<Complex<T>>> {
        let d = self.local_dim;
        let n = self.n_sites();
        let total = (d as f64).powi(n as i32);
        if total > max_dim as f64 {
            return Err(Error::SizeCap(format!("dense vector of dimension {total} exceeds {max_dim}")));
        }
        let mut m = CMatrix::from_element(1, 1, cone::<T>());
        for t in &self.tensors {
            let rows = m.nrows();
            let mut next = CMatrix::from_element(rows * d, t.right, czero());
            for s in 0..d {
                let part = matmul(&m, Op::N, &t.slice(s), Op::N);
                for i in 0..rows {
                    next.row_mut(i * d + s).copy_from(&part.row(i));
                }
            }
            m = next;
        }
        let f = Complex::new(self.log_scale.exp(), T::zero());
        Ok(m.column(0).iter().map(|z| *z * f).collect())
    }

    /// Exact (or truncated) MPS from a dense vector by successive SVDs.
    pub fn from_dense(amps: &[Complex<T>], n_sites: usize, local_dim: usize, chi_max: usize, cutoff: T) -> Result<Self> {
        let total: usize = (0..n_sites).try_fold(1usize, |acc, _| acc.checked_mul(local_dim)).ok_or_else(|| {
            Error::SizeCap("dense dimension overflows".into())
        })?;
        if amps.len() != total {
            return Err(Error::DimensionMismatch(format!("{} amplitudes for dimension {total}", amps.len())));
        }
        let mut tensors = Vec::with_capacity(n_sites);
        // rest: left_bond x (remaining configurations), site index most significant
        let mut rest = CMatrix::from_row_slice(1, total, amps);
        let mut left = 1usize;
        for j in 0..n_sites {
            let remaining = rest.ncols() / local_dim;
            if j == n_sites - 1 {
                let t = SiteTensor::from_fn(left, local_dim, 1, |a, s, _| rest[(a, s)]);
                tensors.push(t);
                break;
            }
            // rows (s, a), cols remaining
            let mut m = CMatrix::from_element(local_dim * left, remaining, czero());
            for a in 0..left {
                for s in 0..local_dim {
                    for c in 0..remaining {
                        m[(s * left + a, c)] = rest[(a, s * remaining + c)];
                    }
                }
            }
            let svd = crate::linalg::svd_truncated(m, chi_max, cutoff);
            let k = svd.s.len();
            tensors.push(SiteTensor::from_left_matrix(svd.u, local_dim));
            let mut r = svd.vt;
            for (i, sv) in svd.s.iter().enumerate() {
                let mut row = r.row_mut(i);
                row *= Complex::new(*sv, T::zero());
            }
            rest = r;
            left = k;
        }
        Self::new(tensors, local_dim)
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> MatrixProductState<U> {
        MatrixProductState {
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            local_dim: self.local_dim,
            center: self.center,
            log_scale: U::from_f64(self.log_scale.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero),
        }
    }
}
