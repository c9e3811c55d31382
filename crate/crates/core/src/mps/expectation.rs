//! Transfer-matrix contractions and local expectation values.
//!
//! Left environments are stored as `bra x ket` matrices and right
//! environments as `ket x bra`, so `<O> = Tr(L_k R_k)` at any bond `k`.

use num_complex::Complex;

use super::{MatrixProductState, SiteTensor};
use crate::error::{Error, Result};
use crate::linalg::{frob2, gemm, matmul, CMatrix, Op};
use crate::scalar::{cone, czero, Real};

/// `L' = sum_{s,t} O_st A^{s+} L A^t`; `op = None` is the identity.
pub fn transfer_left<T: Real>(env: &CMatrix<T>, a: &SiteTensor<T>, op: Option<&CMatrix<T>>) -> CMatrix<T> {
    let d = a.phys();
    let mut out = CMatrix::from_element(a.right(), a.right(), czero());
    let f: Vec<CMatrix<T>> = (0..d).map(|t| matmul(env, Op::N, &a.slice(t), Op::N)).collect();
    match op {
        None => {
            for (s, ft) in f.iter().enumerate() {
                gemm(cone(), &a.slice(s), Op::H, ft, Op::N, cone(), &mut out);
            }
        }
        Some(o) => {
            for t in 0..d {
                for s in 0..d {
                    let w = o[(s, t)];
                    if w != czero() {
                        gemm(w, &a.slice(s), Op::H, &f[t], Op::N, cone(), &mut out);
                    }
                }
            }
        }
    }
    out
}

/// `R' = sum_{s,t} O_st A^t R A^{s+}`; `op = None` is the identity.
pub fn transfer_right<T: Real>(env: &CMatrix<T>, a: &SiteTensor<T>, op: Option<&CMatrix<T>>) -> CMatrix<T> {
    let d = a.phys();
    let mut out = CMatrix::from_element(a.left(), a.left(), czero());
    let g: Vec<CMatrix<T>> = (0..d).map(|s| matmul(env, Op::N, &a.slice(s), Op::H)).collect();
    match op {
        None => {
            for (t, gt) in g.iter().enumerate() {
                gemm(cone(), &a.slice(t), Op::N, gt, Op::N, cone(), &mut out);
            }
        }
        Some(o) => {
            for t in 0..d {
                for s in 0..d {
                    let w = o[(s, t)];
                    if w != czero() {
                        gemm(w, &a.slice(t), Op::N, &g[s], Op::N, cone(), &mut out);
                    }
                }
            }
        }
    }
    out
}

/// Divides `m` by its Frobenius norm and returns the log of that norm.
pub(crate) fn rescale<T: Real>(m: &mut CMatrix<T>) -> T {
    let n = frob2(m).sqrt();
    if n > T::zero() && n.is_finite() {
        *m /= Complex::new(n, T::zero());
        n.ln()
    } else {
        T::zero()
    }
}

/// Identity (norm) environments on every bond, each stored with a log scale.
#[derive(Clone, Debug)]
pub struct Environments<T: Real> {
    left: Vec<CMatrix<T>>,
    left_log: Vec<T>,
    right: Vec<CMatrix<T>>,
    right_log: Vec<T>,
}

impl<T: Real> Environments<T> {
    pub fn new(state: &MatrixProductState<T>) -> Self {
        let n = state.n_sites();
        let mut left = Vec::with_capacity(n + 1);
        let mut left_log = Vec::with_capacity(n + 1);
        left.push(CMatrix::from_element(1, 1, cone()));
        left_log.push(T::zero());
        for j in 0..n {
            let mut e = transfer_left(&left[j], state.tensor(j), None);
            let lg = rescale(&mut e) + left_log[j];
            left.push(e);
            left_log.push(lg);
        }
        let mut right = vec![CMatrix::from_element(1, 1, cone()); n + 1];
        let mut right_log = vec![T::zero(); n + 1];
        for j in (0..n).rev() {
            let mut e = transfer_right(&right[j + 1], state.tensor(j), None);
            right_log[j] = rescale(&mut e) + right_log[j + 1];
            right[j] = e;
        }
        Self { left, left_log, right, right_log }
    }

    /// Left environment of sites `0..k` and its log scale.
    pub fn left(&self, k: usize) -> (&CMatrix<T>, T) {
        (&self.left[k], self.left_log[k])
    }

    /// Right environment of sites `k..N` and its log scale.
    pub fn right(&self, k: usize) -> (&CMatrix<T>, T) {
        (&self.right[k], self.right_log[k])
    }

    pub fn n_sites(&self) -> usize {
        self.left.len() - 1
    }

    /// `ln <psi|psi>` of the tensors (excluding the state's `log_scale`).
    pub fn log_norm_sqr(&self) -> T {
        self.right[0][(0, 0)].re.ln() + self.right_log[0]
    }

    /// Normalized `<psi| prod_j O_j |psi>` for operators on sorted, distinct sites.
    pub fn expectation(&self, state: &MatrixProductState<T>, ops: &[(usize, &CMatrix<T>)]) -> Result<Complex<T>> {
        let n = state.n_sites();
        if ops.is_empty() {
            return Ok(cone());
        }
        for w in ops.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidArgument("operator sites must be sorted and distinct".into()));
            }
        }
        let d = state.local_dim();
        for &(j, o) in ops {
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, len: n });
            }
            if o.nrows() != d || o.ncols() != d {
                return Err(Error::DimensionMismatch(format!("operator on site {j} is not {d}x{d}")));
            }
        }
        let first = ops[0].0;
        let last = ops[ops.len() - 1].0;
        let (l0, mut log_acc) = self.left(first);
        let mut env = l0.clone();
        let mut k = 0;
        for j in first..=last {
            let op = if ops[k].0 == j {
                k += 1;
                Some(ops[k - 1].1)
            } else {
                None
            };
            env = transfer_left(&env, state.tensor(j), op);
            log_acc += rescale(&mut env);
        }
        let (r, rlog) = self.right(last + 1);
        let mut tr = czero::<T>();
        for a in 0..env.nrows() {
            for b in 0..env.ncols() {
                tr += env[(a, b)] * r[(b, a)];
            }
        }
        let scale = (log_acc + rlog - self.log_norm_sqr()).exp();
        Ok(tr * Complex::new(scale, T::zero()))
    }
}

impl<T: Real> MatrixProductState<T> {
    /// Normalized expectation value of a product of single-site operators.
    pub fn expectation_local_ops(&self, ops: &[(usize, CMatrix<T>)]) -> Result<Complex<T>> {
        let mut sorted: Vec<(usize, &CMatrix<T>)> = ops.iter().map(|(j, o)| (*j, o)).collect();
        sorted.sort_by_key(|p| p.0);
        Environments::new(self).expectation(self, &sorted)
    }
}
