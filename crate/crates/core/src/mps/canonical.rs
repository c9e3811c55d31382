//! Gauge fixing, truncation and Schmidt spectra.

use nalgebra::QR;
use num_complex::Complex;

use super::{MatrixProductState, SiteTensor};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, svd_truncated, CMatrix};
use crate::scalar::{creal, Real};

/// Schmidt values across one bond, descending and normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtSpectrum<T: Real> {
    /// Bond index: the cut sits between sites `cut - 1` and `cut`.
    pub cut: usize,
    pub values: Vec<T>,
}

impl<T: Real> SchmidtSpectrum<T> {
    /// Von Neumann entropy `-sum p ln p` with `p = lambda^2`.
    pub fn von_neumann(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &l| {
            let p = l * l;
            if p > T::zero() {
                acc - p * p.ln()
            } else {
                acc
            }
        })
    }

    /// Renyi-2 entropy `-ln sum p^2`.
    pub fn renyi2(&self) -> T {
        -self.values.iter().fold(T::zero(), |acc, &l| acc + l * l * l * l).ln()
    }
}

fn left_qr<T: Real>(t: &SiteTensor<T>) -> (SiteTensor<T>, CMatrix<T>) {
    let qr = QR::new(t.left_matrix().clone());
    let q = qr.q();
    let r = qr.r();
    (SiteTensor::from_left_matrix(q, t.phys()), r)
}

/// `t = L * Q` with `Q` a right isometry; returns `(Q, L)`.
fn right_lq<T: Real>(t: &SiteTensor<T>) -> (SiteTensor<T>, CMatrix<T>) {
    let m = t.right_matrix();
    let qr = QR::new(m.adjoint());
    let q = qr.q().adjoint();
    let l = qr.r().adjoint();
    (SiteTensor::from_right_matrix(&q, t.phys()), l)
}

impl<T: Real> MatrixProductState<T> {
    /// Mixed-canonical form with orthogonality center `center`.
    ///
    /// Sites left of the center become left isometries, sites right of it
    /// right isometries; the center tensor is normalized and the removed norm
    /// goes into `log_scale`, so the represented vector is unchanged.
    pub fn canonicalize(&self, center: usize) -> Result<Self> {
        let n = self.n_sites();
        if center >= n {
            return Err(Error::IndexOutOfRange { index: center, len: n });
        }
        let mut tensors = self.tensors.clone();
        let mut log_scale = self.log_scale;
        for j in 0..center {
            let (q, r) = left_qr(&tensors[j]);
            tensors[j] = q;
            tensors[j + 1] = tensors[j + 1].absorb_left(&r);
            log_scale += renormalize(&mut tensors[j + 1])?;
        }
        for j in (center + 1..n).rev() {
            let (q, l) = right_lq(&tensors[j]);
            tensors[j] = q;
            tensors[j - 1] = tensors[j - 1].absorb_right(&l);
            log_scale += renormalize(&mut tensors[j - 1])?;
        }
        log_scale += renormalize(&mut tensors[center])?;
        Self::with_gauge(tensors, self.local_dim, Some(center), log_scale)
    }

    /// Normalized copy (unit norm, same gauge).
    pub fn normalized(&self) -> Result<Self> {
        match self.center {
            Some(c) => {
                let mut s = self.clone();
                renormalize(&mut s.tensors[c])?;
                s.log_scale = T::zero();
                Ok(s)
            }
            None => Ok(self.canonicalize(0)?.with_unit_scale()),
        }
    }

    /// Truncates every bond to at most `chi_max` Schmidt values, dropping
    /// values whose normalized squared weight is at most `cutoff`.
    ///
    /// Returns the normalized, right-canonical (center 0) result and the sum
    /// of discarded squared Schmidt values over all bonds.
    pub fn compress(&self, chi_max: usize, cutoff: T) -> Result<(Self, T)> {
        if chi_max == 0 {
            return Err(Error::InvalidArgument("chi_max must be >= 1".into()));
        }
        if cutoff < T::zero() {
            return Err(Error::InvalidArgument("cutoff must be >= 0".into()));
        }
        let n = self.n_sites();
        let st = self.canonicalize(n - 1)?;
        let d = self.local_dim;
        let mut tensors = st.tensors;
        let mut discarded = T::zero();
        for j in (1..n).rev() {
            let m = tensors[j].right_matrix();
            let svd = svd_truncated(m, chi_max, cutoff);
            discarded += svd.discarded;
            tensors[j] = SiteTensor::from_right_matrix(&svd.vt, d);
            let mut us = svd.u;
            for (k, s) in svd.s.iter().enumerate() {
                let mut col = us.column_mut(k);
                col *= creal(*s);
            }
            tensors[j - 1] = tensors[j - 1].absorb_right(&us);
            renormalize(&mut tensors[j - 1])?;
        }
        renormalize(&mut tensors[0])?;
        Ok((Self::with_gauge(tensors, d, Some(0), T::zero())?, discarded))
    }

    /// Schmidt values across bond `cut` (between sites `cut - 1` and `cut`).
    pub fn schmidt_spectrum(&self, cut: usize) -> Result<SchmidtSpectrum<T>> {
        let n = self.n_sites();
        if cut == 0 || cut >= n {
            return Err(Error::IndexOutOfRange { index: cut, len: n });
        }
        let st = if self.center == Some(cut - 1) { self.clone() } else { self.canonicalize(cut - 1)? };
        let mut values = singular_values(st.tensors[cut - 1].left_matrix().clone());
        let total = values.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
        for v in values.iter_mut() {
            *v /= total;
        }
        values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Ok(SchmidtSpectrum { cut, values })
    }

    /// Von Neumann entanglement entropy (natural log) across bond `cut`.
    pub fn entanglement_entropy(&self, cut: usize) -> Result<T> {
        Ok(self.schmidt_spectrum(cut)?.von_neumann())
    }

    /// Checks the isometry conditions implied by `center` to tolerance `tol`.
    pub fn is_canonical(&self, tol: T) -> bool {
        let Some(c) = self.center else { return false };
        let id_err = |m: CMatrix<T>| -> T {
            let k = m.nrows();
            let mut e = T::zero();
            for i in 0..k {
                for j in 0..k {
                    let target = if i == j { T::one() } else { T::zero() };
                    let z = m[(i, j)] - creal(target);
                    e += z.re * z.re + z.im * z.im;
                }
            }
            e.sqrt()
        };
        for j in 0..c {
            let a = self.tensors[j].left_matrix();
            if id_err(a.adjoint() * a) > tol {
                return false;
            }
        }
        for j in c + 1..self.n_sites() {
            let b = self.tensors[j].right_matrix();
            if id_err(&b * b.adjoint()) > tol {
                return false;
            }
        }
        true
    }
}

/// Scales a tensor to unit Frobenius norm and returns the log of the old norm.
pub(crate) fn renormalize<T: Real>(t: &mut SiteTensor<T>) -> Result<T> {
    let nrm = t.norm_sqr().sqrt();
    if !(nrm > T::zero()) || !nrm.is_finite() {
        return Err(Error::NullState);
    }
    t.scale(Complex::new(T::one() / nrm, T::zero()));
    Ok(nrm.ln())
}
