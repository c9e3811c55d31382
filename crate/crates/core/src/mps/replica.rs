//! Exact Renyi-2 entropies of arbitrary site subsets by two-replica contraction.
//!
//! The environment carries four bond indices `[k1, b1, k2, b2]` (ket and bra
//! of each replica). Outside the subsystem each replica closes on itself;
//! inside it the physical legs are swapped between replicas, so the final
//! contraction is `Tr(rho_A^2)`. Every site transfer factorizes into two
//! pair transfers of cost `O(d chi^5)`.

use nalgebra::{DMatrixView, DMatrixViewMut};
use num_complex::Complex;

use super::expectation::Environments;
use super::{MatrixProductState, SiteTensor};
use crate::error::{Error, Result};
use crate::linalg::{gemm, CMatrix, Op};
use crate::partition::Partition;
use crate::scalar::{abs2, cone, czero, Real};

/// Largest bond dimension accepted by the replica contraction by default.
pub const DEFAULT_REPLICA_CHI_CAP: usize = 64;

/// Four-index environment, column-major with the first axis fastest.
struct Env4<T: Real> {
    data: Vec<Complex<T>>,
    dims: [usize; 4],
}

impl<T: Real> Env4<T> {
    fn permute(&self, perm: [usize; 4]) -> Self {
        let od = self.dims;
        let nd = [od[perm[0]], od[perm[1]], od[perm[2]], od[perm[3]]];
        let mut ostride = [1usize; 4];
        for k in 1..4 {
            ostride[k] = ostride[k - 1] * od[k - 1];
        }
        let st = [ostride[perm[0]], ostride[perm[1]], ostride[perm[2]], ostride[perm[3]]];
        let mut data = Vec::with_capacity(self.data.len());
        for i3 in 0..nd[3] {
            for i2 in 0..nd[2] {
                for i1 in 0..nd[1] {
                    let base = i1 * st[1] + i2 * st[2] + i3 * st[3];
                    for i0 in 0..nd[0] {
                        data.push(self.data[base + i0 * st[0]]);
                    }
                }
            }
        }
        Self { data, dims: nd }
    }

    /// Applies the single-layer transfer of `a` to the (ket, bra) pair formed
    /// by axes 0 and 1, then moves that pair behind axes 2 and 3.
    fn pair_transfer_rotate(&self, a: &SiteTensor<T>, abar: &[CMatrix<T>]) -> Self {
        let [n0, n1, n2, n3] = self.dims;
        let (l, r) = (a.left(), a.right());
        assert!(n0 == l && n1 == l, "replica environment does not match site tensor");
        let c = n2 * n3;
        let ev = DMatrixView::from_slice(&self.data, l, l * c);
        let mut out = vec![czero::<T>(); r * r * c];
        let mut y = CMatrix::from_element(r, l * c, czero());
        for (s, ab) in abar.iter().enumerate() {
            gemm(cone(), &a.slice(s), Op::T, &ev, Op::N, czero(), &mut y);
            for cc in 0..c {
                let block = y.columns(cc * l, l);
                let mut dst = DMatrixViewMut::from_slice(&mut out[cc * r * r..(cc + 1) * r * r], r, r);
                gemm(cone(), &block, Op::N, ab, Op::N, cone(), &mut dst);
            }
        }
        Self { data: out, dims: [r, r, n2, n3] }.permute([2, 3, 0, 1])
    }

    fn rescale(&mut self) -> T {
        let n = self.data.iter().fold(T::zero(), |acc, z| acc + abs2(*z)).sqrt();
        if n > T::zero() && n.is_finite() {
            let inv = Complex::new(T::one() / n, T::zero());
            self.data.iter_mut().for_each(|z| *z *= inv);
            n.ln()
        } else {
            T::zero()
        }
    }
}

impl<T: Real> MatrixProductState<T> {
    /// Renyi-2 entropy `-ln Tr(rho_A^2)` of the sites in `part`.
    pub fn renyi2_entropy_exact(&self, part: &Partition) -> Result<T> {
        self.renyi2_entropy_exact_with_cap(part, DEFAULT_REPLICA_CHI_CAP)
    }

    pub fn renyi2_entropy_exact_with_cap(&self, part: &Partition, chi_cap: usize) -> Result<T> {
        let env = Environments::new(self);
        self.renyi2_with_env(&env, part, chi_cap)
    }

    pub(crate) fn renyi2_with_env(&self, envs: &Environments<T>, part: &Partition, chi_cap: usize) -> Result<T> {
        let n = self.n_sites();
        if part.last() >= n {
            return Err(Error::IndexOutOfRange { index: part.last(), len: n });
        }
        let (first, last) = (part.first(), part.last());
        let bonds = self.bond_dims();
        let chi = bonds[first..=last + 1].iter().copied().max().unwrap_or(1);
        if chi > chi_cap {
            return Err(Error::ContractionTooLarge(format!(
                "replica contraction with bond dimension {chi} exceeds cap {chi_cap}"
            )));
        }
        let (l, llog) = envs.left(first);
        let kl = l.nrows();
        let mut e = Env4 { data: Vec::with_capacity(kl.pow(4)), dims: [kl; 4] };
        for b2 in 0..kl {
            for k2 in 0..kl {
                for b1 in 0..kl {
                    for k1 in 0..kl {
                        e.data.push(l[(b1, k1)] * l[(b2, k2)]);
                    }
                }
            }
        }
        let mut log_acc = llog + llog + e.rescale();
        for j in first..=last {
            let a = self.tensor(j);
            let abar: Vec<CMatrix<T>> = (0..a.phys()).map(|s| a.slice(s).map(|z| z.conj())).collect();
            e = if part.contains(j) {
                // pair (k1, b2) then (k2, b1)
                e.permute([0, 3, 2, 1]).pair_transfer_rotate(a, &abar).pair_transfer_rotate(a, &abar).permute([0, 3, 2, 1])
            } else {
                e.pair_transfer_rotate(a, &abar).pair_transfer_rotate(a, &abar)
            };
            log_acc += e.rescale();
        }
        let (r, rlog) = envs.right(last + 1);
        let kr = r.nrows();
        let mut acc = czero::<T>();
        let mut idx = 0;
        for b2 in 0..kr {
            for k2 in 0..kr {
                let w = r[(k2, b2)];
                for b1 in 0..kr {
                    for k1 in 0..kr {
                        acc += e.data[idx] * r[(k1, b1)] * w;
                        idx += 1;
                    }
                }
            }
        }
        if !(acc.re > T::zero()) {
            return Err(Error::NullState);
        }
        let two = T::one() + T::one();
        let log_purity = acc.re.ln() + log_acc + rlog + rlog - two * envs.log_norm_sqr();
        Ok(-log_purity)
    }

    /// `S2(A) + S2(B) - S2(A u B)` for disjoint `a`, `b`.
    pub fn mutual_info_renyi2_exact(&self, a: &Partition, b: &Partition) -> Result<T> {
        self.mutual_info_renyi2_exact_with_cap(a, b, DEFAULT_REPLICA_CHI_CAP)
    }

    pub fn mutual_info_renyi2_exact_with_cap(&self, a: &Partition, b: &Partition, chi_cap: usize) -> Result<T> {
        let n = self.n_sites();
        let ab = a.union(b, n)?;
        let env = Environments::new(self);
        let sa = self.renyi2_with_env(&env, a, chi_cap)?;
        let sb = self.renyi2_with_env(&env, b, chi_cap)?;
        let sab = self.renyi2_with_env(&env, &ab, chi_cap)?;
        Ok(sa + sb - sab)
    }
}
