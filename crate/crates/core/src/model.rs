//! Spin-1 XXZ chain with single-ion anisotropy,
//! `H = sum_i [Sx Sx + Sy Sy + Jz Sz Sz]_{i,i+1} + D sum_i (Sz_i)^2`,
//! with open boundaries (couplings on the `N - 1` bonds).
//!
//! Local basis: index `k` holds `m = +1, -1, 0` for `k = 1, 2, 0`, i.e.
//! `m = k mod 3` read in `{0, 1, -1}`. In this ordering the spin flip
//! `m -> -m` is `k -> -k mod 3`, the action of the qutrit phase-point
//! operator `A_0`, and `Z = diag(1, w, w^2) = w^{Sz}`.

use std::collections::HashMap;

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lanczos_ground, CMatrix};
use crate::scalar::{lit, Real};

/// Local spin projection of basis index `k`.
pub const SPIN_M: [i64; 3] = [0, 1, -1];

/// Basis index of spin projection `m`.
pub fn basis_index(m: i64) -> usize {
    m.rem_euclid(3) as usize
}

/// Parameters of the Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_sites: usize,
    /// Easy-axis anisotropy `Jz`.
    pub jz: f64,
    /// Single-ion anisotropy `D`.
    pub d: f64,
    /// Total `Sz` sector used by exact diagonalization.
    pub magnetization_sector: Option<i64>,
}

impl ModelParams {
    pub fn new(n_sites: usize, jz: f64, d: f64) -> Result<Self> {
        let p = Self { n_sites, jz, d, magnetization_sector: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_sector(mut self, m: i64) -> Self {
        self.magnetization_sector = Some(m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::InvalidArgument("the chain needs at least 2 sites".into()));
        }
        if !self.jz.is_finite() || !self.d.is_finite() {
            return Err(Error::InvalidArgument("couplings must be finite".into()));
        }
        Ok(())
    }
}

/// Spin-1 operators `(Sz, S+, S-)` in the local basis above.
pub fn spin_ops<T: Real>() -> (CMatrix<T>, CMatrix<T>, CMatrix<T>) {
    let z = Complex::new(T::zero(), T::zero());
    let r2 = Complex::new(lit::<T>(2.0).sqrt(), T::zero());
    let mut sz = CMatrix::from_element(3, 3, z);
    sz[(1, 1)] = Complex::new(T::one(), T::zero());
    sz[(2, 2)] = Complex::new(-T::one(), T::zero());
    let mut sp = CMatrix::from_element(3, 3, z);
    // S+ |-1> = sqrt2 |0>, S+ |0> = sqrt2 |+1>
    sp[(0, 2)] = r2;
    sp[(1, 0)] = r2;
    let sm = sp.adjoint();
    (sz, sp, sm)
}

/// A gapless point of the phase diagram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub name: &'static str,
    pub jz: f64,
    pub d: f64,
    pub universality: &'static str,
}

/// The three critical points studied: large-D/XY, Haldane/large-D, Haldane/Neel.
pub fn critical_point_presets() -> [CriticalPoint; 3] {
    [
        CriticalPoint { name: "large-d-xy", jz: -0.183, d: 0.5, universality: "BKT" },
        CriticalPoint { name: "haldane-large-d", jz: 0.5, d: 0.635, universality: "Gaussian" },
        CriticalPoint { name: "haldane-neel", jz: 2.93, d: 2.6, universality: "Ising" },
    ]
}

pub fn preset(name: &str) -> Result<CriticalPoint> {
    critical_point_presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown preset '{name}'")))
}

/// One MPO site tensor: a `left x right` grid of `d x d` operators
/// (`W[wl, wr]_{out, in}`), with the nonzero grid cells listed.
#[derive(Clone, Debug)]
pub struct MpoTensor<T: Real> {
    left: usize,
    right: usize,
    ops: Vec<Option<CMatrix<T>>>,
}

impl<T: Real> MpoTensor<T> {
    pub fn new(left: usize, right: usize) -> Self {
        Self { left, right, ops: vec![None; left * right] }
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn get(&self, wl: usize, wr: usize) -> Option<&CMatrix<T>> {
        self.ops[wl + self.left * wr].as_ref()
    }

    pub fn set(&mut self, wl: usize, wr: usize, op: CMatrix<T>) {
        self.ops[wl + self.left * wr] = Some(op);
    }

    /// Nonzero cells `(wl, wr, op)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, &CMatrix<T>)> {
        self.ops.iter().enumerate().filter_map(move |(i, o)| o.as_ref().map(|m| (i % self.left, i / self.left, m)))
    }
}

/// Matrix product operator with open boundaries.
#[derive(Clone, Debug)]
pub struct MatrixProductOperator<T: Real> {
    tensors: Vec<MpoTensor<T>>,
    local_dim: usize,
}

impl<T: Real> MatrixProductOperator<T> {
    pub fn new(tensors: Vec<MpoTensor<T>>, local_dim: usize) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidArgument("an MPO needs at least one site".into()));
        }
        if tensors[0].left != 1 || tensors[tensors.len() - 1].right != 1 {
            return Err(Error::DimensionMismatch("MPO boundary bonds must have dimension 1".into()));
        }
        for (j, w) in tensors.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::DimensionMismatch(format!("MPO bond {}: {} vs {}", j + 1, w[0].right, w[1].left)));
            }
        }
        for t in &tensors {
            if t.nonzero().any(|(_, _, m)| m.nrows() != local_dim || m.ncols() != local_dim) {
                return Err(Error::DimensionMismatch("MPO operator of wrong size".into()));
            }
        }
        Ok(Self { tensors, local_dim })
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn tensor(&self, j: usize) -> &MpoTensor<T> {
        &self.tensors[j]
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.tensors.iter().map(|t| t.left).collect();
        v.push(1);
        v
    }

    /// Dense operator (site 0 most significant), refused above `max_dim`.
    pub fn to_dense(&self, max_dim: usize) -> Result<CMatrix<T>> {
        let dim = (self.local_dim as f64).powi(self.n_sites() as i32);
        if dim > max_dim as f64 {
            return Err(Error::SizeCap(format!("dense MPO of dimension {dim} exceeds {max_dim}")));
        }
        let one = CMatrix::from_element(1, 1, Complex::new(T::one(), T::zero()));
        let mut acc: Vec<Option<CMatrix<T>>> = vec![Some(one)];
        for t in &self.tensors {
            let mut next: Vec<Option<CMatrix<T>>> = vec![None; t.right];
            for (wl, wr, op) in t.nonzero() {
                if let Some(a) = &acc[wl] {
                    let k = a.kronecker(op);
                    next[wr] = Some(match next[wr].take() {
                        Some(s) => s + k,
                        None => k,
                    });
                }
            }
            acc = next;
        }
        let size = dim as usize;
        Ok(acc.swap_remove(0).unwrap_or_else(|| CMatrix::from_element(size, size, Complex::new(T::zero(), T::zero()))))
    }
}

/// Bond-dimension-5 MPO of the Hamiltonian.
///
/// Bulk tensor (rows: left bond, columns: right bond)
/// ```text
/// [ I        0      0      0      0 ]
/// [ S+       0      0      0      0 ]
/// [ S-       0      0      0      0 ]
/// [ Sz       0      0      0      0 ]
/// [ D Sz^2   S-/2   S+/2   Jz Sz  I ]
/// ```
/// The first site keeps the last row and the last site the first column.
pub fn build_mpo<T: Real>(params: &ModelParams) -> Result<MatrixProductOperator<T>> {
    params.validate()?;
    let n = params.n_sites;
    let (sz, sp, sm) = spin_ops::<T>();
    let id = CMatrix::<T>::identity(3, 3);
    let half = Complex::new(lit::<T>(0.5), T::zero());
    let jz = Complex::new(lit::<T>(params.jz), T::zero());
    let dd = Complex::new(lit::<T>(params.d), T::zero());
    let sz2 = &sz * &sz;
    let bulk = |last_row_only: bool, first_col_only: bool| -> MpoTensor<T> {
        let (l, r) = (if last_row_only { 1 } else { 5 }, if first_col_only { 1 } else { 5 });
        let mut t = MpoTensor::new(l, r);
        let row = |w: usize| if last_row_only { if w == 4 { Some(0) } else { None } } else { Some(w) };
        let col = |w: usize| if first_col_only { if w == 0 { Some(0) } else { None } } else { Some(w) };
        let cells: Vec<(usize, usize, CMatrix<T>)> = vec![
            (0, 0, id.clone()),
            (1, 0, sp.clone()),
            (2, 0, sm.clone()),
            (3, 0, sz.clone()),
            (4, 0, &sz2 * dd),
            (4, 1, &sm * half),
            (4, 2, &sp * half),
            (4, 3, &sz * jz),
            (4, 4, id.clone()),
        ];
        for (wl, wr, op) in cells {
            if let (Some(a), Some(b)) = (row(wl), col(wr)) {
                if op.iter().any(|z| z.re != T::zero() || z.im != T::zero()) {
                    t.set(a, b, op);
                }
            }
        }
        t
    };
    let tensors = (0..n).map(|j| bulk(j == 0, j == n - 1)).collect();
    MatrixProductOperator::new(tensors, 3)
}

/// Maximum number of sites for exact diagonalization.
pub const ED_MAX_SITES: usize = 10;

/// Ground state by sparse Lanczos in the full space or one `Sz` sector.
///
/// Returns the energy and the normalized state as a dense vector over the
/// full `3^N` space (site 0 most significant).
pub fn exact_diagonalization(params: &ModelParams) -> Result<(f64, Vec<Complex<f64>>)> {
    params.validate()?;
    let n = params.n_sites;
    if n > ED_MAX_SITES {
        return Err(Error::SizeCap(format!("exact diagonalization limited to {ED_MAX_SITES} sites, got {n}")));
    }
    let full = 3usize.pow(n as u32);
    let digits = |mut x: usize| -> Vec<usize> {
        let mut v = vec![0; n];
        for k in (0..n).rev() {
            v[k] = x % 3;
            x /= 3;
        }
        v
    };
    let basis: Vec<usize> = (0..full)
        .filter(|&x| match params.magnetization_sector {
            Some(m) => digits(x).iter().map(|&k| SPIN_M[k]).sum::<i64>() == m,
            None => true,
        })
        .collect();
    if basis.is_empty() {
        return Err(Error::InvalidArgument("empty magnetization sector".into()));
    }
    let position: HashMap<usize, usize> = basis.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let pow3: Vec<usize> = (0..n).map(|k| 3usize.pow((n - 1 - k) as u32)).collect();
    // sparse rows: (diagonal, [(column, value)])
    let mut diag = Vec::with_capacity(basis.len());
    let mut offd: Vec<Vec<(usize, f64)>> = Vec::with_capacity(basis.len());
    for &x in &basis {
        let ks = digits(x);
        let ms: Vec<i64> = ks.iter().map(|&k| SPIN_M[k]).collect();
        let mut e = params.d * ms.iter().map(|m| (m * m) as f64).sum::<f64>();
        let mut row = Vec::new();
        for i in 0..n - 1 {
            e += params.jz * (ms[i] * ms[i + 1]) as f64;
            // (S+_i S-_j + S-_i S+_j) / 2 has matrix elements 1 between allowed neighbors
            for (di, dj) in [(1i64, -1i64), (-1, 1)] {
                let (a, b) = (ms[i] + di, ms[i + 1] + dj);
                if a.abs() <= 1 && b.abs() <= 1 {
                    let y = x - ks[i] * pow3[i] - ks[i + 1] * pow3[i + 1]
                        + basis_index(a) * pow3[i]
                        + basis_index(b) * pow3[i + 1];
                    if let Some(&col) = position.get(&y) {
                        row.push((col, 1.0));
                    }
                }
            }
        }
        diag.push(e);
        offd.push(row);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let x0: Vec<Complex<f64>> = (0..basis.len()).map(|_| Complex::new(rng.random::<f64>() - 0.5, 0.0)).collect();
    let res = lanczos_ground(
        |x, y| {
            for (i, yi) in y.iter_mut().enumerate() {
                let mut acc = x[i] * diag[i];
                for &(c, v) in &offd[i] {
                    acc += x[c] * v;
                }
                *yi = acc;
            }
        },
        &x0,
        1e-13,
        120,
        50_000,
    );
    if !res.converged {
        log::warn!("exact diagonalization: Lanczos residual {:e} above tolerance", res.residual);
    }
    let mut psi = vec![Complex::new(0.0, 0.0); full];
    for (i, &x) in basis.iter().enumerate() {
        psi[x] = res.vector[i];
    }
    fix_phase(&mut psi);
    Ok((res.value, psi))
}

/// Rotates a vector so that its largest entry is real and positive.
pub(crate) fn fix_phase(psi: &mut [Complex<f64>]) {
    let big = psi.iter().copied().fold(Complex::new(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
    if big.norm() > 0.0 {
        let ph = big.conj() / big.norm();
        psi.iter_mut().for_each(|z| *z *= ph);
    }
}

/// Random basis configuration with zero total magnetization, built from
/// shuffled neighbor pairs `(0, 0)`, `(+1, -1)` and `(-1, +1)`.
pub fn random_zero_magnetization_config(n_sites: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ms: Vec<i64> = Vec::with_capacity(n_sites);
    for _ in 0..n_sites / 2 {
        match rng.random_range(0..3) {
            0 => ms.extend([0, 0]),
            1 => ms.extend([1, -1]),
            _ => ms.extend([-1, 1]),
        }
    }
    if n_sites % 2 == 1 {
        ms.push(0);
    }
    ms.shuffle(&mut rng);
    ms.into_iter().map(basis_index).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    /// Hamiltonian from explicit Kronecker products, independent of the MPO.
    fn explicit_hamiltonian(p: &ModelParams) -> CMatrix<f64> {
        let (sz, sp, sm) = spin_ops::<f64>();
        let sx = (&sp + &sm) * C::new(0.5, 0.0);
        let sy = (&sp - &sm) * C::new(0.0, -0.5);
        let n = p.n_sites;
        let site = |op: &CMatrix<f64>, j: usize| -> CMatrix<f64> {
            let id = CMatrix::<f64>::identity(3, 3);
            let mut m = CMatrix::<f64>::identity(1, 1);
            for k in 0..n {
                m = m.kronecker(if k == j { op } else { &id });
            }
            m
        };
        let dim = 3usize.pow(n as u32);
        let mut h = CMatrix::<f64>::zeros(dim, dim);
        for i in 0..n - 1 {
            h += site(&sx, i) * site(&sx, i + 1);
            h += site(&sy, i) * site(&sy, i + 1);
            h += site(&sz, i) * site(&sz, i + 1) * C::new(p.jz, 0.0);
        }
        for i in 0..n {
            h += site(&(&sz * &sz), i) * C::new(p.d, 0.0);
        }
        h
    }

    #[test]
    fn spin_algebra() {
        let (sz, sp, sm) = spin_ops::<f64>();
        let comm = &sp * &sm - &sm * &sp;
        assert!((comm - &sz * C::new(2.0, 0.0)).norm() < 1e-14);
        let s2 = &sz * &sz + (&sp * &sm + &sm * &sp) * C::new(0.5, 0.0);
        assert!((s2 - CMatrix::identity(3, 3) * C::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn two_site_heisenberg() {
        let p = ModelParams::new(2, 1.0, 0.0).unwrap();
        let h = build_mpo::<f64>(&p).unwrap().to_dense(1000).unwrap();
        assert!((&h - explicit_hamiltonian(&p)).norm() < 1e-12);
        let e = nalgebra::SymmetricEigen::new(h).eigenvalues.min();
        assert!((e + 2.0).abs() < 1e-12);
        let (ed, _) = exact_diagonalization(&p).unwrap();
        assert!((ed + 2.0).abs() < 1e-10);
        let (ed0, _) = exact_diagonalization(&p.clone().with_sector(0)).unwrap();
        assert!((ed0 + 2.0).abs() < 1e-10);
    }

    #[test]
    fn mpo_matches_explicit_hamiltonian() {
        for (n, jz, d) in [(2, 0.0, 5.0), (3, 2.93, 2.6), (4, -0.183, 0.5), (4, 0.5, 0.635)] {
            let p = ModelParams::new(n, jz, d).unwrap();
            let mpo = build_mpo::<f64>(&p).unwrap();
            let mut want = vec![1];
            want.extend(std::iter::repeat_n(5, n - 1));
            want.push(1);
            assert_eq!(mpo.bond_dims(), want);
            let h = mpo.to_dense(100).unwrap();
            assert!((&h - explicit_hamiltonian(&p)).norm() < 1e-12);
            assert!((&h - h.adjoint()).norm() < 1e-12);
        }
    }

    #[test]
    fn ed_matches_dense_spectrum() {
        let p = ModelParams::new(5, 2.93, 2.6).unwrap();
        let h = explicit_hamiltonian(&p);
        let exact = nalgebra::SymmetricEigen::new(h.clone()).eigenvalues.min();
        let (e, psi) = exact_diagonalization(&p).unwrap();
        assert!((e - exact).abs() < 1e-10);
        let v = nalgebra::DVector::from_vec(psi);
        assert!(((v.adjoint() * &h * &v)[(0, 0)].re - exact).abs() < 1e-9);
    }

    #[test]
    fn sector_restriction() {
        let p = ModelParams::new(4, 1.0, 0.0).unwrap().with_sector(1);
        let (_, psi) = exact_diagonalization(&p).unwrap();
        for (x, z) in psi.iter().enumerate() {
            if z.norm() > 1e-12 {
                let mut y = x;
                let mut m = 0;
                for _ in 0..4 {
                    m += SPIN_M[y % 3];
                    y /= 3;
                }
                assert_eq!(m, 1);
            }
        }
        assert!(exact_diagonalization(&ModelParams::new(11, 1.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn presets_are_exact() {
        let p = critical_point_presets();
        assert_eq!(p.len(), 3);
        assert_eq!((p[0].name, p[0].jz, p[0].d, p[0].universality), ("large-d-xy", -0.183, 0.5, "BKT"));
        assert_eq!((p[1].name, p[1].jz, p[1].d, p[1].universality), ("haldane-large-d", 0.5, 0.635, "Gaussian"));
        assert_eq!((p[2].name, p[2].jz, p[2].d, p[2].universality), ("haldane-neel", 2.93, 2.6, "Ising"));
        assert!(preset("nope").is_err());
    }

    #[test]
    fn zero_magnetization_configs() {
        for seed in 0..20 {
            let c = random_zero_magnetization_config(9, seed);
            assert_eq!(c.iter().map(|&k| SPIN_M[k]).sum::<i64>(), 0);
        }
        assert_eq!(random_zero_magnetization_config(8, 3), random_zero_magnetization_config(8, 3));
    }
}
