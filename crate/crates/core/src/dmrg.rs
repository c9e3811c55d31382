//! Two-site DMRG for matrix product operators.
//!
//! Left operator environments are stored per MPO bond index as `bra x ket`
//! matrices and right environments as `ket x bra`, following the MPS
//! expectation code. The two-site wave function `theta` is kept as `d^2`
//! blocks `theta_{s1 s2}` of shape `left x right`, flattened block after
//! block (each block column-major) for the Lanczos solver.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, lanczos_ground, matmul, svd_truncated, CMatrix, Op};
use crate::model::{random_zero_magnetization_config, MatrixProductOperator, MpoTensor};
use crate::mps::{MatrixProductState, SiteTensor};
use crate::scalar::{cone, czero, lit, to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmrgSettings {
    pub chi_max: usize,
    pub n_sweeps: usize,
    /// Convergence threshold on the energy change between full sweeps.
    pub energy_tol: f64,
    /// Relative Lanczos residual tolerance.
    pub eigensolver_tol: f64,
    /// Matrix-vector products allowed per local eigenproblem.
    pub eigensolver_max_iter: usize,
    /// Normalized squared Schmidt weight below which values are dropped.
    pub cutoff: f64,
}

impl Default for DmrgSettings {
    fn default() -> Self {
        Self { chi_max: 64, n_sweeps: 10, energy_tol: 1e-10, eigensolver_tol: 1e-12, eigensolver_max_iter: 200, cutoff: 1e-14 }
    }
}

impl DmrgSettings {
    pub fn with_chi(chi_max: usize) -> Self {
        Self { chi_max, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi_max == 0 {
            return Err(Error::InvalidArgument("chi_max must be >= 1".into()));
        }
        if self.n_sweeps == 0 || self.eigensolver_max_iter == 0 {
            return Err(Error::InvalidArgument("n_sweeps and eigensolver_max_iter must be >= 1".into()));
        }
        if !(self.energy_tol > 0.0 && self.eigensolver_tol > 0.0) || !(self.cutoff >= 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Ground state found by [`dmrg_ground_state`] with its diagnostics.
#[derive(Clone, Debug)]
pub struct DmrgResult<T: Real> {
    /// Normalized, right-canonical (center 0) state.
    pub state: MatrixProductState<T>,
    pub energy: f64,
    pub converged: bool,
    /// Energy at the end of each full sweep.
    pub sweep_energies: Vec<f64>,
    /// Largest discarded weight of any truncation in the last sweep.
    pub max_discarded: f64,
    /// Worst Lanczos residual of the last sweep.
    pub max_residual: f64,
}

/// Nonzero MPO entries `(wl, wr, s, t, value)`.
fn mpo_entries<T: Real>(w: &MpoTensor<T>) -> Vec<(usize, usize, usize, usize, Complex<T>)> {
    let mut out = Vec::new();
    for (wl, wr, op) in w.nonzero() {
        for t in 0..op.ncols() {
            for s in 0..op.nrows() {
                let v = op[(s, t)];
                if v != czero() {
                    out.push((wl, wr, s, t, v));
                }
            }
        }
    }
    out
}

/// `L'[w'] = sum W[w,w']_{st} A^{s+} L[w] A^t`.
pub fn mpo_transfer_left<T: Real>(env: &[CMatrix<T>], a: &SiteTensor<T>, w: &MpoTensor<T>) -> Vec<CMatrix<T>> {
    let d = a.phys();
    let f: Vec<Vec<CMatrix<T>>> =
        env.iter().map(|l| (0..d).map(|t| matmul(l, Op::N, &a.slice(t), Op::N)).collect()).collect();
    let mut h: Vec<Vec<Option<CMatrix<T>>>> = vec![vec![None; d]; w.right()];
    for (wl, wr, s, t, v) in mpo_entries(w) {
        let slot = &mut h[wr][s];
        match slot {
            Some(m) => m.zip_apply(&f[wl][t], |x, y| *x += v * y),
            None => *slot = Some(&f[wl][t] * v),
        }
    }
    h.into_iter()
        .map(|row| {
            let mut out = CMatrix::from_element(a.right(), a.right(), czero());
            for (s, m) in row.into_iter().enumerate() {
                if let Some(m) = m {
                    gemm(cone(), &a.slice(s), Op::H, &m, Op::N, cone(), &mut out);
                }
            }
            out
        })
        .collect()
}

/// `R[w] = sum W[w,w']_{st} A^t R'[w'] A^{s+}`.
pub fn mpo_transfer_right<T: Real>(env: &[CMatrix<T>], a: &SiteTensor<T>, w: &MpoTensor<T>) -> Vec<CMatrix<T>> {
    let d = a.phys();
    let g: Vec<Vec<CMatrix<T>>> =
        env.iter().map(|r| (0..d).map(|s| matmul(r, Op::N, &a.slice(s), Op::H)).collect()).collect();
    let mut h: Vec<Vec<Option<CMatrix<T>>>> = vec![vec![None; d]; w.left()];
    for (wl, wr, s, t, v) in mpo_entries(w) {
        let slot = &mut h[wl][t];
        match slot {
            Some(m) => m.zip_apply(&g[wr][s], |x, y| *x += v * y),
            None => *slot = Some(&g[wr][s] * v),
        }
    }
    h.into_iter()
        .map(|row| {
            let mut out = CMatrix::from_element(a.left(), a.left(), czero());
            for (t, m) in row.into_iter().enumerate() {
                if let Some(m) = m {
                    gemm(cone(), &a.slice(t), Op::N, &m, Op::N, cone(), &mut out);
                }
            }
            out
        })
        .collect()
}

/// `<psi|H|psi> / <psi|psi>`.
pub fn mpo_expectation<T: Real>(state: &MatrixProductState<T>, mpo: &MatrixProductOperator<T>) -> Result<f64> {
    if state.n_sites() != mpo.n_sites() || state.local_dim() != mpo.local_dim() {
        return Err(Error::DimensionMismatch("state and operator differ in size".into()));
    }
    let psi = state.normalized()?;
    let mut env = vec![CMatrix::from_element(1, 1, cone())];
    for j in 0..psi.n_sites() {
        env = mpo_transfer_left(&env, psi.tensor(j), mpo.tensor(j));
    }
    Ok(to_f64(env[0][(0, 0)].re))
}

struct TwoSite<'a, T: Real> {
    left: &'a [CMatrix<T>],
    right: &'a [CMatrix<T>],
    w1: Vec<(usize, usize, usize, usize, Complex<T>)>,
    w2: Vec<(usize, usize, usize, usize, Complex<T>)>,
    mid: usize,
    d: usize,
    l: usize,
    r: usize,
}

impl<T: Real> TwoSite<'_, T> {
    fn block(&self, x: &[Complex<T>], k: usize) -> CMatrix<T> {
        let n = self.l * self.r;
        CMatrix::from_column_slice(self.l, self.r, &x[k * n..(k + 1) * n])
    }

    fn apply(&self, x: &[Complex<T>], y: &mut [Complex<T>]) {
        let (d, l, r) = (self.d, self.l, self.r);
        let theta: Vec<CMatrix<T>> = (0..d * d).map(|k| self.block(x, k)).collect();
        // X[w0][t1 d + t2] = L[w0] theta_{t1 t2}
        let xs: Vec<Vec<CMatrix<T>>> =
            self.left.iter().map(|lw| theta.iter().map(|th| matmul(lw, Op::N, th, Op::N)).collect()).collect();
        let zero = || CMatrix::from_element(l, r, czero());
        let mut ys: Vec<Vec<Option<CMatrix<T>>>> = vec![vec![None; d * d]; self.mid];
        for &(w0, w1, s1, t1, v) in &self.w1 {
            for t2 in 0..d {
                let src = &xs[w0][t1 * d + t2];
                ys[w1][s1 * d + t2].get_or_insert_with(zero).zip_apply(src, |a, b| *a += v * b);
            }
        }
        let mut zs: Vec<Vec<Option<CMatrix<T>>>> = vec![vec![None; d * d]; self.right.len()];
        for &(w1, w2, s2, t2, v) in &self.w2 {
            for s1 in 0..d {
                if let Some(src) = &ys[w1][s1 * d + t2] {
                    zs[w2][s1 * d + s2].get_or_insert_with(zero).zip_apply(src, |a, b| *a += v * b);
                }
            }
        }
        let n = l * r;
        for k in 0..d * d {
            let mut out = zero();
            for (w2, rw) in self.right.iter().enumerate() {
                if let Some(z) = &zs[w2][k] {
                    gemm(cone(), z, Op::N, rw, Op::N, cone(), &mut out);
                }
            }
            y[k * n..(k + 1) * n].copy_from_slice(out.as_slice());
        }
    }
}

/// Initial product state for the sweeps: a seeded zero-magnetization
/// configuration for spin-1 chains, a seeded random configuration otherwise.
fn initial_state<T: Real>(mpo: &MatrixProductOperator<T>, seed: u64) -> Result<MatrixProductState<T>> {
    let n = mpo.n_sites();
    let d = mpo.local_dim();
    let config = if d == 3 {
        random_zero_magnetization_config(n, seed)
    } else {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..d)).collect()
    };
    MatrixProductState::product_state(&config, d)
}

/// Two-site DMRG from a seeded product state.
pub fn dmrg_ground_state<T: Real>(
    mpo: &MatrixProductOperator<T>,
    settings: &DmrgSettings,
    seed: u64,
) -> Result<DmrgResult<T>> {
    let init = initial_state(mpo, seed)?;
    dmrg_from_state(mpo, settings, &init)
}

/// Two-site DMRG starting from `init`.
pub fn dmrg_from_state<T: Real>(
    mpo: &MatrixProductOperator<T>,
    settings: &DmrgSettings,
    init: &MatrixProductState<T>,
) -> Result<DmrgResult<T>> {
    settings.validate()?;
    let n = mpo.n_sites();
    let d = mpo.local_dim();
    if init.n_sites() != n || init.local_dim() != d {
        return Err(Error::DimensionMismatch("initial state and operator differ in size".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("two-site DMRG needs at least 2 sites".into()));
    }
    let cutoff: T = lit(settings.cutoff);
    let tol: T = lit(settings.eigensolver_tol);
    let mut tensors: Vec<SiteTensor<T>> = init.canonicalize(0)?.tensors().to_vec();

    let unit = || vec![CMatrix::from_element(1, 1, cone::<T>())];
    let mut lenv: Vec<Vec<CMatrix<T>>> = vec![Vec::new(); n + 1];
    let mut renv: Vec<Vec<CMatrix<T>>> = vec![Vec::new(); n + 1];
    lenv[0] = unit();
    renv[n] = unit();
    for j in (1..n).rev() {
        renv[j] = mpo_transfer_right(&renv[j + 1], &tensors[j], mpo.tensor(j));
    }

    let mut sweep_energies = Vec::new();
    let mut energy = f64::INFINITY;
    let mut converged = false;
    let mut max_discarded = 0.0;
    let mut max_residual = 0.0;

    let optimize = |i: usize,
                        to_right: bool,
                        tensors: &mut Vec<SiteTensor<T>>,
                        lenv: &[Vec<CMatrix<T>>],
                        renv: &[Vec<CMatrix<T>>]|
     -> (f64, f64, f64) {
        let (a1, a2) = (&tensors[i], &tensors[i + 1]);
        let (l, r) = (a1.left(), a2.right());
        let mut x0 = Vec::with_capacity(d * d * l * r);
        for s1 in 0..d {
            for s2 in 0..d {
                let b = matmul(&a1.slice(s1), Op::N, &a2.slice(s2), Op::N);
                x0.extend_from_slice(b.as_slice());
            }
        }
        let op = TwoSite {
            left: &lenv[i],
            right: &renv[i + 2],
            w1: mpo_entries(mpo.tensor(i)),
            w2: mpo_entries(mpo.tensor(i + 1)),
            mid: mpo.tensor(i).right(),
            d,
            l,
            r,
        };
        let res = lanczos_ground(|x, y| op.apply(x, y), &x0, tol, 40, settings.eigensolver_max_iter);
        // theta as a (d l) x (d r) matrix, row s1 l + a, column s2 r + b
        let mut m = CMatrix::from_element(d * l, d * r, czero());
        for s1 in 0..d {
            for s2 in 0..d {
                let b = op.block(&res.vector, s1 * d + s2);
                m.view_mut((s1 * l, s2 * r), (l, r)).copy_from(&b);
            }
        }
        let svd = svd_truncated(m, settings.chi_max, cutoff);
        let kept: T = svd.s.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
        let mut u = svd.u;
        let mut vt = svd.vt;
        if to_right {
            for (k, &s) in svd.s.iter().enumerate() {
                vt.row_mut(k).scale_mut(s / kept);
            }
        } else {
            for (k, &s) in svd.s.iter().enumerate() {
                u.column_mut(k).scale_mut(s / kept);
            }
        }
        tensors[i] = SiteTensor::from_left_matrix(u, d);
        tensors[i + 1] = SiteTensor::from_right_matrix(&vt, d);
        (to_f64(res.value), to_f64(svd.discarded), to_f64(res.residual))
    };

    for sweep in 0..settings.n_sweeps {
        let mut disc: f64 = 0.0;
        let mut resid: f64 = 0.0;
        let mut e = energy;
        for i in 0..n - 1 {
            let (ei, di, ri) = optimize(i, true, &mut tensors, &lenv, &renv);
            e = ei;
            disc = disc.max(di);
            resid = resid.max(ri);
            if i + 1 < n - 1 {
                lenv[i + 1] = mpo_transfer_left(&lenv[i], &tensors[i], mpo.tensor(i));
            }
        }
        for i in (0..n - 1).rev() {
            let (ei, di, ri) = optimize(i, false, &mut tensors, &lenv, &renv);
            e = ei;
            disc = disc.max(di);
            resid = resid.max(ri);
            if i > 0 {
                renv[i + 1] = mpo_transfer_right(&renv[i + 2], &tensors[i + 1], mpo.tensor(i + 1));
            }
        }
        log::debug!("dmrg sweep {sweep}: energy {e:.14} discarded {disc:e} residual {resid:e}");
        max_discarded = disc;
        max_residual = resid;
        let change = (energy - e).abs();
        sweep_energies.push(e);
        energy = e;
        if sweep > 0 && change < settings.energy_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("dmrg: energy not converged after {} sweeps", settings.n_sweeps);
    }
    let state = MatrixProductState::new(tensors, d)?.canonicalize(0)?.with_unit_scale();
    Ok(DmrgResult { state, energy, converged, sweep_energies, max_discarded, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_mpo, critical_point_presets, exact_diagonalization, spin_ops, ModelParams};

    fn total_sz(psi: &MatrixProductState<f64>) -> f64 {
        let (sz, _, _) = spin_ops::<f64>();
        (0..psi.n_sites()).map(|j| psi.expectation_local_ops(&[(j, sz.clone())]).unwrap().re).sum()
    }

    #[test]
    fn haldane_neel_n8_matches_ed() {
        let p = ModelParams::new(8, 2.93, 2.6).unwrap();
        let mpo = build_mpo::<f64>(&p).unwrap();
        let res = dmrg_ground_state(&mpo, &DmrgSettings::with_chi(64), 1).unwrap();
        let (ed, _) = exact_diagonalization(&p.clone().with_sector(0)).unwrap();
        assert!(((res.energy - ed) / ed).abs() < 1e-8, "{} vs {ed}", res.energy);
        assert!(res.state.max_bond() <= 64);
        assert!(res.converged);
        let e = mpo_expectation(&res.state, &mpo).unwrap();
        assert!(e >= ed - 1e-9);
        assert!(((e - ed) / ed).abs() < 1e-8);
        for w in res.sweep_energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn large_d_limit_is_product_of_zeros() {
        let p = ModelParams::new(4, 1.0, 50.0).unwrap();
        let mpo = build_mpo::<f64>(&p).unwrap();
        let res = dmrg_ground_state(&mpo, &DmrgSettings::with_chi(16), 2).unwrap();
        let zero = MatrixProductState::<f64>::product_state(&[0; 4], 3).unwrap();
        assert!(res.state.inner(&zero).unwrap().norm_sqr() > 0.999);
        let (ed, _) = exact_diagonalization(&p).unwrap();
        assert!((res.energy - ed).abs() < 1e-9 * ed.abs().max(1.0));
    }

    #[test]
    fn presets_stay_in_zero_magnetization_and_bound_ed() {
        for cp in critical_point_presets() {
            let p = ModelParams::new(6, cp.jz, cp.d).unwrap();
            let mpo = build_mpo::<f64>(&p).unwrap();
            let res = dmrg_ground_state(&mpo, &DmrgSettings::with_chi(32), 5).unwrap();
            let (ed, _) = exact_diagonalization(&p.clone().with_sector(0)).unwrap();
            assert!(res.energy >= ed - 1e-9, "{}: {} < {ed}", cp.name, res.energy);
            assert!((res.energy - ed).abs() < 1e-8 * ed.abs());
            assert!(total_sz(&res.state).abs() < 1e-8);
        }
    }

    #[test]
    fn truncated_bonds_respect_chi() {
        let p = ModelParams::new(10, 0.5, 0.635).unwrap();
        let mpo = build_mpo::<f64>(&p).unwrap();
        let res = dmrg_ground_state(&mpo, &DmrgSettings { chi_max: 4, n_sweeps: 3, ..Default::default() }, 0).unwrap();
        assert!(res.state.max_bond() <= 4);
        assert_eq!(res.sweep_energies.len().min(3), res.sweep_energies.len());
        assert_eq!(res.state.center(), Some(0));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = ModelParams::new(6, 0.5, 0.635).unwrap();
        let mpo = build_mpo::<f64>(&p).unwrap();
        let s = DmrgSettings::with_chi(8);
        let a = dmrg_ground_state(&mpo, &s, 9).unwrap();
        let b = dmrg_ground_state(&mpo, &s, 9).unwrap();
        assert_eq!(a.sweep_energies, b.sweep_energies);
    }

    #[test]
    fn rejects_bad_settings() {
        let p = ModelParams::new(4, 1.0, 0.0).unwrap();
        let mpo = build_mpo::<f64>(&p).unwrap();
        assert!(dmrg_ground_state(&mpo, &DmrgSettings { chi_max: 0, ..Default::default() }, 0).is_err());
    }
}
