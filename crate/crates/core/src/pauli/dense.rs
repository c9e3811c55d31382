//! Brute-force dense oracles for small systems.
//!
//! States are dense amplitude vectors with site 0 as the most significant
//! digit. All routines here are exponential in the number of sites and
//! refuse inputs above fixed caps.

use std::io::Write;

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex;

use super::{PauliString, PhasePointLabel, QuditAlgebra};
use crate::error::{Error, Result};
use crate::linalg::{matmul, CMatrix, Op};
use crate::partition::Partition;

type C = Complex<f64>;

/// Largest Hilbert-space dimension accepted for Pauli spectra (`3^6`).
pub const MAX_SPECTRUM_DIM: usize = 729;
/// Largest Hilbert-space dimension accepted for phase-space work (`3^6`).
pub const MAX_PHASE_SPACE_DIM: usize = 729;
/// Entries of `|Tr(rho P)|^2` below this are treated as exact zeros.
const ZERO_WEIGHT: f64 = 1e-26;

/// Dense input: a pure state vector or a density matrix.
#[derive(Clone, Copy, Debug)]
pub enum DenseInput<'a> {
    Vector(&'a [C]),
    Matrix(&'a CMatrix<f64>),
}

fn n_sites_of(dim: usize, d: usize) -> Result<usize> {
    let mut n = 0;
    let mut x = 1usize;
    while x < dim {
        x *= d;
        n += 1;
    }
    if x != dim {
        return Err(Error::DimensionMismatch(format!("dimension {dim} is not a power of {d}")));
    }
    Ok(n)
}

fn pow(d: usize, n: usize) -> usize {
    d.pow(n as u32)
}

/// `Tr(rho O_alpha)` for every product `O_alpha = (x)_k ops[alpha_k]`, computed
/// by one `d^2 x d^2` basis change per site. Result index is base `d^2` with
/// site 0 most significant.
fn product_basis_expectations(rho: &CMatrix<f64>, n: usize, d: usize, ops: &[CMatrix<f64>]) -> Vec<C> {
    let d2 = d * d;
    let dim = pow(d, n);
    let mut spread_row = vec![0usize; dim];
    let mut spread_col = vec![0usize; dim];
    for idx in 0..dim {
        let (mut x, mut r, mut c, mut w) = (idx, 0usize, 0usize, 1usize);
        for _ in 0..n {
            let digit = x % d;
            x /= d;
            r += digit * d * w;
            c += digit * w;
            w *= d2;
        }
        spread_row[idx] = r;
        spread_col[idx] = c;
    }
    let mut t = vec![C::new(0.0, 0.0); pow(d2, n)];
    for j in 0..dim {
        for i in 0..dim {
            t[spread_row[i] + spread_col[j]] = rho[(i, j)];
        }
    }
    // basis[alpha][(i, j)] = (O_alpha)_{j i}
    let basis: Vec<Vec<C>> = ops.iter().map(|o| (0..d2).map(|p| o[(p % d, p / d)]).collect()).collect();
    let mut buf = vec![C::new(0.0, 0.0); d2];
    for k in 0..n {
        let stride = pow(d2, n - 1 - k);
        let outer = pow(d2, k);
        for o in 0..outer {
            let base = o * stride * d2;
            for inner in 0..stride {
                for (p, b) in buf.iter_mut().enumerate() {
                    *b = t[base + p * stride + inner];
                }
                for (al, row) in basis.iter().enumerate() {
                    let v = row.iter().zip(&buf).fold(C::new(0.0, 0.0), |acc, (m, x)| acc + m * x);
                    t[base + al * stride + inner] = v;
                }
            }
        }
    }
    t
}

fn density(input: DenseInput<'_>) -> CMatrix<f64> {
    match input {
        DenseInput::Vector(v) => {
            let col = DVector::from_column_slice(v);
            &col * col.adjoint()
        }
        DenseInput::Matrix(m) => m.clone(),
    }
}

/// All Pauli expectation values `Tr(rho T_alpha)` of a small system.
#[derive(Clone, Debug)]
pub struct PauliSpectrum {
    pub n_sites: usize,
    pub d: usize,
    /// Indexed by the string labels in base `d^2`, site 0 most significant.
    pub values: Vec<C>,
}

impl PauliSpectrum {
    pub fn index_of(&self, s: &PauliString) -> usize {
        s.labels(self.d).iter().fold(0, |acc, &al| acc * self.d * self.d + al)
    }

    pub fn string_at(&self, mut index: usize) -> PauliString {
        let d2 = self.d * self.d;
        let mut labels = vec![0; self.n_sites];
        for k in (0..self.n_sites).rev() {
            labels[k] = index % d2;
            index /= d2;
        }
        PauliString::from_labels(&labels, self.d)
    }

    pub fn value(&self, s: &PauliString) -> C {
        self.values[self.index_of(s)]
    }

    /// `sum |Tr(rho P)|^(2n)`.
    pub fn power_sum(&self, n: f64) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).filter(|&w| w > ZERO_WEIGHT).map(|w| w.powf(n)).sum()
    }

    /// CSV with columns `label,real,imag`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "label,real,imag")?;
        for (i, z) in self.values.iter().enumerate() {
            writeln!(w, "{},{:.17e},{:.17e}", self.string_at(i), z.re, z.im)?;
        }
        Ok(())
    }
}

pub fn dense_pauli_spectrum(alg: &QuditAlgebra, input: DenseInput<'_>) -> Result<PauliSpectrum> {
    let dim = match input {
        DenseInput::Vector(v) => v.len(),
        DenseInput::Matrix(m) => {
            if m.nrows() != m.ncols() {
                return Err(Error::NotDensityMatrix("matrix is not square".into()));
            }
            m.nrows()
        }
    };
    if dim > MAX_SPECTRUM_DIM {
        return Err(Error::SizeCap(format!("dense Pauli spectrum of dimension {dim} exceeds {MAX_SPECTRUM_DIM}")));
    }
    let d = alg.d();
    let n = n_sites_of(dim, d)?;
    let rho = density(input);
    let values = product_basis_expectations(&rho, n, d, &alg.site_matrices());
    Ok(PauliSpectrum { n_sites: n, d, values })
}

/// Renyi-`n` entropy of the normalized weights `q_i = w_i / sum w` with the
/// Shannon limit at `n = 1`.
fn renyi_of_weights(weights: &[f64], n: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    if (n - 1.0).abs() < 1e-12 {
        -weights.iter().filter(|&&w| w > ZERO_WEIGHT).map(|&w| {
            let q = w / total;
            q * q.ln()
        }).sum::<f64>()
    } else {
        let s: f64 = weights.iter().filter(|&&w| w > ZERO_WEIGHT).map(|&w| (w / total).powf(n)).sum();
        s.ln() / (1.0 - n)
    }
}

fn check_normalized(psi: &[C]) -> Result<()> {
    let nrm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (nrm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(nrm));
    }
    Ok(())
}

/// Stabilizer Renyi entropy `M_n` of a pure state (natural log).
pub fn brute_force_sre(alg: &QuditAlgebra, psi: &[C], n: f64) -> Result<f64> {
    check_normalized(psi)?;
    let spectrum = dense_pauli_spectrum(alg, DenseInput::Vector(psi))?;
    let weights: Vec<f64> = spectrum.values.iter().map(|z| z.norm_sqr()).collect();
    let nd = spectrum.n_sites as f64 * (alg.d() as f64).ln();
    Ok(renyi_of_weights(&weights, n) - nd)
}

/// Validates Hermiticity, unit trace and positivity.
pub fn check_density_matrix(rho: &CMatrix<f64>) -> Result<()> {
    if rho.nrows() != rho.ncols() {
        return Err(Error::NotDensityMatrix("matrix is not square".into()));
    }
    let herm = (rho - rho.adjoint()).camax();
    if herm > 1e-10 {
        return Err(Error::NotDensityMatrix(format!("not Hermitian (deviation {herm:e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
        return Err(Error::NotDensityMatrix(format!("trace {tr} != 1")));
    }
    let min_eig = SymmetricEigen::new(rho.clone()).eigenvalues.min();
    if min_eig < -1e-10 {
        return Err(Error::NotDensityMatrix(format!("negative eigenvalue {min_eig:e}")));
    }
    Ok(())
}

/// Mixed-state SRE `(1/(1-n)) ln(sum |Tr(rho P)|^(2n) / sum |Tr(rho P)|^2)`.
///
/// At `n = 2` this is `-ln(sum |Tr|^4 / sum |Tr|^2)`; for pure states it
/// coincides with [`brute_force_sre`].
pub fn brute_force_mixed_sre(alg: &QuditAlgebra, rho: &CMatrix<f64>, n: f64) -> Result<f64> {
    check_density_matrix(rho)?;
    let spectrum = dense_pauli_spectrum(alg, DenseInput::Matrix(rho))?;
    Ok(mixed_sre_from_spectrum(&spectrum, n))
}

pub(crate) fn mixed_sre_from_spectrum(spectrum: &PauliSpectrum, n: f64) -> f64 {
    let s2 = spectrum.power_sum(1.0);
    if (n - 1.0).abs() < 1e-12 {
        let weights: Vec<f64> = spectrum.values.iter().map(|z| z.norm_sqr()).collect();
        return renyi_of_weights(&weights, 1.0) - s2.ln();
    }
    (spectrum.power_sum(n) / s2).ln() / (1.0 - n)
}

fn require_odd(alg: &QuditAlgebra) -> Result<()> {
    if !alg.is_odd() {
        return Err(Error::UnsupportedDimension(alg.d(), "phase-space operators need odd d"));
    }
    Ok(())
}

/// Single-site phase-point operators `A_u`, indexed by label `u = a d + a'`.
pub fn site_phase_points(alg: &QuditAlgebra) -> Result<Vec<CMatrix<f64>>> {
    require_odd(alg)?;
    let d = alg.d();
    let ts = alg.site_matrices::<f64>();
    let mut a0 = CMatrix::<f64>::zeros(d, d);
    for t in &ts {
        a0 += t;
    }
    a0 /= C::new(d as f64, 0.0);
    Ok(ts.iter().map(|t| matmul(&matmul(t, Op::N, &a0, Op::N), Op::N, t, Op::H)).collect())
}

/// Dense `A_u = T_u A_0 T_u^dagger` on `u.len()` sites.
pub fn phase_point_operator(alg: &QuditAlgebra, u: &PhasePointLabel) -> Result<CMatrix<f64>> {
    let sites = site_phase_points(alg)?;
    let dim = pow(alg.d(), u.u.len());
    if dim > MAX_SPECTRUM_DIM {
        return Err(Error::SizeCap(format!("phase-point operator of dimension {dim} exceeds {MAX_SPECTRUM_DIM}")));
    }
    let mut m = CMatrix::<f64>::identity(1, 1);
    for &(a, ap) in &u.u {
        m = m.kronecker(&sites[alg.label(a, ap)]);
    }
    Ok(m)
}

/// `Tr(rho A_u)` for every phase-space point (real up to rounding).
pub fn phase_point_expectations(alg: &QuditAlgebra, input: DenseInput<'_>) -> Result<Vec<f64>> {
    let sites = site_phase_points(alg)?;
    let rho = density(input);
    let dim = rho.nrows();
    if dim > MAX_PHASE_SPACE_DIM {
        return Err(Error::SizeCap(format!("phase-space table of dimension {dim} exceeds {MAX_PHASE_SPACE_DIM}")));
    }
    let n = n_sites_of(dim, alg.d())?;
    Ok(product_basis_expectations(&rho, n, alg.d(), &sites).into_iter().map(|z| z.re).collect())
}

/// Mana entropy `(1/(1-n)) ln sum_u |Tr(rho A_u)|^(2n) / d^N` of a pure state.
pub fn brute_force_mana_entropy(alg: &QuditAlgebra, psi: &[C], n: f64) -> Result<f64> {
    check_normalized(psi)?;
    let w = phase_point_expectations(alg, DenseInput::Vector(psi))?;
    let nsites = n_sites_of(psi.len(), alg.d())?;
    let weights: Vec<f64> = w.iter().map(|x| x * x).collect();
    Ok(renyi_of_weights(&weights, n) - nsites as f64 * (alg.d() as f64).ln())
}

/// Mana `ln sum_u |W(u)|` with the Wigner function `W(u) = Tr(rho A_u) / d^N`.
pub fn mana(alg: &QuditAlgebra, input: DenseInput<'_>) -> Result<f64> {
    let w = phase_point_expectations(alg, input)?;
    let dim = w.len() as f64;
    Ok((w.iter().map(|x| x.abs()).sum::<f64>() / dim.sqrt()).ln())
}

/// Applies a single-site operator to a dense vector.
fn apply_site(psi: &[C], d: usize, n: usize, site: usize, op: &CMatrix<f64>) -> Vec<C> {
    let stride = pow(d, n - 1 - site);
    let mut out = vec![C::new(0.0, 0.0); psi.len()];
    let outer = psi.len() / (stride * d);
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * stride * d + inner;
            for r in 0..d {
                let mut acc = C::new(0.0, 0.0);
                for c in 0..d {
                    acc += op[(r, c)] * psi[base + c * stride];
                }
                out[base + r * stride] = acc;
            }
        }
    }
    out
}

/// True iff `||A_u |psi> - |psi>|| < 1e-10`.
pub fn check_phase_point_stabilizer(alg: &QuditAlgebra, psi: &[C], u: &PhasePointLabel) -> Result<bool> {
    let sites = site_phase_points(alg)?;
    let n = n_sites_of(psi.len(), alg.d())?;
    if u.u.len() != n {
        return Err(Error::MismatchedSupport(u.u.len(), n));
    }
    let mut v = psi.to_vec();
    for (k, &(a, ap)) in u.u.iter().enumerate() {
        v = apply_site(&v, alg.d(), n, k, &sites[alg.label(a, ap)]);
    }
    let diff: f64 = v.iter().zip(psi).map(|(x, y)| (x - y).norm_sqr()).sum();
    Ok(diff.sqrt() < 1e-10)
}

/// `U|psi>`, normalized; rejects `U` with `max |U^dagger U - I| > 1e-8`.
pub fn apply_dense_unitary(psi: &[C], u: &CMatrix<f64>) -> Result<Vec<C>> {
    if u.nrows() != psi.len() || u.ncols() != psi.len() {
        return Err(Error::DimensionMismatch(format!("{}x{} operator on a vector of length {}", u.nrows(), u.ncols(), psi.len())));
    }
    let dev = (u.adjoint() * u - CMatrix::<f64>::identity(psi.len(), psi.len())).camax();
    if dev > 1e-8 {
        return Err(Error::NonUnitary(dev));
    }
    let v = u * DVector::from_column_slice(psi);
    let nrm = v.norm();
    if nrm == 0.0 {
        return Err(Error::NullState);
    }
    Ok((v / C::new(nrm, 0.0)).as_slice().to_vec())
}

/// Reduced density matrix of `keep` (sorted sites) from a pure state.
pub fn partial_trace(psi: &[C], d: usize, keep: &[usize]) -> Result<CMatrix<f64>> {
    let n = n_sites_of(psi.len(), d)?;
    if let Some(&bad) = keep.iter().find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let rest: Vec<usize> = (0..n).filter(|j| !keep.contains(j)).collect();
    let (dk, dr) = (pow(d, keep.len()), pow(d, rest.len()));
    let mut m = CMatrix::<f64>::zeros(dk, dr);
    for (idx, z) in psi.iter().enumerate() {
        let mut digits = vec![0; n];
        let mut x = idx;
        for k in (0..n).rev() {
            digits[k] = x % d;
            x /= d;
        }
        let ik = keep.iter().fold(0, |acc, &j| acc * d + digits[j]);
        let ir = rest.iter().fold(0, |acc, &j| acc * d + digits[j]);
        m[(ik, ir)] = *z;
    }
    Ok(matmul(&m, Op::N, &m, Op::H))
}

/// Partial trace of a density matrix on `n` sites, keeping sorted `keep`.
pub fn partial_trace_matrix(rho: &CMatrix<f64>, d: usize, keep: &[usize]) -> Result<CMatrix<f64>> {
    let n = n_sites_of(rho.nrows(), d)?;
    let rest: Vec<usize> = (0..n).filter(|j| !keep.contains(j)).collect();
    let (dk, dr) = (pow(d, keep.len()), pow(d, rest.len()));
    let compose = |ik: usize, ir: usize| -> usize {
        let mut digits = vec![0; n];
        let (mut x, mut y) = (ik, ir);
        for &j in keep.iter().rev() {
            digits[j] = x % d;
            x /= d;
        }
        for &j in rest.iter().rev() {
            digits[j] = y % d;
            y /= d;
        }
        digits.iter().fold(0, |acc, &s| acc * d + s)
    };
    let mut out = CMatrix::<f64>::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = C::new(0.0, 0.0);
            for r in 0..dr {
                acc += rho[(compose(i, r), compose(j, r))];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Dense reference values for a pair of disjoint blocks of a pure state.
#[derive(Clone, Copy, Debug)]
pub struct BlockMagic {
    /// Mixed-state `M~_2` of `A`, `B` and `AB`.
    pub m2_a: f64,
    pub m2_b: f64,
    pub m2_ab: f64,
    /// Renyi-2 mutual information.
    pub mutual_info: f64,
    /// `-ln(sum|Tr rho_A P|^4 sum|Tr rho_B P|^4 / sum|Tr rho_AB P|^4)`.
    pub w: f64,
    /// Long-range magic `M~_2(AB) - M~_2(A) - M~_2(B)`.
    pub long_range: f64,
}

/// Long-range magic and its ingredients from dense partial traces.
pub fn brute_force_block_magic(alg: &QuditAlgebra, psi: &[C], a: &Partition, b: &Partition) -> Result<BlockMagic> {
    let d = alg.d();
    let n = n_sites_of(psi.len(), d)?;
    let ab = a.union(b, n)?;
    if pow(d, ab.len()) > MAX_SPECTRUM_DIM {
        return Err(Error::SizeCap(format!("{} sites in A u B exceed the dense cap", ab.len())));
    }
    let rho_ab = partial_trace(psi, d, &ab.site_vec())?;
    // positions of A and B inside A u B
    let sites_ab = ab.site_vec();
    let pos = |p: &Partition| -> Vec<usize> {
        p.sites().map(|s| sites_ab.iter().position(|&x| x == s).expect("site in union")).collect()
    };
    let rho_a = partial_trace_matrix(&rho_ab, d, &pos(a))?;
    let rho_b = partial_trace_matrix(&rho_ab, d, &pos(b))?;
    let spec_ab = dense_pauli_spectrum(alg, DenseInput::Matrix(&rho_ab))?;
    let spec_a = dense_pauli_spectrum(alg, DenseInput::Matrix(&rho_a))?;
    let spec_b = dense_pauli_spectrum(alg, DenseInput::Matrix(&rho_b))?;
    let purity = |r: &CMatrix<f64>| (r * r).trace().re;
    let s2 = |r: &CMatrix<f64>| -purity(r).ln();
    let m2_a = mixed_sre_from_spectrum(&spec_a, 2.0);
    let m2_b = mixed_sre_from_spectrum(&spec_b, 2.0);
    let m2_ab = mixed_sre_from_spectrum(&spec_ab, 2.0);
    let mutual_info = s2(&rho_a) + s2(&rho_b) - s2(&rho_ab);
    let w = -(spec_a.power_sum(2.0) * spec_b.power_sum(2.0) / spec_ab.power_sum(2.0)).ln();
    Ok(BlockMagic { m2_a, m2_b, m2_ab, mutual_info, w, long_range: m2_ab - m2_a - m2_b })
}

/// `M~_2(rho_AB) - M~_2(rho_A) - M~_2(rho_B)` from dense partial traces.
pub fn brute_force_long_range_magic(alg: &QuditAlgebra, psi: &[C], a: &Partition, b: &Partition) -> Result<f64> {
    Ok(brute_force_block_magic(alg, psi, a, b)?.long_range)
}
