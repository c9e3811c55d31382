//! Qudit Heisenberg-Weyl algebra.
//!
//! With clock `Z = diag(1, w, ..., w^{d-1})`, `w = exp(2 pi i / d)`, and shift
//! `X|k> = |k+1>`, the strings are built from the single-site operators
//!
//! * odd `d`: `T_{a a'} = w^{-a a' h} Z^a X^{a'}` with `h = 2^{-1} mod d`;
//! * `d = 2`: the Hermitian set `i^{a a'} Z^a X^{a'}` = `{I, X, Z, -Y}`.
//!
//! Every magic measure in this crate depends on `|Tr(rho P)|` only, so the
//! global phase of a string is never tracked. A single-site label is the pair
//! `(a, a')`, flattened to `alpha = a * d + a'`.

pub mod dense;

use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::mps::{Environments, MatrixProductState};
use crate::partition::Partition;
use crate::scalar::{czero, lit, Real};

/// Local dimension together with its root of unity and half inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuditAlgebra {
    d: usize,
    half_inverse: Option<usize>,
}

impl QuditAlgebra {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::UnsupportedDimension(d, "local dimension must be at least 2"));
        }
        let half_inverse = if d % 2 == 1 { Some(d.div_ceil(2)) } else { None };
        Ok(Self { d, half_inverse })
    }

    pub fn qutrit() -> Self {
        Self { d: 3, half_inverse: Some(2) }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `2^{-1} mod d`, defined for odd `d`.
    pub fn half_inverse(&self) -> Option<usize> {
        self.half_inverse
    }

    pub fn is_odd(&self) -> bool {
        self.half_inverse.is_some()
    }

    /// Number of single-site labels, `d^2`.
    pub fn n_labels(&self) -> usize {
        self.d * self.d
    }

    pub fn label(&self, a: usize, ap: usize) -> usize {
        (a % self.d) * self.d + ap % self.d
    }

    pub fn unlabel(&self, alpha: usize) -> (usize, usize) {
        (alpha / self.d, alpha % self.d)
    }

    /// `w^k`.
    pub fn omega_pow<T: Real>(&self, k: i64) -> Complex<T> {
        let e = k.rem_euclid(self.d as i64) as f64;
        let th = 2.0 * std::f64::consts::PI * e / self.d as f64;
        // exact values on the axes keep stabilizer checks free of rounding
        let (c, s) = match (4.0 * e / self.d as f64).fract() == 0.0 {
            true => {
                let q = (4 * e as usize / self.d) % 4;
                [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][q]
            }
            false => (th.cos(), th.sin()),
        };
        Complex::new(lit(c), lit(s))
    }

    /// Nonzero entries of `T_{a a'}`: column `k` has its single entry in row
    /// `(k + a') mod d`; returns those values.
    pub fn monomial_values<T: Real>(&self, a: usize, ap: usize) -> Vec<Complex<T>> {
        let d = self.d as i64;
        let (a, ap) = ((a % self.d) as i64, (ap % self.d) as i64);
        (0..d)
            .map(|k| {
                let row = (k + ap) % d;
                match self.half_inverse {
                    Some(h) => self.omega_pow(a * row - a * ap * h as i64),
                    None if self.d == 2 => {
                        let sign: Complex<T> = self.omega_pow(a * row);
                        let ipow = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][((a * ap) % 4) as usize];
                        sign * Complex::new(lit(ipow.0), lit(ipow.1))
                    }
                    None => self.omega_pow(a * row),
                }
            })
            .collect()
    }

    /// The single-site operator `T_{a a'}` in this algebra's phase convention.
    ///
    /// Even `d > 2` has no convention; use [`QuditAlgebra::unphased_matrix`].
    pub fn heisenberg_weyl_matrix<T: Real>(&self, a: usize, ap: usize) -> Result<CMatrix<T>> {
        if self.d % 2 == 0 && self.d != 2 {
            return Err(Error::PhaseConventionUndefined(self.d));
        }
        Ok(self.unphased_matrix(a, ap))
    }

    /// `T_{a a'}` with the convention where one exists and `Z^a X^{a'}` otherwise.
    pub fn unphased_matrix<T: Real>(&self, a: usize, ap: usize) -> CMatrix<T> {
        let d = self.d;
        let vals = self.monomial_values::<T>(a, ap);
        let mut m = CMatrix::from_element(d, d, czero());
        for (k, v) in vals.into_iter().enumerate() {
            m[((k + ap) % d, k)] = v;
        }
        m
    }

    /// All `d^2` single-site operators indexed by label.
    pub fn site_matrices<T: Real>(&self) -> Vec<CMatrix<T>> {
        (0..self.n_labels()).map(|al| {
            let (a, ap) = self.unlabel(al);
            self.unphased_matrix(a, ap)
        }).collect()
    }

    pub fn clock<T: Real>(&self) -> CMatrix<T> {
        self.unphased_matrix(1, 0)
    }

    pub fn shift<T: Real>(&self) -> CMatrix<T> {
        CMatrix::from_fn(self.d, self.d, |i, j| if i == (j + 1) % self.d { crate::scalar::cone() } else { czero() })
    }
}

/// Heisenberg-Weyl string: one `(a, a')` pair per site of its support.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    exps: Vec<(usize, usize)>,
}

impl PauliString {
    /// Reduces all exponents modulo `d`.
    pub fn new(exps: Vec<(usize, usize)>, d: usize) -> Self {
        Self { exps: exps.into_iter().map(|(a, ap)| (a % d, ap % d)).collect() }
    }

    pub fn identity(len: usize) -> Self {
        Self { exps: vec![(0, 0); len] }
    }

    pub fn from_labels(labels: &[usize], d: usize) -> Self {
        Self { exps: labels.iter().map(|&al| ((al / d) % d, al % d)).collect() }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exps
    }

    pub fn get(&self, i: usize) -> (usize, usize) {
        self.exps[i]
    }

    pub fn set(&mut self, i: usize, a: usize, ap: usize, d: usize) {
        self.exps[i] = (a % d, ap % d);
    }

    pub fn labels(&self, d: usize) -> Vec<usize> {
        self.exps.iter().map(|&(a, ap)| a * d + ap).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.exps.iter().all(|&e| e == (0, 0))
    }

    /// Sub-string on positions `range` of the support.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PauliString {
        PauliString { exps: self.exps[range].to_vec() }
    }

    pub fn concat(&self, other: &PauliString) -> PauliString {
        let mut exps = self.exps.clone();
        exps.extend_from_slice(&other.exps);
        PauliString { exps }
    }

    /// `sum_i a'_i mod d`, conserved by U(1)-compatible moves.
    pub fn shift_charge(&self, d: usize) -> usize {
        self.exps.iter().map(|e| e.1).sum::<usize>() % d
    }

    /// Dense matrix of the string (site 0 most significant).
    pub fn matrix<T: Real>(&self, alg: &QuditAlgebra) -> CMatrix<T> {
        let mut m = CMatrix::from_element(1, 1, crate::scalar::cone());
        for &(a, ap) in &self.exps {
            m = m.kronecker(&alg.unphased_matrix(a, ap));
        }
        m
    }
}

impl fmt::Display for PauliString {
    /// Sites separated by dots, each written as the digits `a a'`, e.g. `10.01`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.exps.iter().map(|(a, ap)| format!("{a}{ap}")).collect();
        write!(f, "{}", parts.join("."))
    }
}

/// Product of two strings on the same support, global phase discarded.
pub fn multiply_strings(alg: &QuditAlgebra, p: &PauliString, q: &PauliString) -> Result<PauliString> {
    if p.len() != q.len() {
        return Err(Error::MismatchedSupport(p.len(), q.len()));
    }
    let d = alg.d();
    Ok(PauliString {
        exps: p.exps.iter().zip(&q.exps).map(|(x, y)| ((x.0 + y.0) % d, (x.1 + y.1) % d)).collect(),
    })
}

/// Label `u` of a phase-space point operator `A_u`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhasePointLabel {
    pub u: Vec<(usize, usize)>,
}

impl PhasePointLabel {
    pub fn origin(n: usize) -> Self {
        Self { u: vec![(0, 0); n] }
    }
}

impl<T: Real> MatrixProductState<T> {
    /// `<psi| P_support (x) I_rest |psi>` for a string whose `k`-th pair acts on
    /// the `k`-th site of `support`.
    pub fn expectation_pauli_string(&self, alg: &QuditAlgebra, string: &PauliString, support: &Partition) -> Result<Complex<T>> {
        let env = Environments::new(self);
        self.expectation_pauli_string_with(&env, alg, string, support)
    }

    /// As [`MatrixProductState::expectation_pauli_string`] with precomputed environments.
    pub fn expectation_pauli_string_with(
        &self,
        env: &Environments<T>,
        alg: &QuditAlgebra,
        string: &PauliString,
        support: &Partition,
    ) -> Result<Complex<T>> {
        if alg.d() != self.local_dim() {
            return Err(Error::DimensionMismatch(format!("algebra d = {} vs state d = {}", alg.d(), self.local_dim())));
        }
        if support.len() != string.len() {
            return Err(Error::MismatchedSupport(string.len(), support.len()));
        }
        if support.last() >= self.n_sites() {
            return Err(Error::IndexOutOfRange { index: support.last(), len: self.n_sites() });
        }
        let mats: Vec<(usize, CMatrix<T>)> = support
            .sites()
            .zip(string.exponents())
            .filter(|(_, e)| **e != (0, 0))
            .map(|(j, &(a, ap))| (j, alg.unphased_matrix(a, ap)))
            .collect();
        let refs: Vec<(usize, &CMatrix<T>)> = mats.iter().map(|(j, m)| (*j, m)).collect();
        env.expectation(self, &refs)
    }
}
