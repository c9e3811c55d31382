//! Dense complex linear algebra used by the tensor-network routines:
//! strided GEMM with transpose/conjugate operators, truncated SVD, and a
//! Lanczos ground-state solver.

use nalgebra::{DMatrix, Dim, Matrix, RawStorage, RawStorageMut, SymmetricEigen, SVD};
use num_complex::Complex;

use crate::scalar::{abs2, cone, creal, czero, from_usize, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Operator applied to a GEMM operand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    /// As is.
    N,
    /// Transpose.
    T,
    /// Elementwise conjugate.
    C,
    /// Conjugate transpose.
    H,
}

impl Op {
    fn transposed(self) -> bool {
        matches!(self, Op::T | Op::H)
    }
    fn conjugated(self) -> bool {
        matches!(self, Op::C | Op::H)
    }
}

struct Operand<T> {
    ptr: *const Complex<T>,
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

fn operand<T, R, C, S>(m: &Matrix<Complex<T>, R, C, S>, op: Op) -> Operand<T>
where
    T: Real,
    R: Dim,
    C: Dim,
    S: RawStorage<Complex<T>, R, C>,
{
    let (r, c) = m.shape();
    let (rs, cs) = m.strides();
    if op.transposed() {
        Operand { ptr: m.as_ptr(), rows: c, cols: r, rs: cs as isize, cs: rs as isize }
    } else {
        Operand { ptr: m.as_ptr(), rows: r, cols: c, rs: rs as isize, cs: cs as isize }
    }
}

/// Column-major conjugated copy of an operand (with its transpose applied).
fn conj_copy<T: Real>(o: &Operand<T>) -> (Vec<Complex<T>>, Operand<T>) {
    let mut buf = Vec::with_capacity(o.rows * o.cols);
    for j in 0..o.cols {
        for i in 0..o.rows {
            // SAFETY: indices lie inside the operand described by the caller.
            let z = unsafe { *o.ptr.offset(i as isize * o.rs + j as isize * o.cs) };
            buf.push(z.conj());
        }
    }
    let op = Operand { ptr: buf.as_ptr(), rows: o.rows, cols: o.cols, rs: 1, cs: o.rows as isize };
    (buf, op)
}

/// `c <- alpha * op_a(a) * op_b(b) + beta * c`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T, R1, C1, S1, R2, C2, S2, R3, C3, S3>(
    alpha: Complex<T>,
    a: &Matrix<Complex<T>, R1, C1, S1>,
    op_a: Op,
    b: &Matrix<Complex<T>, R2, C2, S2>,
    op_b: Op,
    beta: Complex<T>,
    c: &mut Matrix<Complex<T>, R3, C3, S3>,
) where
    T: Real,
    R1: Dim,
    C1: Dim,
    S1: RawStorage<Complex<T>, R1, C1>,
    R2: Dim,
    C2: Dim,
    S2: RawStorage<Complex<T>, R2, C2>,
    R3: Dim,
    C3: Dim,
    S3: RawStorageMut<Complex<T>, R3, C3>,
{
    let oa = operand(a, op_a);
    let ob = operand(b, op_b);
    let (m, n) = c.shape();
    assert_eq!(oa.rows, m, "gemm: row mismatch");
    assert_eq!(ob.cols, n, "gemm: column mismatch");
    assert_eq!(oa.cols, ob.rows, "gemm: inner dimension mismatch");
    let k = oa.cols;
    if m == 0 || n == 0 {
        return;
    }
    let (rsc, csc) = c.strides();
    let cptr = c.as_mut_ptr();
    let conj_a = op_a.conjugated();
    let conj_b = op_b.conjugated();
    if !conj_a && !conj_b {
        // SAFETY: operands describe live matrices with matching shapes.
        unsafe {
            T::raw_gemm(
                m, k, n, alpha, oa.ptr, oa.rs, oa.cs, ob.ptr, ob.rs, ob.cs, beta, cptr,
                rsc as isize, csc as isize,
            );
        }
        return;
    }
    // conj(A) B = conj(A conj(B)); A conj(B) = conj(conj(A) B); conj(A) conj(B) = conj(A B).
    let (_hold_a, pa) = if conj_b && !conj_a { conj_copy(&oa) } else { (Vec::new(), oa) };
    let (_hold_b, pb) = if conj_a && !conj_b { conj_copy(&ob) } else { (Vec::new(), ob) };
    let mut tmp = vec![czero::<T>(); m * n];
    // SAFETY: tmp is a fresh column-major m x n buffer.
    unsafe {
        T::raw_gemm(
            m, k, n, alpha.conj(), pa.ptr, pa.rs, pa.cs, pb.ptr, pb.rs, pb.cs, czero(),
            tmp.as_mut_ptr(), 1, m as isize,
        );
    }
    let beta_zero = beta == czero();
    for j in 0..n {
        for i in 0..m {
            let t = tmp[i + j * m].conj();
            let z = &mut c[(i, j)];
            *z = if beta_zero { t } else { beta * *z + t };
        }
    }
}

/// Returns `op_a(a) * op_b(b)` as a new matrix.
pub fn matmul<T, R1, C1, S1, R2, C2, S2>(
    a: &Matrix<Complex<T>, R1, C1, S1>,
    op_a: Op,
    b: &Matrix<Complex<T>, R2, C2, S2>,
    op_b: Op,
) -> CMatrix<T>
where
    T: Real,
    R1: Dim,
    C1: Dim,
    S1: RawStorage<Complex<T>, R1, C1>,
    R2: Dim,
    C2: Dim,
    S2: RawStorage<Complex<T>, R2, C2>,
{
    let m = if op_a.transposed() { a.ncols() } else { a.nrows() };
    let n = if op_b.transposed() { b.nrows() } else { b.ncols() };
    let mut c = CMatrix::<T>::from_element(m, n, czero());
    gemm(cone(), a, op_a, b, op_b, czero(), &mut c);
    c
}

/// Frobenius norm squared.
pub fn frob2<T, R, C, S>(m: &Matrix<Complex<T>, R, C, S>) -> T
where
    T: Real,
    R: Dim,
    C: Dim,
    S: RawStorage<Complex<T>, R, C>,
{
    m.iter().fold(T::zero(), |acc, z| acc + abs2(*z))
}

/// Largest entry modulus squared.
pub fn max_abs2<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| {
        let a = abs2(*z);
        if a > acc {
            a
        } else {
            acc
        }
    })
}

/// Result of a truncated singular value decomposition `m ≈ u * diag(s) * vt`.
pub struct TruncatedSvd<T: Real> {
    pub u: CMatrix<T>,
    pub s: Vec<T>,
    pub vt: CMatrix<T>,
    /// Discarded fraction of the squared singular-value weight.
    pub discarded: T,
    /// Total squared weight before truncation.
    pub total: T,
}

/// Number of singular values kept under the `(chi_max, cutoff)` policy: values
/// whose normalized squared weight is at most `cutoff` are dropped, at most
/// `chi_max` are kept, and at least one survives.
pub fn truncation_rank<T: Real>(s: &[T], chi_max: usize, cutoff: T) -> usize {
    let total: T = s.iter().fold(T::zero(), |a, &x| a + x * x);
    if total <= T::zero() {
        return 1.min(s.len());
    }
    let mut k = s.iter().take_while(|&&x| x * x / total > cutoff).count();
    k = k.min(chi_max).max(1).min(s.len());
    k
}

pub fn svd_truncated<T: Real>(m: CMatrix<T>, chi_max: usize, cutoff: T) -> TruncatedSvd<T> {
    let svd = SVD::new(m, true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let s_all: Vec<T> = svd.singular_values.iter().copied().collect();
    let total = s_all.iter().fold(T::zero(), |a, &x| a + x * x);
    let k = truncation_rank(&s_all, chi_max, cutoff);
    let kept = s_all[..k].iter().fold(T::zero(), |a, &x| a + x * x);
    let discarded = if total > T::zero() { (total - kept) / total } else { T::zero() };
    let discarded = if discarded < T::zero() { T::zero() } else { discarded };
    TruncatedSvd {
        u: u.columns(0, k).into_owned(),
        s: s_all[..k].to_vec(),
        vt: vt.rows(0, k).into_owned(),
        discarded,
        total,
    }
}

/// Truncated factorization `m ≈ u * r` with `u` a left isometry spanning the
/// dominant left singular vectors and `r = u^H m`.
///
/// Wide matrices go through the Gram matrix `m m^H`, which is much cheaper
/// than a full SVD when only the leading subspace is needed; the kept block
/// is an exact projection, so the Gram rounding only affects which subspace
/// is chosen. Returns `(u, r, discarded)` with `discarded` the dropped
/// fraction of the squared weight.
pub fn truncated_left_factor<T: Real>(m: CMatrix<T>, chi_max: usize, cutoff: T) -> (CMatrix<T>, CMatrix<T>, T) {
    let (rows, cols) = m.shape();
    if cols <= 2 * rows || rows <= 16 {
        let svd = svd_truncated(m, chi_max, cutoff);
        let mut r = svd.vt;
        for (k, s) in svd.s.iter().enumerate() {
            let mut row = r.row_mut(k);
            row *= creal(*s);
        }
        return (svd.u, r, svd.discarded);
    }
    let gram = matmul(&m, Op::N, &m, Op::H);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap_or(std::cmp::Ordering::Equal));
    let s: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i].max(T::zero()).sqrt()).collect();
    let total = s.iter().fold(T::zero(), |a, &x| a + x * x);
    let k = truncation_rank(&s, chi_max, cutoff);
    let kept = s[..k].iter().fold(T::zero(), |a, &x| a + x * x);
    let discarded = if total > T::zero() { ((total - kept) / total).max(T::zero()) } else { T::zero() };
    let u = CMatrix::from_fn(rows, k, |i, j| eig.eigenvectors[(i, order[j])]);
    let r = matmul(&u, Op::H, &m, Op::N);
    (u, r, discarded)
}

/// Singular values only, descending.
pub fn singular_values<T: Real>(m: CMatrix<T>) -> Vec<T> {
    let svd = SVD::new(m, false, false);
    svd.singular_values.iter().copied().collect()
}

#[inline]
pub fn dot<T: Real>(x: &[Complex<T>], y: &[Complex<T>]) -> Complex<T> {
    x.iter().zip(y).fold(czero(), |acc, (a, b)| acc + a.conj() * b)
}

#[inline]
pub fn norm<T: Real>(x: &[Complex<T>]) -> T {
    x.iter().fold(T::zero(), |a, z| a + abs2(*z)).sqrt()
}

#[inline]
pub fn axpy<T: Real>(alpha: Complex<T>, x: &[Complex<T>], y: &mut [Complex<T>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale<T: Real>(alpha: Complex<T>, x: &mut [Complex<T>]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Outcome of [`lanczos_ground`].
#[derive(Clone, Debug)]
pub struct LanczosResult<T: Real> {
    pub value: T,
    pub vector: Vec<Complex<T>>,
    pub matvecs: usize,
    pub residual: T,
    pub converged: bool,
}

/// Lowest eigenpair of a Hermitian operator given only its action.
///
/// Restarted Lanczos with full reorthogonalization. Stops once the Ritz
/// residual falls below `tol * max(1, |theta|)` or after `max_matvecs`
/// applications.
pub fn lanczos_ground<T, F>(
    mut apply: F,
    x0: &[Complex<T>],
    tol: T,
    max_krylov: usize,
    max_matvecs: usize,
) -> LanczosResult<T>
where
    T: Real,
    F: FnMut(&[Complex<T>], &mut [Complex<T>]),
{
    let n = x0.len();
    let max_krylov = max_krylov.max(2).min(n.max(1));
    let mut start = x0.to_vec();
    let nrm = norm(&start);
    if nrm <= T::zero() {
        start.iter_mut().enumerate().for_each(|(i, z)| {
            *z = Complex::new(T::one() / from_usize::<T>(i + 1), T::zero())
        });
    }
    let nrm = norm(&start);
    scale(Complex::new(T::one() / nrm, T::zero()), &mut start);

    let mut matvecs = 0usize;
    let mut w = vec![czero::<T>(); n];
    loop {
        let mut basis: Vec<Vec<Complex<T>>> = vec![start.clone()];
        let mut alphas: Vec<T> = Vec::new();
        let mut betas: Vec<T> = Vec::new();
        let mut ritz: Option<(T, Vec<T>, T)> = None;
        for j in 0..max_krylov {
            apply(&basis[j], &mut w);
            matvecs += 1;
            let a = dot(&basis[j], &w).re;
            alphas.push(a);
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    axpy(-c, v, &mut w);
                }
            }
            let b = norm(&w);
            let k = alphas.len();
            let mut tri = DMatrix::<T>::zeros(k, k);
            for i in 0..k {
                tri[(i, i)] = alphas[i];
                if i + 1 < k {
                    tri[(i, i + 1)] = betas[i];
                    tri[(i + 1, i)] = betas[i];
                }
            }
            let eig = SymmetricEigen::new(tri);
            let (imin, theta) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .fold((0, T::max_value().unwrap_or(T::one())), |acc, (i, &v)| {
                    if v < acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                });
            let y: Vec<T> = eig.eigenvectors.column(imin).iter().copied().collect();
            let resid = (b * y[k - 1]).abs();
            ritz = Some((theta, y, resid));
            let scale_ref = if theta.abs() > T::one() { theta.abs() } else { T::one() };
            let done = resid <= tol * scale_ref;
            if done || matvecs >= max_matvecs || j + 1 == max_krylov || basis.len() >= n {
                break;
            }
            betas.push(b);
            let mut next = w.clone();
            scale(Complex::new(T::one() / b, T::zero()), &mut next);
            basis.push(next);
        }
        let (theta, y, resid) = ritz.expect("at least one Lanczos step");
        let mut vec = vec![czero::<T>(); n];
        for (coef, v) in y.iter().zip(&basis) {
            axpy(Complex::new(*coef, T::zero()), v, &mut vec);
        }
        let vn = norm(&vec);
        scale(Complex::new(T::one() / vn, T::zero()), &mut vec);
        let scale_ref = if theta.abs() > T::one() { theta.abs() } else { T::one() };
        let converged = resid <= tol * scale_ref || basis.len() >= n;
        let best = LanczosResult { value: theta, vector: vec, matvecs, residual: resid, converged };
        if converged || matvecs >= max_matvecs {
            return best;
        }
        start = best.vector.clone();
    }
}

/// Kronecker product of two dense matrices.
pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}
