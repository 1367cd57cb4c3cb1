//! Small dense linear algebra over `f64` and `Complex64`.
//!
//! Everything here is sized for the solver's needs: companion matrices of
//! order `n ≤ 8`, `k × k` Levin systems and `nk × nk` integral-equation
//! systems with `nk ≤ 128` or so.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};

type C64 = Complex64;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type RMatrix = Matrix<f64>;
pub type CMatrix = Matrix<Complex64>;

impl<T: Copy + Zero> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl RMatrix {
    pub fn to_complex(&self) -> CMatrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Real matrix times complex vector.
    pub fn mul_cvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| b * a).sum())
            .collect()
    }

    /// Real matrix times complex matrix.
    pub fn mul_cmat(&self, m: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, m.rows);
        let mut out = CMatrix::zeros(self.rows, m.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                let src = m.row(l);
                let dst = &mut out.data[i * m.cols..(i + 1) * m.cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s * a;
                }
            }
        }
        out
    }
}

impl CMatrix {
    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::zero() })
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, m: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, m.rows);
        let mut out = CMatrix::zeros(self.rows, m.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a.is_zero() {
                    continue;
                }
                let src = m.row(l);
                let dst = &mut out.data[i * m.cols..(i + 1) * m.cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Eigenvalues of the coefficient matrix of a scalar equation at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionSpectrum {
    pub eigenvalues: Vec<Complex64>,
}

impl CompanionSpectrum {
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `max_j |p(λ_j)| / max(1, |λ_j|ⁿ)` for the monic polynomial with
    /// lower coefficients `q`.
    pub fn scaled_residual(&self, q: &[C64]) -> f64 {
        let n = q.len() as i32;
        self.eigenvalues
            .iter()
            .map(|&z| monic_eval(q, z).norm() / z.norm().powi(n).max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Evaluates `zⁿ + q_{n-1} zⁿ⁻¹ + … + q₀` by Horner's rule.
pub fn monic_eval(q: &[C64], z: C64) -> C64 {
    q.iter().rev().fold(C64::new(1.0, 0.0), |acc, &c| acc * z + c)
}

fn monic_eval_with_derivative(q: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(1.0, 0.0);
    let mut dp = C64::zero();
    for &c in q.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of `zⁿ + q_{n-1} zⁿ⁻¹ + … + q₀`, i.e. the eigenvalues of the
/// coefficient matrix whose last row is `(-q₀, …, -q_{n-1})`.
///
/// The companion matrix is balanced, reduced by shifted QR sweeps and each
/// root is then polished with a few Newton steps on the polynomial.
pub fn companion_eigs(q: &[C64]) -> Result<CompanionSpectrum> {
    let n = q.len();
    if n == 0 {
        return Err(Error::invalid("companion_eigs needs at least one coefficient"));
    }
    if q.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("non-finite polynomial coefficient"));
    }
    if n == 1 {
        return Ok(CompanionSpectrum { eigenvalues: vec![-q[0]] });
    }

    // Transpose of the coefficient matrix: ones on the subdiagonal and the
    // negated coefficients in the last column, which is upper Hessenberg.
    let mut h = CMatrix::zeros(n, n);
    for i in 1..n {
        h[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for (i, &c) in q.iter().enumerate() {
        h[(i, n - 1)] = -c;
    }
    balance(&mut h);
    let mut eigenvalues = hessenberg_qr_eigenvalues(h)?;
    for z in eigenvalues.iter_mut() {
        *z = polish_root(q, *z);
    }
    Ok(CompanionSpectrum { eigenvalues })
}

fn polish_root(q: &[C64], mut z: C64) -> C64 {
    let mut res = monic_eval(q, z).norm();
    for _ in 0..3 {
        if res == 0.0 {
            break;
        }
        let (p, dp) = monic_eval_with_derivative(q, z);
        if dp.is_zero() {
            break;
        }
        let cand = z - p / dp;
        let cand_res = monic_eval(q, cand).norm();
        if cand_res.is_finite() && cand_res < res {
            z = cand;
            res = cand_res;
        } else {
            break;
        }
    }
    z
}

/// Diagonal similarity scaling by powers of two (Parlett–Reinsch).
fn balance(h: &mut CMatrix) {
    let n = h.rows();
    let radix = 2.0_f64;
    let sqrdx = radix * radix;
    let l1 = |z: C64| z.re.abs() + z.im.abs();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += l1(h[(j, i)]);
                    r += l1(h[(i, j)]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut g = r / radix;
            let mut f = 1.0;
            let s = c + r;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    h[(i, j)] *= g;
                }
                for j in 0..n {
                    h[(j, i)] *= f;
                }
            }
        }
    }
}

/// Complex Givens rotation `[c s; -conj(s) c]` mapping `(a, b)` to `(r, 0)`.
#[inline]
fn givens(a: C64, b: C64) -> (f64, C64) {
    if b.is_zero() {
        return (1.0, C64::zero());
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 {
        return (0.0, b.conj() / nb);
    }
    let norm = na.hypot(nb);
    let alpha = a / na;
    (na / norm, alpha * b.conj() / norm)
}

/// Eigenvalues of an upper Hessenberg matrix by single-shift QR with
/// Wilkinson shifts and deflation on small subdiagonal entries.
fn hessenberg_qr_eigenvalues(mut h: CMatrix) -> Result<Vec<C64>> {
    let n = h.rows();
    let eps = f64::EPSILON;
    let mut eig = vec![C64::zero(); n];
    let mut hi = n - 1;
    let mut iter = 0usize;
    let max_iter = 60 * n;
    let mut rot: Vec<(f64, C64)> = Vec::with_capacity(n);

    while hi > 0 {
        // Locate the start of the active unreduced block.
        let mut lo = hi;
        while lo > 0 {
            let s = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let sub = h[(lo, lo - 1)].norm();
            if sub <= eps * s || sub < f64::MIN_POSITIVE {
                h[(lo, lo - 1)] = C64::zero();
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > max_iter {
            return Err(Error::EigenConvergence);
        }

        let a = h[(hi - 1, hi - 1)];
        let b = h[(hi - 1, hi)];
        let c = h[(hi, hi - 1)];
        let d = h[(hi, hi)];
        let mu = if iter % 11 == 0 {
            // Exceptional shift to break cycles.
            d + C64::new(h[(hi, hi - 1)].norm() * 0.75, 0.0)
        } else {
            let half = (a - d) * 0.5;
            let disc = (half * half + b * c).sqrt();
            let m1 = (a + d) * 0.5 + disc;
            let m2 = (a + d) * 0.5 - disc;
            if (m1 - d).norm() < (m2 - d).norm() {
                m1
            } else {
                m2
            }
        };

        for i in lo..=hi {
            h[(i, i)] -= mu;
        }
        rot.clear();
        for i in lo..hi {
            let (cs, sn) = givens(h[(i, i)], h[(i + 1, i)]);
            rot.push((cs, sn));
            for j in i..=hi {
                let x = h[(i, j)];
                let y = h[(i + 1, j)];
                h[(i, j)] = x * cs + sn * y;
                h[(i + 1, j)] = -sn.conj() * x + y * cs;
            }
        }
        for (off, &(cs, sn)) in rot.iter().enumerate() {
            let i = lo + off;
            let last = (i + 2).min(hi);
            for r in lo..=last {
                let x = h[(r, i)];
                let y = h[(r, i + 1)];
                h[(r, i)] = x * cs + y * sn.conj();
                h[(r, i + 1)] = -x * sn + y * cs;
            }
        }
        for i in lo..=hi {
            h[(i, i)] += mu;
        }
    }
    eig[0] = h[(0, 0)];
    Ok(eig)
}

/// Column-pivoted Householder QR of a general `m × n` complex matrix.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    /// Householder vectors below the diagonal, `R` on and above it.
    qr: CMatrix,
    /// Householder vectors, one per step.
    reflectors: Vec<Vec<C64>>,
    perm: Vec<usize>,
    rdiag: Vec<C64>,
}

impl PivotedQr {
    pub fn new(a: &CMatrix) -> Self {
        let m = a.rows();
        let n = a.cols();
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut reflectors = Vec::with_capacity(steps);
        let mut rdiag = Vec::with_capacity(steps);
        for j in 0..steps {
            // Exact remaining column norms; these matrices are tiny.
            let (p, _) = (j..n)
                .map(|c| (c, (j..m).map(|i| w[(i, c)].norm_sqr()).sum::<f64>()))
                .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            w.swap_cols(j, p);
            perm.swap(j, p);

            let norm = (j..m).map(|i| w[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            let x0 = w[(j, j)];
            if norm == 0.0 {
                reflectors.push(vec![C64::zero(); m - j]);
                rdiag.push(C64::zero());
                continue;
            }
            let phase = if x0.norm() == 0.0 { C64::new(1.0, 0.0) } else { x0 / x0.norm() };
            let alpha = -phase * norm;
            let mut v: Vec<C64> = (j..m).map(|i| w[(i, j)]).collect();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if vnorm2 > 0.0 {
                for c in j..n {
                    let dot: C64 = (j..m).map(|i| v[i - j].conj() * w[(i, c)]).sum();
                    let f = dot * (2.0 / vnorm2);
                    for i in j..m {
                        w[(i, c)] -= v[i - j] * f;
                    }
                }
            }
            w[(j, j)] = alpha;
            for i in j + 1..m {
                w[(i, j)] = C64::zero();
            }
            reflectors.push(v);
            rdiag.push(alpha);
        }
        PivotedQr { qr: w, reflectors, perm, rdiag }
    }

    /// Diagonal of `R`, non-increasing in magnitude up to rounding.
    pub fn r_diagonal(&self) -> &[C64] {
        &self.rdiag
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Number of diagonal entries with `|R_jj| ≥ tol·|R_00|`.
    pub fn rank(&self, tol: f64) -> usize {
        let r00 = self.rdiag.first().map(|z| z.norm()).unwrap_or(0.0);
        if r00 == 0.0 {
            return 0;
        }
        self.rdiag.iter().take_while(|z| z.norm() >= tol * r00).count()
    }

    fn apply_qh(&self, b: &mut [C64]) {
        for (j, v) in self.reflectors.iter().enumerate() {
            let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            let dot: C64 = v.iter().zip(&b[j..]).map(|(vi, bi)| vi.conj() * bi).sum();
            let f = dot * (2.0 / vnorm2);
            for (bi, vi) in b[j..].iter_mut().zip(v) {
                *bi -= vi * f;
            }
        }
    }

    /// Basic solution using only the leading `rank(tol)` pivot columns.
    pub fn solve_truncated(&self, rhs: &[C64], tol: f64) -> Vec<C64> {
        let n = self.qr.cols();
        assert_eq!(rhs.len(), self.qr.rows());
        let mut b = rhs.to_vec();
        self.apply_qh(&mut b);
        let r = self.rank(tol);
        let mut z = vec![C64::zero(); r];
        for i in (0..r).rev() {
            let mut s = b[i];
            for j in i + 1..r {
                s -= self.qr[(i, j)] * z[j];
            }
            z[i] = s / self.qr[(i, i)];
        }
        let mut x = vec![C64::zero(); n];
        for (j, zj) in z.into_iter().enumerate() {
            x[self.perm[j]] = zj;
        }
        x
    }
}

/// Default relative truncation threshold for [`truncated_lsq`].
pub const DEFAULT_LSQ_TOL: f64 = 1e2 * f64::EPSILON;

/// Solves `B x ≈ rhs` by column-pivoted QR, discarding pivot directions with
/// `|R_jj| < tol·|R_00|`. Truncated directions get an exactly zero component.
pub fn truncated_lsq(b: &CMatrix, rhs: &[C64], tol: f64) -> Vec<C64> {
    PivotedQr::new(b).solve_truncated(rhs, tol)
}

/// LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMatrix,
    piv: Vec<usize>,
}

impl Lu {
    pub fn new(mut a: CMatrix) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::invalid("LU factorization needs a square matrix"));
        }
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(Error::SingularMatrix);
            }
            a.swap_rows(k, p);
            piv.swap(k, p);
            let inv = a[(k, k)].inv();
            for i in k + 1..n {
                let f = a[(i, k)] * inv;
                if f.is_zero() {
                    continue;
                }
                a[(i, k)] = f;
                let (top, bottom) = a.data.split_at_mut(i * n);
                let krow = &top[k * n..(k + 1) * n];
                let irow = &mut bottom[..n];
                for j in k + 1..n {
                    irow[j] -= f * krow[j];
                }
            }
        }
        Ok(Lu { lu: a, piv })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(rhs.len(), n);
        let mut x: Vec<C64> = self.piv.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in 0..i {
                s -= row[j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in i + 1..n {
                s -= row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        x
    }

    pub fn inverse(&self) -> CMatrix {
        let n = self.dim();
        let mut inv = CMatrix::zeros(n, n);
        let mut e = vec![C64::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|z| *z = C64::zero());
            e[j] = C64::new(1.0, 0.0);
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Solves `M x = rhs` with partial pivoting.
pub fn dense_solve(m: &CMatrix, rhs: &[C64]) -> Result<Vec<C64>> {
    if m.rows() != rhs.len() {
        return Err(Error::invalid(format!(
            "right-hand side has length {} but matrix has {} rows",
            rhs.len(),
            m.rows()
        )));
    }
    Ok(Lu::new(m.clone())?.solve(rhs))
}

/// 1-norm condition number `‖M‖₁ ‖M⁻¹‖₁`, exact for the small matrices
/// used in solution assembly.
pub fn condition_1(m: &CMatrix) -> Result<f64> {
    let lu = Lu::new(m.clone())?;
    Ok(m.norm_1() * lu.inverse().norm_1())
}
