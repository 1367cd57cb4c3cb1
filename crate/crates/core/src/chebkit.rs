//! Chebyshev spectral primitives.
//!
//! All grids are extremal (Chebyshev–Lobatto) grids listed in increasing
//! order. A [`ChebBasis`] holds the interval-independent matrices for a fixed
//! order `k`; [`ChebGrid`] places the nodes on a concrete interval.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;

type C64 = Complex64;

/// Interval-independent data for order-`k` Chebyshev work on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct ChebBasis {
    k: usize,
    nodes: Vec<f64>,
    diff: RMatrix,
    integ: RMatrix,
    to_coeffs: RMatrix,
    to_values: RMatrix,
}

impl ChebBasis {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("Chebyshev order k must be at least 2, got {k}")));
        }
        let nodes = unit_nodes(k);
        let to_values = RMatrix::from_fn(k, k, |i, j| cheb_t_at_node(k, i, j));
        let to_coeffs = values_to_coeffs_matrix(k);
        let diff = unit_diff_matrix(&nodes);
        let integ = unit_integration_matrix(k, &to_values, &to_coeffs);
        Ok(ChebBasis { k, nodes, diff, integ, to_coeffs, to_values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Nodes on `[-1, 1]`, increasing.
    pub fn unit_nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Differentiation matrix on `[-1, 1]`.
    pub fn unit_diff(&self) -> &RMatrix {
        &self.diff
    }

    /// Indefinite integration matrix on `[-1, 1]` (antiderivative vanishing
    /// at `-1`).
    pub fn unit_integration(&self) -> &RMatrix {
        &self.integ
    }

    /// Nodes mapped to `[a, b]`.
    pub fn nodes_on(&self, a: f64, b: f64) -> Vec<f64> {
        let (h, m) = (0.5 * (b - a), 0.5 * (b + a));
        let mut out: Vec<f64> = self.nodes.iter().map(|&x| h * x + m).collect();
        out[0] = a;
        out[self.k - 1] = b;
        out
    }

    pub fn vals_to_coeffs(&self, values: &[C64]) -> Vec<C64> {
        assert_eq!(values.len(), self.k);
        self.to_coeffs.mul_cvec(values)
    }

    pub fn coeffs_to_vals(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.k);
        self.to_values.mul_cvec(coeffs)
    }
}

/// `T_j` at the `i`-th increasing extremal node of a `k`-point grid.
fn cheb_t_at_node(k: usize, i: usize, j: usize) -> f64 {
    let n = (k - 1) as f64;
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    // x_i = -cos(iπ/N) so T_j(x_i) = (-1)^j cos(ijπ/N); reduce ij mod 2N
    // before taking the cosine to keep the argument small.
    let m = (i * j) % (2 * (k - 1));
    sign * (PI * m as f64 / n).cos()
}

fn unit_nodes(k: usize) -> Vec<f64> {
    let n = (k - 1) as f64;
    (0..k)
        .map(|j| {
            // sin form is symmetric and gives exact zeros at the midpoint.
            let theta = PI * (2.0 * j as f64 - n) / (2.0 * n);
            theta.sin()
        })
        .collect()
}

fn values_to_coeffs_matrix(k: usize) -> RMatrix {
    let n = k - 1;
    RMatrix::from_fn(k, k, |j, i| {
        let mut w = 2.0 / n as f64;
        if i == 0 || i == n {
            w *= 0.5;
        }
        if j == 0 || j == n {
            w *= 0.5;
        }
        w * cheb_t_at_node(k, i, j)
    })
}

fn unit_diff_matrix(x: &[f64]) -> RMatrix {
    let k = x.len();
    let n = k - 1;
    let c = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
    let mut d = RMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            c(i) / c(j) * sign / (x[i] - x[j])
        }
    });
    for i in 0..k {
        let s: f64 = (0..k).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    d
}

/// Coefficients of the antiderivative of `Σ c_j T_j` on `[-1, 1]`, one
/// degree higher than the input, normalized to vanish at `-1`.
fn integrate_coeffs<T>(c: &[T]) -> Vec<T>
where
    T: Copy + Zero + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let k = c.len();
    let get = |j: usize| if j < k { c[j] } else { T::zero() };
    let mut out = vec![T::zero(); k + 1];
    for m in 1..=k {
        let lower = if m == 1 { get(0) * 2.0 } else { get(m - 1) };
        out[m] = (lower - get(m + 1)) * (1.0 / (2.0 * m as f64));
    }
    let mut at_minus_one = T::zero();
    for (m, &v) in out.iter().enumerate().skip(1) {
        // I_0 = -Σ_{m≥1} I_m (-1)^m
        at_minus_one = if m % 2 == 0 { at_minus_one - v } else { at_minus_one + v };
    }
    out[0] = at_minus_one;
    out
}

fn unit_integration_matrix(k: usize, to_values: &RMatrix, to_coeffs: &RMatrix) -> RMatrix {
    let n = k - 1;
    let mut s = RMatrix::zeros(k, k);
    for col in 0..k {
        let coeffs: Vec<f64> = (0..k).map(|j| to_coeffs[(j, col)]).collect();
        let ic = integrate_coeffs(&coeffs);
        for i in 0..k {
            let mut v = 0.0;
            for (j, &cj) in ic.iter().enumerate().take(k) {
                v += cj * to_values[(i, j)];
            }
            // T_{N+1} at the extremal nodes equals T_{N-1}.
            v += ic[k] * to_values[(i, n - 1)];
            s[(i, col)] = v;
        }
    }
    for j in 0..k {
        s[(0, j)] = 0.0;
    }
    s
}

/// A `k`-point extremal Chebyshev grid on `[a₀, b₀]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebGrid {
    interval: (f64, f64),
    nodes: Vec<f64>,
}

/// Builds the extremal grid `t_j = (b₀-a₀)/2 · cos(π(k-j-1)/(k-1)) + (b₀+a₀)/2`.
pub fn cheb_nodes(k: usize, interval: (f64, f64)) -> Result<ChebGrid> {
    ChebGrid::new(k, interval)
}

impl ChebGrid {
    pub fn new(k: usize, (a, b): (f64, f64)) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 nodes, got {k}")));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!("degenerate interval [{a}, {b}]")));
        }
        let n = (k - 1) as f64;
        let (h, m) = (0.5 * (b - a), 0.5 * (b + a));
        let mut nodes: Vec<f64> =
            (0..k).map(|j| h * (PI * (k - j - 1) as f64 / n).cos() + m).collect();
        nodes[0] = a;
        nodes[k - 1] = b;
        Ok(ChebGrid { interval: (a, b), nodes })
    }

    pub fn k(&self) -> usize {
        self.nodes.len()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.interval.1 - self.interval.0)
    }

    /// Spectral differentiation matrix for this grid.
    pub fn diff_matrix(&self) -> RMatrix {
        let x: Vec<f64> = unit_nodes(self.k());
        let mut d = unit_diff_matrix(&x);
        let s = 1.0 / self.half_width();
        for i in 0..d.rows() {
            for v in d.row_mut(i) {
                *v *= s;
            }
        }
        d
    }

    /// Maps node values of `f` to node values of `∫_{a₀}^t f`.
    pub fn integration_matrix(&self) -> RMatrix {
        let k = self.k();
        let to_values = RMatrix::from_fn(k, k, |i, j| cheb_t_at_node(k, i, j));
        let mut s = unit_integration_matrix(k, &to_values, &values_to_coeffs_matrix(k));
        let h = self.half_width();
        for i in 0..k {
            for v in s.row_mut(i) {
                *v *= h;
            }
        }
        s
    }
}

/// Chebyshev coefficients of the interpolant through values at the
/// increasing extremal nodes.
pub fn vals_to_coeffs(values: &[C64]) -> Vec<C64> {
    let k = values.len();
    assert!(k >= 2, "need at least two values");
    values_to_coeffs_matrix(k).mul_cvec(values)
}

/// Inverse of [`vals_to_coeffs`].
pub fn coeffs_to_vals(coeffs: &[C64]) -> Vec<C64> {
    let k = coeffs.len();
    assert!(k >= 2, "need at least two coefficients");
    RMatrix::from_fn(k, k, |i, j| cheb_t_at_node(k, i, j)).mul_cvec(coeffs)
}

/// Clenshaw evaluation of `Σ c_j T_j(x)`.
pub fn clenshaw(coeffs: &[C64], x: f64) -> C64 {
    let mut b1 = C64::zero();
    let mut b2 = C64::zero();
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = c + b1 * (2.0 * x) - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or_default() + b1 * x - b2
}

/// Coefficients of the derivative (with respect to the unit variable) of a
/// Chebyshev series; the result has the same length with a zero tail.
pub fn diff_coeffs(c: &[C64]) -> Vec<C64> {
    let k = c.len();
    let mut d = vec![C64::zero(); k + 1];
    for j in (1..k).rev() {
        d[j - 1] = d[j + 1] + c[j] * (2.0 * j as f64);
    }
    d[0] *= 0.5;
    d.truncate(k);
    if let Some(last) = d.last_mut() {
        *last = C64::zero();
    }
    d
}

/// `sqrt(|c_{k-2}|² + |c_{k-1}|²) / sqrt(Σ|c_j|²)`, or 0 for a zero series.
pub fn coeff_tail_ratio(coeffs: &[C64]) -> f64 {
    let k = coeffs.len();
    assert!(k >= 2, "tail ratio needs at least two coefficients");
    let total: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail = coeffs[k - 2].norm_sqr() + coeffs[k - 1].norm_sqr();
    (tail / total).sqrt()
}

/// Piecewise Chebyshev expansion of order `k - 1` over `x₀ < x₁ < … < x_m`.
///
/// Piece `i` owns `[x_i, x_{i+1})`; the last piece also owns `x_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewiseChebRepr", into = "PiecewiseChebRepr")]
pub struct PiecewiseCheb {
    order: usize,
    partition: Vec<f64>,
    coeffs: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct PiecewiseChebRepr {
    order: usize,
    partition: Vec<f64>,
    blocks: Vec<C64>,
}

impl TryFrom<PiecewiseChebRepr> for PiecewiseCheb {
    type Error = Error;

    fn try_from(r: PiecewiseChebRepr) -> Result<Self> {
        PiecewiseCheb::new(r.order, r.partition, r.blocks)
    }
}

impl From<PiecewiseCheb> for PiecewiseChebRepr {
    fn from(p: PiecewiseCheb) -> Self {
        PiecewiseChebRepr { order: p.order, partition: p.partition, blocks: p.coeffs }
    }
}

impl PiecewiseCheb {
    pub fn new(order: usize, partition: Vec<f64>, coeffs: Vec<C64>) -> Result<Self> {
        if order < 2 {
            return Err(Error::invalid("piecewise expansion order must be at least 2"));
        }
        if partition.len() < 2 {
            return Err(Error::invalid("partition needs at least two breakpoints"));
        }
        if partition.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("partition must be strictly increasing"));
        }
        let m = partition.len() - 1;
        if coeffs.len() != m * order {
            return Err(Error::invalid(format!(
                "expected {} coefficients for {m} pieces of order {order}, got {}",
                m * order,
                coeffs.len()
            )));
        }
        Ok(PiecewiseCheb { order, partition, coeffs })
    }

    /// Single-piece expansion interpolating `f` at the `k` extremal nodes.
    pub fn from_fn(k: usize, (a, b): (f64, f64), f: impl Fn(f64) -> C64) -> Result<Self> {
        let grid = ChebGrid::new(k, (a, b))?;
        let vals: Vec<C64> = grid.nodes().iter().map(|&t| f(t)).collect();
        PiecewiseCheb::new(k, vec![a, b], vals_to_coeffs(&vals))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn pieces(&self) -> usize {
        self.partition.len() - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.partition[0], *self.partition.last().unwrap())
    }

    pub fn block(&self, i: usize) -> &[C64] {
        &self.coeffs[i * self.order..(i + 1) * self.order]
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.coeffs
    }

    /// Total number of stored coefficients, `pieces · order`.
    pub fn ncoeffs(&self) -> usize {
        self.coeffs.len()
    }

    /// Index of the piece owning `t`, if `t` is inside the domain.
    pub fn locate(&self, t: f64) -> Option<usize> {
        let (a, b) = self.domain();
        if !(t >= a && t <= b) {
            return None;
        }
        let i = self.partition.partition_point(|&x| x <= t);
        Some(i.saturating_sub(1).min(self.pieces() - 1))
    }

    /// Value of the `deriv`-th derivative at `t`.
    pub fn eval(&self, t: f64, deriv: usize) -> Result<C64> {
        let (a, b) = self.domain();
        let i = self.locate(t).ok_or(Error::Domain { t, a, b })?;
        Ok(self.eval_piece(i, t, deriv))
    }

    /// Evaluates piece `i` at `t` without the ownership check.
    pub fn eval_piece(&self, i: usize, t: f64, deriv: usize) -> C64 {
        let (c, d) = (self.partition[i], self.partition[i + 1]);
        let x = ((2.0 * t - c - d) / (d - c)).clamp(-1.0, 1.0);
        if deriv == 0 {
            return clenshaw(self.block(i), x);
        }
        if deriv >= self.order {
            return C64::zero();
        }
        let mut cs = self.block(i).to_vec();
        let scale = 2.0 / (d - c);
        for _ in 0..deriv {
            cs = diff_coeffs(&cs);
        }
        clenshaw(&cs, x) * scale.powi(deriv as i32)
    }

    /// Continuous antiderivative vanishing at the left end of the domain.
    pub fn antiderivative(&self) -> PiecewiseCheb {
        let k = self.order;
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        let mut offset = C64::zero();
        for i in 0..self.pieces() {
            let h = 0.5 * (self.partition[i + 1] - self.partition[i]);
            let mut ic = integrate_coeffs(self.block(i));
            ic.truncate(k);
            for c in ic.iter_mut() {
                *c *= h;
            }
            ic[0] += offset;
            // Value at the right end of the piece is the plain coefficient sum.
            offset = ic.iter().sum();
            coeffs.extend(ic);
        }
        PiecewiseCheb { order: k, partition: self.partition.clone(), coeffs }
    }

    /// The expansion of `t ↦ f(-t)` over the negated domain.
    pub fn reflect(&self) -> PiecewiseCheb {
        let k = self.order;
        let partition: Vec<f64> = self.partition.iter().rev().map(|x| -x).collect();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for i in (0..self.pieces()).rev() {
            coeffs.extend(
                self.block(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| if j % 2 == 0 { c } else { -c }),
            );
        }
        PiecewiseCheb { order: k, partition, coeffs }
    }

    /// Joins two expansions sharing an endpoint (`self` on the left).
    pub fn concat(&self, right: &PiecewiseCheb) -> Result<PiecewiseCheb> {
        if self.order != right.order {
            return Err(Error::invalid("cannot join expansions of different order"));
        }
        if self.domain().1 != right.domain().0 {
            return Err(Error::invalid("expansions do not share an endpoint"));
        }
        let mut partition = self.partition.clone();
        partition.extend_from_slice(&right.partition[1..]);
        let mut coeffs = self.coeffs.clone();
        coeffs.extend_from_slice(&right.coeffs);
        PiecewiseCheb::new(self.order, partition, coeffs)
    }

    /// Adds a constant to every piece.
    pub fn shifted(&self, c: C64) -> PiecewiseCheb {
        let mut out = self.clone();
        for i in 0..out.pieces() {
            out.coeffs[i * out.order] += c;
        }
        out
    }

    /// `c · f`.
    pub fn scaled(&self, c: C64) -> PiecewiseCheb {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Largest tail ratio over all pieces.
    pub fn max_tail_ratio(&self) -> f64 {
        (0..self.pieces()).map(|i| coeff_tail_ratio(self.block(i))).fold(0.0, f64::max)
    }
}

/// Evaluates `f` (or its `deriv`-th derivative) at `t`.
pub fn pw_eval(f: &PiecewiseCheb, t: f64, deriv: usize) -> Result<C64> {
    f.eval(t, deriv)
}
