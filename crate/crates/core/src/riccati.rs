//! The (n−1)st order Riccati equation for an n-th order scalar equation.
//!
//! Substituting `y = exp(∫r)` gives `y⁽ʲ⁾ = P_j · y` with `P₀ = 1` and
//! `P_{j+1} = P_j' + r P_j`, so the Riccati equation reads
//! `P_n + Σ_j q_j P_j = 0`. On a Chebyshev grid the derivative in the
//! recursion is the spectral differentiation matrix; pointwise, the same
//! polynomials are the complete Bell polynomials in `r, r', r'', …`.

use num_complex::Complex64;
use num_traits::Zero;

use crate::chebkit::ChebGrid;
use crate::linalg::{CMatrix, RMatrix};

type C64 = Complex64;

/// One candidate `r` together with the coefficients on a Chebyshev grid.
#[derive(Clone, Debug)]
pub struct RiccatiGridState {
    diff: RMatrix,
    r: Vec<C64>,
    /// `r', r'', …, r^{(n-2)}` at the nodes.
    r_derivs: Vec<Vec<C64>>,
    /// `q_0, …, q_{n-1}` at the nodes.
    q: Vec<Vec<C64>>,
}

impl RiccatiGridState {
    /// `q[j]` holds the values of `q_j` at the grid nodes.
    pub fn new(grid: &ChebGrid, r: Vec<C64>, q: Vec<Vec<C64>>) -> Self {
        Self::with_diff(grid.diff_matrix(), r, q)
    }

    pub fn with_diff(diff: RMatrix, r: Vec<C64>, q: Vec<Vec<C64>>) -> Self {
        let k = diff.rows();
        assert_eq!(r.len(), k, "r must have one value per node");
        assert!(q.len() >= 1, "need at least one coefficient");
        assert!(q.iter().all(|row| row.len() == k), "coefficient rows must match the grid");
        let n = q.len();
        let mut r_derivs = Vec::with_capacity(n.saturating_sub(2));
        let mut cur = r.clone();
        for _ in 0..n.saturating_sub(2) {
            cur = diff.mul_cvec(&cur);
            r_derivs.push(cur.clone());
        }
        RiccatiGridState { diff, r, r_derivs, q }
    }

    pub fn order(&self) -> usize {
        self.q.len()
    }

    pub fn r(&self) -> &[C64] {
        &self.r
    }

    /// Values of `r⁽ᵐ⁾` for `m = 1..=n-2`.
    pub fn r_derivs(&self) -> &[Vec<C64>] {
        &self.r_derivs
    }

    pub fn diff(&self) -> &RMatrix {
        &self.diff
    }

    pub fn q(&self) -> &[Vec<C64>] {
        &self.q
    }
}

/// Values of `P_0, …, P_n` at the nodes.
pub fn pk_values(state: &RiccatiGridState, n: usize) -> Vec<Vec<C64>> {
    let k = state.r.len();
    let mut p = Vec::with_capacity(n + 1);
    p.push(vec![C64::new(1.0, 0.0); k]);
    if n >= 1 {
        // D·1 = 0, set exactly rather than through rounding
        p.push(state.r.clone());
    }
    for j in 1..n {
        let prev = &p[j];
        let mut next = state.diff.mul_cvec(prev);
        for ((v, &rv), &pv) in next.iter_mut().zip(&state.r).zip(prev) {
            *v += rv * pv;
        }
        p.push(next);
    }
    p
}

/// `P_n + Σ_{j<n} q_j P_j` at the nodes.
pub fn riccati_residual(state: &RiccatiGridState) -> Vec<C64> {
    let n = state.order();
    let p = pk_values(state, n);
    let mut res = p[n].clone();
    for (qj, pj) in state.q.iter().zip(&p) {
        for ((v, &a), &b) in res.iter_mut().zip(qj).zip(pj) {
            *v += a * b;
        }
    }
    res
}

/// Fréchet derivative of [`riccati_residual`] with respect to the node values
/// of `r`.
pub fn riccati_jacobian(state: &RiccatiGridState) -> CMatrix {
    let n = state.order();
    let k = state.r.len();
    let p = pk_values(state, n.saturating_sub(1));
    // M_0 = 0, M_{j+1} = (D + diag r) M_j + diag P_j
    let mut m = CMatrix::zeros(k, k);
    let mut b = CMatrix::zeros(k, k);
    for j in 0..n {
        // Accumulate q_j M_j before advancing.
        if j > 0 {
            for i in 0..k {
                let qi = state.q[j][i];
                for l in 0..k {
                    let v = m[(i, l)];
                    b[(i, l)] += qi * v;
                }
            }
        }
        let mut next = state.diff.mul_cmat(&m);
        for i in 0..k {
            let ri = state.r[i];
            for l in 0..k {
                let v = m[(i, l)];
                next[(i, l)] += ri * v;
            }
            next[(i, i)] += p[j][i];
        }
        m = next;
    }
    for i in 0..k {
        for l in 0..k {
            let v = m[(i, l)];
            b[(i, l)] += v;
        }
    }
    b
}

/// Pointwise `P_0, …, P_m` from the jet `x = (r, r', …, r^{(m-1)})` using
/// the Bell recurrence `P_{j+1} = Σ_{l≤j} C(j,l) r^{(l)} P_{j-l}`.
pub fn bell_values(jet: &[C64], m: usize) -> Vec<C64> {
    assert!(jet.len() >= m, "jet too short for requested order");
    let mut p = Vec::with_capacity(m + 1);
    p.push(C64::new(1.0, 0.0));
    for j in 0..m {
        let mut s = C64::zero();
        let mut binom = 1.0;
        for l in 0..=j {
            s += jet[l] * p[j - l] * binom;
            binom = binom * (j - l) as f64 / (l + 1) as f64;
        }
        p.push(s);
    }
    p
}

/// Like [`bell_values`] but also returns `∂P_j/∂x_i` for every jet entry.
///
/// `grad[j][i]` is the derivative of `P_j` with respect to `x_i`.
pub fn bell_values_with_gradient(jet: &[C64], m: usize) -> (Vec<C64>, Vec<Vec<C64>>) {
    let w = jet.len();
    assert!(w >= m, "jet too short for requested order");
    let mut p = Vec::with_capacity(m + 1);
    let mut grad: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
    p.push(C64::new(1.0, 0.0));
    grad.push(vec![C64::zero(); w]);
    for j in 0..m {
        let mut s = C64::zero();
        let mut g = vec![C64::zero(); w];
        let mut binom = 1.0;
        for l in 0..=j {
            s += jet[l] * p[j - l] * binom;
            g[l] += p[j - l] * binom;
            for (gi, &dpi) in g.iter_mut().zip(&grad[j - l]) {
                *gi += jet[l] * dpi * binom;
            }
            binom = binom * (j - l) as f64 / (l + 1) as f64;
        }
        p.push(s);
        grad.push(g);
    }
    (p, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn constant_r_gives_powers() {
        let grid = ChebGrid::new(12, (0.0, 0.1)).unwrap();
        let cst = c(0.3, 2.0);
        let st = RiccatiGridState::new(&grid, vec![cst; 12], vec![vec![C64::zero(); 12]; 3]);
        let p = pk_values(&st, 3);
        for i in 0..12 {
            // D applied to rounding noise: ‖D‖ ≈ 2e3 here, applied twice
            assert!((p[2][i] - cst * cst).norm() < 1e-10);
            assert!((p[3][i] - cst * cst * cst).norm() < 1e-7);
        }
    }

    #[test]
    fn exact_constant_solution_has_zero_residual() {
        let w = 50.0;
        let grid = ChebGrid::new(16, (0.0, 0.1)).unwrap();
        let st = RiccatiGridState::new(
            &grid,
            vec![c(0.0, w); 16],
            vec![vec![c(w * w, 0.0); 16], vec![C64::zero(); 16]],
        );
        let res = riccati_residual(&st);
        assert!(res.iter().all(|z| z.norm() < 1e-9 * w * w));
    }

    #[test]
    fn zero_r_residual_is_q0() {
        let grid = ChebGrid::new(10, (-1.0, 1.0)).unwrap();
        let q0: Vec<C64> = grid.nodes().iter().map(|&t| c(t.exp(), t)).collect();
        let st = RiccatiGridState::new(&grid, vec![C64::zero(); 10], vec![q0.clone(), vec![c(3.0, 1.0); 10]]);
        assert_eq!(riccati_residual(&st), q0);
    }

    #[test]
    fn jacobian_for_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = ChebGrid::new(16, (0.0, 0.1)).unwrap();
        let r: Vec<C64> = (0..16).map(|_| c(rng.gen(), rng.gen())).collect();
        let q1: Vec<C64> = (0..16).map(|_| c(rng.gen(), rng.gen())).collect();
        let st = RiccatiGridState::new(&grid, r.clone(), vec![vec![C64::zero(); 16], q1.clone()]);
        let b = riccati_jacobian(&st);
        let d = grid.diff_matrix();
        for i in 0..16 {
            for j in 0..16 {
                let mut expect = c(d[(i, j)], 0.0);
                if i == j {
                    expect += r[i] * 2.0 + q1[i];
                }
                assert!((b[(i, j)] - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
            }
        }

        let st0 = RiccatiGridState::new(&grid, vec![C64::zero(); 16], vec![vec![C64::zero(); 16]; 2]);
        let b0 = riccati_jacobian(&st0);
        let dc = d.to_complex();
        for i in 0..16 {
            for j in 0..16 {
                assert!((b0[(i, j)] - dc[(i, j)]).norm() <= 1e-12 * (1.0 + dc[(i, j)].norm()));
            }
        }
    }

    #[test]
    fn bell_polynomials_match_closed_forms() {
        let jet = [c(0.3, 0.1), c(-1.2, 0.5), c(0.7, -0.4), c(2.0, 0.3)];
        let (r, r1, r2, r3) = (jet[0], jet[1], jet[2], jet[3]);
        let p = bell_values(&jet, 4);
        assert!((p[2] - (r1 + r * r)).norm() < 1e-14);
        assert!((p[3] - (r2 + r1 * r * 3.0 + r * r * r)).norm() < 1e-14);
        let p4 = r3 + r2 * r * 4.0 + r1 * r1 * 3.0 + r1 * r * r * 6.0 + r * r * r * r;
        assert!((p[4] - p4).norm() < 1e-13);
    }

    #[test]
    fn bell_gradient_matches_differences() {
        let jet = [c(0.3, 0.1), c(-1.2, 0.5), c(0.7, -0.4), c(2.0, 0.3)];
        let (_, grad) = bell_values_with_gradient(&jet, 4);
        let h = 1e-6;
        for i in 0..4 {
            let mut jp = jet;
            let mut jm = jet;
            jp[i] += h;
            jm[i] -= h;
            let pp = bell_values(&jp, 4);
            let pm = bell_values(&jm, 4);
            for j in 0..=4 {
                let fd = (pp[j] - pm[j]) / (2.0 * h);
                assert!((fd - grad[j][i]).norm() < 1e-8, "P_{j} wrt x_{i}");
            }
        }
    }
}
