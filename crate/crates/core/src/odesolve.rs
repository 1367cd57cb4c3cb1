//! Adaptive spectral solver for first-order systems `u' = F(t, u)`.
//!
//! Intervals are processed left to right. On each one the problem is solved
//! by a Chebyshev integral-equation discretization (with Newton iterations
//! for nonlinear `F`), and the interval is accepted when the last two
//! Chebyshev coefficients of every component are small relative to the rest.
//! Otherwise it is bisected.

use num_complex::Complex64;
use num_traits::Zero;

use crate::chebkit::{coeff_tail_ratio, ChebBasis, PiecewiseCheb};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Lu};

type C64 = Complex64;

/// What the tail of each component is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TailNorm {
    /// The component's own coefficient norm.
    #[default]
    Component,
    /// The largest coefficient norm over all components, for systems whose
    /// variables are scaled to a common magnitude.
    Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveConfig {
    pub k: usize,
    pub eps: f64,
    /// Maximum number of intervals processed (accepted or rejected).
    pub max_intervals: usize,
    pub max_depth: usize,
    pub tail_norm: TailNorm,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig { k: 16, eps: 1e-12, max_intervals: 1 << 16, max_depth: 50, tail_norm: TailNorm::Component }
    }
}

impl AdaptiveConfig {
    pub fn with_eps(eps: f64) -> Self {
        AdaptiveConfig { eps, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.k < 4 {
            return Err(Error::invalid(format!("expansion order must be at least 4, got {}", self.k)));
        }
        if self.max_intervals == 0 {
            return Err(Error::invalid("max_intervals must be positive"));
        }
        Ok(())
    }
}

/// `u' = A(t) u + f(t)`.
pub trait LinearSystem: Sync {
    fn dim(&self) -> usize;

    /// Fills `a` (dim × dim) and `f` (dim) at `t`.
    fn coefficients(&self, t: f64, a: &mut CMatrix, f: &mut [C64]);
}

/// `u' = F(t, u)` with Jacobian `∂F/∂u`.
pub trait NonlinearSystem: Sync {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, u: &[C64], out: &mut [C64]);

    fn jacobian(&self, t: f64, u: &[C64], out: &mut CMatrix);
}

#[derive(Clone, Copy)]
pub enum OdeProblem<'a> {
    Linear(&'a dyn LinearSystem),
    Nonlinear(&'a dyn NonlinearSystem),
}

impl OdeProblem<'_> {
    pub fn dim(&self) -> usize {
        match self {
            OdeProblem::Linear(s) => s.dim(),
            OdeProblem::Nonlinear(s) => s.dim(),
        }
    }
}

/// Node values of a local solve, `values[component][node]`.
#[derive(Clone, Debug)]
pub struct LocalSolution {
    pub values: Vec<Vec<C64>>,
    pub ok: bool,
    pub newton_iterations: usize,
}

impl LocalSolution {
    fn failed(dim: usize, k: usize) -> Self {
        LocalSolution { values: vec![vec![C64::zero(); k]; dim], ok: false, newton_iterations: 0 }
    }

    fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Node values of `A` and `f` over the grid.
fn sample_linear(sys: &dyn LinearSystem, nodes: &[f64]) -> (Vec<CMatrix>, Vec<Vec<C64>>) {
    let n = sys.dim();
    let mut a_vals = Vec::with_capacity(nodes.len());
    let mut f_vals = Vec::with_capacity(nodes.len());
    for &t in nodes {
        let mut a = CMatrix::zeros(n, n);
        let mut f = vec![C64::zero(); n];
        sys.coefficients(t, &mut a, &mut f);
        a_vals.push(a);
        f_vals.push(f);
    }
    (a_vals, f_vals)
}

/// Solves `u(t) = u_c + ∫_c^t (A u + f)` at the nodes from sampled `A`, `f`.
///
/// The unknowns are ordered component-major: `U[comp·k + node]`.
fn solve_integral_equation(
    basis: &ChebBasis,
    (c, d): (f64, f64),
    a_vals: &[CMatrix],
    f_vals: &[Vec<C64>],
    u_c: &[C64],
) -> Option<Vec<Vec<C64>>> {
    let n = u_c.len();
    let k = basis.k();
    let h = 0.5 * (d - c);
    let s = basis.unit_integration();
    let size = n * k;
    let mut m = CMatrix::identity(size);
    let mut rhs = vec![C64::zero(); size];
    for comp in 0..n {
        for i in 0..k {
            let row = comp * k + i;
            let mut acc = u_c[comp];
            for l in 0..k {
                let sil = s[(i, l)] * h;
                if sil == 0.0 {
                    continue;
                }
                acc += f_vals[l][comp] * sil;
                let al = &a_vals[l];
                for col in 0..n {
                    let v = al[(comp, col)];
                    if !v.is_zero() {
                        m[(row, col * k + l)] -= v * sil;
                    }
                }
            }
            rhs[row] = acc;
        }
    }
    let lu = Lu::new(m).ok()?;
    let u = lu.solve(&rhs);
    Some((0..n).map(|comp| u[comp * k..(comp + 1) * k].to_vec()).collect())
}

/// Linear local solve on `[c, d]` with `u(c) = u_c`.
pub fn solve_local_linear(
    sys: &dyn LinearSystem,
    interval: (f64, f64),
    u_c: &[C64],
    basis: &ChebBasis,
) -> LocalSolution {
    let nodes = basis.nodes_on(interval.0, interval.1);
    let (a_vals, f_vals) = sample_linear(sys, &nodes);
    match solve_integral_equation(basis, interval, &a_vals, &f_vals, u_c) {
        Some(values) => {
            let mut sol = LocalSolution { values, ok: true, newton_iterations: 0 };
            sol.ok = sol.is_finite();
            sol
        }
        None => LocalSolution::failed(u_c.len(), basis.k()),
    }
}

const NEWTON_MAX: usize = 20;
const NEWTON_TOL: f64 = 1e-13;
/// Updates at or below this (relative) level count as converged once the
/// iteration cap is hit; rounding keeps some problems from reaching
/// `NEWTON_TOL`.
const NEWTON_STALL_TOL: f64 = 1e-10;

/// Implicit trapezoidal predictor on the grid nodes.
fn trapezoid_predictor(sys: &dyn NonlinearSystem, nodes: &[f64], u_c: &[C64]) -> Option<Vec<Vec<C64>>> {
    let n = u_c.len();
    let k = nodes.len();
    let mut out = vec![u_c.to_vec()];
    let mut f_prev = vec![C64::zero(); n];
    let mut f_new = vec![C64::zero(); n];
    let mut jac = CMatrix::zeros(n, n);
    for i in 1..k {
        let h = nodes[i] - nodes[i - 1];
        let prev = out[i - 1].clone();
        sys.rhs(nodes[i - 1], &prev, &mut f_prev);
        let mut x = prev.clone();
        for _ in 0..10 {
            sys.rhs(nodes[i], &x, &mut f_new);
            sys.jacobian(nodes[i], &x, &mut jac);
            let g: Vec<C64> = (0..n).map(|m| x[m] - prev[m] - (f_prev[m] + f_new[m]) * (0.5 * h)).collect();
            let mut jm = CMatrix::identity(n);
            for r in 0..n {
                for col in 0..n {
                    jm[(r, col)] -= jac[(r, col)] * (0.5 * h);
                }
            }
            let dx = Lu::new(jm).ok()?.solve(&g);
            let mut dmax: f64 = 0.0;
            for m in 0..n {
                x[m] -= dx[m];
                dmax = dmax.max(dx[m].norm());
            }
            let scale = x.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if !dmax.is_finite() {
                return None;
            }
            if dmax <= 1e-14 * scale {
                break;
            }
        }
        out.push(x);
    }
    // node-major → component-major
    Some((0..n).map(|comp| out.iter().map(|u| u[comp]).collect()).collect())
}

/// Nonlinear local solve: trapezoid predictor, then Newton iterations whose
/// linearized problems are solved by the integral-equation method.
pub fn solve_local_nonlinear(
    sys: &dyn NonlinearSystem,
    interval: (f64, f64),
    u_c: &[C64],
    basis: &ChebBasis,
) -> LocalSolution {
    let n = u_c.len();
    let k = basis.k();
    let nodes = basis.nodes_on(interval.0, interval.1);
    let mut u = match trapezoid_predictor(sys, &nodes, u_c) {
        Some(u) if u.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite()) => u,
        _ => vec![vec![C64::zero(); k]; n]
            .into_iter()
            .enumerate()
            .map(|(comp, mut v)| {
                v.iter_mut().for_each(|z| *z = u_c[comp]);
                v
            })
            .collect(),
    };

    let mut a_vals = vec![CMatrix::zeros(n, n); k];
    let mut f_vals = vec![vec![C64::zero(); n]; k];
    let mut point = vec![C64::zero(); n];
    let mut fx = vec![C64::zero(); n];
    let mut last_update = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=NEWTON_MAX {
        iterations = it;
        for l in 0..k {
            for comp in 0..n {
                point[comp] = u[comp][l];
            }
            sys.rhs(nodes[l], &point, &mut fx);
            sys.jacobian(nodes[l], &point, &mut a_vals[l]);
            let ju = a_vals[l].mul_vec(&point);
            for comp in 0..n {
                f_vals[l][comp] = fx[comp] - ju[comp];
            }
        }
        let Some(next) = solve_integral_equation(basis, interval, &a_vals, &f_vals, u_c) else {
            return LocalSolution::failed(n, k);
        };
        let mut dmax: f64 = 0.0;
        let mut umax: f64 = 1.0;
        for comp in 0..n {
            for l in 0..k {
                dmax = dmax.max((next[comp][l] - u[comp][l]).norm());
                umax = umax.max(next[comp][l].norm());
            }
        }
        u = next;
        if !dmax.is_finite() {
            return LocalSolution::failed(n, k);
        }
        last_update = dmax / umax;
        if last_update <= NEWTON_TOL {
            converged = true;
            break;
        }
    }
    let mut sol = LocalSolution { values: u, ok: false, newton_iterations: iterations };
    sol.ok = sol.is_finite() && (converged || last_update <= NEWTON_STALL_TOL);
    sol
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub intervals_processed: usize,
    pub newton_iterations: usize,
}

/// Piecewise solution of a first-order system.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSolution {
    pub components: Vec<PiecewiseCheb>,
    pub stats: SolveStats,
}

impl SystemSolution {
    pub fn partition(&self) -> &[f64] {
        self.components[0].partition()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// All components at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<C64>> {
        let f = &self.components[0];
        let (a, b) = f.domain();
        let i = f.locate(t).ok_or(Error::Domain { t, a, b })?;
        Ok(self.components.iter().map(|c| c.eval_piece(i, t, 0)).collect())
    }

    fn reflect(&self) -> SystemSolution {
        SystemSolution { components: self.components.iter().map(|c| c.reflect()).collect(), stats: self.stats.clone() }
    }
}

fn local_solve(problem: OdeProblem<'_>, interval: (f64, f64), w: &[C64], basis: &ChebBasis) -> LocalSolution {
    match problem {
        OdeProblem::Linear(s) => solve_local_linear(s, interval, w, basis),
        OdeProblem::Nonlinear(s) => solve_local_nonlinear(s, interval, w, basis),
    }
}

fn tails_accepted(coeffs: &[Vec<C64>], cfg: &AdaptiveConfig) -> bool {
    match cfg.tail_norm {
        TailNorm::Component => coeffs.iter().all(|c| coeff_tail_ratio(c) <= cfg.eps),
        TailNorm::Vector => {
            let norm = |c: &[C64]| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let scale = coeffs.iter().map(|c| norm(c)).fold(0.0, f64::max);
            coeffs.iter().all(|c| {
                let tail = norm(&c[c.len().saturating_sub(2)..]);
                tail.is_finite() && tail <= cfg.eps * scale
            })
        }
    }
}

/// Solves on `[a, b]` with `u(a) = v`.
pub fn solve_adaptive(
    problem: OdeProblem<'_>,
    (a, b): (f64, f64),
    v: &[C64],
    cfg: &AdaptiveConfig,
) -> Result<SystemSolution> {
    cfg.validate()?;
    if !(a < b) {
        return Err(Error::invalid(format!("degenerate interval [{a}, {b}]")));
    }
    let n = problem.dim();
    if v.len() != n {
        return Err(Error::invalid(format!("initial value has length {} but system has dimension {n}", v.len())));
    }
    let basis = ChebBasis::new(cfg.k)?;
    let k = cfg.k;

    let mut partition = vec![a];
    let mut blocks: Vec<Vec<C64>> = vec![Vec::new(); n];
    let mut w = v.to_vec();
    let mut stack = vec![(a, b, 0usize)];
    let mut stats = SolveStats::default();

    // The stack pops its last element, and the left half is pushed last, so
    // the pending interval with the smallest left endpoint is always next.
    while let Some((c, d, depth)) = stack.pop() {
        stats.intervals_processed += 1;
        if stats.intervals_processed > cfg.max_intervals {
            return Err(Error::BudgetExhausted { partial: partition });
        }
        let local = local_solve(problem, (c, d), &w, &basis);
        stats.newton_iterations += local.newton_iterations;
        let coeffs: Option<Vec<Vec<C64>>> = local
            .ok
            .then(|| local.values.iter().map(|vals| basis.vals_to_coeffs(vals)).collect());
        let accept = coeffs.as_ref().map(|cs| tails_accepted(cs, cfg)).unwrap_or(false);
        if accept {
            for (comp, c) in coeffs.unwrap().into_iter().enumerate() {
                blocks[comp].extend(c);
            }
            partition.push(d);
            w = local.values.iter().map(|vals| vals[k - 1]).collect();
        } else {
            let mid = 0.5 * (c + d);
            if depth >= cfg.max_depth || !(mid > c && mid < d) {
                return Err(Error::DepthExceeded { t: c });
            }
            stack.push((mid, d, depth + 1));
            stack.push((c, mid, depth + 1));
        }
    }

    let components = blocks
        .into_iter()
        .map(|coeffs| PiecewiseCheb::new(k, partition.clone(), coeffs))
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemSolution { components, stats })
}

struct ReflectedLinear<'a>(&'a dyn LinearSystem);

impl LinearSystem for ReflectedLinear<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn coefficients(&self, t: f64, a: &mut CMatrix, f: &mut [C64]) {
        self.0.coefficients(-t, a, f);
        for i in 0..a.rows() {
            for v in a.row_mut(i) {
                *v = -*v;
            }
        }
        f.iter_mut().for_each(|z| *z = -*z);
    }
}

struct ReflectedNonlinear<'a>(&'a dyn NonlinearSystem);

impl NonlinearSystem for ReflectedNonlinear<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn rhs(&self, t: f64, u: &[C64], out: &mut [C64]) {
        self.0.rhs(-t, u, out);
        out.iter_mut().for_each(|z| *z = -*z);
    }

    fn jacobian(&self, t: f64, u: &[C64], out: &mut CMatrix) {
        self.0.jacobian(-t, u, out);
        for i in 0..out.rows() {
            for v in out.row_mut(i) {
                *v = -*v;
            }
        }
    }
}

/// Solves on `[a, b]` with `u(eta) = v` for an interior (or end) point.
///
/// `[eta, b]` is solved forward and `[a, eta]` is solved as a forward problem
/// in the reflected variable `s = -t`; the two halves are then joined.
pub fn solve_adaptive_from(
    problem: OdeProblem<'_>,
    (a, b): (f64, f64),
    eta: f64,
    v: &[C64],
    cfg: &AdaptiveConfig,
) -> Result<SystemSolution> {
    if !(eta >= a && eta <= b) {
        return Err(Error::Domain { t: eta, a, b });
    }
    let right = if eta < b { Some(solve_adaptive(problem, (eta, b), v, cfg)?) } else { None };
    let left = if a < eta {
        let sol = match problem {
            OdeProblem::Linear(s) => {
                let r = ReflectedLinear(s);
                solve_adaptive(OdeProblem::Linear(&r), (-eta, -a), v, cfg)?
            }
            OdeProblem::Nonlinear(s) => {
                let r = ReflectedNonlinear(s);
                solve_adaptive(OdeProblem::Nonlinear(&r), (-eta, -a), v, cfg)?
            }
        };
        Some(sol.reflect())
    } else {
        None
    };
    match (left, right) {
        (Some(l), Some(r)) => {
            let components = l
                .components
                .iter()
                .zip(&r.components)
                .map(|(x, y)| x.concat(y))
                .collect::<Result<Vec<_>>>()?;
            let stats = SolveStats {
                intervals_processed: l.stats.intervals_processed + r.stats.intervals_processed,
                newton_iterations: l.stats.newton_iterations + r.stats.newton_iterations,
            };
            Ok(SystemSolution { components, stats })
        }
        (Some(l), None) => Ok(l),
        (None, Some(r)) => Ok(r),
        (None, None) => Err(Error::invalid(format!("degenerate interval [{a}, {b}]"))),
    }
}
