//! Local Levin-type solve of the Riccati equation on a small window.
//!
//! The eigenvalues of the coefficient matrix at each grid node seed `n`
//! branches; Newton's method with truncated least-squares updates pulls each
//! branch onto a slowly-varying solution of the Riccati equation. Only the
//! values at `σ` (and derivatives through order `n − 2`) leave this module.

use num_complex::Complex64;

use crate::chebkit::{clenshaw, diff_coeffs, vals_to_coeffs, ChebGrid};
use crate::error::{Error, Result};
use crate::linalg::{truncated_lsq, DEFAULT_LSQ_TOL};
use crate::par::{try_map_indexed, Execution};
use crate::phase::ScalarOde;
use crate::riccati::{pk_values, riccati_jacobian, riccati_residual, RiccatiGridState};

type C64 = Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct LevinConfig {
    pub window: (f64, f64),
    pub sigma: f64,
    pub k: usize,
    pub max_newton: usize,
    /// Newton stops once `max|δ| < newton_tol_factor · ε₀ · max|r|`.
    pub newton_tol_factor: f64,
    /// Relative truncation threshold for the pivoted QR solves.
    pub lsq_tol: f64,
    pub execution: Execution,
}

impl LevinConfig {
    /// Window `[a, a + (b − a)/10]` with `σ` at its midpoint.
    pub fn for_interval((a, b): (f64, f64)) -> Self {
        let b0 = a + 0.1 * (b - a);
        Self::with_window((a, b0), 0.5 * (a + b0))
    }

    pub fn with_window(window: (f64, f64), sigma: f64) -> Self {
        LevinConfig {
            window,
            sigma,
            k: 16,
            max_newton: 8,
            newton_tol_factor: 100.0,
            lsq_tol: DEFAULT_LSQ_TOL,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self, (a, b): (f64, f64)) -> Result<()> {
        let (a0, b0) = self.window;
        if !(a0 < b0) || a0 < a || b0 > b {
            return Err(Error::invalid(format!(
                "Levin window [{a0}, {b0}] must be a nondegenerate subinterval of [{a}, {b}]"
            )));
        }
        if !(self.sigma >= a0 && self.sigma <= b0) {
            return Err(Error::invalid(format!("sigma = {} lies outside the window [{a0}, {b0}]", self.sigma)));
        }
        if self.k < 8 {
            return Err(Error::invalid(format!("Levin grid order must be at least 8, got {}", self.k)));
        }
        if self.max_newton == 0 {
            return Err(Error::invalid("max_newton must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonReport {
    pub converged: bool,
    pub iterations: usize,
    /// `max_j |δ(t_j)|` of the last update.
    pub last_update: f64,
    /// `max_j |ξ(t_j)| / max(1, max_j |P_n(t_j)|)` after the last update.
    pub scaled_residual: f64,
}

/// Output of the local stage.
#[derive(Clone, Debug, PartialEq)]
pub struct LevinState {
    pub sigma: f64,
    /// `branches[j] = [r_j(σ), r_j'(σ), …, r_j^{(n-2)}(σ)]`.
    pub branches: Vec<Vec<C64>>,
    pub reports: Vec<NewtonReport>,
}

impl LevinState {
    pub fn order(&self) -> usize {
        self.branches.len()
    }

    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }

    /// `r_j(σ)` for every branch.
    pub fn values_at_sigma(&self) -> Vec<C64> {
        self.branches.iter().map(|b| b[0]).collect()
    }
}

/// Coefficient values on the grid, `out[j][i] = q_j(t_i)`.
pub fn coefficient_values(ode: &ScalarOde, grid: &ChebGrid) -> Vec<Vec<C64>> {
    let n = ode.order();
    let k = grid.k();
    let mut out = vec![vec![C64::default(); k]; n];
    let mut q = vec![C64::default(); n];
    for (i, &t) in grid.nodes().iter().enumerate() {
        ode.coefficients_at(t, &mut q);
        for j in 0..n {
            out[j][i] = q[j];
        }
    }
    out
}

fn min_separation(v: &[C64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            m = m.min((v[i] - v[j]).norm());
        }
    }
    m
}

/// Assigns `next` to the branches whose current values are `prev`, closest
/// pairs first. Returns `next` reordered to follow `prev`.
pub(crate) fn match_branches(prev: &[C64], next: &[C64], t: f64) -> Result<Vec<C64>> {
    let n = prev.len();
    let sep = min_separation(prev);
    let scale = prev.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if n > 1 && !(sep > 1e-13 * scale) {
        return Err(Error::TurningPoint { t });
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (b, pv) in prev.iter().enumerate() {
        for (e, nv) in next.iter().enumerate() {
            pairs.push(((pv - nv).norm(), b, e));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<Option<C64>> = vec![None; n];
    let mut used = vec![false; n];
    for (d, b, e) in pairs {
        if out[b].is_some() || used[e] {
            continue;
        }
        if n > 1 && d > 0.5 * sep {
            return Err(Error::TurningPoint { t });
        }
        out[b] = Some(next[e]);
        used[e] = true;
    }
    Ok(out.into_iter().map(|z| z.expect("every branch matched")).collect())
}

/// Companion-matrix eigenvalues at every node, matched into continuous
/// branches. `result[j][i]` is branch `j` at node `i`.
pub fn initial_guesses(ode: &ScalarOde, grid: &ChebGrid) -> Result<Vec<Vec<C64>>> {
    let n = ode.order();
    let k = grid.k();
    let mut branches = vec![vec![C64::default(); k]; n];
    let mut prev: Vec<C64> = Vec::new();
    for (i, &t) in grid.nodes().iter().enumerate() {
        let mut eig = ode.eigenvalues(t)?.eigenvalues;
        if i == 0 {
            eig.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
            if n > 1 && !(min_separation(&eig) > 1e-13 * eig.iter().map(|z| z.norm()).fold(1.0, f64::max)) {
                return Err(Error::TurningPoint { t });
            }
        } else {
            eig = match_branches(&prev, &eig, t)?;
        }
        for j in 0..n {
            branches[j][i] = eig[j];
        }
        prev = eig;
    }
    Ok(branches)
}

/// Newton iterations on the Riccati equation starting from `guess`.
///
/// `branch` only labels errors.
pub fn newton_refine(
    ode: &ScalarOde,
    grid: &ChebGrid,
    guess: &[C64],
    branch: usize,
    cfg: &LevinConfig,
) -> Result<(Vec<C64>, NewtonReport)> {
    let q = coefficient_values(ode, grid);
    refine_with(grid, &q, guess.to_vec(), branch, cfg)
}

fn refine_with(
    grid: &ChebGrid,
    q: &[Vec<C64>],
    mut r: Vec<C64>,
    branch: usize,
    cfg: &LevinConfig,
) -> Result<(Vec<C64>, NewtonReport)> {
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Divergence { branch });
    }
    let diff = grid.diff_matrix();
    let tol = cfg.newton_tol_factor * f64::EPSILON;
    let mut report = NewtonReport { converged: false, iterations: 0, last_update: f64::NAN, scaled_residual: f64::NAN };
    for it in 1..=cfg.max_newton {
        let state = RiccatiGridState::with_diff(diff.clone(), r.clone(), q.to_vec());
        let xi = riccati_residual(&state);
        let jac = riccati_jacobian(&state);
        let rhs: Vec<C64> = xi.iter().map(|z| -z).collect();
        let delta = truncated_lsq(&jac, &rhs, cfg.lsq_tol);
        for (rv, d) in r.iter_mut().zip(&delta) {
            *rv += d;
        }
        let dmax = delta.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let rmax = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !dmax.is_finite() || !rmax.is_finite() {
            return Err(Error::Divergence { branch });
        }
        report.iterations = it;
        report.last_update = dmax;
        if dmax < tol * rmax {
            report.converged = true;
            break;
        }
    }
    let state = RiccatiGridState::with_diff(diff, r.clone(), q.to_vec());
    let n = q.len();
    let pn = pk_values(&state, n).pop().unwrap();
    let scale = pn.iter().map(|z| z.norm()).fold(1.0, f64::max);
    report.scaled_residual = riccati_residual(&state).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    Ok((r, report))
}

/// Values of `r` and its first `m` derivatives at `t` from node values.
fn interpolate_jet(grid: &ChebGrid, values: &[C64], t: f64, m: usize) -> Vec<C64> {
    let (a0, b0) = grid.interval();
    let x = ((2.0 * t - a0 - b0) / (b0 - a0)).clamp(-1.0, 1.0);
    let scale = 2.0 / (b0 - a0);
    let mut coeffs = vals_to_coeffs(values);
    let mut out = Vec::with_capacity(m + 1);
    out.push(clenshaw(&coeffs, x));
    for d in 1..=m {
        coeffs = diff_coeffs(&coeffs);
        out.push(clenshaw(&coeffs, x) * scale.powi(d as i32));
    }
    out
}

/// Runs the local stage: guesses, Newton refinement of every branch and
/// interpolation to `σ`.
pub fn levin_stage(ode: &ScalarOde, cfg: &LevinConfig) -> Result<LevinState> {
    cfg.validate(ode.interval())?;
    let n = ode.order();
    let grid = ChebGrid::new(cfg.k, cfg.window)?;
    let q = coefficient_values(ode, &grid);
    let guesses = initial_guesses(ode, &grid)?;
    let refined = try_map_indexed(cfg.execution, n, |j| refine_with(&grid, &q, guesses[j].clone(), j, cfg))?;
    let mut branches = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    for (r, rep) in refined {
        branches.push(interpolate_jet(&grid, &r, cfg.sigma, n.saturating_sub(2)));
        reports.push(rep);
    }
    let at_sigma: Vec<C64> = branches.iter().map(|b| b[0]).collect();
    if n > 1 && !(min_separation(&at_sigma) > 0.0) {
        return Err(Error::TurningPoint { t: cfg.sigma });
    }
    Ok(LevinState { sigma: cfg.sigma, branches, reports })
}
