//! Phase functions and solution assembly.
//!
//! Each Riccati branch found by the local stage is extended over the whole
//! interval by the adaptive solver, applied to the first-order system for
//! `(r, r', …, r^{(n-2)})`, and then integrated once more to get `ψ_j`.
//! Solutions of the scalar equation are combinations `Σ c_j exp(ψ_j)`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::chebkit::{ChebBasis, PiecewiseCheb};
use crate::error::{Error, Result};
use crate::levin::{levin_stage, LevinConfig, LevinState};
use crate::linalg::{companion_eigs, condition_1, CMatrix, CompanionSpectrum, Lu};
use crate::odesolve::{solve_adaptive_from, AdaptiveConfig, NonlinearSystem, OdeProblem, TailNorm};
use crate::par::{map_indexed, try_map_indexed, Execution};
use crate::riccati::{bell_values, bell_values_with_gradient};

type C64 = Complex64;

type CoefficientFn = dyn Fn(f64, &mut [C64]) + Send + Sync;

/// `y⁽ⁿ⁾ + q_{n-1} y⁽ⁿ⁻¹⁾ + … + q₀ y = 0` on `[a, b]`.
#[derive(Clone)]
pub struct ScalarOde {
    order: usize,
    interval: (f64, f64),
    coeffs: Arc<CoefficientFn>,
}

impl std::fmt::Debug for ScalarOde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarOde").field("order", &self.order).field("interval", &self.interval).finish()
    }
}

impl ScalarOde {
    /// `coeffs(t, q)` must write `q_0(t), …, q_{n-1}(t)` into `q`.
    pub fn new(
        order: usize,
        interval: (f64, f64),
        coeffs: impl Fn(f64, &mut [C64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if order < 2 {
            return Err(Error::invalid(format!("order must be at least 2, got {order}")));
        }
        let (a, b) = interval;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(format!("invalid interval [{a}, {b}]")));
        }
        Ok(ScalarOde { order, interval, coeffs: Arc::new(coeffs) })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn coefficients_at(&self, t: f64, out: &mut [C64]) {
        (self.coeffs)(t, out)
    }

    pub fn coefficients(&self, t: f64) -> Vec<C64> {
        let mut q = vec![C64::zero(); self.order];
        self.coefficients_at(t, &mut q);
        q
    }

    /// Eigenvalues of the coefficient matrix at `t`.
    pub fn eigenvalues(&self, t: f64) -> Result<CompanionSpectrum> {
        companion_eigs(&self.coefficients(t))
    }
}

/// The Riccati equation as a first-order system in the scaled variables
/// `v_i = r^{(i)} / s^i`, `i = 0, …, n − 2`.
///
/// With `s` comparable to the eigenvalue magnitudes every Jacobian entry is
/// `O(s)`; unscaled, the last row grows like `s²` and the local linear
/// systems lose digits accordingly.
pub struct RiccatiSystem<'a> {
    ode: &'a ScalarOde,
    scale: f64,
}

impl<'a> RiccatiSystem<'a> {
    pub fn new(ode: &'a ScalarOde) -> Self {
        Self::with_scale(ode, 1.0)
    }

    pub fn with_scale(ode: &'a ScalarOde, scale: f64) -> Self {
        RiccatiSystem { ode, scale }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `(r, …, r^{(n-2)})` to `v`.
    pub fn to_scaled(&self, jet: &[C64]) -> Vec<C64> {
        jet.iter().enumerate().map(|(i, z)| z / self.scale.powi(i as i32)).collect()
    }

    /// Unscaled jet with `r^{(n-1)} = 0` appended.
    fn jet_and_q(&self, t: f64, v: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let mut jet: Vec<C64> = v.iter().enumerate().map(|(i, z)| z * self.scale.powi(i as i32)).collect();
        jet.push(C64::zero());
        (jet, self.ode.coefficients(t))
    }
}

impl NonlinearSystem for RiccatiSystem<'_> {
    fn dim(&self) -> usize {
        self.ode.order - 1
    }

    fn rhs(&self, t: f64, v: &[C64], out: &mut [C64]) {
        let n = self.ode.order;
        let s = self.scale;
        let (jet, q) = self.jet_and_q(t, v);
        let p = bell_values(&jet, n);
        for i in 0..n - 2 {
            out[i] = v[i + 1] * s;
        }
        let mut acc = p[n];
        for j in 0..n {
            acc += q[j] * p[j];
        }
        out[n - 2] = -acc / s.powi(n as i32 - 2);
    }

    fn jacobian(&self, t: f64, v: &[C64], out: &mut CMatrix) {
        let n = self.ode.order;
        let d = n - 1;
        let s = self.scale;
        let (jet, q) = self.jet_and_q(t, v);
        let (_, grad) = bell_values_with_gradient(&jet, n);
        for i in 0..d {
            for l in 0..d {
                out[(i, l)] = C64::zero();
            }
        }
        for i in 0..d - 1 {
            out[(i, i + 1)] = C64::new(s, 0.0);
        }
        for l in 0..d {
            let mut acc = grad[n][l];
            for j in 0..n {
                acc += q[j] * grad[j][l];
            }
            out[(d - 1, l)] = -acc * s.powi(l as i32 - (n as i32 - 2));
        }
    }
}

/// One phase function and its derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBranch {
    /// Antiderivative of `r` vanishing at `a`.
    pub antiderivative: PiecewiseCheb,
    /// Value of `antiderivative` at `η`.
    pub anchor: C64,
    /// Prescribed `ψ(η)`.
    pub eta_value: C64,
    /// `derivs[m] = ψ^{(m+1)}`, i.e. `r, r', …, r^{(n-2)}`.
    pub derivs: Vec<PiecewiseCheb>,
}

impl PhaseBranch {
    /// `ψ(t) = ψ(η) + (Φ(t) − Φ(η))`, so `ψ(η)` is reproduced exactly.
    pub fn psi(&self, t: f64) -> Result<C64> {
        Ok(self.eta_value + (self.antiderivative.eval(t, 0)? - self.anchor))
    }

    /// `[ψ', ψ'', …, ψ^{(m)}]` at `t`. Orders beyond the stored ones are
    /// obtained by differentiating the highest stored expansion.
    pub fn derivative_jet(&self, t: f64, m: usize) -> Result<Vec<C64>> {
        let top = self.derivs.len() - 1;
        (0..m)
            .map(|i| if i <= top { self.derivs[i].eval(t, 0) } else { self.derivs[top].eval(t, i - top) })
            .collect()
    }

    pub fn ncoeffs(&self) -> usize {
        self.antiderivative.ncoeffs() + self.derivs.iter().map(|d| d.ncoeffs()).sum::<usize>()
    }
}

/// `n` phase functions with derivatives through order `n − 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSet {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub eta: f64,
    pub branches: Vec<PhaseBranch>,
}

impl PhaseSet {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn psi(&self, j: usize, t: f64) -> Result<C64> {
        self.branches[j].psi(t)
    }

    /// `ψ_j^{(m)}(t)` for `m ≥ 1`.
    pub fn psi_derivative(&self, j: usize, t: f64, m: usize) -> Result<C64> {
        if m == 0 {
            return self.psi(j, t);
        }
        self.branches[j].derivs[m - 1].eval(t, 0)
    }

    /// Total number of Chebyshev coefficients over all `n²` expansions.
    pub fn ncoeffs(&self) -> usize {
        self.branches.iter().map(PhaseBranch::ncoeffs).sum()
    }

    /// Coefficients in the `ψ_j` expansions alone.
    pub fn psi_ncoeffs(&self) -> usize {
        self.branches.iter().map(|b| b.antiderivative.ncoeffs()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn check_point(&self, t: f64) -> Result<()> {
        if t >= self.a && t <= self.b {
            Ok(())
        } else {
            Err(Error::Domain { t, a: self.a, b: self.b })
        }
    }
}

/// Relative distance below which two extended branches count as collided.
const COLLISION_TOL: f64 = 1e-10;

fn check_collisions(branches: &[PhaseBranch]) -> Result<()> {
    if branches.len() < 2 {
        return Ok(());
    }
    let mut points: Vec<f64> = Vec::new();
    for br in branches {
        let p = br.derivs[0].partition();
        points.extend_from_slice(p);
        points.extend(p.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    for &t in &points {
        let r: Vec<C64> = branches.iter().map(|b| b.derivs[0].eval(t, 0)).collect::<Result<_>>()?;
        for i in 0..r.len() {
            for j in i + 1..r.len() {
                let scale = r[i].norm().max(r[j].norm()).max(1.0);
                if (r[i] - r[j]).norm() <= COLLISION_TOL * scale {
                    return Err(Error::TurningPoint { t });
                }
            }
        }
    }
    Ok(())
}

/// Builds the phase functions from an existing local-stage result.
pub fn extend_branches(
    ode: &ScalarOde,
    state: &LevinState,
    eta: f64,
    eta_values: &[C64],
    adaptive: &AdaptiveConfig,
    execution: Execution,
) -> Result<PhaseSet> {
    let n = ode.order();
    let (a, b) = ode.interval();
    if !(eta >= a && eta <= b) {
        return Err(Error::Domain { t: eta, a, b });
    }
    if !(state.sigma >= a && state.sigma <= b) {
        return Err(Error::Domain { t: state.sigma, a, b });
    }
    if eta_values.len() != n || state.branches.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} branch values, got {} prescribed and {} computed",
            eta_values.len(),
            state.branches.len()
        )));
    }
    // All branches share one scale so that the scaled variables of every
    // branch are comparable, and tails are measured against the whole vector.
    let scale = state.branches.iter().map(|b| b[0].norm()).fold(1.0, f64::max);
    let cfg = AdaptiveConfig { tail_norm: TailNorm::Vector, ..adaptive.clone() };
    let branches = try_map_indexed(execution, n, |j| {
        let sys = RiccatiSystem::with_scale(ode, scale);
        let v0 = sys.to_scaled(&state.branches[j]);
        let sol = solve_adaptive_from(OdeProblem::Nonlinear(&sys), (a, b), state.sigma, &v0, &cfg).map_err(
            |e| match e {
                Error::SingularMatrix => Error::Divergence { branch: j },
                other => other,
            },
        )?;
        let derivs: Vec<PiecewiseCheb> = sol
            .components
            .iter()
            .enumerate()
            .map(|(i, f)| if i == 0 { f.clone() } else { f.scaled(C64::new(scale.powi(i as i32), 0.0)) })
            .collect();
        let antiderivative = derivs[0].antiderivative();
        let anchor = antiderivative.eval(eta, 0)?;
        Ok::<_, Error>(PhaseBranch { antiderivative, anchor, eta_value: eta_values[j], derivs })
    })?;
    check_collisions(&branches)?;
    Ok(PhaseSet { n, a, b, sigma: state.sigma, eta, branches })
}

/// Local stage followed by the global extension of every branch.
pub fn build_phase_set(
    ode: &ScalarOde,
    levin: &LevinConfig,
    eta: f64,
    eta_values: &[C64],
    adaptive: &AdaptiveConfig,
) -> Result<PhaseSet> {
    let state = levin_stage(ode, levin)?;
    extend_branches(ode, &state, eta, eta_values, adaptive, levin.execution)
}

/// Defaults: local stage on the first tenth of the interval, `η = a` and
/// `ψ_j(η) = 0`.
pub fn build_phase_set_default(ode: &ScalarOde, eps: f64) -> Result<PhaseSet> {
    let (a, b) = ode.interval();
    build_phase_set(
        ode,
        &LevinConfig::for_interval((a, b)),
        a,
        &vec![C64::zero(); ode.order()],
        &AdaptiveConfig::with_eps(eps),
    )
}

/// `P_m(t)` and `ψ_j(t)` for branch `j`.
fn p_and_psi(ps: &PhaseSet, j: usize, t: f64, m: usize) -> Result<(C64, C64)> {
    if m > ps.n {
        return Err(Error::invalid(format!("derivative order {m} exceeds n = {}", ps.n)));
    }
    if j >= ps.n {
        return Err(Error::invalid(format!("branch {j} out of range for n = {}", ps.n)));
    }
    ps.check_point(t)?;
    let br = &ps.branches[j];
    let jet = br.derivative_jet(t, m)?;
    let p = bell_values(&jet, m)[m];
    Ok((p, br.psi(t)?))
}

fn exp_checked(z: C64, branch: usize) -> Result<C64> {
    let v = z.exp();
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow { branch })
    }
}

/// `d^m/dt^m exp(ψ_j)` at `t`, for `m ≤ n`.
pub fn basis_derivatives(ps: &PhaseSet, j: usize, t: f64, m: usize) -> Result<C64> {
    let (p, psi) = p_and_psi(ps, j, t, m)?;
    Ok(p * exp_checked(psi, j)?)
}

/// `d^m/dt^m exp(ψ_j − s)` at `t`.
fn shifted_basis(ps: &PhaseSet, j: usize, t: f64, m: usize, s: f64) -> Result<C64> {
    let (p, psi) = p_and_psi(ps, j, t, m)?;
    Ok(p * exp_checked(psi - s, j)?)
}

/// One condition `y^{(order)}(point) = value`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpCondition {
    pub point: f64,
    pub order: usize,
    pub value: C64,
}

impl BvpCondition {
    pub fn new(point: f64, order: usize, value: C64) -> Self {
        BvpCondition { point, order, value }
    }
}

/// Assembly matrices with a 1-norm condition number above this get a warning.
pub const COND_WARN: f64 = 1e12;
/// Boundary value problems above this are rejected.
pub const COND_FAIL: f64 = 1e15;

/// A solution `y = Σ_j w_j exp(ψ_j − s_j)`.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub phases: Arc<PhaseSet>,
    /// Weights for the shifted basis `exp(ψ_j − s_j)`.
    pub weights: Vec<C64>,
    pub shifts: Vec<f64>,
    /// Coefficients in the phase expansions the solution uses.
    pub ncoeffs: usize,
    pub wall_time: Duration,
    /// 1-norm condition number of the assembly matrix.
    pub cond: f64,
    pub warning: Option<String>,
}

impl SolveReport {
    /// Weights for the unshifted basis `exp(ψ_j)`; may over- or underflow
    /// when the shifts are large.
    pub fn unshifted_weights(&self) -> Vec<C64> {
        self.weights.iter().zip(&self.shifts).map(|(w, &s)| w * (-s).exp()).collect()
    }

    /// `y^{(m)}(t)`.
    pub fn eval(&self, t: f64, m: usize) -> Result<C64> {
        let mut y = C64::zero();
        for (j, (w, &s)) in self.weights.iter().zip(&self.shifts).enumerate() {
            if w.is_zero() {
                continue;
            }
            y += w * shifted_basis(&self.phases, j, t, m, s)?;
        }
        Ok(y)
    }

    pub fn eval_many(&self, ts: &[f64], execution: Execution) -> Result<Vec<C64>> {
        try_map_indexed(execution, ts.len(), |i| self.eval(ts[i], 0))
    }

    /// Dense piecewise expansion of `y` on `pieces` equal subintervals.
    pub fn materialize(&self, pieces: usize, k: usize) -> Result<PiecewiseCheb> {
        if pieces == 0 {
            return Err(Error::invalid("need at least one piece"));
        }
        let basis = ChebBasis::new(k)?;
        let (a, b) = self.phases.interval();
        let h = (b - a) / pieces as f64;
        let mut partition: Vec<f64> = (0..pieces).map(|i| a + h * i as f64).collect();
        partition.push(b);
        let blocks = map_indexed(Execution::default(), pieces, |i| {
            let nodes = basis.nodes_on(partition[i], partition[i + 1]);
            let vals: Result<Vec<C64>> = nodes.iter().map(|&t| self.eval(t, 0)).collect();
            vals.map(|v| basis.vals_to_coeffs(&v))
        });
        let mut coeffs = Vec::with_capacity(pieces * k);
        for blk in blocks {
            coeffs.extend(blk?);
        }
        PiecewiseCheb::new(k, partition, coeffs)
    }
}

fn assemble(
    ps: &Arc<PhaseSet>,
    conditions: &[BvpCondition],
) -> Result<(CMatrix, Vec<C64>, Vec<f64>)> {
    let n = ps.n;
    let mut shifts = vec![f64::NEG_INFINITY; n];
    for c in conditions {
        for (j, s) in shifts.iter_mut().enumerate() {
            ps.check_point(c.point)?;
            *s = s.max(ps.psi(j, c.point)?.re);
        }
    }
    let mut m = CMatrix::zeros(n, n);
    let mut rhs = vec![C64::zero(); n];
    for (i, c) in conditions.iter().enumerate() {
        for j in 0..n {
            m[(i, j)] = shifted_basis(ps, j, c.point, c.order, shifts[j])?;
        }
        rhs[i] = c.value;
    }
    Ok((m, rhs, shifts))
}

fn finish(
    ps: &Arc<PhaseSet>,
    m: CMatrix,
    rhs: &[C64],
    shifts: Vec<f64>,
    start: Instant,
    fail_above: Option<f64>,
) -> Result<SolveReport> {
    let cond = condition_1(&m).unwrap_or(f64::INFINITY);
    if let Some(limit) = fail_above {
        if !(cond <= limit) {
            return Err(if cond.is_finite() { Error::IllConditioned { cond } } else { Error::SingularMatrix });
        }
    }
    let weights = Lu::new(m)?.solve(rhs);
    let warning = (cond > COND_WARN).then(|| format!("assembly matrix condition number {cond:.3e}"));
    Ok(SolveReport {
        ncoeffs: ps.ncoeffs(),
        phases: Arc::clone(ps),
        weights,
        shifts,
        wall_time: start.elapsed(),
        cond,
        warning,
    })
}

/// Solution with `y^{(m)}(t0) = values[m]` for `m < n`.
pub fn solve_ivp(ps: &Arc<PhaseSet>, t0: f64, values: &[C64]) -> Result<SolveReport> {
    let start = Instant::now();
    if values.len() != ps.n {
        return Err(Error::invalid(format!("expected {} initial values, got {}", ps.n, values.len())));
    }
    let conds: Vec<BvpCondition> =
        values.iter().enumerate().map(|(m, &v)| BvpCondition::new(t0, m, v)).collect();
    let (m, rhs, shifts) = assemble(ps, &conds)?;
    finish(ps, m, &rhs, shifts, start, None)
}

/// Solution satisfying exactly `n` point conditions.
pub fn solve_bvp(ps: &Arc<PhaseSet>, conditions: &[BvpCondition]) -> Result<SolveReport> {
    let start = Instant::now();
    if conditions.len() != ps.n {
        return Err(Error::invalid(format!("expected {} conditions, got {}", ps.n, conditions.len())));
    }
    let (m, rhs, shifts) = assemble(ps, conditions)?;
    finish(ps, m, &rhs, shifts, start, Some(COND_FAIL))
}

/// Greedy nearest-neighbour assignment of `next` to the order of `prev`.
fn match_nearest(prev: &[C64], next: &[C64]) -> Vec<C64> {
    let n = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push(((p - q).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = vec![C64::zero(); n];
    let mut used_prev = vec![false; n];
    let mut used_next = vec![false; n];
    for (_, i, j) in pairs {
        if !used_prev[i] && !used_next[j] {
            out[i] = next[j];
            used_prev[i] = true;
            used_next[j] = true;
        }
    }
    out
}

/// `Ω = max_j ∫_a^b |λ_j(t)| dt` by composite Clenshaw–Curtis quadrature on
/// `panels` equal panels of 16 nodes, with eigenvalues matched across nodes.
pub fn frequency_omega(ode: &ScalarOde, panels: usize) -> Result<f64> {
    let panels = panels.max(1);
    let basis = ChebBasis::new(16)?;
    let k = basis.k();
    // ∫_{-1}^{1} T_m = 2 / (1 − m²) for even m.
    let t_integrals: Vec<f64> =
        (0..k).map(|m| if m % 2 == 0 { 2.0 / (1.0 - (m * m) as f64) } else { 0.0 }).collect();
    let (a, b) = ode.interval();
    let h = (b - a) / panels as f64;
    let n = ode.order();
    let mut totals = vec![0.0; n];
    let mut prev: Option<Vec<C64>> = None;
    for p in 0..panels {
        let (c, d) = (a + h * p as f64, a + h * (p + 1) as f64);
        let nodes = basis.nodes_on(c, d);
        let mut mags = vec![Vec::with_capacity(k); n];
        for &t in &nodes {
            let mut lam = ode.eigenvalues(t)?.eigenvalues;
            lam = match &prev {
                Some(pv) => match_nearest(pv, &lam),
                None => {
                    lam.sort_by(|x, y| x.im.total_cmp(&y.im).then(x.re.total_cmp(&y.re)));
                    lam
                }
            };
            for j in 0..n {
                mags[j].push(C64::new(lam[j].norm(), 0.0));
            }
            prev = Some(lam);
        }
        for j in 0..n {
            let cf = basis.vals_to_coeffs(&mags[j]);
            let integral: f64 = cf.iter().zip(&t_integrals).map(|(c, w)| c.re * w).sum();
            totals[j] += 0.5 * (d - c) * integral;
        }
    }
    Ok(totals.into_iter().fold(0.0, f64::max))
}
