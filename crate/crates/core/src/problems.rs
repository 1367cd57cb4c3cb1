//! Test equations, reference solutions and the run/sweep harness.
//!
//! Four problems are provided:
//!
//! * `legendre`: Legendre's equation of degree `ν` on `[0, 0.999]`, with
//!   initial values at 0 taken from `P_ν` so that the solution is `P_ν`;
//! * `third-order-52`: a third-order initial value problem on `[0, 0.1]`;
//! * `third-order`: a third-order boundary value problem on `[−1, 1]`;
//! * `fourth-order`: a fourth-order initial value problem on `[−1, 1]`
//!   whose coefficients are built from prescribed eigenvalues.
//!
//! Reference solutions for the last three come from the adaptive solver
//! applied directly to the scaled first-order system; the Legendre oracle is
//! the three-term recurrence.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levin::LevinConfig;
use crate::linalg::{dense_solve, CMatrix};
use crate::odesolve::{solve_adaptive, solve_adaptive_from, AdaptiveConfig, LinearSystem, OdeProblem, SystemSolution};
use crate::par::{try_map_indexed, Execution};
use crate::phase::{build_phase_set, frequency_omega, solve_bvp, solve_ivp, BvpCondition, PhaseSet, ScalarOde, SolveReport};

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Legendre,
    ThirdOrder,
    #[value(name = "third-order-52")]
    #[serde(rename = "third-order-52")]
    ThirdOrder52,
    FourthOrder,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] =
        [ProblemKind::Legendre, ProblemKind::ThirdOrder, ProblemKind::ThirdOrder52, ProblemKind::FourthOrder];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Legendre => "legendre",
            ProblemKind::ThirdOrder => "third-order",
            ProblemKind::ThirdOrder52 => "third-order-52",
            ProblemKind::FourthOrder => "fourth-order",
        }
    }

    pub fn order(self) -> usize {
        match self {
            ProblemKind::Legendre => 2,
            ProblemKind::ThirdOrder | ProblemKind::ThirdOrder52 => 3,
            ProblemKind::FourthOrder => 4,
        }
    }

    pub fn interval(self) -> (f64, f64) {
        match self {
            ProblemKind::Legendre => (0.0, 0.999),
            ProblemKind::ThirdOrder52 => (0.0, 0.1),
            ProblemKind::ThirdOrder | ProblemKind::FourthOrder => (-1.0, 1.0),
        }
    }

    /// Largest acceptable error for a run to pass.
    pub fn threshold(self) -> f64 {
        match self {
            ProblemKind::Legendre => 1e-11,
            _ => 1e-8,
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Conditions selecting one solution.
#[derive(Clone, Debug, PartialEq)]
pub enum Conditions {
    Ivp { t0: f64, values: Vec<C64> },
    Bvp(Vec<BvpCondition>),
}

impl Conditions {
    pub fn as_list(&self) -> Vec<BvpCondition> {
        match self {
            Conditions::Ivp { t0, values } => {
                values.iter().enumerate().map(|(m, &v)| BvpCondition::new(*t0, m, v)).collect()
            }
            Conditions::Bvp(list) => list.clone(),
        }
    }
}

/// Polynomial `zⁿ + Σ q_j z^j` with the given roots; returns `q_0, …, q_{n-1}`.
pub fn monic_from_roots(roots: &[C64]) -> Vec<C64> {
    // coefficients in increasing degree, leading 1 kept last
    let mut p = vec![C64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C64::zero(); p.len() + 1];
        for (i, &v) in p.iter().enumerate() {
            next[i + 1] += v;
            next[i] -= v * r;
        }
        p = next;
    }
    p.pop();
    p
}

/// Coefficient evaluator whose companion eigenvalues are `lams(t)`.
///
/// `lams(t, out)` writes the `n` eigenvalues at `t`.
pub fn coeffs_from_eigenvalues(
    n: usize,
    lams: impl Fn(f64, &mut [C64]) + Send + Sync + 'static,
) -> Result<impl Fn(f64, &mut [C64]) + Send + Sync + 'static> {
    if n == 0 || n > 6 {
        return Err(Error::invalid(format!("eigenvalue construction supports 1 ≤ n ≤ 6, got {n}")));
    }
    Ok(move |t: f64, q: &mut [C64]| {
        let mut l = [C64::zero(); 6];
        lams(t, &mut l[..n]);
        q[..n].copy_from_slice(&monic_from_roots(&l[..n]));
    })
}

/// `P_ν(t)` and `P_ν'(t)` by the three-term recurrence.
pub fn legendre_with_derivative(nu: u32, t: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, t);
    if nu == 0 {
        return (1.0, 0.0);
    }
    for j in 1..nu {
        let j = j as f64;
        let next = ((2.0 * j + 1.0) * t * cur - j * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    let d = nu as f64 * (prev - t * cur) / (1.0 - t * t);
    (cur, d)
}

/// `P_ν(t)` by the three-term recurrence.
pub fn legendre_reference(nu: u32, t: f64) -> f64 {
    legendre_with_derivative(nu, t).0
}

fn third_order_52_coeffs(w: f64) -> impl Fn(f64, &mut [C64]) + Send + Sync + 'static {
    move |t: f64, q: &mut [C64]| {
        let (et, c3, c8, s) = (t.exp(), (3.0 * t).cos(), (8.0 * t).cos(), t * t + 1.0);
        q[0] = -(w * (c(et * w, -1.0)) * (c8 + 3.0) * (c(s * c3, -w))) / s;
        q[1] = w * (-(c(w, s)) * c8 + et * w * (3.0 * t * t + s * c8 + 4.0) - 3.0 * I * t * t - 3.0 * w - 4.0 * I) / s
            + c3 * (I * (et - 3.0) * w - I * w * c8 + 1.0);
        q[2] = I * (1.0 / s - et + 3.0) * w + I * w * c8 - c3 - 1.0;
    }
}

/// Eigenvalues of the `third-order-52` problem.
pub fn third_order_52_eigenvalues(w: f64, t: f64) -> [C64; 3] {
    [
        1.0 + I * t.exp() * w,
        (3.0 * t).cos() - I * w / (t * t + 1.0),
        -I * w * ((8.0 * t).cos() + 3.0),
    ]
}

fn third_order_coeffs(w: f64) -> impl Fn(f64, &mut [C64]) + Send + Sync + 'static {
    move |t: f64, q: &mut [C64]| {
        let (et, et2, c12) = (t.exp(), (t * t).exp(), (12.0 * t).cos());
        q[0] = -I * et * t * w * (et - I * et2 * w) * (c12 + 2.0);
        q[1] = et2 * w * (2.0 * w - I * et * t)
            + w * (et2 * w + I * et * (t + 1.0)) * c12
            + et * (et * t + 2.0 * I * (t + 1.0) * w);
        q[2] = I * et2 * w - I * w * c12 - et * (t + 1.0) - 2.0 * I * w;
    }
}

/// Eigenvalues of the `third-order` problem.
pub fn third_order_eigenvalues(w: f64, t: f64) -> [C64; 3] {
    [I * w * ((12.0 * t).cos() + 2.0), c(t * t.exp(), 0.0), t.exp() - I * (t * t).exp() * w]
}

/// Eigenvalues of the `fourth-order` problem.
pub fn fourth_order_eigenvalues(w: f64, t: f64) -> [C64; 4] {
    [
        t / 2.0 + I * (t * t).exp() * w,
        I * w / (t * t + 2.0) + (I * t).exp(),
        c((3.0 * t).cos(), 0.0),
        -I * (t * t + 1.0) * w,
    ]
}

/// One problem instance with its solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// `ν` for Legendre, `ω` otherwise.
    pub param: f64,
    pub eps: f64,
    pub k: usize,
    pub window: (f64, f64),
    pub sigma: f64,
    /// Size of the equispaced error grid.
    pub eval_points: usize,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, param: f64) -> Self {
        ProblemSpec { kind, param, eps: 1e-12, k: 16, window: (0.0, 0.1), sigma: 0.05, eval_points: 10_000 }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn order(&self) -> usize {
        self.kind.order()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.kind.interval()
    }

    fn legendre_degree(&self) -> Result<u32> {
        let nu = self.param;
        if nu < 0.0 || nu.fract() != 0.0 || nu > (1u32 << 20) as f64 {
            return Err(Error::invalid(format!("Legendre degree must be an integer in [0, 2^20], got {nu}")));
        }
        Ok(nu as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.param.is_finite() {
            return Err(Error::invalid(format!("parameter must be finite, got {}", self.param)));
        }
        if self.kind == ProblemKind::Legendre {
            self.legendre_degree()?;
        }
        if self.eval_points < 2 {
            return Err(Error::invalid("need at least two evaluation points"));
        }
        self.levin_config().validate(self.interval())?;
        self.adaptive_config().validate()
    }

    pub fn ode(&self) -> Result<ScalarOde> {
        let w = self.param;
        let iv = self.interval();
        match self.kind {
            ProblemKind::Legendre => {
                let nu = w;
                ScalarOde::new(2, iv, move |t, q| {
                    let d = 1.0 - t * t;
                    q[0] = c(nu * (nu + 1.0) / d, 0.0);
                    q[1] = c(-2.0 * t / d, 0.0);
                })
            }
            ProblemKind::ThirdOrder52 => ScalarOde::new(3, iv, third_order_52_coeffs(w)),
            ProblemKind::ThirdOrder => ScalarOde::new(3, iv, third_order_coeffs(w)),
            ProblemKind::FourthOrder => {
                let f = coeffs_from_eigenvalues(4, move |t, l| l.copy_from_slice(&fourth_order_eigenvalues(w, t)))?;
                ScalarOde::new(4, iv, f)
            }
        }
    }

    pub fn conditions(&self) -> Result<Conditions> {
        let iw = I * self.param;
        Ok(match self.kind {
            ProblemKind::Legendre => {
                let (p, d) = legendre_with_derivative(self.legendre_degree()?, 0.0);
                Conditions::Ivp { t0: 0.0, values: vec![c(p, 0.0), c(d, 0.0)] }
            }
            ProblemKind::ThirdOrder52 => Conditions::Ivp { t0: 0.0, values: (0..3).map(|m| iw.powu(m)).collect() },
            ProblemKind::FourthOrder => Conditions::Ivp { t0: 0.0, values: (0..4).map(|m| iw.powu(m)).collect() },
            ProblemKind::ThirdOrder => Conditions::Bvp(vec![
                BvpCondition::new(-1.0, 0, c(1.0, 0.0)),
                BvpCondition::new(1.0, 0, c(1.0, 0.0)),
                BvpCondition::new(-1.0, 1, C64::zero()),
            ]),
        })
    }

    pub fn levin_config(&self) -> LevinConfig {
        let mut cfg = LevinConfig::with_window(self.window, self.sigma);
        cfg.k = self.k;
        cfg
    }

    pub fn adaptive_config(&self) -> AdaptiveConfig {
        AdaptiveConfig { k: self.k, eps: self.eps, ..Default::default() }
    }

    /// Phase functions normalized by `ψ_j(0) = 0`.
    pub fn phase_set(&self, execution: Execution) -> Result<PhaseSet> {
        let ode = self.ode()?;
        let mut levin = self.levin_config();
        levin.execution = execution;
        let eta = 0.0f64.clamp(self.interval().0, self.interval().1);
        build_phase_set(&ode, &levin, eta, &vec![C64::zero(); self.order()], &self.adaptive_config())
    }

    /// Builds the phase functions and solves for the prescribed conditions.
    pub fn solve(&self, execution: Execution) -> Result<SolveReport> {
        let ps = Arc::new(self.phase_set(execution)?);
        match self.conditions()? {
            Conditions::Ivp { t0, values } => solve_ivp(&ps, t0, &values),
            Conditions::Bvp(list) => solve_bvp(&ps, &list),
        }
    }

    /// Equispaced error grid including both endpoints.
    pub fn eval_grid(&self) -> Vec<f64> {
        let (a, b) = self.interval();
        let m = self.eval_points;
        (0..m).map(|i| if i + 1 == m { b } else { a + (b - a) * i as f64 / (m - 1) as f64 }).collect()
    }
}

/// `z_m = y^{(m)} / s^m` turns the scalar equation into a first-order system
/// with entries of size `O(s)`.
struct ScaledCompanion {
    ode: ScalarOde,
    s: f64,
}

impl LinearSystem for ScaledCompanion {
    fn dim(&self) -> usize {
        self.ode.order()
    }

    fn coefficients(&self, t: f64, a: &mut CMatrix, f: &mut [C64]) {
        let n = self.ode.order();
        let q = self.ode.coefficients(t);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = C64::zero();
            }
            f[i] = C64::zero();
        }
        for i in 0..n - 1 {
            a[(i, i + 1)] = c(self.s, 0.0);
        }
        for j in 0..n {
            a[(n - 1, j)] = -q[j] / self.s.powi((n - 1 - j) as i32);
        }
    }
}

fn root_scale(ode: &ScalarOde) -> f64 {
    let (a, b) = ode.interval();
    let n = ode.order();
    let mut s: f64 = 1.0;
    for i in 0..=64 {
        let t = a + (b - a) * i as f64 / 64.0;
        for (j, qj) in ode.coefficients(t).iter().enumerate() {
            s = s.max(qj.norm().powf(1.0 / (n - j) as f64));
        }
    }
    s
}

/// Reference solution from the adaptive solver applied to the scalar
/// equation itself.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    scale: f64,
    /// Solutions of unit problems and their weights.
    parts: Vec<(C64, SystemSolution)>,
}

impl ReferenceSolution {
    /// `y^{(m)}(t)`.
    pub fn eval(&self, t: f64, m: usize) -> Result<C64> {
        let mut y = C64::zero();
        for (w, sol) in &self.parts {
            y += w * sol.components[m].eval(t, 0)?;
        }
        Ok(y * self.scale.powi(m as i32))
    }

    pub fn intervals(&self) -> usize {
        self.parts.iter().map(|(_, s)| s.partition().len() - 1).sum()
    }
}

/// Default tolerance for reference solves.
pub const REFERENCE_EPS: f64 = 1e-13;

/// Largest parameter for which reference errors are computed.
pub const REFERENCE_MAX_PARAM: f64 = 1024.0;

pub fn reference_solution(spec: &ProblemSpec, eps: f64, execution: Execution) -> Result<ReferenceSolution> {
    let ode = spec.ode()?;
    let n = ode.order();
    let s = root_scale(&ode);
    let sys = ScaledCompanion { ode, s };
    let cfg = AdaptiveConfig { k: spec.k, eps, ..Default::default() };
    let iv = spec.interval();
    match spec.conditions()? {
        Conditions::Ivp { t0, values } => {
            let z0: Vec<C64> = values.iter().enumerate().map(|(m, v)| v / s.powi(m as i32)).collect();
            let sol = solve_adaptive_from(OdeProblem::Linear(&sys), iv, t0, &z0, &cfg)?;
            Ok(ReferenceSolution { scale: s, parts: vec![(c(1.0, 0.0), sol)] })
        }
        Conditions::Bvp(list) => {
            let units = try_map_indexed(execution, n, |i| {
                let mut e = vec![C64::zero(); n];
                e[i] = c(1.0, 0.0);
                solve_adaptive(OdeProblem::Linear(&sys), iv, &e, &cfg)
            })?;
            let mut m = CMatrix::zeros(n, n);
            let mut rhs = vec![C64::zero(); n];
            for (r, cond) in list.iter().enumerate() {
                for (i, u) in units.iter().enumerate() {
                    m[(r, i)] = u.components[cond.order].eval(cond.point, 0)? * s.powi(cond.order as i32);
                }
                rhs[r] = cond.value;
            }
            let w = dense_solve(&m, &rhs)?;
            Ok(ReferenceSolution { scale: s, parts: w.into_iter().zip(units).collect() })
        }
    }
}

/// Values the error is measured against, on the problem's error grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValues {
    pub problem: ProblemKind,
    pub param: f64,
    pub points: Vec<f64>,
    pub values: Vec<C64>,
}

/// Oracle values at `points`: the recurrence for Legendre, a reference
/// solve otherwise.
pub fn oracle_values(spec: &ProblemSpec, points: &[f64], execution: Execution) -> Result<OracleValues> {
    let values = if spec.kind == ProblemKind::Legendre {
        let nu = spec.legendre_degree()?;
        points.iter().map(|&t| c(legendre_reference(nu, t), 0.0)).collect()
    } else {
        let r = reference_solution(spec, REFERENCE_EPS, execution)?;
        points.iter().map(|&t| r.eval(t, 0)).collect::<Result<_>>()?
    };
    Ok(OracleValues { problem: spec.kind, param: spec.param, points: points.to_vec(), values })
}

/// Result of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub param: f64,
    /// Mean wall time of phase construction plus solve, in seconds.
    pub time_s: f64,
    /// `NaN` when no reference comparison was made.
    pub max_abs_err: f64,
    pub ncoefs: usize,
    pub omega_freq: f64,
    pub passed: bool,
    pub cond: f64,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub repeats: usize,
    /// Compute the error against the oracle (only for `param ≤ 2^10` unless
    /// forced).
    pub check_error: bool,
    pub omega_panels: usize,
    /// Execution mode for timed work.
    pub execution: Execution,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { repeats: 25, check_error: true, omega_panels: 64, execution: Execution::Sequential }
    }
}

fn failed_record(spec: &ProblemSpec, msg: String) -> RunRecord {
    RunRecord {
        problem: spec.name().to_string(),
        param: spec.param,
        time_s: f64::NAN,
        max_abs_err: f64::NAN,
        ncoefs: 0,
        omega_freq: f64::NAN,
        passed: false,
        cond: f64::NAN,
        diagnostic: Some(msg),
    }
}

/// Largest error of `report` against the oracle.
pub fn max_error(spec: &ProblemSpec, report: &SolveReport, execution: Execution) -> Result<f64> {
    let points = match spec.kind {
        // The recurrence oracle is used at the right endpoint only.
        ProblemKind::Legendre => vec![spec.interval().1],
        _ => spec.eval_grid(),
    };
    let oracle = oracle_values(spec, &points, execution)?;
    let got = report.eval_many(&points, execution)?;
    Ok(got.iter().zip(&oracle.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

/// Times phase construction plus solve and checks the error.
pub fn run_experiment(spec: &ProblemSpec, opts: &RunOptions) -> Result<RunRecord> {
    if opts.repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    if let Err(e) = spec.validate() {
        return Ok(failed_record(spec, e.to_string()));
    }
    // warm-up, also the report used for the error check
    let report = match spec.solve(opts.execution) {
        Ok(r) => r,
        Err(e) => return Ok(failed_record(spec, e.to_string())),
    };
    let start = Instant::now();
    for _ in 0..opts.repeats {
        if let Err(e) = spec.solve(opts.execution) {
            return Ok(failed_record(spec, e.to_string()));
        }
    }
    let time_s = start.elapsed().as_secs_f64() / opts.repeats as f64;

    let omega_freq = spec.ode().and_then(|ode| frequency_omega(&ode, opts.omega_panels)).unwrap_or(f64::NAN);
    let mut diagnostic = report.warning.clone();
    let max_abs_err = if opts.check_error && spec.param <= REFERENCE_MAX_PARAM {
        match max_error(spec, &report, Execution::default()) {
            Ok(e) => e,
            Err(e) => {
                diagnostic = Some(format!("reference failed: {e}"));
                f64::NAN
            }
        }
    } else {
        f64::NAN
    };
    let passed = if max_abs_err.is_nan() {
        !(opts.check_error && spec.param <= REFERENCE_MAX_PARAM)
    } else {
        max_abs_err <= spec.kind.threshold()
    };
    Ok(RunRecord {
        problem: spec.name().to_string(),
        param: spec.param,
        time_s,
        max_abs_err,
        ncoefs: report.ncoeffs,
        omega_freq,
        passed,
        cond: report.cond,
        diagnostic,
    })
}

/// Runs `template` for each parameter, one after another.
pub fn sweep(template: &ProblemSpec, params: &[f64], opts: &RunOptions) -> Result<Vec<RunRecord>> {
    params
        .iter()
        .map(|&p| {
            let spec = ProblemSpec { param: p, ..template.clone() };
            run_experiment(&spec, opts)
        })
        .collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    problem: &'a str,
    param: f64,
    time_s: f64,
    max_abs_err: f64,
    ncoefs: usize,
    omega_freq: f64,
}

/// CSV with columns `problem,param,time_s,max_abs_err,ncoefs,omega_freq`.
pub fn write_csv(w: impl std::io::Write, records: &[RunRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(["problem", "param", "time_s", "max_abs_err", "ncoefs", "omega_freq"])?;
    for r in records {
        wtr.serialize(CsvRow {
            problem: &r.problem,
            param: r.param,
            time_s: r.time_s,
            max_abs_err: r.max_abs_err,
            ncoefs: r.ncoefs,
            omega_freq: r.omega_freq,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv_file(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, records)
}

pub fn write_json_file(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(f, records)?;
    Ok(())
}
