//! Implicit Euler in `beta(v)`:
//!
//! ```text
//! beta(v^n) + dt (-Delta)^s_p v^n = beta(v^{n-1}) + dt h(t_{n-1} + dt/2, x, v^{n-1})
//! ```
//!
//! Each step is one resolvent solve with `lambda = dt`, warm-started from the
//! previous state. The source is lagged, so a step never depends on its own
//! output through `h`.

use std::fmt;
use std::sync::Arc;

use serde::Deserialize;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::elliptic::{beta, solve_resolvent, EllipticProblem, Solution, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{linf, ModelParams};
use crate::model::Discretization;
use crate::nonlocal_op::{signed_pow, Field};

/// `h(t, x, theta)`.
pub type SourceFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum SourceTerm {
    /// `coef [[theta]]^{q/m}`.
    Power { coef: f64 },
    /// Nodal forcing, linear in `t` between the knots and constant outside.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
    Custom(SourceFn),
}

impl fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTerm::Power { coef } => f.debug_struct("Power").field("coef", coef).finish(),
            SourceTerm::Table { times, .. } => f.debug_struct("Table").field("knots", &times.len()).finish(),
            SourceTerm::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A sum of source terms, with the growth data `|h| <= c_h (1 + |theta|^{q/m})`
/// and an optional truncation of the `theta` argument.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub terms: Vec<SourceTerm>,
    pub c_h: f64,
    pub q: f64,
    pub m: f64,
    pub truncation: Option<f64>,
}

impl SourceSpec {
    pub fn zero(params: &ModelParams) -> Self {
        Self {
            terms: Vec::new(),
            c_h: 0.0,
            q: params.q,
            m: params.m,
            truncation: params.truncation,
        }
    }

    /// `h = [[theta]]^{q/m}`.
    pub fn power(params: &ModelParams) -> Self {
        Self::zero(params).with_term(SourceTerm::Power { coef: 1.0 }, params.c_h.max(1.0))
    }

    pub fn forced(params: &ModelParams, times: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        Self::zero(params).with_term(SourceTerm::Table { times, values }, 0.0)
    }

    pub fn custom(params: &ModelParams, f: SourceFn) -> Self {
        Self::zero(params).with_term(SourceTerm::Custom(f), params.c_h)
    }

    /// Adds a term; `c_h` grows by the term's own growth constant.
    pub fn with_term(mut self, term: SourceTerm, c_h: f64) -> Self {
        self.terms.push(term);
        self.c_h += c_h;
        self
    }

    pub fn with_truncation(mut self, r: Option<f64>) -> Self {
        self.truncation = r;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(r) = self.truncation {
            if !(r > 0.0) {
                return Err(Error::InvalidParams(format!("truncation level must be > 0, got {r}")));
            }
        }
        for term in &self.terms {
            match term {
                SourceTerm::Power { coef } if !coef.is_finite() => {
                    return Err(Error::InvalidParams("power coefficient is not finite".into()));
                }
                SourceTerm::Table { times, values } => {
                    if times.is_empty() || times.len() != values.len() {
                        return Err(Error::InvalidParams("forcing table needs one row per knot".into()));
                    }
                    if times.windows(2).any(|w| !(w[1] > w[0])) {
                        return Err(Error::InvalidParams("forcing knots must increase".into()));
                    }
                    for row in values {
                        if row.len() != n {
                            return Err(Error::ShapeMismatch {
                                expected: n,
                                got: row.len(),
                            });
                        }
                        if row.iter().any(|x| !x.is_finite()) {
                            return Err(Error::InvalidParams("forcing table is not finite".into()));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `h(t, x_i, theta)`, truncated if a level is set.
    pub fn eval(&self, t: f64, i: usize, x: f64, theta: f64) -> f64 {
        let th = match self.truncation {
            Some(r) => clamp_argument(theta, r),
            None => theta,
        };
        let r = self.q / self.m;
        self.terms
            .iter()
            .map(|term| match term {
                SourceTerm::Power { coef } => coef * signed_pow(th, r),
                SourceTerm::Table { times, values } => table_value(times, values, t, i),
                SourceTerm::Custom(f) => f(t, x, th),
            })
            .sum()
    }

    /// `h(t, x_i, v_i)` at every node.
    pub fn eval_field(&self, disc: &Discretization, t: f64, v: &[f64]) -> Vec<f64> {
        disc.grid
            .nodes
            .iter()
            .zip(v)
            .enumerate()
            .map(|(i, (&x, &th))| self.eval(t, i, x, th))
            .collect()
    }
}

fn table_value(times: &[f64], values: &[Vec<f64>], t: f64, i: usize) -> f64 {
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        values[0][i]
    } else if k == times.len() {
        values[k - 1][i]
    } else {
        let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
        (1.0 - w) * values[k - 1][i] + w * values[k][i]
    }
}

/// `sgn(theta) min(|theta|, r)`.
pub fn clamp_argument(theta: f64, r: f64) -> f64 {
    theta.clamp(-r, r)
}

/// The power source evaluated at the clamped argument, `[[clamp(theta)]]^{q/m}`.
pub fn truncate_source(theta: f64, r: f64, q: f64, m: f64) -> f64 {
    signed_pow(clamp_argument(theta, r), q / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    pub extinction_tol: f64,
    pub extinction_consecutive: usize,
    pub blowup_threshold: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            extinction_tol: 1e-12,
            extinction_consecutive: 5,
            blowup_threshold: 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub v0: Field,
    pub source: SourceSpec,
    pub events: EventConfig,
    pub solver: SolverConfig,
    pub record_every: usize,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_end: f64, v0: Field, source: SourceSpec) -> Self {
        Self {
            dt,
            t_end,
            v0,
            source,
            events: EventConfig::default(),
            solver: SolverConfig::default(),
            record_every: 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidParams(format!("t_end must be >= dt, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParams("record_every must be >= 1".into()));
        }
        let ev = &self.events;
        if !(ev.extinction_tol >= 0.0) || ev.extinction_consecutive == 0 || !(ev.blowup_threshold > 0.0) {
            return Err(Error::InvalidParams(format!("invalid event config {ev:?}")));
        }
        self.v0.check_len(n)?;
        if self.v0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("v0 is not finite".into()));
        }
        self.source.validate(n)?;
        self.solver.validate()
    }

    /// Number of steps to reach `t_end`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt) * (1.0 - 1e-12)).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Completed,
    /// `M_r` stayed below tolerance from `t0` on.
    Extinct { t0: f64 },
    /// Last time before `|v|_inf` crossed the threshold.
    Blowup { t: f64 },
    /// The step starting at `t` did not converge.
    SolverFailure { t: f64 },
}

impl Event {
    pub fn label(&self) -> &'static str {
        match self {
            Event::Completed => "completed",
            Event::Extinct { .. } => "extinct",
            Event::Blowup { .. } => "blowup",
            Event::SolverFailure { .. } => "solver_failure",
        }
    }

    pub fn time(&self) -> Option<f64> {
        match *self {
            Event::Completed => None,
            Event::Extinct { t0 } => Some(t0),
            Event::Blowup { t } | Event::SolverFailure { t } => Some(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub record_every: usize,
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    pub series: Vec<DiagnosticsRecord>,
    /// Inner iterations spent since the previous record.
    pub iterations: Vec<usize>,
    /// Summed `l1(h)` KKT residuals since the previous record.
    pub residuals: Vec<f64>,
    pub event: Event,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("trajectory has the initial record")
    }

    /// `true` when every step was recorded.
    pub fn is_dense(&self) -> bool {
        self.times
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - k as f64 * self.dt).abs() <= 1e-9 * self.dt.max(t))
    }
}

/// One implicit step from `v_prev` at time `t`.
pub fn step(disc: &Discretization, v_prev: &Field, t: f64, cfg: &EvolutionConfig) -> Result<Solution> {
    let m = disc.params.m;
    let dt = cfg.dt;
    let src = cfg.source.eval_field(disc, t + 0.5 * dt, v_prev);
    let rhs: Vec<f64> = v_prev.iter().zip(&src).map(|(&v, &h)| beta(v, m) + dt * h).collect();
    let prob = EllipticProblem::new(disc, dt, Field::from(rhs))?;
    solve_resolvent(&prob, &cfg.solver, Some(v_prev))
}

/// Advances until `t_end` or an event. Solver failures end the run with the
/// partial trajectory.
pub fn run(disc: &Discretization, cfg: &EvolutionConfig) -> Result<Trajectory> {
    cfg.validate(disc.n())?;
    let dt = cfg.dt;
    let ev = cfg.events;
    let mut traj = Trajectory {
        dt,
        record_every: cfg.record_every,
        times: vec![0.0],
        fields: vec![cfg.v0.clone()],
        series: vec![diagnostics::record(disc, 0.0, &cfg.v0)],
        iterations: vec![0],
        residuals: vec![0.0],
        event: Event::Completed,
    };
    let armed = traj.series[0].m_r >= ev.extinction_tol;
    let mut below = 0usize;
    let mut below_since = 0.0;
    let mut v = cfg.v0.clone();
    let mut pending = (0usize, 0.0f64);
    let mut last_recorded = 0usize;

    let n_steps = cfg.steps();
    for n in 1..=n_steps {
        let t_prev = (n - 1) as f64 * dt;
        let sol = match step(disc, &v, t_prev, cfg) {
            Ok(sol) => sol,
            Err(Error::NoConvergence { .. }) => {
                traj.event = Event::SolverFailure { t: t_prev };
                break;
            }
            Err(e) => return Err(e),
        };
        let norm = linf(&sol.v);
        if !(norm <= ev.blowup_threshold) {
            traj.event = Event::Blowup { t: t_prev };
            if last_recorded != n - 1 {
                push(&mut traj, disc, t_prev, v, pending);
            }
            return Ok(traj);
        }
        v = sol.v;
        pending.0 += sol.iterations;
        pending.1 += sol.residual_l1;

        if n % cfg.record_every == 0 || n == n_steps {
            let t = n as f64 * dt;
            push(&mut traj, disc, t, v.clone(), pending);
            pending = (0, 0.0);
            last_recorded = n;
            if armed {
                if traj.series.last().is_some_and(|r| r.m_r < ev.extinction_tol) {
                    if below == 0 {
                        below_since = t;
                    }
                    below += 1;
                    if below >= ev.extinction_consecutive {
                        traj.event = Event::Extinct { t0: below_since };
                        break;
                    }
                } else {
                    below = 0;
                }
            }
        }
    }
    Ok(traj)
}

fn push(traj: &mut Trajectory, disc: &Discretization, t: f64, v: Field, pending: (usize, f64)) {
    traj.series.push(diagnostics::record(disc, t, &v));
    traj.times.push(t);
    traj.fields.push(v);
    traj.iterations.push(pending.0);
    traj.residuals.push(pending.1);
}

/// Largest admissible existence time
/// `sup_sigma (sigma^{1/m} - |v0|_inf^{1/m}) / (C_h (1 + sigma^{q/m}))`,
/// `+inf` when unbounded.
pub fn t_star(v0_inf_norm: f64, c_h: f64, q: f64, m: f64) -> f64 {
    if c_h <= 0.0 || q < 1.0 {
        return f64::INFINITY;
    }
    if q == 1.0 {
        // increasing in sigma towards its limit
        return 1.0 / c_h;
    }
    // In x = sigma^{1/m}: F(x) = (x - a) / (C_h (1 + x^q)), positive for x > a.
    let a = v0_inf_norm.powf(1.0 / m);
    let f = |u: f64| {
        let x = a + u.exp();
        (x - a) / (c_h * (1.0 + x.powf(q)))
    };
    let span = a.max(1.0).ln();
    let (lo, hi) = (span - 40.0, span + 40.0);
    let k = 4000;
    let du = (hi - lo) / k as f64;
    let mut best = (f64::NEG_INFINITY, lo);
    for j in 0..=k {
        let u = lo + j as f64 * du;
        let val = f(u);
        if val > best.0 {
            best = (val, u);
        }
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut l, mut r) = (best.1 - du, best.1 + du);
    let mut x1 = r - g * (r - l);
    let mut x2 = l + g * (r - l);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if f1 < f2 {
            l = x1;
            x1 = x2;
            f1 = f2;
            x2 = l + g * (r - l);
            f2 = f(x2);
        } else {
            r = x2;
            x2 = x1;
            f2 = f1;
            x1 = r - g * (r - l);
            f1 = f(x1);
        }
    }
    best.0.max(f1).max(f2)
}

fn beta_l1_distance(disc: &Discretization, u: &[f64], v: &[f64]) -> f64 {
    let m = disc.params.m;
    u.iter().zip(v).map(|(&a, &b)| (beta(a, m) - beta(b, m)).abs()).sum::<f64>() * disc.h()
}

fn check_dense(traj: &Trajectory, what: &str) -> Result<()> {
    if traj.is_empty() || !traj.is_dense() {
        return Err(Error::MismatchedTrajectories(format!("{what} needs every step recorded")));
    }
    Ok(())
}

/// Per record: `|beta(u) - beta(v)|_1 - (|beta(u0) - beta(v0)|_1 + sum dt |f - g|_1)`,
/// where `f`, `g` are the source values each run actually used.
pub fn contraction_gap(
    disc: &Discretization,
    traj_u: &Trajectory,
    traj_v: &Trajectory,
    src_u: &SourceSpec,
    src_v: &SourceSpec,
) -> Result<Vec<f64>> {
    check_dense(traj_u, "contraction gap")?;
    check_dense(traj_v, "contraction gap")?;
    if traj_u.len() != traj_v.len() || (traj_u.dt - traj_v.dt).abs() > 1e-15 * traj_u.dt {
        return Err(Error::MismatchedTrajectories(format!(
            "{} records at dt {} vs {} records at dt {}",
            traj_u.len(),
            traj_u.dt,
            traj_v.len(),
            traj_v.dt
        )));
    }
    let dt = traj_u.dt;
    let h = disc.h();
    let base = beta_l1_distance(disc, &traj_u.fields[0], &traj_v.fields[0]);
    let mut budget = base;
    let mut gaps = Vec::with_capacity(traj_u.len());
    gaps.push(0.0);
    for k in 1..traj_u.len() {
        let t_mid = traj_u.times[k - 1] + 0.5 * dt;
        let fu = src_u.eval_field(disc, t_mid, &traj_u.fields[k - 1]);
        let fv = src_v.eval_field(disc, t_mid, &traj_v.fields[k - 1]);
        budget += dt * h * fu.iter().zip(&fv).map(|(a, b)| (a - b).abs()).sum::<f64>();
        gaps.push(beta_l1_distance(disc, &traj_u.fields[k], &traj_v.fields[k]) - budget);
    }
    Ok(gaps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MildCertificate {
    /// `max(fineness, source_term + solver_term, initial_gap)`.
    pub eps: f64,
    pub fineness: f64,
    /// `sum_n int |h(tau, v(tau)) - h^n|_1 dtau` along the linear interpolant.
    pub source_term: f64,
    /// Summed `l1(h)` step residuals.
    pub solver_term: f64,
    /// `|beta(v_dt(0)) - beta(v0)|_1`.
    pub initial_gap: f64,
}

/// Certificate that the piecewise-constant run is an `eps`-approximate solution.
pub fn mild_certificate(disc: &Discretization, traj: &Trajectory, src: &SourceSpec, v0: &[f64]) -> Result<MildCertificate> {
    check_dense(traj, "mild certificate")?;
    let dt = traj.dt;
    let h = disc.h();
    let mut source_term = 0.0;
    if !src.is_zero() {
        let mut w = vec![0.0; disc.n()];
        for k in 1..traj.len() {
            let (u0, u1) = (&traj.fields[k - 1], &traj.fields[k]);
            let t0 = traj.times[k - 1];
            let hn = src.eval_field(disc, t0 + 0.5 * dt, u0);
            let mut dist_at = |theta: f64| {
                for i in 0..w.len() {
                    w[i] = (1.0 - theta) * u0[i] + theta * u1[i];
                }
                let ht = src.eval_field(disc, t0 + theta * dt, &w);
                ht.iter().zip(&hn).map(|(a, b)| (a - b).abs()).sum::<f64>() * h
            };
            let simpson = (dist_at(0.0) + 4.0 * dist_at(0.5) + dist_at(1.0)) / 6.0;
            source_term += simpson * dt;
        }
    }
    let solver_term = traj.residuals.iter().sum();
    let initial_gap = beta_l1_distance(disc, &traj.fields[0], v0);
    Ok(MildCertificate {
        eps: dt.max(source_term + solver_term).max(initial_gap),
        fineness: dt,
        source_term,
        solver_term,
        initial_gap,
    })
}

/// Discrete energy identity defect with `r = 1` and the power source:
/// `(Y(v^n) - Y(v^{n-1})) / dt + S(v^n) - sum |v^n|^{q/m+1} h`.
pub fn energy_identity_residual(disc: &Discretization, v_prev: &[f64], v_next: &[f64], dt: f64) -> f64 {
    let pr = &disc.params;
    let dy = diagnostics::y_functional(disc, v_next) - diagnostics::y_functional(disc, v_prev);
    dy / dt + disc.kernel.energy_and_apply(v_next, pr.p, None) - disc.grid.lr_power(v_next, pr.q / pr.m + 1.0)
}

/// Per record: `S(v0)/p + sum_k <h^k, v^k - v^{k-1}>_h - S(v^n)/p`, which is
/// nonnegative for the exact scheme.
pub fn energy_inequality_slack(disc: &Discretization, traj: &Trajectory, src: &SourceSpec) -> Result<Vec<f64>> {
    check_dense(traj, "energy inequality")?;
    let p = disc.params.p;
    let dt = traj.dt;
    let s0 = disc.kernel.energy_and_apply(&traj.fields[0], p, None) / p;
    let mut work = 0.0;
    let mut out = vec![0.0];
    for k in 1..traj.len() {
        let hk = src.eval_field(disc, traj.times[k - 1] + 0.5 * dt, &traj.fields[k - 1]);
        let dv: Vec<f64> = traj.fields[k].iter().zip(traj.fields[k - 1].iter()).map(|(a, b)| a - b).collect();
        work += disc.grid.dot(&hk, &dv);
        out.push(s0 + work - disc.kernel.energy_and_apply(&traj.fields[k], p, None) / p);
    }
    Ok(out)
}

/// `|beta(v0)|_inf + sum_k |h^k|_inf dt` at every record.
pub fn linf_bound_series(disc: &Discretization, traj: &Trajectory, src: &SourceSpec) -> Result<Vec<f64>> {
    check_dense(traj, "L-infinity bound")?;
    let m = disc.params.m;
    let dt = traj.dt;
    let mut bound = linf(&traj.fields[0]).powf(1.0 / m);
    let mut out = vec![bound];
    for k in 1..traj.len() {
        let hk = src.eval_field(disc, traj.times[k - 1] + 0.5 * dt, &traj.fields[k - 1]);
        bound += dt * linf(&hk);
        out.push(bound);
    }
    Ok(out)
}

/// `M_r` at every record, with the decay exponent used for extinction.
pub fn decay_series(traj: &Trajectory) -> Vec<f64> {
    traj.series.iter().map(|r| r.m_r).collect()
}
