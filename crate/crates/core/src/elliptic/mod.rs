//! Resolvent and steady-state problems.
//!
//! The resolvent `beta(v) + lambda (-Delta)^s_p v = f` is the Euler-Lagrange
//! equation of the strictly convex
//!
//! ```text
//! J(v) = sum_i G(v_i) h + (lambda / p) S(v) - sum_i f_i v_i h,
//! G(x) = m / (m + 1) |x|^{(m+1)/m},
//! ```
//!
//! minimized by proximal descent: gradient steps on the smooth part and a
//! scalar prox for `G`. The steady state `(-Delta)^s_p v = v^{q/m}` minimizes
//! the (nonconvex) `J_stat(v) = S(v) / p - m / (q + m) sum_i |v_i|^{q/m + 1} h`.

mod descent;

use serde::Deserialize;

use descent::{merge_close_values, minimize, Composite};

use crate::error::{Error, Result};
use crate::grid::linf;
use crate::model::Discretization;
use crate::nonlocal_op::{signed_pow, Field};

/// `[[theta]]^{1/m}`.
#[inline]
pub fn beta(theta: f64, m: f64) -> f64 {
    signed_pow(theta, 1.0 / m)
}

/// `G(theta) = m / (m + 1) |theta|^{(m+1)/m}`, the primitive of `beta`.
#[inline]
pub fn beta_primitive(theta: f64, m: f64) -> f64 {
    m / (m + 1.0) * theta.abs().powf((m + 1.0) / m)
}

/// Unique root `x` of `w beta(x) + x - z = 0`.
///
/// Solved in `y = |x|^{1/m}`, where the equation reads `y^m + w y = |z|`:
/// Newton from an upper bound decreases monotonically, with bisection as a
/// safeguard.
pub fn scalar_prox(z: f64, w: f64, m: f64, tol: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let target = z.abs();
    let f = |y: f64| y.powf(m) + w * y - target;
    let mut hi = (target / w).min(target.powf(1.0 / m));
    let mut lo = 0.0_f64;
    let mut y = hi;
    let scale = target.max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let fy = f(y);
        if fy == 0.0 {
            break;
        }
        if fy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let dfy = m * y.powf(m - 1.0) + w;
        let mut next = y - fy / dfy;
        let converged = fy.abs() <= 1e-3 * tol * scale || (next - y).abs() <= 2.0 * f64::EPSILON * y;
        if converged {
            if next > lo && next < hi {
                y = next;
            }
            break;
        }
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == y || hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
        y = next;
    }
    y.powf(m).copysign(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Optimality tolerance on the scaled sup-norm KKT residual.
    pub tol_residual: f64,
    pub max_iter: usize,
    pub backtrack_factor: f64,
    pub init_step: f64,
    /// Residual tolerance of the scalar prox.
    pub prox_tol: f64,
    /// First-order iterations before switching to damped Newton; `0` starts
    /// with Newton.
    pub newton_after: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iter: 20_000,
            backtrack_factor: 0.5,
            init_step: 1.0,
            prox_tol: 1e-14,
            newton_after: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol_residual > 0.0
            && self.max_iter > 0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.init_step > 0.0
            && self.prox_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid solver config {self:?}")))
        }
    }
}

/// `beta(v) + lambda (-Delta)^s_p v = f` with `v = 0` outside the interval.
#[derive(Debug, Clone)]
pub struct EllipticProblem<'a> {
    pub disc: &'a Discretization,
    pub lambda: f64,
    pub rhs: Field,
}

impl<'a> EllipticProblem<'a> {
    pub fn new(disc: &'a Discretization, lambda: f64, rhs: Field) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParams(format!("lambda must be > 0, got {lambda}")));
        }
        rhs.check_len(disc.n())?;
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("rhs is not finite".into()));
        }
        Ok(Self { disc, lambda, rhs })
    }

    /// `J_disc(v)`.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let d = self.disc;
        let m = d.params.m;
        let p = d.params.p;
        let sep: f64 = v.iter().map(|&x| beta_primitive(x, m)).sum::<f64>() * d.h();
        sep + self.lambda / p * d.kernel.energy_and_apply(v, p, None) - d.grid.dot(&self.rhs, v)
    }

    /// `beta(v) + lambda (-Delta)^s_p v`.
    pub fn lhs(&self, v: &[f64]) -> Field {
        resolvent_lhs(self.disc, self.lambda, v)
    }
}

pub fn resolvent_lhs(disc: &Discretization, lambda: f64, v: &[f64]) -> Field {
    let m = disc.params.m;
    let mut g = vec![0.0; disc.n()];
    disc.kernel.energy_and_apply(v, disc.params.p, Some(&mut g));
    g.iter_mut()
        .zip(v)
        .for_each(|(gi, &vi)| *gi = beta(vi, m) + lambda * *gi);
    Field::from(g)
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub v: Field,
    pub iterations: usize,
    /// Sup-norm of the KKT residual at `v`.
    pub residual: f64,
    /// `sum_i |residual_i| h`.
    pub residual_l1: f64,
}

struct ResolventObjective<'p, 'a> {
    prob: &'p EllipticProblem<'a>,
    prox_tol: f64,
    scale: f64,
}

impl Composite for ResolventObjective<'_, '_> {
    fn n(&self) -> usize {
        self.prob.disc.n()
    }

    fn h(&self) -> f64 {
        self.prob.disc.h()
    }

    fn smooth(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.prob.disc;
        let p = d.params.p;
        let lam = self.prob.lambda;
        let s = d.kernel.energy_and_apply(v, p, Some(grad));
        let mut lin = 0.0;
        for ((g, &f), &x) in grad.iter_mut().zip(self.prob.rhs.iter()).zip(v) {
            *g = lam * *g - f;
            lin += f * x;
        }
        lam / p * s - lin * d.h()
    }

    fn smooth_jacobian(&self, v: &[f64], floor: f64, out: &mut [f64]) {
        let d = self.prob.disc;
        d.kernel.jacobian(v, d.params.p, floor, out);
        out.iter_mut().for_each(|x| *x *= self.prob.lambda);
    }

    fn prox(&self, z: f64, tau: f64) -> f64 {
        scalar_prox(z, tau, self.prob.disc.params.m, self.prox_tol)
    }

    fn separable(&self, x: f64) -> f64 {
        beta_primitive(x, self.prob.disc.params.m)
    }

    fn separable_grad(&self, x: f64) -> f64 {
        beta(x, self.prob.disc.params.m)
    }

    fn separable_curvature(&self, x: f64, floor: f64) -> f64 {
        let m = self.prob.disc.params.m;
        x.abs().max(floor).powf(1.0 / m - 1.0) / m
    }

    fn residual_scale(&self) -> f64 {
        self.scale
    }

    fn snap_ties(&self, x: &mut [f64]) {
        snap_for(self.prob.disc.params.p, x);
    }
}

/// For `p < 2` the pair gradient `[[u_i - u_j]]^{p-1}` is steeper than any
/// rounding error at a tie, so ties of the exact solution are only resolved
/// if they are exact in floating point.
fn snap_for(p: f64, x: &mut [f64]) {
    if p < 2.0 {
        let scale = linf(x);
        merge_close_values(x, 1e-13 * scale);
    }
}

/// Minimizes `J_disc` from `v_init` (default `[[f]]^m`, the small-`lambda` limit).
pub fn solve_resolvent(prob: &EllipticProblem, cfg: &SolverConfig, v_init: Option<&Field>) -> Result<Solution> {
    cfg.validate()?;
    let n = prob.disc.n();
    if prob.rhs.is_zero() {
        return Ok(Solution {
            v: Field::zeros(n),
            iterations: 0,
            residual: 0.0,
            residual_l1: 0.0,
        });
    }
    let m = prob.disc.params.m;
    let init = match v_init {
        Some(v) => {
            v.check_len(n)?;
            v.to_vec()
        }
        None => prob.rhs.iter().map(|&f| signed_pow(f, m)).collect(),
    };
    let obj = ResolventObjective {
        prob,
        prox_tol: cfg.prox_tol,
        scale: 1.0 + linf(&prob.rhs),
    };
    let out = minimize(&obj, init, cfg)?;
    Ok(Solution {
        v: Field::from(out.x),
        iterations: out.iterations,
        residual: out.residual,
        residual_l1: out.residual_l1,
    })
}

struct SteadyObjective<'a> {
    disc: &'a Discretization,
    forcing: f64,
}

impl Composite for SteadyObjective<'_> {
    fn n(&self) -> usize {
        self.disc.n()
    }

    fn h(&self) -> f64 {
        self.disc.h()
    }

    fn smooth(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        stationary_energy_grad(self.disc, self.forcing, v, Some(grad))
    }

    fn smooth_jacobian(&self, v: &[f64], floor: f64, out: &mut [f64]) {
        let pr = &self.disc.params;
        let n = v.len();
        self.disc.kernel.jacobian(v, pr.p, floor, out);
        let r = pr.q / pr.m;
        for i in 0..n {
            out[i * n + i] -= r * v[i].abs().max(floor).powf(r - 1.0);
        }
    }

    fn prox(&self, z: f64, _tau: f64) -> f64 {
        z
    }

    fn separable(&self, _x: f64) -> f64 {
        0.0
    }

    fn separable_grad(&self, _x: f64) -> f64 {
        0.0
    }

    fn separable_curvature(&self, _x: f64, _floor: f64) -> f64 {
        0.0
    }

    fn residual_scale(&self) -> f64 {
        1.0
    }

    fn snap_ties(&self, x: &mut [f64]) {
        snap_for(self.disc.params.p, x);
    }
}

/// `S(v)/p - m/(q+m) sum |v|^{q/m+1} h - K sum v h` and its h-gradient
/// `(-Delta)^s_p v - [[v]]^{q/m} - K`.
fn stationary_energy_grad(disc: &Discretization, forcing: f64, v: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
    let pr = &disc.params;
    let r = pr.q / pr.m;
    let c = pr.m / (pr.q + pr.m);
    let s = disc.kernel.energy_and_apply(v, pr.p, grad.as_deref_mut());
    let mut src = 0.0;
    let mut lin = 0.0;
    if let Some(g) = grad {
        for (gi, &x) in g.iter_mut().zip(v) {
            let a = x.abs().powf(r);
            src += a * x.abs();
            lin += x;
            *gi -= a.copysign(x) + forcing;
        }
    } else {
        for &x in v {
            src += x.abs().powf(r + 1.0);
            lin += x;
        }
    }
    s / pr.p - (c * src + forcing * lin) * disc.h()
}

/// `J_stat(v)`.
pub fn stationary_energy(disc: &Discretization, v: &[f64]) -> f64 {
    stationary_energy_grad(disc, 0.0, v, None)
}

/// `max_i |(-Delta)^s_p v - [[v]]^{q/m} - K|_i`, the nodal residual against the
/// coordinate test fields.
pub fn stationarity_residual(disc: &Discretization, forcing: f64, v: &[f64]) -> f64 {
    let mut g = vec![0.0; disc.n()];
    stationary_energy_grad(disc, forcing, v, Some(&mut g));
    linf(&g)
}

fn require_subhomogeneous(disc: &Discretization) -> Result<()> {
    let pr = &disc.params;
    if !pr.is_subhomogeneous() {
        return Err(Error::Regime(format!(
            "steady state needs p > q/m + 1, got p = {}, q/m + 1 = {}",
            pr.p,
            pr.critical_p()
        )));
    }
    Ok(())
}

/// The scale `c = 2^k` (`|k| <= 30`) minimizing `J_stat(c d^s)`.
pub fn steady_state_init_scale(disc: &Discretization) -> f64 {
    let base = disc.grid.dist_power(1.0, disc.params.s);
    let mut best = (f64::INFINITY, 1.0);
    for k in -30..=30 {
        let c = 2f64.powi(k);
        let v: Vec<f64> = base.iter().map(|x| c * x).collect();
        let j = stationary_energy(disc, &v);
        if j < best.0 {
            best = (j, c);
        }
    }
    best.1
}

/// Positive minimizer of `J_stat` started from `c d^s` with the scanned `c`.
pub fn solve_steady_state(disc: &Discretization, cfg: &SolverConfig) -> Result<Solution> {
    require_subhomogeneous(disc)?;
    let c = steady_state_init_scale(disc);
    let init = Field::from(disc.grid.dist_power(c, disc.params.s));
    solve_steady_state_from(disc, cfg, &init)
}

pub fn solve_steady_state_from(disc: &Discretization, cfg: &SolverConfig, init: &Field) -> Result<Solution> {
    require_subhomogeneous(disc)?;
    let sol = solve_forced_stationary(disc, 0.0, cfg, init)?;
    let norm = linf(&sol.v);
    if norm < 1e-8 || stationary_energy(disc, &sol.v) >= 0.0 {
        return Err(Error::TrivialMinimizer { norm });
    }
    Ok(sol)
}

/// Minimizer of `J_stat(v) - K sum v h`, i.e. `(-Delta)^s_p v = [[v]]^{q/m} + K`.
/// With `K > 0` this is a supersolution of the steady-state problem.
pub fn solve_forced_stationary(disc: &Discretization, forcing: f64, cfg: &SolverConfig, init: &Field) -> Result<Solution> {
    cfg.validate()?;
    require_subhomogeneous(disc)?;
    init.check_len(disc.n())?;
    let obj = SteadyObjective { disc, forcing };
    let out = minimize(&obj, init.to_vec(), cfg)?;
    Ok(Solution {
        v: Field::from(out.x),
        iterations: out.iterations,
        residual: out.residual,
        residual_l1: out.residual_l1,
    })
}

/// `true` unless `lhs_u <= lhs_v` holds componentwise (within `tol`) while
/// `u <= v` fails somewhere (beyond `tol`).
pub fn check_comparison(u: &[f64], v: &[f64], lhs_u: &[f64], lhs_v: &[f64], tol: f64) -> bool {
    let premise = lhs_u.iter().zip(lhs_v).all(|(a, b)| *a <= *b + tol);
    !premise || u.iter().zip(v).all(|(a, b)| *a <= *b + tol)
}
