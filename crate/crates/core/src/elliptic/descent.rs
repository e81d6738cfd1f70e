//! Minimization of `phi(v) + sum_i psi(v_i) h`: an optional accelerated
//! proximal gradient phase with backtracking, then damped Newton.
//!
//! Inner products are the mesh-weighted `<a, b>_h = sum a_i b_i h`, so the
//! gradient of the smooth part is the nodal residual and the prox of the
//! separable part is a scalar problem per node.

use nalgebra::{DMatrix, DVector};

use super::SolverConfig;
use crate::error::{Error, Result};

pub(crate) trait Composite {
    fn n(&self) -> usize;
    fn h(&self) -> f64;
    /// Value of the smooth part; its h-gradient is written into `grad`.
    fn smooth(&self, v: &[f64], grad: &mut [f64]) -> f64;
    /// Row-major Jacobian of the smooth h-gradient, with ties floored at `floor`.
    fn smooth_jacobian(&self, v: &[f64], floor: f64, out: &mut [f64]);
    /// `argmin_x tau psi(x) + (x - z)^2 / 2`.
    fn prox(&self, z: f64, tau: f64) -> f64;
    fn separable(&self, x: f64) -> f64;
    /// `psi'(x)`.
    fn separable_grad(&self, x: f64) -> f64;
    /// `psi''(x)` with `|x|` floored at `floor`.
    fn separable_curvature(&self, x: f64, floor: f64) -> f64;
    /// Scale of the data; convergence is `|residual|_inf <= tol * scale`.
    fn residual_scale(&self) -> f64;
    /// Merges entries that are equal up to rounding, when the smooth part
    /// has an infinitely steep gradient at ties.
    fn snap_ties(&self, _x: &mut [f64]) {}
}

/// Replaces every run of values within `radius` of its sorted neighbour by
/// the run's mean.
pub(crate) fn merge_close_values(x: &mut [f64], radius: f64) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut start = 0;
    for k in 1..=order.len() {
        if k < order.len() && x[order[k]] - x[order[k - 1]] <= radius {
            continue;
        }
        if k - start > 1 {
            let run = &order[start..k];
            let mean = run.iter().map(|&i| x[i]).sum::<f64>() / run.len() as f64;
            run.iter().for_each(|&i| x[i] = mean);
        }
        start = k;
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `|psi'(x) + grad phi(x)|_inf`.
    pub residual: f64,
    /// Final `sum_i |psi'(x_i) + grad phi(x)_i| h`.
    pub residual_l1: f64,
}

fn dot_h(a: &[f64], b: &[f64], h: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * h
}

fn kkt<P: Composite>(prob: &P, x: &[f64], g: &[f64]) -> (f64, f64) {
    let mut inf = 0.0_f64;
    let mut l1 = 0.0;
    for (xi, gi) in x.iter().zip(g) {
        let r = (prob.separable_grad(*xi) + gi).abs();
        inf = inf.max(r);
        l1 += r;
    }
    (inf, l1 * prob.h())
}

enum Phase {
    Done(DescentOutcome),
    Unfinished { x: Vec<f64>, iterations: usize },
}

/// Accelerated proximal gradient for up to `cfg.newton_after` iterations, then
/// damped Newton from the last iterate.
pub(crate) fn minimize<P: Composite>(prob: &P, init: Vec<f64>, cfg: &SolverConfig) -> Result<DescentOutcome> {
    let budget = cfg.newton_after.min(cfg.max_iter);
    match first_order(prob, init, cfg, budget) {
        Phase::Done(out) => Ok(out),
        Phase::Unfinished { x, iterations } => newton(prob, x, cfg, iterations),
    }
}

fn first_order<P: Composite>(prob: &P, init: Vec<f64>, cfg: &SolverConfig, budget: usize) -> Phase {
    let n = prob.n();
    let h = prob.h();
    let target = cfg.tol_residual * prob.residual_scale();

    let mut x = init;
    prob.snap_ties(&mut x);
    let mut gx = vec![0.0; n];
    prob.smooth(&x, &mut gx);
    let (res, res_l1) = kkt(prob, &x, &gx);
    if res <= target {
        return Phase::Done(DescentOutcome {
            x,
            iterations: 0,
            residual: res,
            residual_l1: res_l1,
        });
    }

    let mut y = x.clone();
    let mut gy = gx.clone();
    let mut phi_y = prob.smooth(&y, &mut gy);
    let mut z = vec![0.0; n];
    let mut gz = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut tau = cfg.init_step;
    let mut momentum = 1.0_f64;
    let mut stalls = 0usize;

    for it in 1..=budget {
        let phi_z = loop {
            for i in 0..n {
                z[i] = prob.prox(y[i] - tau * gy[i], tau);
                dz[i] = z[i] - y[i];
            }
            let nrm2 = dot_h(&dz, &dz, h);
            let phi_z = prob.smooth(&z, &mut gz);
            if nrm2 == 0.0 {
                break phi_z;
            }
            // Local curvature along the step; function differences lose all
            // digits close to the optimum, so fall back to the gradient form.
            let lin = phi_z - phi_y - dot_h(&gy, &dz, h);
            let reliable = (phi_z - phi_y).abs() > 1e-9 * phi_y.abs().max(phi_z.abs()).max(1e-300);
            let l_loc = if reliable {
                2.0 * lin / nrm2
            } else {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += (gz[i] - gy[i]) * dz[i];
                }
                acc * h / nrm2
            };
            if l_loc * tau <= 1.0 + 1e-12 {
                break phi_z;
            }
            tau = (tau * cfg.backtrack_factor).min(1.0 / l_loc);
            if !(tau > 1e-300) {
                return Phase::Unfinished { x, iterations: it };
            }
        };
        if !phi_z.is_finite() {
            return Phase::Unfinished { x, iterations: it };
        }

        let (res, res_l1) = kkt(prob, &z, &gz);
        if res <= target {
            return Phase::Done(DescentOutcome {
                x: z,
                iterations: it,
                residual: res,
                residual_l1: res_l1,
            });
        }

        // Gradient-based adaptive restart: drop momentum when the step
        // direction disagrees with the last displacement.
        let mut align = 0.0;
        for i in 0..n {
            align += (y[i] - z[i]) * (z[i] - x[i]);
        }
        if z == x {
            stalls += 1;
            if stalls > 50 {
                return Phase::Unfinished { x, iterations: it };
            }
        } else {
            stalls = 0;
        }
        if align > 0.0 || momentum > 1e6 {
            momentum = 1.0;
            y.copy_from_slice(&z);
            gy.copy_from_slice(&gz);
            phi_y = phi_z;
        } else {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            momentum = next;
            for i in 0..n {
                y[i] = z[i] + beta * (z[i] - x[i]);
            }
            if beta == 0.0 {
                gy.copy_from_slice(&gz);
                phi_y = phi_z;
            } else {
                phi_y = prob.smooth(&y, &mut gy);
            }
        }
        x.copy_from_slice(&z);
        tau /= cfg.backtrack_factor.sqrt();
    }
    Phase::Unfinished { x, iterations: budget }
}

fn objective<P: Composite>(prob: &P, x: &[f64], grad: &mut [f64]) -> f64 {
    let sep: f64 = x.iter().map(|&v| prob.separable(v)).sum();
    prob.smooth(x, grad) + sep * prob.h()
}

/// Damped Newton on the full objective. Indefinite Hessians are shifted until
/// the Cholesky factorization succeeds; steps are accepted on sufficient
/// decrease, or on a smaller residual once objective differences drop below
/// rounding.
fn newton<P: Composite>(prob: &P, mut x: Vec<f64>, cfg: &SolverConfig, it0: usize) -> Result<DescentOutcome> {
    prob.snap_ties(&mut x);
    let n = prob.n();
    let h = prob.h();
    let target = cfg.tol_residual * prob.residual_scale();
    let mut g = vec![0.0; n];
    let mut jx = objective(prob, &x, &mut g);
    let mut r: Vec<f64> = x.iter().zip(&g).map(|(&xi, gi)| prob.separable_grad(xi) + gi).collect();
    let mut jac = vec![0.0; n * n];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut shift = 0.0_f64;

    for it in it0..=cfg.max_iter {
        let (res, res_l1) = kkt(prob, &x, &g);
        if res <= target {
            return Ok(DescentOutcome {
                x,
                iterations: it,
                residual: res,
                residual_l1: res_l1,
            });
        }
        if !jx.is_finite() {
            break;
        }
        let floor = 1e-12 * x.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-150);
        prob.smooth_jacobian(&x, floor, &mut jac);
        let mut dmax = 0.0_f64;
        for i in 0..n {
            jac[i * n + i] += prob.separable_curvature(x[i], floor);
            dmax = dmax.max(jac[i * n + i].abs());
        }
        let a = DMatrix::from_row_slice(n, n, &jac);
        shift *= 0.25;
        let chol = loop {
            let mut shifted = a.clone();
            if shift > 0.0 {
                for i in 0..n {
                    shifted[(i, i)] += shift;
                }
            }
            if let Some(c) = shifted.cholesky() {
                break Some(c);
            }
            shift = (4.0 * shift).max(1e-10 * dmax.max(1e-300));
            if !(shift < 1e10 * dmax.max(1.0)) {
                break None;
            }
        };
        let Some(chol) = chol else { break };
        let d = chol.solve(&DVector::from_iterator(n, r.iter().map(|v| -v)));
        let slope: f64 = d.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() * h;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                xt[i] = x[i] + t * d[i];
            }
            prob.snap_ties(&mut xt);
            let jt = objective(prob, &xt, &mut gt);
            if jt.is_finite() {
                let decrease = jt <= jx + 1e-4 * t * slope;
                let flat = (jt - jx).abs() <= 1e-12 * jx.abs().max(jt.abs());
                if decrease || (flat && kkt(prob, &xt, &gt).0 < res) {
                    accepted = true;
                    jx = jt;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        std::mem::swap(&mut x, &mut xt);
        std::mem::swap(&mut g, &mut gt);
        for i in 0..n {
            r[i] = prob.separable_grad(x[i]) + g[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        residual: kkt(prob, &x, &g).0,
    })
}
