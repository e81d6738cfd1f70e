//! Discrete fractional p-Laplacian on a uniform interval mesh.
//!
//! With midpoint collocation the Gagliardo energy of a field that vanishes
//! outside the interval is
//!
//! ```text
//! S(v) = sum_{i != j} |v_i - v_j|^p w_ij + sum_i |v_i|^p t_i,
//! w_ij = h^2 / |x_i - x_j|^{1 + sp},   t_i = 2 h T_i,
//! ```
//!
//! where `T_i` is the exterior tail weight of the grid. The operator is the
//! h-scaled gradient of `S / p`, so `weak_form(u, phi) = sum_i g_i phi_i h` and
//! `weak_form(u, u) = S(u)`.

mod inequalities;

pub use inequalities::{
    calibrate_algebraic_constants, check_algebraic_inequalities, AlgebraicConstants,
    InequalityReport,
};

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// `[[x]]^r = |x|^{r-1} x`, zero at zero.
#[inline]
pub fn signed_pow(x: f64, r: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if r == 1.0 {
        x
    } else {
        x.abs().powf(r).copysign(x)
    }
}

/// Nodal values on the interior cells; the exterior is identically zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(format!("field entry {x} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn from_fn(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self(grid.nodes.iter().map(|&x| f(x)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self(self.0.iter().map(|x| t * x).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Dense pair weights and tail terms of the discrete Gagliardo energy.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    n: usize,
    h: f64,
    /// Row-major `n x n`, zero diagonal.
    weights: Vec<f64>,
    tail_terms: Vec<f64>,
    /// Smoothing of `|X|` into `sqrt(X^2 + eps^2)`; zero means exact.
    eps_reg: f64,
}

impl KernelMatrix {
    pub fn new(grid: &Grid1D) -> Self {
        let n = grid.n;
        let h = grid.h;
        let expo = 1.0 + grid.sp;
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let w = h * h / (grid.nodes[j] - grid.nodes[i]).abs().powf(expo);
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
        let tail_terms = grid.tail.iter().map(|t| 2.0 * h * t).collect();
        Self {
            n,
            h,
            weights,
            tail_terms,
            eps_reg: 0.0,
        }
    }

    pub fn with_regularization(mut self, eps_reg: f64) -> Self {
        self.eps_reg = eps_reg.max(0.0);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn tail_terms(&self) -> &[f64] {
        &self.tail_terms
    }

    pub fn eps_reg(&self) -> f64 {
        self.eps_reg
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `(|x|^p, [[x]]^{p-1})`, smoothed when `eps_reg > 0`.
    #[inline]
    fn phi_pair(&self, x: f64, p: f64) -> (f64, f64) {
        if x == 0.0 {
            (0.0, 0.0)
        } else if self.eps_reg > 0.0 {
            let e2 = self.eps_reg * self.eps_reg;
            let r2 = x * x + e2;
            let d = r2.powf(0.5 * (p - 2.0));
            (d * r2 - self.eps_reg.powf(p), d * x)
        } else {
            let a = x.abs();
            if p == 2.0 {
                (a * a, x)
            } else {
                let pm1 = a.powf(p - 1.0);
                (pm1 * a, pm1.copysign(x))
            }
        }
    }

    /// Energy `S(u) = seminorm_p(u)^p` and, when requested, the nodal operator
    /// `g = (1/h) dS/du / p` written into `grad`.
    pub fn energy_and_apply(&self, u: &[f64], p: f64, grad: Option<&mut [f64]>) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        match grad {
            Some(g) => {
                g.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..n {
                    let row = &self.weights[i * n..(i + 1) * n];
                    let ui = u[i];
                    let mut gi = 0.0;
                    let mut si = 0.0;
                    for j in (i + 1)..n {
                        let (ap, sg) = self.phi_pair(ui - u[j], p);
                        let w = row[j];
                        si += w * ap;
                        gi += w * sg;
                        g[j] -= 2.0 * w * sg;
                    }
                    let (ap, sg) = self.phi_pair(ui, p);
                    s += 2.0 * si + self.tail_terms[i] * ap;
                    g[i] += 2.0 * gi + self.tail_terms[i] * sg;
                }
                let inv_h = 1.0 / self.h;
                g.iter_mut().for_each(|x| *x *= inv_h);
            }
            None => {
                for i in 0..n {
                    let row = &self.weights[i * n..(i + 1) * n];
                    let ui = u[i];
                    let mut si = 0.0;
                    for j in (i + 1)..n {
                        si += row[j] * self.phi_pair(ui - u[j], p).0;
                    }
                    s += 2.0 * si + self.tail_terms[i] * self.phi_pair(ui, p).0;
                }
            }
        }
        s
    }
}

impl KernelMatrix {
    /// `(1/p) phi''(x)`: `(p-1)|x|^{p-2}` or its smoothed form. For `p < 2`
    /// the exact value is infinite at ties, so `|x|` is floored at `floor`.
    #[inline]
    fn curvature(&self, x: f64, p: f64, floor: f64) -> f64 {
        if self.eps_reg > 0.0 {
            let r2 = x * x + self.eps_reg * self.eps_reg;
            r2.powf(0.5 * p - 2.0) * (r2 + (p - 2.0) * x * x)
        } else if p == 2.0 {
            1.0
        } else if p > 2.0 {
            (p - 1.0) * x.abs().powf(p - 2.0)
        } else {
            (p - 1.0) * x.abs().max(floor).powf(p - 2.0)
        }
    }

    /// Dense row-major Jacobian of the nodal operator at `u`. Pair
    /// differences below `floor` count as `floor` when `p < 2`.
    pub fn jacobian(&self, u: &[f64], p: f64, floor: f64, out: &mut [f64]) {
        let n = self.n;
        let inv_h = 1.0 / self.h;
        out.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let mut diag = self.tail_terms[i] * self.curvature(u[i], p, floor);
            for j in 0..n {
                if j != i {
                    let c = 2.0 * self.weights[i * n + j] * self.curvature(u[i] - u[j], p, floor);
                    out[i * n + j] = -c * inv_h;
                    diag += c;
                }
            }
            out[i * n + i] = diag * inv_h;
        }
    }
}

/// `( sum_{i!=j} |v_i - v_j|^p w_ij + sum_i |v_i|^p t_i )^{1/p}`.
pub fn seminorm_p(v: &[f64], kernel: &KernelMatrix, p: f64) -> Result<f64> {
    kernel.check(v)?;
    Ok(kernel.energy_and_apply(v, p, None).max(0.0).powf(1.0 / p))
}

/// `seminorm_p(v)^p` without the final root.
pub fn seminorm_pow(v: &[f64], kernel: &KernelMatrix, p: f64) -> Result<f64> {
    kernel.check(v)?;
    Ok(kernel.energy_and_apply(v, p, None))
}

/// `<(-Delta)^s_p u, phi>` in the symmetric double-sum form.
pub fn weak_form(u: &[f64], phi: &[f64], kernel: &KernelMatrix, p: f64) -> Result<f64> {
    kernel.check(u)?;
    kernel.check(phi)?;
    let n = kernel.n;
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i != j {
                row += kernel.phi_pair(u[i] - u[j], p).1 * (phi[i] - phi[j]) * kernel.weight(i, j);
            }
        }
        acc += row + kernel.phi_pair(u[i], p).1 * phi[i] * kernel.tail_terms[i];
    }
    Ok(acc)
}

/// Nodal discrete `(-Delta)^s_p u`.
pub fn op_apply(u: &[f64], kernel: &KernelMatrix, p: f64) -> Result<Field> {
    kernel.check(u)?;
    let mut g = vec![0.0; kernel.n];
    kernel.energy_and_apply(u, p, Some(&mut g));
    Ok(Field(g))
}
