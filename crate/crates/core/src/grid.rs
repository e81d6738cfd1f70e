//! Uniform cell-centred mesh of an interval and the model parameter bundle.
//!
//! The exterior-zero condition never needs an exterior mesh: for a field that
//! vanishes outside `(a, b)` the exterior half of the nonlocal double integral
//! collapses to a closed-form weight per node, see [`tail_weight`].

use crate::error::{Error, Result};

/// Relative position of `p` with respect to the critical exponent `q/m + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `p > q/m + 1`: global existence and stabilization.
    Subhomogeneous,
    /// `p < q/m + 1`: extinction for small data (`q <= 1`) or blow-up (`q > 1`).
    Superhomogeneous,
    /// `p == q/m + 1`.
    Critical,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Subhomogeneous => "subhomogeneous",
            Regime::Superhomogeneous => "superhomogeneous",
            Regime::Critical => "critical",
        }
    }
}

/// Scalar parameters of `d/dt beta(v) + (-Delta)^s_p v = h(t, x, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Porous exponent, `m > 1`.
    pub m: f64,
    /// p-Laplacian exponent, `p > 1`.
    pub p: f64,
    /// Fractional order, `0 < s < 1`.
    pub s: f64,
    /// Source growth exponent, `q > 0`.
    pub q: f64,
    /// Growth constant in `|h| <= C_h (1 + |theta|^{q/m})`.
    pub c_h: f64,
    /// Optional source truncation level.
    pub truncation: Option<f64>,
}

impl ModelParams {
    pub fn new(m: f64, p: f64, s: f64, q: f64) -> Result<Self> {
        let params = Self {
            m,
            p,
            s,
            q,
            c_h: 1.0,
            truncation: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_growth_constant(mut self, c_h: f64) -> Result<Self> {
        self.c_h = c_h;
        self.validate()?;
        Ok(self)
    }

    pub fn with_truncation(mut self, r: Option<f64>) -> Result<Self> {
        self.truncation = r;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.m > 1.0) || !self.m.is_finite() {
            return bad(format!("m must be > 1, got {}", self.m));
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            return bad(format!("p must be > 1, got {}", self.p));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return bad(format!("s must lie in (0, 1), got {}", self.s));
        }
        if !(self.q > 0.0) || !self.q.is_finite() {
            return bad(format!("q must be > 0, got {}", self.q));
        }
        if !(self.c_h >= 0.0) || !self.c_h.is_finite() {
            return bad(format!("C_h must be >= 0, got {}", self.c_h));
        }
        if let Some(r) = self.truncation {
            if !(r > 0.0) {
                return bad(format!("truncation level must be > 0, got {r}"));
            }
        }
        Ok(())
    }

    /// `s * p`, the order of the kernel singularity beyond dimension one.
    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// `q/m + 1`.
    pub fn critical_p(&self) -> f64 {
        self.q / self.m + 1.0
    }

    pub fn regime(&self) -> Regime {
        let pc = self.critical_p();
        if self.p > pc {
            Regime::Subhomogeneous
        } else if self.p < pc {
            Regime::Superhomogeneous
        } else {
            Regime::Critical
        }
    }

    pub fn is_subhomogeneous(&self) -> bool {
        self.regime() == Regime::Subhomogeneous
    }

    pub fn is_superhomogeneous(&self) -> bool {
        self.regime() == Regime::Superhomogeneous
    }
}

/// Uniform mesh of `(a, b)` with `n` cells, collocated at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    /// Cell width `(b - a) / n`.
    pub h: f64,
    /// Cell centres `a + (i + 1/2) h`.
    pub nodes: Vec<f64>,
    /// Exterior kernel mass at each node, see [`tail_weight`].
    pub tail: Vec<f64>,
    /// Distance to the boundary, `min(x - a, b - x)`.
    pub dist: Vec<f64>,
    /// The `s * p` the tail weights were built for.
    pub sp: f64,
}

pub fn build_grid(a: f64, b: f64, n: usize, params: &ModelParams) -> Result<Grid1D> {
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidBounds { a, b });
    }
    if n < 2 {
        return Err(Error::InvalidSize { n });
    }
    let h = (b - a) / n as f64;
    let sp = params.sp();
    let nodes: Vec<f64> = (0..n).map(|i| a + (i as f64 + 0.5) * h).collect();
    let tail = nodes
        .iter()
        .map(|&x| tail_weight(a, b, x, sp))
        .collect::<Result<Vec<_>>>()?;
    let dist = nodes.iter().map(|&x| (x - a).min(b - x)).collect();
    Ok(Grid1D {
        a,
        b,
        n,
        h,
        nodes,
        tail,
        dist,
        sp,
    })
}

/// Exact value of `int_{R \ (a,b)} |x - y|^{-(1 + sp)} dy`:
/// `((x - a)^{-sp} + (b - x)^{-sp}) / sp`.
pub fn tail_weight(a: f64, b: f64, x: f64, sp: f64) -> Result<f64> {
    if !(x > a && x < b) {
        return Err(Error::DegenerateNode { x, a, b });
    }
    if !(sp > 0.0) {
        return Err(Error::InvalidParams(format!("sp must be > 0, got {sp}")));
    }
    Ok(((x - a).powf(-sp) + (b - x).powf(-sp)) / sp)
}

impl Grid1D {
    /// `sum_i |v_i|^r h`.
    pub fn lr_power(&self, v: &[f64], r: f64) -> f64 {
        v.iter().map(|x| x.abs().powf(r)).sum::<f64>() * self.h
    }

    /// `sum_i |v_i| h`.
    pub fn l1(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).sum::<f64>() * self.h
    }

    pub fn l2(&self, v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() * self.h).sqrt()
    }

    /// `sum_i a_i b_i h`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.h
    }

    /// The profile `c * d(x)^s`.
    pub fn dist_power(&self, c: f64, s: f64) -> Vec<f64> {
        self.dist.iter().map(|d| c * d.powf(s)).collect()
    }
}

pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
