//! Scalar functionals recorded along trajectories, and the regime exponents.

use crate::grid::{linf, ModelParams};
use crate::model::Discretization;

/// Exponent `r` of the decay functional `M_r`.
pub const DECAY_R: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub seminorm_p: f64,
    pub energy_e: f64,
    pub y: f64,
    pub m_r: f64,
    /// `sum |v|^{q/m+1} h`.
    pub lqm1: f64,
}

pub fn record(disc: &Discretization, t: f64, v: &[f64]) -> DiagnosticsRecord {
    let pr = &disc.params;
    let g = &disc.grid;
    let s = disc.kernel.energy_and_apply(v, pr.p, None);
    let lqm1 = g.lr_power(v, pr.q / pr.m + 1.0);
    DiagnosticsRecord {
        t,
        l1: g.l1(v),
        l2: g.l2(v),
        linf: linf(v),
        seminorm_p: s.powf(1.0 / pr.p),
        energy_e: s / pr.p - pr.m / (pr.m + pr.q) * lqm1,
        y: y_functional(disc, v),
        m_r: m_r_functional(disc, v, DECAY_R),
        lqm1,
    }
}

/// `E(v) = S(v)/p - m/(m+q) sum |v|^{q/m+1} h`.
pub fn energy_e(disc: &Discretization, v: &[f64]) -> f64 {
    let pr = &disc.params;
    disc.kernel.energy_and_apply(v, pr.p, None) / pr.p
        - pr.m / (pr.m + pr.q) * disc.grid.lr_power(v, pr.q / pr.m + 1.0)
}

/// `Y(v) = 1/(m+1) sum |v|^{1+1/m} h`.
pub fn y_functional(disc: &Discretization, v: &[f64]) -> f64 {
    let m = disc.params.m;
    disc.grid.lr_power(v, 1.0 + 1.0 / m) / (m + 1.0)
}

/// `M_r(v) = sum |v|^{r+1/m} h`.
pub fn m_r_functional(disc: &Discretization, v: &[f64], r: f64) -> f64 {
    disc.grid.lr_power(v, r + 1.0 / disc.params.m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionExponents {
    pub alpha: f64,
    pub gamma: f64,
    /// `alpha < gamma <= 1` with `q <= 1`.
    pub valid: bool,
}

/// `alpha = m(p-1+r)/(rm+1)`, `gamma = (rm+q)/(rm+1)`.
pub fn extinction_exponents(params: &ModelParams, r: f64) -> ExtinctionExponents {
    let (m, p, q) = (params.m, params.p, params.q);
    let alpha = m * (p - 1.0 + r) / (r * m + 1.0);
    let gamma = (r * m + q) / (r * m + 1.0);
    ExtinctionExponents {
        alpha,
        gamma,
        valid: alpha < gamma && q <= 1.0,
    }
}

/// `max(M0^{1-alpha} - (c/2)(1-alpha) t, 0)^{1/(1-alpha)}`.
pub fn extinction_bound(m0: f64, alpha: f64, c_rate: f64, t: f64) -> f64 {
    let k = 1.0 - alpha;
    let base = m0.powf(k) - 0.5 * c_rate * k * t;
    if base <= 0.0 {
        0.0
    } else {
        base.powf(1.0 / k)
    }
}

/// Time at which [`extinction_bound`] reaches zero.
pub fn predicted_extinction_time(m0: f64, alpha: f64, c_rate: f64) -> f64 {
    let k = 1.0 - alpha;
    m0.powf(k) / (0.5 * c_rate * k)
}

/// Rate `c` for which [`extinction_bound`] passes through `(t1, m1)` from `(0, m0)`.
pub fn calibrate_extinction_rate(m0: f64, m1: f64, alpha: f64, t1: f64) -> f64 {
    let k = 1.0 - alpha;
    2.0 * (m0.powf(k) - m1.powf(k)) / (k * t1)
}

/// `nu = (m+q)/(m+1)`.
pub fn blowup_exponent(params: &ModelParams) -> f64 {
    (params.m + params.q) / (params.m + 1.0)
}

/// `(Y, M_r)` at every snapshot.
pub fn series_y_and_mr<V: AsRef<[f64]>>(disc: &Discretization, fields: &[V], r: f64) -> (Vec<f64>, Vec<f64>) {
    fields
        .iter()
        .map(|v| (y_functional(disc, v.as_ref()), m_r_functional(disc, v.as_ref(), r)))
        .unzip()
}
