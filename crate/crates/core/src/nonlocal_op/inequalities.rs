//! Scalar monotonicity inequalities for `x -> [[x]]^{p-1}`.
//!
//! For `A = [[xi]]^{p-1}`, `B = [[eta]]^{p-1}`:
//!
//! ```text
//! (1)  |A - B| <= c1 |xi - eta| (|xi| + |eta|)^{p-2}        p >= 2
//!      |A - B| <= c1 |xi - eta|^{p-1}                        p <= 2
//! (2)  (A - B)(xi - eta) >= c2 |xi - eta|^p                  p >= 2
//!      (A - B)(xi - eta) >= c2 |xi - eta|^2 / (|xi| + |eta|)^{2-p}   p <= 2
//! (3)  c3 |xi - eta| (|xi| + |eta|)^{p-2} <= |A - B| <= c4 |xi - eta| (|xi| + |eta|)^{p-2}
//! ```
//!
//! Every ratio is homogeneous of degree zero, so the optimal constants are
//! extrema over the unit circle, found by a dense angular scan followed by a
//! golden-section refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::signed_pow;

/// Calibrated constants `c1..c4` for one exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraicConstants {
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub samples: usize,
    /// Violation counts for (1), (2), lower (3), upper (3).
    pub violations: [usize; 4],
    /// Largest relative margin `(lhs - c rhs) / (lhs + c rhs)` oriented so that
    /// positive means violated.
    pub max_margin: f64,
}

impl InequalityReport {
    pub fn total_violations(&self) -> usize {
        self.violations.iter().sum()
    }
}

#[derive(Clone, Copy)]
struct Terms {
    diff: f64,
    b1_rhs: f64,
    b2_lhs: f64,
    b2_rhs: f64,
    b3_rhs: f64,
    /// Rounding scale of `|A - B|`.
    round: f64,
}

fn terms(xi: f64, eta: f64, p: f64) -> Terms {
    let a = signed_pow(xi, p - 1.0);
    let b = signed_pow(eta, p - 1.0);
    let d = (xi - eta).abs();
    let sum = xi.abs() + eta.abs();
    let b3_rhs = d * sum.powf(p - 2.0);
    let (b1_rhs, b2_rhs) = if p >= 2.0 {
        (b3_rhs, d.powf(p))
    } else {
        (d.powf(p - 1.0), d * d / sum.powf(2.0 - p))
    };
    Terms {
        diff: (a - b).abs(),
        b1_rhs,
        b2_lhs: (a - b) * (xi - eta),
        b2_rhs,
        b3_rhs,
        round: 16.0 * f64::EPSILON * (a.abs() + b.abs()),
    }
}

fn ratios(theta: f64, p: f64) -> Option<[f64; 3]> {
    let (xi, eta) = (theta.cos(), theta.sin());
    if (xi - eta).abs() < 1e-12 {
        return None;
    }
    let t = terms(xi, eta, p);
    Some([t.diff / t.b1_rhs, t.b2_lhs / t.b2_rhs, t.diff / t.b3_rhs])
}

fn refine(theta0: f64, width: f64, p: f64, k: usize, maximize: bool) -> f64 {
    let sign = if maximize { 1.0 } else { -1.0 };
    let eval = |th: f64| ratios(th, p).map(|r| sign * r[k]).unwrap_or(f64::NEG_INFINITY);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (theta0 - width, theta0 + width);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = eval(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = eval(x1);
        }
    }
    let best = eval(theta0).max(f1).max(f2);
    sign * best
}

/// Brute-force calibration of the optimal constants over `resolution` angles,
/// then relaxed by the relative `slack` (upper constants grow, lower shrink).
pub fn calibrate_algebraic_constants(p: f64, resolution: usize, slack: f64) -> AlgebraicConstants {
    let step = std::f64::consts::TAU / resolution as f64;
    // (max1, min2, min3, max3) with the angle that attains each
    let mut ext = [
        (f64::NEG_INFINITY, 0.0),
        (f64::INFINITY, 0.0),
        (f64::INFINITY, 0.0),
        (f64::NEG_INFINITY, 0.0),
    ];
    for k in 0..resolution {
        let th = (k as f64 + 0.5) * step;
        if let Some(r) = ratios(th, p) {
            if r[0] > ext[0].0 {
                ext[0] = (r[0], th);
            }
            if r[1] < ext[1].0 {
                ext[1] = (r[1], th);
            }
            if r[2] < ext[2].0 {
                ext[2] = (r[2], th);
            }
            if r[2] > ext[3].0 {
                ext[3] = (r[2], th);
            }
        }
    }
    let c1 = ext[0].0.max(refine(ext[0].1, step, p, 0, true));
    let c2 = ext[1].0.min(refine(ext[1].1, step, p, 1, false));
    let c3 = ext[2].0.min(refine(ext[2].1, step, p, 2, false));
    let c4 = ext[3].0.max(refine(ext[3].1, step, p, 2, true));
    AlgebraicConstants {
        p,
        c1: c1 * (1.0 + slack),
        c2: c2 * (1.0 - slack),
        c3: c3 * (1.0 - slack),
        c4: c4 * (1.0 + slack),
    }
}

/// Samples `sample_count` pairs uniformly in `[-range, range]^2` and checks all
/// three inequalities with the given constants. Violations are counted, not
/// raised; a pair only counts as violating beyond floating-point rounding.
pub fn check_algebraic_inequalities(
    constants: &AlgebraicConstants,
    sample_count: usize,
    range: f64,
    seed: u64,
) -> InequalityReport {
    let p = constants.p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = [0usize; 4];
    let mut max_margin = f64::NEG_INFINITY;
    let mut record = |idx: usize, excess: f64, scale: f64, round: f64, max_margin: &mut f64| {
        if scale > 0.0 {
            *max_margin = max_margin.max(excess / scale);
        }
        if excess > round {
            violations[idx] += 1;
        }
    };
    for _ in 0..sample_count {
        let xi = rng.random_range(-range..=range);
        let eta = rng.random_range(-range..=range);
        let t = terms(xi, eta, p);
        if xi == eta {
            // every side vanishes
            max_margin = max_margin.max(0.0);
            continue;
        }
        let d = (xi - eta).abs();
        let c1r = constants.c1 * t.b1_rhs;
        record(0, t.diff - c1r, t.diff + c1r, t.round, &mut max_margin);
        let c2r = constants.c2 * t.b2_rhs;
        record(1, c2r - t.b2_lhs, t.b2_lhs + c2r, t.round * d, &mut max_margin);
        let c3r = constants.c3 * t.b3_rhs;
        record(2, c3r - t.diff, t.diff + c3r, t.round, &mut max_margin);
        let c4r = constants.c4 * t.b3_rhs;
        record(3, t.diff - c4r, t.diff + c4r, t.round, &mut max_margin);
    }
    InequalityReport {
        samples: sample_count,
        violations,
        max_margin,
    }
}
