//! Implicit time stepping for `d/dt beta(v) + (-Delta)^s_p v = h(t, x, v)` on an
//! interval with zero exterior data, plus the checks built around it.
// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod model;
pub mod nonlocal_op;

pub use error::{Error, Result};
pub use grid::{build_grid, Grid1D, ModelParams, Regime};
pub use model::Discretization;
pub use nonlocal_op::{Field, KernelMatrix};
