use crate::error::Result;
use crate::grid::{build_grid, Grid1D, ModelParams};
use crate::nonlocal_op::KernelMatrix;

/// Parameters, mesh and kernel bundled for the solvers.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub params: ModelParams,
    pub grid: Grid1D,
    pub kernel: KernelMatrix,
}

impl Discretization {
    pub fn new(params: ModelParams, a: f64, b: f64, n: usize) -> Result<Self> {
        params.validate()?;
        let grid = build_grid(a, b, n, &params)?;
        let kernel = KernelMatrix::new(&grid);
        Ok(Self {
            params,
            grid,
            kernel,
        })
    }

    /// The unit interval with `n` cells.
    pub fn unit(params: ModelParams, n: usize) -> Result<Self> {
        Self::new(params, 0.0, 1.0, n)
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }
}
