//! Axis-aligned tilings of the unit cube into half-open cells of side `h`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellGrid {
    dim: usize,
    side: f64,
    per_axis: usize,
}

impl CellGrid {
    /// `⌈1/h⌉` cells per axis; the last cell along each axis is clipped at 1.
    pub fn new(dim: usize, side: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(side > 0.0 && side <= 1.0) {
            return Err(Error::InvalidArgument(format!("cell side must lie in (0, 1], got {side}")));
        }
        let per_axis = ((1.0 / side) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let total = per_axis.checked_pow(dim as u32).ok_or_else(|| {
            Error::InvalidArgument(format!("{per_axis}^{dim} cells overflow"))
        })?;
        if total > 1 << 26 {
            return Err(Error::InvalidArgument(format!("{total} cells is too many")));
        }
        Ok(Self { dim, side, per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn cell_count(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    /// True when the cells tile the cube without a clipped last row.
    pub fn is_exact(&self) -> bool {
        (self.per_axis as f64 * self.side - 1.0).abs() <= 1e-9
    }

    #[inline]
    fn axis_index(&self, coord: f64) -> usize {
        let i = (coord / self.side).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.per_axis - 1)
        }
    }

    /// Cell index of `x`; coordinates are assumed to lie in `[0, 1]`.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        let mut idx = 0;
        let mut stride = 1;
        for &c in x {
            idx += self.axis_index(c) * stride;
            stride *= self.per_axis;
        }
        Ok(idx)
    }

    pub fn multi_index(&self, mut cell: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            out.push(cell % self.per_axis);
            cell /= self.per_axis;
        }
        out
    }

    /// Centre of an unclipped cell.
    pub fn center(&self, cell: usize) -> Vec<f64> {
        self.multi_index(cell).into_iter().map(|i| (i as f64 + 0.5) * self.side).collect()
    }
}
