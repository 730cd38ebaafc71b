//! Coarse rectangular grid shared by the continuum solver and the coupling.

use crate::error::SimError;
use serde::{Deserialize, Serialize};

/// Uniform rectangular grid over `[x0, x1] x [y0, y1]` with `nx * ny` cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrid {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CoarseGrid {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self, SimError> {
        if nx == 0 || ny == 0 {
            return Err(SimError::Config(format!(
                "grid needs at least one cell per axis, got {nx}x{ny}"
            )));
        }
        if !(x1 > x0) || !(y1 > y0) {
            return Err(SimError::Config(format!(
                "degenerate domain [{x0},{x1}]x[{y0},{y1}]"
            )));
        }
        Ok(CoarseGrid {
            x0,
            x1,
            y0,
            y1,
            nx,
            ny,
        })
    }

    pub fn hx(&self) -> f64 {
        (self.x1 - self.x0) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y1 - self.y0) / self.ny as f64
    }

    /// Characteristic mesh size: the cell diagonal.
    pub fn diag(&self) -> f64 {
        self.hx().hypot(self.hy())
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Flat index of cell (i, j).
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Lower-left corner of cell (i, j).
    pub fn cell_origin(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + i as f64 * self.hx(),
            self.y0 + j as f64 * self.hy(),
        )
    }

    /// Cell containing the point.
    ///
    /// A point exactly on an interior edge belongs to the higher-index cell,
    /// which keeps concentration binning deterministic. Points outside the
    /// domain are an error; wrap them first if the boundary is periodic.
    pub fn cell_of_point(&self, x: f64, y: f64) -> Result<(usize, usize), SimError> {
        if !(x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1) {
            return Err(SimError::OutOfDomain { x, y });
        }
        let i = (((x - self.x0) / self.hx()).floor() as usize).min(self.nx - 1);
        let j = (((y - self.y0) / self.hy()).floor() as usize).min(self.ny - 1);
        Ok((i, j))
    }

    /// Wrap a point into the domain, treating both axes as periodic.
    pub fn wrap_point(&self, x: f64, y: f64) -> (f64, f64) {
        let w = self.x1 - self.x0;
        let h = self.y1 - self.y0;
        (
            self.x0 + (x - self.x0).rem_euclid(w),
            self.y0 + (y - self.y0).rem_euclid(h),
        )
    }
}
