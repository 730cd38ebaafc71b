//! Coarse-scale solver for the cell-averaged moment fields.
//!
//! Four conserved fields live on the [`CoarseGrid`]: concentration, the two
//! momentum-density components and the angular-momentum density. All of them
//! are advected with the same frozen per-cell velocity (the Oseen-style
//! linearisation of the quadratic advection term) by a finite-volume update
//! with local Lax-Friedrichs face fluxes; the momentum fields additionally
//! carry the drag sources measured by the local DEMs.
//!
//! The local (Rusanov) flux dissipates at the wave speed rather than at the
//! grid speed `h/tau`, so refining the grid at a fixed coarse step is
//! first-order accurate and shrinking the step only helps - the behaviour
//! the convergence studies rely on.

use crate::error::SimError;
use crate::grid::CoarseGrid;
use crate::types::Vec2;

/// Boundary condition of the coarse solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoarseBc {
    /// Both axes periodic.
    Periodic,
    /// Periodic in y. In x the domain is closed: the upstream (low-x) ghost
    /// holds zero concentration (clean inflow of open water) and the
    /// downstream boundary is a wall that lets nothing through (zero ghost
    /// flux, zero-gradient ghost value).
    WallX,
}

/// Maximum stable coarse step for advection speed `vmax` on `grid`, with
/// Courant number 1 and the cell diagonal as the mesh size.
pub fn cfl_bound(grid: &CoarseGrid, vmax: f64) -> f64 {
    if vmax == 0.0 {
        f64::INFINITY
    } else {
        grid.diag() / vmax
    }
}

/// Conserved fields plus the frozen coefficients for one coarse step.
#[derive(Clone, Debug)]
pub struct ContinuumState {
    pub grid: CoarseGrid,
    pub conc: Vec<f64>,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
    pub pw: Vec<f64>,
    /// Frozen advection velocity, measured from the DEM cells.
    pub vbar_x: Vec<f64>,
    pub vbar_y: Vec<f64>,
    /// Frozen drag sources for the momentum and spin equations.
    pub src_x: Vec<f64>,
    pub src_y: Vec<f64>,
    pub src_w: Vec<f64>,
}

/// Local Lax-Friedrichs (Rusanov) flux through the face between a left and a
/// right state: centred flux plus wave-speed dissipation.
#[inline]
fn face_flux(q_l: f64, v_l: f64, q_r: f64, v_r: f64) -> f64 {
    let alpha = v_l.abs().max(v_r.abs());
    0.5 * (v_l * q_l + v_r * q_r) - 0.5 * alpha * (q_r - q_l)
}

impl ContinuumState {
    pub fn zeros(grid: CoarseGrid) -> Self {
        let n = grid.n_cells();
        ContinuumState {
            grid,
            conc: vec![0.0; n],
            px: vec![0.0; n],
            py: vec![0.0; n],
            pw: vec![0.0; n],
            vbar_x: vec![0.0; n],
            vbar_y: vec![0.0; n],
            src_x: vec![0.0; n],
            src_y: vec![0.0; n],
            src_w: vec![0.0; n],
        }
    }

    pub fn vmax(&self) -> f64 {
        self.vbar_x
            .iter()
            .zip(&self.vbar_y)
            .fold(0.0_f64, |m, (vx, vy)| m.max(vx.hypot(*vy)))
    }

    /// State and velocity of the x-neighbour at `i + di` (di = -1 or +1),
    /// after ghost substitution. `None` marks a hard wall face.
    fn x_neighbor(&self, q: &[f64], i: usize, j: usize, di: i64, bc: CoarseBc) -> Option<(f64, f64)> {
        let nx = self.grid.nx as i64;
        let raw = i as i64 + di;
        if (0..nx).contains(&raw) {
            let k = self.grid.idx(raw as usize, j);
            return Some((q[k], self.vbar_x[k]));
        }
        match bc {
            CoarseBc::Periodic => {
                let k = self.grid.idx(raw.rem_euclid(nx) as usize, j);
                Some((q[k], self.vbar_x[k]))
            }
            CoarseBc::WallX => {
                if raw < 0 {
                    // Upstream ghost: still open water.
                    Some((0.0, 0.0))
                } else {
                    // Downstream wall: nothing crosses.
                    None
                }
            }
        }
    }

    fn y_neighbor(&self, q: &[f64], i: usize, j: usize, dj: i64) -> (f64, f64) {
        let ny = self.grid.ny as i64;
        let nj = (j as i64 + dj).rem_euclid(ny) as usize;
        let k = self.grid.idx(i, nj);
        (q[k], self.vbar_y[k])
    }

    fn advect_field(
        &self,
        q: &[f64],
        src: Option<&[f64]>,
        bc: CoarseBc,
        tau: f64,
        out: &mut [f64],
    ) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let cx = tau / self.grid.hx();
        let cy = tau / self.grid.hy();
        for j in 0..ny {
            for i in 0..nx {
                let k = self.grid.idx(i, j);
                let (qc, vxc, vyc) = (q[k], self.vbar_x[k], self.vbar_y[k]);

                let f_east = match self.x_neighbor(q, i, j, 1, bc) {
                    Some((qe, ve)) => face_flux(qc, vxc, qe, ve),
                    None => 0.0,
                };
                let f_west = match self.x_neighbor(q, i, j, -1, bc) {
                    Some((qw, vw)) => face_flux(qw, vw, qc, vxc),
                    None => 0.0,
                };
                let (qn, vn) = self.y_neighbor(q, i, j, 1);
                let (qs, vs) = self.y_neighbor(q, i, j, -1);
                let f_north = face_flux(qc, vyc, qn, vn);
                let f_south = face_flux(qs, vs, qc, vyc);

                let mut v = qc - cx * (f_east - f_west) - cy * (f_north - f_south);
                if let Some(s) = src {
                    v += tau * s[k];
                }
                out[k] = v;
            }
        }
    }

    /// One Lax-Friedrichs substep of length `tau` for all conserved fields,
    /// coefficients and sources held frozen.
    pub fn lf_substep(&self, bc: CoarseBc, tau: f64) -> Result<ContinuumState, SimError> {
        let bound = cfl_bound(&self.grid, self.vmax());
        if tau > bound {
            return Err(SimError::CflViolation { tau, bound });
        }

        let mut next = self.clone();
        self.advect_field(&self.conc, None, bc, tau, &mut next.conc);
        self.advect_field(&self.px, Some(&self.src_x), bc, tau, &mut next.px);
        self.advect_field(&self.py, Some(&self.src_y), bc, tau, &mut next.py);
        self.advect_field(&self.pw, Some(&self.src_w), bc, tau, &mut next.pw);

        for (name, field) in [
            ("conc", &next.conc),
            ("px", &next.px),
            ("py", &next.py),
            ("pw", &next.pw),
        ] {
            for j in 0..self.grid.ny {
                for i in 0..self.grid.nx {
                    if !field[self.grid.idx(i, j)].is_finite() {
                        return Err(SimError::NonFiniteField { field: name, i, j });
                    }
                }
            }
        }
        Ok(next)
    }

    /// Advance one coarse step of length `dt_coarse` with `n1` equal
    /// substeps, then clamp the concentration into `[0, conc_max]`.
    ///
    /// Returns the stepped state and the number of clamped cells (overshoot
    /// near steep fronts is expected of the scheme, so clamping warns rather
    /// than fails).
    pub fn solve_coarse_step(
        &self,
        bc: CoarseBc,
        dt_coarse: f64,
        n1: usize,
        conc_max: f64,
    ) -> Result<(ContinuumState, usize), SimError> {
        if n1 == 0 {
            return Err(SimError::Config("n1 must be at least 1".into()));
        }
        let tau = dt_coarse / n1 as f64;
        let mut state = self.lf_substep(bc, tau)?;
        for _ in 1..n1 {
            state = state.lf_substep(bc, tau)?;
        }
        let mut clamped = 0;
        for c in &mut state.conc {
            if *c < 0.0 {
                *c = 0.0;
                clamped += 1;
            } else if *c > conc_max {
                *c = conc_max;
                clamped += 1;
            }
        }
        Ok((state, clamped))
    }

    /// Domain integral of a field.
    pub fn total(&self, q: &[f64]) -> f64 {
        q.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Cell-mean momentum target (per floe) for a cell holding `n` floes.
    pub fn momentum_target(&self, i: usize, j: usize, n: usize) -> Vec2 {
        let k = self.grid.idx(i, j);
        let scale = self.grid.cell_area() / n as f64;
        Vec2::new(self.px[k] * scale, self.py[k] * scale)
    }

    /// Cell-mean angular-momentum target (per floe).
    pub fn spin_target(&self, i: usize, j: usize, n: usize) -> f64 {
        self.pw[self.grid.idx(i, j)] * self.grid.cell_area() / n as f64
    }
}
