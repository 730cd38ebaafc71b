//! Scenario definitions, the full-domain DEM reference run, concentration
//! extraction, L2 errors and convergence-rate fitting.

use crate::continuum::CoarseBc;
use crate::coupling::{CellSlot, CouplingSchedule, MsdemWorld};
use crate::dem::{Boundary, DemCell, EngulfmentPolicy};
use crate::error::SimError;
use crate::grid::CoarseGrid;
use crate::ocean::{gather_scatter, mild_compressible, OceanField};
use crate::types::{Floe, PhysParams, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// The four standard simulation scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    /// Constant ocean current, pure transport.
    S41,
    /// One-dimensional current that gathers and scatters the floes.
    S42,
    /// Mild compressible cellular current.
    S43,
    /// Constant current against a fixed wall on the right boundary.
    S44,
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioId::S41 => "s41",
            ScenarioId::S42 => "s42",
            ScenarioId::S43 => "s43",
            ScenarioId::S44 => "s44",
        };
        f.write_str(s)
    }
}

impl FromStr for ScenarioId {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "s41" => Ok(ScenarioId::S41),
            "s42" => Ok(ScenarioId::S42),
            "s43" => Ok(ScenarioId::S43),
            "s44" => Ok(ScenarioId::S44),
            other => Err(SimError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// A fully populated scenario: domain, floe lattice, ocean field and
/// boundary treatment.
#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub scale: f64,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    /// Initial lattice of floes, one per fine cell.
    pub lattice_nx: usize,
    pub lattice_ny: usize,
    /// Radius scale; `2 * r_c` is the fine lattice spacing.
    pub r_c: f64,
    pub ocean: OceanField,
    /// Boundary condition of the coarse solver.
    pub coarse_bc: CoarseBc,
    /// Boundary treatment of the full-domain DEM.
    pub dem_boundary: Boundary,
    /// Fixed wall position for the wall scenario.
    pub wall_x: Option<f64>,
}

impl ScenarioSpec {
    /// Initial floe radius at position x: `r_c (0.2 + 0.8 sin(0.25 pi x))`.
    pub fn radius_at(&self, x: f64) -> f64 {
        self.r_c * (0.2 + 0.8 * (0.25 * PI * x).sin())
    }

    pub fn domain_width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn domain_height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Build one of the four scenarios at lattice scale 1, 1/2 or 1/4.
pub fn make_scenario(id: ScenarioId, scale: f64) -> Result<ScenarioSpec, SimError> {
    if ![1.0, 0.5, 0.25].contains(&scale) {
        return Err(SimError::Config(format!(
            "scale must be 1, 0.5 or 0.25, got {scale}"
        )));
    }
    let lattice_nx = (480.0 * scale) as usize;
    let lattice_ny = (240.0 * scale) as usize;
    let r_c = 1.0 / (240.0 * scale);

    let (ocean, coarse_bc, dem_boundary, wall_x) = match id {
        ScenarioId::S41 => (
            OceanField::Uniform { ux: 0.3, uy: 0.0 },
            CoarseBc::Periodic,
            Boundary::DoublyPeriodic,
            None,
        ),
        ScenarioId::S42 => (
            gather_scatter(),
            CoarseBc::Periodic,
            Boundary::DoublyPeriodic,
            None,
        ),
        ScenarioId::S43 => (
            mild_compressible(),
            CoarseBc::Periodic,
            Boundary::DoublyPeriodic,
            None,
        ),
        ScenarioId::S44 => (
            OceanField::Uniform { ux: 0.3, uy: 0.0 },
            CoarseBc::WallX,
            Boundary::PeriodicY,
            Some(4.0),
        ),
    };

    Ok(ScenarioSpec {
        id,
        scale,
        x0: 0.0,
        x1: 4.0,
        y0: 0.0,
        y1: 2.0,
        lattice_nx,
        lattice_ny,
        r_c,
        ocean,
        coarse_bc,
        dem_boundary,
        wall_x,
    })
}

/// Lattice spacing `len / n` with enough low mantissa bits dropped that all
/// half-odd multiples up to `2n - 1` and the tile extent `n * spacing` are
/// exactly representable.
///
/// Uniform spacing that is exact in floating point keeps the vertical
/// contact forces of lattice columns cancelling bitwise, which is what
/// preserves the exact zero of the angular velocities in the transport
/// scenarios.
pub fn exact_spacing(len: f64, n: usize) -> f64 {
    let raw = len / n as f64;
    let drop = 64 - (4 * n as u64).leading_zeros() as u64;
    f64::from_bits(raw.to_bits() & !((1u64 << drop) - 1))
}

/// The floes of one tile of the initial lattice, in tile-local coordinates.
///
/// `origin` is the tile's global lower-left corner; `nfx * nfy` floes sit at
/// the centres of an exactly uniform sub-lattice with the given spacings.
pub fn lattice_floes(
    spec: &ScenarioSpec,
    origin: Vec2,
    nfx: usize,
    nfy: usize,
    sx: f64,
    sy: f64,
) -> Vec<Floe> {
    let mut floes = Vec::with_capacity(nfx * nfy);
    for ky in 0..nfy {
        let y = (2 * ky + 1) as f64 * (0.5 * sy);
        for kx in 0..nfx {
            let x = (2 * kx + 1) as f64 * (0.5 * sx);
            let gx = origin.x + x;
            let gy = origin.y + y;
            let u = spec.ocean.velocity(gx, gy);
            floes.push(Floe {
                r: spec.radius_at(gx),
                x,
                y,
                theta: 0.0,
                vx: u.x,
                vy: u.y,
                omega: 0.0,
            });
        }
    }
    floes
}

/// The full-domain DEM: one big tile holding the whole lattice.
pub fn build_full_dem(spec: &ScenarioSpec) -> Result<DemCell, SimError> {
    let sx = exact_spacing(spec.domain_width(), spec.lattice_nx);
    let sy = exact_spacing(spec.domain_height(), spec.lattice_ny);
    let origin = Vec2::new(spec.x0, spec.y0);
    let floes = lattice_floes(spec, origin, spec.lattice_nx, spec.lattice_ny, sx, sy);
    DemCell::new(
        origin,
        spec.lattice_nx as f64 * sx,
        spec.lattice_ny as f64 * sy,
        spec.dem_boundary,
        floes,
    )
}

/// Assemble the multiscale world: one doubly-periodic DEM tile per coarse
/// cell, each holding its share of the initial lattice.
pub fn build_msdem_world(
    spec: &ScenarioSpec,
    grid: CoarseGrid,
    schedule: CouplingSchedule,
    params: PhysParams,
    conc_max: f64,
    r_min: f64,
) -> Result<MsdemWorld, SimError> {
    if spec.lattice_nx % grid.nx != 0 || spec.lattice_ny % grid.ny != 0 {
        return Err(SimError::Config(format!(
            "coarse grid {}x{} does not divide the {}x{} floe lattice",
            grid.nx, grid.ny, spec.lattice_nx, spec.lattice_ny
        )));
    }
    let nfx = spec.lattice_nx / grid.nx;
    let nfy = spec.lattice_ny / grid.ny;
    let sx = exact_spacing(grid.hx(), nfx);
    let sy = exact_spacing(grid.hy(), nfy);

    let mut cells = Vec::with_capacity(grid.n_cells());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (ox, oy) = grid.cell_origin(i, j);
            let origin = Vec2::new(ox, oy);
            let floes = lattice_floes(spec, origin, nfx, nfy, sx, sy);
            let dem = DemCell::new(
                origin,
                nfx as f64 * sx,
                nfy as f64 * sy,
                Boundary::DoublyPeriodic,
                floes,
            )?;
            cells.push(CellSlot::new(dem));
        }
    }

    Ok(MsdemWorld {
        grid,
        cells,
        ocean: spec.ocean,
        params,
        schedule,
        bc: spec.coarse_bc,
        conc_max,
        r_min,
    })
}

/// Floe states captured from the reference run.
#[derive(Clone, Debug, Default)]
pub struct TruthRun {
    pub snapshot_times: Vec<f64>,
    pub floe_snapshots: Vec<Vec<Floe>>,
    pub max_abs_omega: f64,
}

impl TruthRun {
    pub fn floes_at(&self, t: f64) -> Option<&Vec<Floe>> {
        self.snapshot_times
            .iter()
            .position(|&s| (s - t).abs() < 1e-9)
            .map(|k| &self.floe_snapshots[k])
    }
}

/// Integrate the full-domain DEM to `t_end`, capturing floe states at the
/// requested times. This run is the reference ("truth") the multiscale model
/// is measured against.
pub fn run_full_dem(
    spec: &ScenarioSpec,
    params: &PhysParams,
    dt: f64,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<TruthRun, SimError> {
    run_full_dem_with(spec, params, dt, t_end, snapshot_times, EngulfmentPolicy::Strict)
}

/// [`run_full_dem`] with an explicit engulfment policy for deeply jammed
/// configurations.
pub fn run_full_dem_with(
    spec: &ScenarioSpec,
    params: &PhysParams,
    dt: f64,
    t_end: f64,
    snapshot_times: &[f64],
    engulfment: EngulfmentPolicy,
) -> Result<TruthRun, SimError> {
    let mut cell = build_full_dem(spec)?;
    cell.engulfment = engulfment;
    let nt = (t_end / dt).round() as usize;
    if ((nt as f64 * dt) - t_end).abs() > 1e-9 {
        return Err(SimError::Config(format!(
            "t_end = {t_end} is not a multiple of dt = {dt}"
        )));
    }

    let mut capture_at = vec![false; nt + 1];
    for &t in snapshot_times {
        let k = (t / dt).round() as usize;
        if k > nt || (k as f64 * dt - t).abs() > 0.5 * dt {
            return Err(SimError::Config(format!(
                "snapshot time {t} outside [0, {t_end}] or off the dt raster"
            )));
        }
        capture_at[k] = true;
    }

    let mut out = TruthRun::default();
    if capture_at[0] {
        out.snapshot_times.push(0.0);
        out.floe_snapshots.push(cell.floes.clone());
    }

    let mut max_omega = 0.0_f64;
    for step in 1..=nt {
        cell.step(&spec.ocean, params, dt)?;
        if let Some(wall) = spec.wall_x {
            for f in &mut cell.floes {
                if f.x + f.r >= wall {
                    f.vx = f.vx.min(0.0);
                    f.x = f.x.min(wall - f.r);
                }
            }
        }
        for f in &cell.floes {
            max_omega = max_omega.max(f.omega.abs());
        }
        if capture_at[step] {
            out.snapshot_times.push(step as f64 * dt);
            out.floe_snapshots.push(cell.floes.clone());
        }
    }
    out.max_abs_omega = max_omega;
    Ok(out)
}

/// Concentration on a coarse grid.
#[derive(Clone, Debug)]
pub struct ConcField {
    pub grid: CoarseGrid,
    pub values: Vec<f64>,
}

impl ConcField {
    pub fn total_area(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }
}

/// Area of the circular segment `{X >= d}` of a radius-`r` disc centred at
/// the origin, for a cut at distance `d >= 0`.
fn segment_area(r: f64, d: f64) -> f64 {
    if d >= r {
        return 0.0;
    }
    r * r * (d / r).acos() - d * (r * r - d * d).sqrt()
}

/// Area of the corner region `{X >= a, Y >= b}` of a radius-`r` disc, for
/// cut distances `a, b >= 0`.
fn corner_area(r: f64, a: f64, b: f64) -> f64 {
    if a * a + b * b >= r * r {
        return 0.0;
    }
    let anti = |x: f64| {
        0.5 * x * (r * r - x * x).max(0.0).sqrt() + 0.5 * r * r * (x / r).asin() - b * x
    };
    let xb = (r * r - b * b).sqrt();
    anti(xb) - anti(a)
}

/// Distribute one disc's area over the (up to four) cells it overlaps.
///
/// The disc must not span more than half a cell; the scenarios stay far
/// under that. Out-of-domain spill across a wall boundary is credited back
/// to the boundary cell so the estimator conserves area.
fn deposit_floe(
    grid: &CoarseGrid,
    bc: CoarseBc,
    f: &Floe,
    values: &mut [f64],
) -> Result<(), SimError> {
    if f.r > 0.5 * grid.hx().min(grid.hy()) {
        return Err(SimError::Config(format!(
            "floe radius {} exceeds half a cell; area-weighted binning unsupported",
            f.r
        )));
    }
    let (x, y) = grid.wrap_point(f.x, f.y);
    let (i, j) = grid.cell_of_point(x, y)?;
    let (ox, oy) = grid.cell_origin(i, j);

    // Signed direction and distance of at most one x and one y cut.
    let d_right = (ox + grid.hx()) - x;
    let d_left = x - ox;
    let (x_dir, dx) = if d_right < f.r {
        (1i64, d_right)
    } else if d_left < f.r {
        (-1, d_left)
    } else {
        (0, f.r)
    };
    let d_top = (oy + grid.hy()) - y;
    let d_bot = y - oy;
    let (y_dir, dy) = if d_top < f.r {
        (1i64, d_top)
    } else if d_bot < f.r {
        (-1, d_bot)
    } else {
        (0, f.r)
    };

    let seg_x = if x_dir != 0 { segment_area(f.r, dx) } else { 0.0 };
    let seg_y = if y_dir != 0 { segment_area(f.r, dy) } else { 0.0 };
    let corner = if x_dir != 0 && y_dir != 0 {
        corner_area(f.r, dx, dy)
    } else {
        0.0
    };

    let xn = match bc {
        CoarseBc::Periodic => (i as i64 + x_dir).rem_euclid(grid.nx as i64) as usize,
        CoarseBc::WallX => (i as i64 + x_dir).clamp(0, grid.nx as i64 - 1) as usize,
    };
    let yn = (j as i64 + y_dir).rem_euclid(grid.ny as i64) as usize;

    let full = PI * f.r * f.r;
    values[grid.idx(i, j)] += full - seg_x - seg_y + corner;
    values[grid.idx(xn, j)] += seg_x - corner;
    values[grid.idx(i, yn)] += seg_y - corner;
    values[grid.idx(xn, yn)] += corner;
    Ok(())
}

/// Area-weighted concentration: every floe's disc is clipped against the
/// cell edges and each cell receives exactly the area inside it.
pub fn concentration_field_bc(
    floes: &[Floe],
    grid: &CoarseGrid,
    bc: CoarseBc,
) -> Result<ConcField, SimError> {
    let mut values = vec![0.0; grid.n_cells()];
    for f in floes {
        deposit_floe(grid, bc, f, &mut values)?;
    }
    let area = grid.cell_area();
    for v in &mut values {
        *v /= area;
    }
    Ok(ConcField { grid: *grid, values })
}

/// Area-weighted concentration on a fully periodic domain.
pub fn concentration_field(floes: &[Floe], grid: &CoarseGrid) -> Result<ConcField, SimError> {
    concentration_field_bc(floes, grid, CoarseBc::Periodic)
}

/// Cell-mean x-velocity of the floes whose centres fall in each cell
/// (zero for empty cells).
pub fn velocity_field(floes: &[Floe], grid: &CoarseGrid) -> Result<Vec<f64>, SimError> {
    let mut sums = vec![0.0; grid.n_cells()];
    let mut counts = vec![0usize; grid.n_cells()];
    for f in floes {
        let (x, y) = grid.wrap_point(f.x, f.y);
        let (i, j) = grid.cell_of_point(x, y)?;
        sums[grid.idx(i, j)] += f.vx;
        counts[grid.idx(i, j)] += 1;
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            *s /= c as f64;
        }
    }
    Ok(sums)
}

/// Discrete L2 norm of the difference of two fields on the same grid,
/// `sqrt(sum (a - b)^2 hx hy)`.
pub fn l2_error(a: &ConcField, b: &ConcField) -> Result<f64, SimError> {
    if a.grid != b.grid {
        return Err(SimError::GridMismatch(a.grid.n_cells(), b.grid.n_cells()));
    }
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum * a.grid.cell_area()).sqrt())
}

/// L2 distance between two raw per-cell fields on a grid.
pub fn l2_error_values(a: &[f64], b: &[f64], grid: &CoarseGrid) -> Result<f64, SimError> {
    if a.len() != b.len() || a.len() != grid.n_cells() {
        return Err(SimError::GridMismatch(a.len(), b.len()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum * grid.cell_area()).sqrt())
}

/// One grid's errors at one time within a convergence study.
#[derive(Clone, Copy, Debug)]
pub struct StudyRow {
    pub nx: usize,
    pub ny: usize,
    /// Cell diagonal of the grid.
    pub dx: f64,
    /// L2 error of the multiscale concentration against the reference.
    pub conc_err: f64,
    /// L2 error of the cell-mean x-velocity field.
    pub vx_err: f64,
}

/// Errors and fitted slope at one requested time.
#[derive(Clone, Debug)]
pub struct StudyTime {
    pub t: f64,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of log conc_err vs log dX.
    pub conc_slope: f64,
    pub vx_slope: f64,
}

/// Per-grid diagnostics of the multiscale runs inside a study.
#[derive(Clone, Copy, Debug)]
pub struct StudyRunDiag {
    pub nx: usize,
    pub ny: usize,
    pub max_abs_omega: f64,
    pub worst_attainment: f64,
}

/// A full grid-refinement study of one scenario.
#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub scenario: ScenarioId,
    pub per_time: Vec<StudyTime>,
    pub truth_max_abs_omega: f64,
    pub msdem_diags: Vec<StudyRunDiag>,
}

/// Run the multiscale model on every grid, compare each against the shared
/// full-DEM reference at the requested times, and fit error slopes.
///
/// `truth` may carry a precomputed reference run (it must contain snapshots
/// at all requested times); otherwise the reference is integrated here.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    spec: &ScenarioSpec,
    grids: &[(usize, usize)],
    times: &[f64],
    schedule: CouplingSchedule,
    params: PhysParams,
    conc_max: f64,
    r_min: f64,
    workers: usize,
    truth: Option<&TruthRun>,
) -> Result<ConvergenceStudy, SimError> {
    if grids.len() < 2 {
        return Err(SimError::Config(
            "a convergence study needs at least two grids".into(),
        ));
    }
    if times.is_empty() {
        return Err(SimError::Config("no evaluation times given".into()));
    }
    let t_max = times.iter().cloned().fold(0.0_f64, f64::max);

    let computed;
    let truth = match truth {
        Some(t) => t,
        None => {
            computed = run_full_dem(spec, &params, schedule.dt, t_max, times)?;
            &computed
        }
    };

    let mut per_grid: Vec<(CoarseGrid, crate::coupling::RunResult)> = Vec::new();
    let mut msdem_diags = Vec::new();
    for &(nx, ny) in grids {
        let grid = CoarseGrid::new(spec.x0, spec.x1, spec.y0, spec.y1, nx, ny)?;
        let mut world = build_msdem_world(spec, grid, schedule, params, conc_max, r_min)?;
        let result = crate::coupling::run_msdem(&mut world, t_max, times, workers, None)?;
        msdem_diags.push(StudyRunDiag {
            nx,
            ny,
            max_abs_omega: result.max_abs_omega,
            worst_attainment: result.worst_attainment(),
        });
        per_grid.push((grid, result));
    }

    let mut per_time = Vec::new();
    for &t in times {
        let floes = truth
            .floes_at(t)
            .ok_or_else(|| SimError::Config(format!("reference run lacks snapshot at t = {t}")))?;
        let mut rows = Vec::new();
        for (grid, result) in &per_grid {
            // The reference concentration comes from the floes (exact-area
            // binning); the multiscale model's concentration is its own
            // cell-average state.
            let truth_conc = concentration_field_bc(floes, grid, spec.coarse_bc)?;
            let truth_vx = velocity_field(floes, grid)?;
            let ms_conc = result
                .conc_at(t)
                .ok_or_else(|| SimError::Config(format!("msDEM run lacks snapshot at t = {t}")))?;
            let ms_vx = result.vx_at(t).expect("same snapshot raster");
            rows.push(StudyRow {
                nx: grid.nx,
                ny: grid.ny,
                dx: grid.diag(),
                conc_err: l2_error_values(ms_conc, &truth_conc.values, grid)?,
                vx_err: l2_error_values(ms_vx, &truth_vx, grid)?,
            });
        }
        let conc_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.dx, r.conc_err)).collect();
        let vx_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.dx, r.vx_err)).collect();
        let conc_slope = convergence_rate(&conc_pts)?;
        let vx_slope = convergence_rate(&vx_pts).unwrap_or(f64::NAN);
        per_time.push(StudyTime {
            t,
            rows,
            conc_slope,
            vx_slope,
        });
    }

    Ok(ConvergenceStudy {
        scenario: spec.id,
        per_time,
        truth_max_abs_omega: truth.max_abs_omega,
        msdem_diags,
    })
}

/// Least-squares slope of `log(error)` against `log(dX)`.
pub fn convergence_rate(points: &[(f64, f64)]) -> Result<f64, SimError> {
    if points.len() < 2 {
        return Err(SimError::Config(
            "convergence fit needs at least two (dX, error) points".into(),
        ));
    }
    for &(dx, err) in points {
        if !(dx > 0.0) || !(err > 0.0) {
            return Err(SimError::Config(format!(
                "convergence fit needs positive values, got ({dx}, {err})"
            )));
        }
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(dx, err) in points {
        let x = dx.ln();
        let y = err.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_radius_law() {
        let spec = make_scenario(ScenarioId::S41, 1.0).unwrap();
        assert_eq!(spec.lattice_nx, 480);
        assert_eq!(spec.lattice_ny, 240);
        assert!((spec.r_c - 1.0 / 240.0).abs() < 1e-18);
        // Peak of the radius law at x = 2.
        assert!((spec.radius_at(2.0) - spec.r_c).abs() < 1e-15);
        // Radii stay positive and below r_c across the domain.
        for k in 0..400 {
            let r = spec.radius_at(4.0 * k as f64 / 400.0);
            assert!(r > 0.0 && r <= spec.r_c * (1.0 + 1e-12));
        }
    }

    #[test]
    fn scenario_scales_and_unknown_scale() {
        let spec = make_scenario(ScenarioId::S42, 0.5).unwrap();
        assert_eq!((spec.lattice_nx, spec.lattice_ny), (240, 120));
        assert!((spec.r_c - 1.0 / 120.0).abs() < 1e-18);
        let spec = make_scenario(ScenarioId::S43, 0.25).unwrap();
        assert_eq!((spec.lattice_nx, spec.lattice_ny), (120, 60));
        assert!(make_scenario(ScenarioId::S41, 0.3).is_err());
        assert!("s45".parse::<ScenarioId>().is_err());
        assert_eq!("s44".parse::<ScenarioId>().unwrap(), ScenarioId::S44);
    }

    #[test]
    fn exact_spacing_arithmetic_is_exact() {
        for &(len, n) in &[(4.0, 480usize), (2.0, 240), (1.0 / 12.0, 5), (0.25, 20)] {
            let s = exact_spacing(len, n);
            assert!((s - len / n as f64).abs() < 1e-12 * len);
            let half = 0.5 * s;
            // Half-odd multiples are exact: consecutive differences all equal
            // the spacing, bitwise.
            let offsets: Vec<f64> = (0..n).map(|k| (2 * k + 1) as f64 * half).collect();
            for w in offsets.windows(2) {
                assert_eq!(w[1] - w[0], s);
            }
            // The wrap image of the first point sits exactly one spacing
            // beyond the last.
            let extent = n as f64 * s;
            assert_eq!((offsets[0] + extent) - offsets[n - 1], s);
        }
    }

    #[test]
    fn lattice_initial_velocity_and_radii() {
        let spec = make_scenario(ScenarioId::S42, 0.25).unwrap();
        let cell = build_full_dem(&spec).unwrap();
        assert_eq!(cell.floes.len(), 120 * 60);
        for f in cell.floes.iter().step_by(997) {
            let u = spec.ocean.velocity(cell.origin.x + f.x, cell.origin.y + f.y);
            assert_eq!(f.vx, u.x);
            assert_eq!(f.vy, u.y);
            assert_eq!(f.omega, 0.0);
            assert!((f.r - spec.radius_at(cell.origin.x + f.x)).abs() < 1e-18);
        }
    }

    #[test]
    fn conc_field_binning_examples() {
        let grid = CoarseGrid::new(0.0, 4.0, 0.0, 2.0, 48, 24).unwrap();
        // 100 floes of radius 1/240 all centred in one (1/12)^2 cell:
        // conc = 100 * pi / 240^2 * 144 = pi / 4.
        let floes: Vec<Floe> = (0..100)
            .map(|k| Floe {
                r: 1.0 / 240.0,
                x: 0.04 + 1e-5 * k as f64,
                y: 0.04,
                theta: 0.0,
                vx: 0.0,
                vy: 0.0,
                omega: 0.0,
            })
            .collect();
        let field = concentration_field(&floes, &grid).unwrap();
        assert!((field.values[0] - PI / 4.0).abs() < 1e-13);
        // Every other cell is empty.
        assert_eq!(field.values.iter().filter(|&&v| v != 0.0).count(), 1);
        // Binning conserves the total floe area exactly.
        let total: f64 = floes.iter().map(|f| PI * f.r * f.r).sum();
        assert!((field.total_area() - total).abs() < 1e-15);
    }

    #[test]
    fn clipped_areas_match_monte_carlo() {
        // Segment and corner areas against a sampling oracle.
        let mut rng_state = 0xDEADBEEFu64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 200_000;
        for case in 0..12 {
            let r = 0.5 + 0.1 * case as f64;
            let a = (next() - 0.2) * r; // mostly inside, sometimes beyond
            let b = (next() - 0.2) * r;
            let mut seg_hits = 0u32;
            let mut corner_hits = 0u32;
            for _ in 0..n {
                let x = (2.0 * next() - 1.0) * r;
                let y = (2.0 * next() - 1.0) * r;
                if x * x + y * y <= r * r {
                    if x >= a {
                        seg_hits += 1;
                    }
                    if x >= a && y >= b {
                        corner_hits += 1;
                    }
                }
            }
            let square = 4.0 * r * r;
            let mc_seg = seg_hits as f64 / n as f64 * square;
            let mc_corner = corner_hits as f64 / n as f64 * square;
            let tol = 3.0 * square / (n as f64).sqrt();
            assert!(
                (segment_area(r, a.max(0.0)) - mc_seg).abs() < tol || a < 0.0,
                "segment r={r} a={a}"
            );
            if a >= 0.0 && b >= 0.0 {
                assert!(
                    (corner_area(r, a, b) - mc_corner).abs() < tol,
                    "corner r={r} a={a} b={b}: {} vs {}",
                    corner_area(r, a, b),
                    mc_corner
                );
            }
        }
    }

    #[test]
    fn deposits_conserve_area_for_edge_straddling_floes() {
        let grid = CoarseGrid::new(0.0, 4.0, 0.0, 2.0, 16, 8).unwrap();
        let mut rng_state = 0xC0FFEEu64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for bc in [CoarseBc::Periodic, CoarseBc::WallX] {
            let mut values = vec![0.0; grid.n_cells()];
            let mut total = 0.0;
            for _ in 0..500 {
                // Scatter floes deliberately near cell corners and edges.
                let i = (next() * 16.0) as usize % 16;
                let j = (next() * 8.0) as usize % 8;
                let (ox, oy) = grid.cell_origin(i, j);
                let f = Floe {
                    r: 0.02 + 0.08 * next(),
                    x: ox + next() * grid.hx(),
                    y: oy + next() * grid.hy(),
                    theta: 0.0,
                    vx: 0.0,
                    vy: 0.0,
                    omega: 0.0,
                };
                total += PI * f.r * f.r;
                deposit_floe(&grid, bc, &f, &mut values).unwrap();
            }
            let deposited: f64 = values.iter().sum();
            assert!(
                ((deposited - total) / total).abs() < 1e-12,
                "{bc:?}: deposited {deposited} vs {total}"
            );
            for &v in &values {
                assert!(v >= -1e-15);
            }
        }
    }

    #[test]
    fn conc_field_translation_by_one_cell_permutes_values() {
        let spec = make_scenario(ScenarioId::S41, 0.25).unwrap();
        let grid = CoarseGrid::new(0.0, 4.0, 0.0, 2.0, 24, 12).unwrap();
        let cell = build_full_dem(&spec).unwrap();
        let base = concentration_field(&cell.floes, &grid).unwrap();

        let shifted: Vec<Floe> = cell
            .floes
            .iter()
            .map(|f| {
                let mut g = *f;
                g.x = (f.x + grid.hx()).rem_euclid(4.0);
                g
            })
            .collect();
        let moved = concentration_field(&shifted, &grid).unwrap();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let from = base.values[grid.idx(i, j)];
                let to = moved.values[grid.idx((i + 1) % grid.nx, j)];
                assert!((from - to).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn initial_concentration_matches_closed_form() {
        // Sum pi r(x)^2 per cell straight from the lattice definition.
        let spec = make_scenario(ScenarioId::S41, 0.5).unwrap();
        let grid = CoarseGrid::new(0.0, 4.0, 0.0, 2.0, 48, 24).unwrap();
        let cell = build_full_dem(&spec).unwrap();
        let field = concentration_field(&cell.floes, &grid).unwrap();

        let sx = exact_spacing(4.0, 240);
        let sy = exact_spacing(2.0, 120);
        let mut expect = vec![0.0; grid.n_cells()];
        for ky in 0..120 {
            let y = (2 * ky + 1) as f64 * (0.5 * sy);
            for kx in 0..240 {
                let x = (2 * kx + 1) as f64 * (0.5 * sx);
                let r = spec.radius_at(x);
                let (i, j) = grid.cell_of_point(x, y).unwrap();
                expect[grid.idx(i, j)] += PI * r * r / grid.cell_area();
            }
        }
        for k in 0..grid.n_cells() {
            assert!((field.values[k] - expect[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn l2_error_examples() {
        let grid = CoarseGrid::new(0.0, 4.0, 0.0, 2.0, 8, 4).unwrap();
        let a = ConcField {
            grid,
            values: vec![0.25; 32],
        };
        assert_eq!(l2_error(&a, &a).unwrap(), 0.0);

        // Constant offset delta integrates to delta * sqrt(8).
        let b = ConcField {
            grid,
            values: vec![0.45; 32],
        };
        assert!((l2_error(&a, &b).unwrap() - 0.2 * 8f64.sqrt()).abs() < 1e-14);

        // A checkerboard of +-delta has the same norm.
        let mut vals = vec![0.25; 32];
        for j in 0..4 {
            for i in 0..8 {
                let s = if (i + j) % 2 == 0 { 0.2 } else { -0.2 };
                vals[grid.idx(i, j)] += s;
            }
        }
        let c = ConcField { grid, values: vals };
        assert!((l2_error(&a, &c).unwrap() - 0.2 * 8f64.sqrt()).abs() < 1e-14);

        let other = ConcField {
            grid: CoarseGrid::new(0.0, 4.0, 0.0, 2.0, 4, 2).unwrap(),
            values: vec![0.0; 8],
        };
        assert!(l2_error(&a, &other).is_err());
    }

    #[test]
    fn convergence_rate_examples() {
        let first = convergence_rate(&[(0.1, 0.1), (0.05, 0.05)]).unwrap();
        assert!((first - 1.0).abs() < 1e-12);
        let second = convergence_rate(&[(0.1, 0.01), (0.05, 0.0025)]).unwrap();
        assert!((second - 2.0).abs() < 1e-12);
        assert!(convergence_rate(&[(0.1, 0.1)]).is_err());
        assert!(convergence_rate(&[(0.1, 0.0), (0.05, 0.0)]).is_err());
    }

    #[test]
    fn s41_truth_is_rigid_translation() {
        let spec = make_scenario(ScenarioId::S41, 0.25).unwrap();
        let params = PhysParams::default();
        let t_end = 0.2;
        let truth = run_full_dem(&spec, &params, 1e-4, t_end, &[t_end]).unwrap();
        let final_floes = truth.floes_at(t_end).unwrap();

        let start = build_full_dem(&spec).unwrap();
        let width = start.width;
        for (f, f0) in final_floes.iter().zip(&start.floes) {
            let expect = (f0.x + 0.3 * t_end).rem_euclid(width);
            let mut diff = (f.x - expect).abs();
            diff = diff.min((diff - width).abs());
            assert!(diff <= 1e-8, "floe drifted: {diff}");
            assert_eq!(f.y, f0.y);
            assert_eq!(f.vx, 0.3);
            assert_eq!(f.omega, 0.0);
        }
        assert_eq!(truth.max_abs_omega, 0.0);

        // No contacts ever arise in this scenario.
        let mut cell = build_full_dem(&spec).unwrap();
        assert!(cell.neighbor_pairs().unwrap().is_empty());
    }

    #[test]
    fn s44_truth_accumulates_at_the_wall() {
        let spec = make_scenario(ScenarioId::S44, 0.25).unwrap();
        let params = PhysParams::default();
        let truth = run_full_dem(&spec, &params, 1e-4, 0.5, &[0.5]).unwrap();
        let floes = truth.floes_at(0.5).unwrap();
        for f in floes {
            assert!(f.x + f.r <= 4.0 + 1e-12);
        }
        // The rightmost floes have been stopped by the wall.
        let near_wall: Vec<&Floe> = floes.iter().filter(|f| f.x + f.r > 3.999).collect();
        assert!(!near_wall.is_empty());
        for f in &near_wall {
            assert!(f.vx <= 1e-12);
        }
    }

    #[test]
    fn msdem_world_shapes_and_division_check() {
        let spec = make_scenario(ScenarioId::S41, 0.5).unwrap();
        let grid = CoarseGrid::new(0.0, 4.0, 0.0, 2.0, 48, 24).unwrap();
        let world = build_msdem_world(
            &spec,
            grid,
            CouplingSchedule::default(),
            PhysParams::default(),
            0.91,
            1e-6,
        )
        .unwrap();
        assert_eq!(world.cells.len(), 48 * 24);
        assert_eq!(world.cells[0].dem.n_floes(), 25);
        let total: usize = world.cells.iter().map(|c| c.dem.n_floes()).sum();
        assert_eq!(total, 240 * 120);

        let bad_grid = CoarseGrid::new(0.0, 4.0, 0.0, 2.0, 7, 3).unwrap();
        assert!(build_msdem_world(
            &spec,
            bad_grid,
            CouplingSchedule::default(),
            PhysParams::default(),
            0.91,
            1e-6,
        )
        .is_err());
    }
}
