//! Two-way coupling of the local DEM tiles with the coarse-scale solver.
//!
//! Each coarse cell owns an independent doubly-periodic DEM. Over one coarse
//! step the tiles run `n0` fine steps while their velocity and drag
//! statistics accumulate; at the coarse boundary the continuum solver
//! advances one step with those statistics frozen, and over the following
//! window every tile is nudged onto the continuum solution by gradual
//! updates of radii, velocities and angular velocities, applied every
//! `n_t`-th fine step.
//!
//! Nothing crosses a cell boundary except these per-cell statistics and
//! targets, so all tiles step in parallel between barriers and the result is
//! bit-identical for any worker count.

use crate::continuum::{CoarseBc, ContinuumState};
use crate::dem::DemCell;
use crate::error::SimError;
use crate::grid::CoarseGrid;
use crate::ocean::OceanField;
use crate::types::{PhysParams, Vec2};
use rayon::prelude::*;
use std::time::Instant;

/// Time-marching parameters tying the two scales together.
#[derive(Clone, Copy, Debug)]
pub struct CouplingSchedule {
    /// Fine (DEM) step.
    pub dt: f64,
    /// Fine steps per coarse step; the coarse step is `n0 * dt`.
    pub n0: usize,
    /// Gradual updates are applied every `n_t` fine steps.
    pub n_t: usize,
    /// Continuum substeps per coarse step.
    pub n1: usize,
}

impl Default for CouplingSchedule {
    fn default() -> Self {
        // dt = 1e-4, dT = 0.01, ten gradual updates per coarse step.
        CouplingSchedule {
            dt: 1e-4,
            n0: 100,
            n_t: 10,
            n1: 1,
        }
    }
}

impl CouplingSchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n0 == 0 || self.n_t == 0 || self.n1 == 0 {
            return Err(SimError::Config(
                "n0, n_t and n1 must all be at least 1".into(),
            ));
        }
        if self.n0 % self.n_t != 0 {
            return Err(SimError::Config(format!(
                "n_t = {} must divide n0 = {}",
                self.n_t, self.n0
            )));
        }
        Ok(())
    }

    /// Coarse step length `n0 * dt`.
    pub fn dt_coarse(&self) -> f64 {
        self.n0 as f64 * self.dt
    }

    /// Number of gradual updates per coarse window.
    pub fn updates_per_window(&self) -> usize {
        self.n0 / self.n_t
    }

    /// Interpolation fraction of the j-th gradual update, `j * n_t / n0`.
    pub fn update_fraction(&self, j: usize) -> f64 {
        (j * self.n_t) as f64 / self.n0 as f64
    }
}

/// Window-averaged statistics of one cell: the continuum coefficients and
/// sources measured by its DEM.
#[derive(Clone, Copy, Debug, Default)]
pub struct CellStats {
    /// Time-and-floe mean velocity over the window.
    pub mean_v: Vec2,
    /// Time-and-floe mean angular velocity.
    pub mean_w: f64,
    /// Area fraction at the window end.
    pub conc: f64,
    /// Window-averaged total drag force per cell area.
    pub drag_src: Vec2,
    /// Window-averaged total drag torque per cell area.
    pub drag_src_w: f64,
}

/// Running sums feeding [`CellStats`].
#[derive(Clone, Copy, Debug, Default)]
pub struct StatsAccum {
    sum_v: Vec2,
    sum_w: f64,
    drag_force: Vec2,
    drag_torque: f64,
    samples: usize,
}

impl StatsAccum {
    pub fn reset(&mut self) {
        *self = StatsAccum::default();
    }

    /// Collapse the window sums into per-cell statistics.
    pub fn finish(&self, cell: &DemCell, cell_area: f64) -> CellStats {
        let n = cell.n_floes() as f64;
        let steps = self.samples.max(1) as f64;
        CellStats {
            mean_v: self.sum_v * (1.0 / (n * steps)),
            mean_w: self.sum_w / (n * steps),
            conc: cell.concentration(cell_area),
            drag_src: self.drag_force * (1.0 / (steps * cell_area)),
            drag_src_w: self.drag_torque / (steps * cell_area),
        }
    }
}

/// Per-cell state frozen at the start of a coarse window; the gradual
/// updates interpolate from here.
#[derive(Clone, Debug)]
pub struct WindowSnapshot {
    r0: Vec<f64>,
    sum_r0: f64,
    mean_r0: f64,
    mean_p0: Vec2,
    mean_pw0: f64,
}

impl WindowSnapshot {
    pub fn take(cell: &DemCell, params: &PhysParams) -> WindowSnapshot {
        let n = cell.n_floes() as f64;
        let r0: Vec<f64> = cell.floes.iter().map(|f| f.r).collect();
        let sum_r0: f64 = r0.iter().sum();
        let mut p = Vec2::ZERO;
        let mut pw = 0.0;
        for f in &cell.floes {
            p += f.vel() * f.mass(params);
            pw += f.inertia(params) * f.omega;
        }
        WindowSnapshot {
            r0,
            sum_r0,
            mean_r0: sum_r0 / n,
            mean_p0: p * (1.0 / n),
            mean_pw0: pw / n,
        }
    }
}

/// Continuum targets of one cell for the current coarse window.
#[derive(Clone, Copy, Debug)]
pub struct CellTargets {
    pub mean_r: f64,
    pub mean_p: Vec2,
    pub mean_pw: f64,
}

/// Mean radius the cell must reach so that its area fraction becomes
/// `conc_target`. Radii scale by `sqrt(conc_target / conc_now)`, which hits
/// the concentration exactly under the proportional gradual update.
pub fn target_mean_radius(
    cell: &DemCell,
    cell_area: f64,
    conc_target: f64,
) -> Result<f64, SimError> {
    let conc_now = cell.concentration(cell_area);
    if !(conc_now > 0.0) {
        return Err(SimError::DegenerateCell);
    }
    let mean_r = cell.floes.iter().map(|f| f.r).sum::<f64>() / cell.n_floes() as f64;
    Ok((conc_target.max(0.0) / conc_now).sqrt() * mean_r)
}

/// j-th gradual radius update: every floe moves from its window-start radius
/// towards its share of the target, proportionally to that radius.
///
/// Radii never evolve between updates, so setting them straight from the
/// snapshot both matches the interpolation formula and makes the final mean
/// exactly the target. Returns how many radii had to be clamped at `r_min`.
pub fn gradual_update_radii(
    cell: &mut DemCell,
    snap: &WindowSnapshot,
    r_target: f64,
    j: usize,
    schedule: &CouplingSchedule,
    r_min: f64,
) -> usize {
    let frac = schedule.update_fraction(j);
    let n = cell.n_floes() as f64;
    let gain = n * (r_target - snap.mean_r0) * frac / snap.sum_r0;
    let mut clamped = 0;
    for (f, &r0) in cell.floes.iter_mut().zip(&snap.r0) {
        let r = r0 + gain * r0;
        if r < r_min {
            f.r = r_min;
            clamped += 1;
        } else {
            f.r = r;
        }
    }
    clamped
}

/// j-th gradual momentum update: a velocity shift, identical for every floe,
/// that puts the cell's mean momentum exactly on the line from the
/// window-start mean to the target.
///
/// Re-anchoring on the current mean (rather than adding a precomputed
/// snapshot increment) keeps the final mean equal to the target even while
/// the DEM dynamics and the radius updates move masses underneath; on a
/// static cell the two forms coincide.
pub fn gradual_update_momentum(
    cell: &mut DemCell,
    snap: &WindowSnapshot,
    params: &PhysParams,
    p_target: Vec2,
    j: usize,
    schedule: &CouplingSchedule,
) {
    let frac = schedule.update_fraction(j);
    let p_interp = snap.mean_p0 + (p_target - snap.mean_p0) * frac;

    let n = cell.n_floes() as f64;
    let mut p_now = Vec2::ZERO;
    let mut sum_m = 0.0;
    for f in &cell.floes {
        let m = f.mass(params);
        p_now += f.vel() * m;
        sum_m += m;
    }
    p_now = p_now * (1.0 / n);

    let dv = (p_interp - p_now) * (n / sum_m);
    for f in &mut cell.floes {
        f.vx += dv.x;
        f.vy += dv.y;
    }
}

/// j-th gradual angular-momentum update, the spin analogue of
/// [`gradual_update_momentum`] with the moment of inertia in place of mass.
pub fn gradual_update_angular(
    cell: &mut DemCell,
    snap: &WindowSnapshot,
    params: &PhysParams,
    pw_target: f64,
    j: usize,
    schedule: &CouplingSchedule,
) {
    let frac = schedule.update_fraction(j);
    let pw_interp = snap.mean_pw0 + (pw_target - snap.mean_pw0) * frac;

    let n = cell.n_floes() as f64;
    let mut pw_now = 0.0;
    let mut sum_i = 0.0;
    for f in &cell.floes {
        let inertia = f.inertia(params);
        pw_now += inertia * f.omega;
        sum_i += inertia;
    }
    pw_now /= n;

    let dw = (pw_interp - pw_now) * n / sum_i;
    for f in &mut cell.floes {
        f.omega += dw;
    }
}

/// One coarse cell of the multiscale run: its DEM tile plus coupling state.
#[derive(Clone, Debug)]
pub struct CellSlot {
    pub dem: DemCell,
    pub accum: StatsAccum,
    snap: Option<WindowSnapshot>,
    targets: Option<CellTargets>,
    clamped_radii: usize,
}

impl CellSlot {
    pub fn new(dem: DemCell) -> CellSlot {
        CellSlot {
            dem,
            accum: StatsAccum::default(),
            snap: None,
            targets: None,
            clamped_radii: 0,
        }
    }

    fn begin_window(&mut self, targets: CellTargets, params: &PhysParams) {
        self.snap = Some(WindowSnapshot::take(&self.dem, params));
        self.targets = Some(targets);
        self.accum.reset();
    }

    /// One fine step plus, when due, the gradual updates, plus sampling.
    fn fine_step(
        &mut self,
        jj: usize,
        ocean: &OceanField,
        params: &PhysParams,
        schedule: &CouplingSchedule,
        r_min: f64,
    ) -> Result<(), SimError> {
        let drag = self.dem.step(ocean, params, schedule.dt)?;
        self.accum.drag_force += drag.force;
        self.accum.drag_torque += drag.torque;

        if let (Some(tg), Some(snap)) = (self.targets, self.snap.as_ref()) {
            if jj % schedule.n_t == 0 {
                let j = jj / schedule.n_t;
                self.clamped_radii +=
                    gradual_update_radii(&mut self.dem, snap, tg.mean_r, j, schedule, r_min);
                gradual_update_momentum(&mut self.dem, snap, params, tg.mean_p, j, schedule);
                gradual_update_angular(&mut self.dem, snap, params, tg.mean_pw, j, schedule);
            }
        }

        let mut sv = Vec2::ZERO;
        let mut sw = 0.0;
        for f in &self.dem.floes {
            sv += f.vel();
            sw += f.omega;
        }
        self.accum.sum_v += sv;
        self.accum.sum_w += sw;
        self.accum.samples += 1;
        Ok(())
    }

    fn mean_radius(&self) -> f64 {
        self.dem.floes.iter().map(|f| f.r).sum::<f64>() / self.dem.n_floes() as f64
    }

    fn mean_momentum(&self, params: &PhysParams) -> Vec2 {
        self.dem.momentum(params) * (1.0 / self.dem.n_floes() as f64)
    }

    fn mean_spin_momentum(&self, params: &PhysParams) -> f64 {
        self.dem
            .floes
            .iter()
            .map(|f| f.inertia(params) * f.omega)
            .sum::<f64>()
            / self.dem.n_floes() as f64
    }

    fn max_abs_omega(&self) -> f64 {
        self.dem
            .floes
            .iter()
            .fold(0.0_f64, |m, f| m.max(f.omega.abs()))
    }
}

/// The assembled multiscale problem.
pub struct MsdemWorld {
    pub grid: CoarseGrid,
    pub cells: Vec<CellSlot>,
    pub ocean: OceanField,
    pub params: PhysParams,
    pub schedule: CouplingSchedule,
    pub bc: CoarseBc,
    pub conc_max: f64,
    pub r_min: f64,
}

/// Per-coarse-step diagnostics of a multiscale run.
#[derive(Clone, Copy, Debug, Default)]
pub struct CoarseDiag {
    pub step: usize,
    pub t: f64,
    pub max_abs_omega: f64,
    /// Worst relative miss of the radius / momentum / spin targets across
    /// cells at the window end.
    pub attain_r: f64,
    pub attain_p: f64,
    pub attain_w: f64,
    pub conc_clamped: usize,
    pub radii_clamped: usize,
}

/// Output of a multiscale run.
#[derive(Clone, Debug, Default)]
pub struct RunResult {
    /// Snapshot times that were captured, ascending.
    pub snapshot_times: Vec<f64>,
    /// The model's concentration per grid cell (its cell-average state) at
    /// each snapshot time.
    pub conc_snapshots: Vec<Vec<f64>>,
    /// Cell-mean x-velocity at each snapshot time.
    pub vx_snapshots: Vec<Vec<f64>>,
    /// Every floe's state, in global coordinates, at each snapshot time.
    pub floe_snapshots: Vec<Vec<crate::types::Floe>>,
    pub diags: Vec<CoarseDiag>,
    pub max_abs_omega: f64,
    pub wall_seconds: f64,
}

impl RunResult {
    fn index_of(&self, t: f64) -> Option<usize> {
        self.snapshot_times.iter().position(|&s| (s - t).abs() < 1e-9)
    }

    pub fn floes_at(&self, t: f64) -> Option<&Vec<crate::types::Floe>> {
        self.index_of(t).map(|k| &self.floe_snapshots[k])
    }

    pub fn conc_at(&self, t: f64) -> Option<&Vec<f64>> {
        self.index_of(t).map(|k| &self.conc_snapshots[k])
    }

    pub fn vx_at(&self, t: f64) -> Option<&Vec<f64>> {
        self.index_of(t).map(|k| &self.vx_snapshots[k])
    }

    /// Worst target miss across the whole run.
    pub fn worst_attainment(&self) -> f64 {
        self.diags
            .iter()
            .fold(0.0_f64, |m, d| m.max(d.attain_r).max(d.attain_p).max(d.attain_w))
    }
}

/// Observer invoked at every coarse boundary with the freshly closed window.
pub type CoarseObserver<'a> =
    dyn FnMut(usize, f64, &ContinuumState, &[CellSlot]) -> Result<(), SimError> + 'a;

fn relative_miss(got: f64, want: f64) -> f64 {
    let denom = if want.abs() > 1e-9 { want.abs() } else { 1.0 };
    (got - want).abs() / denom
}

/// Execute the coupled run to `t_end`, capturing concentration snapshots at
/// the requested times (which must sit on coarse-step boundaries).
///
/// The fine-scale tiles are stepped on a worker pool of the given size; one
/// barrier per coarse step gathers statistics, advances the continuum and
/// scatters targets. Output is bit-identical for any `workers`.
pub fn run_msdem(
    world: &mut MsdemWorld,
    t_end: f64,
    snapshot_times: &[f64],
    workers: usize,
    mut observer: Option<&mut CoarseObserver<'_>>,
) -> Result<RunResult, SimError> {
    world.schedule.validate()?;
    world.params.validate()?;
    let schedule = world.schedule;
    let dtc = schedule.dt_coarse();

    let nt = (t_end / schedule.dt).round() as usize;
    if nt == 0 || ((nt as f64 * schedule.dt) - t_end).abs() > 1e-9 {
        return Err(SimError::Config(format!(
            "t_end = {t_end} is not a positive multiple of dt = {}",
            schedule.dt
        )));
    }
    if nt % schedule.n0 != 0 {
        return Err(SimError::Config(format!(
            "t_end = {t_end} must span whole coarse steps of {dtc}"
        )));
    }
    let windows = nt / schedule.n0;

    // Map snapshot times onto coarse boundaries.
    let mut want_at: Vec<Option<()>> = vec![None; windows + 1];
    for &t in snapshot_times {
        let k = (t / dtc).round() as usize;
        if k > windows || (k as f64 * dtc - t).abs() > schedule.dt * 0.5 {
            return Err(SimError::Config(format!(
                "snapshot time {t} does not sit on a coarse boundary within [0, {t_end}]"
            )));
        }
        want_at[k] = Some(());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::Config(format!("worker pool: {e}")))?;

    let started = Instant::now();
    let mut result = RunResult::default();
    let area = world.grid.cell_area();
    let capture = |result: &mut RunResult, cells: &[CellSlot], t: f64| {
        result.snapshot_times.push(t);
        result
            .conc_snapshots
            .push(cells.iter().map(|c| c.dem.concentration(area)).collect());
        result.vx_snapshots.push(
            cells
                .iter()
                .map(|c| c.dem.floes.iter().map(|f| f.vx).sum::<f64>() / c.dem.n_floes() as f64)
                .collect(),
        );
        let mut all = Vec::with_capacity(cells.iter().map(|c| c.dem.n_floes()).sum());
        for c in cells {
            for f in &c.dem.floes {
                let mut g = *f;
                g.x = c.dem.origin.x + f.x;
                g.y = c.dem.origin.y + f.y;
                all.push(g);
            }
        }
        result.floe_snapshots.push(all);
    };

    if want_at[0].is_some() {
        capture(&mut result, &world.cells, 0.0);
    }

    let ocean = world.ocean;
    let params = world.params;
    let r_min = world.r_min;
    // Cells exchange nothing within a window, so each one runs its whole
    // window of fine steps independently: one fork-join per coarse step.
    let run_window = |cells: &mut [CellSlot]| -> Result<(), SimError> {
        cells.par_iter_mut().try_for_each(|slot| {
            for jj in 1..=schedule.n0 {
                slot.fine_step(jj, &ocean, &params, &schedule, r_min)?;
            }
            Ok(())
        })
    };

    // Warm-up window: plain DEM, statistics only.
    for slot in &mut world.cells {
        slot.accum.reset();
        slot.targets = None;
        slot.snap = None;
    }
    pool.install(|| run_window(&mut world.cells))
        .map_err(|e| e.at_step(0))?;

    // Seed the continuum with the DEM state and the warm-up statistics.
    let mut cont = ContinuumState::zeros(world.grid);
    init_conserved_fields(&mut cont, &world.cells, &params);
    freeze_coefficients(&mut cont, &world.cells, world.bc);

    let mut max_omega = world
        .cells
        .iter()
        .fold(0.0_f64, |m, c| m.max(c.max_abs_omega()));
    result.diags.push(CoarseDiag {
        step: 0,
        t: dtc,
        max_abs_omega: max_omega,
        ..CoarseDiag::default()
    });
    if want_at[1].is_some() {
        capture(&mut result, &world.cells, dtc);
    }
    if let Some(obs) = observer.as_deref_mut() {
        obs(0, dtc, &cont, &world.cells)?;
    }

    for k in 1..windows {
        // Continuum leads the DEM by one coarse step. The seeding data
        // described the cells one window ago, so the first solve covers two
        // coarse steps to catch the continuum up with real time.
        let solves = if k == 1 { 2 } else { 1 };
        let mut conc_clamped = 0;
        for _ in 0..solves {
            let (next, clamped) = cont
                .solve_coarse_step(world.bc, dtc, schedule.n1, world.conc_max)
                .map_err(|e| e.at_step(k))?;
            cont = next;
            conc_clamped += clamped;
        }

        // Scatter targets and open the window.
        for j in 0..world.grid.ny {
            for i in 0..world.grid.nx {
                let idx = world.grid.idx(i, j);
                let slot = &mut world.cells[idx];
                let n = slot.dem.n_floes();
                let mean_r = target_mean_radius(&slot.dem, area, cont.conc[idx])
                    .map_err(|e| e.at_cell(k, i, j))?;
                let targets = CellTargets {
                    mean_r,
                    mean_p: cont.momentum_target(i, j, n),
                    mean_pw: cont.spin_target(i, j, n),
                };
                slot.begin_window(targets, &params);
            }
        }

        pool.install(|| run_window(&mut world.cells))
            .map_err(|e| e.at_step(k))?;

        // Window closed: diagnostics, fresh coefficients, snapshots.
        let mut diag = CoarseDiag {
            step: k,
            t: (k + 1) as f64 * dtc,
            conc_clamped,
            ..CoarseDiag::default()
        };
        for slot in &mut world.cells {
            let tg = slot.targets.expect("window targets set above");
            diag.attain_r = diag
                .attain_r
                .max(relative_miss(slot.mean_radius(), tg.mean_r));
            let p = slot.mean_momentum(&params);
            let denom = if tg.mean_p.norm() > 1e-9 {
                tg.mean_p.norm()
            } else {
                1.0
            };
            diag.attain_p = diag.attain_p.max((p - tg.mean_p).norm() / denom);
            diag.attain_w = diag
                .attain_w
                .max(relative_miss(slot.mean_spin_momentum(&params), tg.mean_pw));
            diag.max_abs_omega = diag.max_abs_omega.max(slot.max_abs_omega());
            diag.radii_clamped += slot.clamped_radii;
            slot.clamped_radii = 0;
        }
        max_omega = max_omega.max(diag.max_abs_omega);
        result.diags.push(diag);

        freeze_coefficients(&mut cont, &world.cells, world.bc);
        if want_at[k + 1].is_some() {
            capture(&mut result, &world.cells, (k + 1) as f64 * dtc);
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(k, (k + 1) as f64 * dtc, &cont, &world.cells)?;
        }
    }

    result.max_abs_omega = max_omega;
    result.wall_seconds = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Instantaneous conserved fields measured from the DEM cells.
fn init_conserved_fields(cont: &mut ContinuumState, cells: &[CellSlot], params: &PhysParams) {
    let area = cont.grid.cell_area();
    for (idx, slot) in cells.iter().enumerate() {
        cont.conc[idx] = slot.dem.concentration(area);
        let mut p = Vec2::ZERO;
        let mut pw = 0.0;
        for f in &slot.dem.floes {
            p += f.vel() * f.mass(params);
            pw += f.inertia(params) * f.omega;
        }
        cont.px[idx] = p.x / area;
        cont.py[idx] = p.y / area;
        cont.pw[idx] = pw / area;
    }
}

/// Freeze the advection velocities and drag sources for the next coarse
/// solve from the cells' window statistics. Under the wall boundary the
/// rightmost column's velocity is pinned to zero, which is what piles the
/// incoming ice up against the wall.
fn freeze_coefficients(cont: &mut ContinuumState, cells: &[CellSlot], bc: CoarseBc) {
    let grid = cont.grid;
    let area = grid.cell_area();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            let stats = cells[idx].accum.finish(&cells[idx].dem, area);
            let wall = bc == CoarseBc::WallX && i == grid.nx - 1;
            cont.vbar_x[idx] = if wall { 0.0 } else { stats.mean_v.x };
            cont.vbar_y[idx] = if wall { 0.0 } else { stats.mean_v.y };
            cont.src_x[idx] = stats.drag_src.x;
            cont.src_y[idx] = stats.drag_src.y;
            cont.src_w[idx] = stats.drag_src_w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::Boundary;
    use crate::types::Floe;

    fn cell_with(radii_vel: &[(f64, f64, f64)]) -> DemCell {
        // Well-separated floes on a big tile, no contacts.
        let floes: Vec<Floe> = radii_vel
            .iter()
            .enumerate()
            .map(|(i, &(r, vx, omega))| Floe {
                r,
                x: 10.0 + 20.0 * (i % 4) as f64,
                y: 10.0 + 20.0 * (i / 4) as f64,
                theta: 0.0,
                vx,
                vy: 0.0,
                omega,
            })
            .collect();
        DemCell::new(Vec2::ZERO, 100.0, 100.0, Boundary::DoublyPeriodic, floes).unwrap()
    }

    #[test]
    fn schedule_validation_and_defaults() {
        let s = CouplingSchedule::default();
        assert!(s.validate().is_ok());
        assert_eq!(s.n0, 100);
        assert!((s.dt_coarse() - 0.01).abs() < 1e-15);
        assert_eq!(s.updates_per_window(), 10);
        assert_eq!(s.update_fraction(10), 1.0);

        let bad = CouplingSchedule {
            n_t: 7,
            ..CouplingSchedule::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stats_average_constant_velocities() {
        let ocean = OceanField::Uniform { ux: 0.0, uy: 0.0 };
        let mut params = PhysParams::default();
        params.drag_coeff = 1e-300; // effectively drag-free, still valid

        let mut slot =
            CellSlot::new(cell_with(&[(1.0, 1.0, 0.0), (1.0, 2.0, 0.0), (1.0, 3.0, 0.0)]));
        let schedule = CouplingSchedule {
            dt: 1e-4,
            n0: 20,
            n_t: 5,
            n1: 1,
        };
        for jj in 1..=schedule.n0 {
            slot.fine_step(jj, &ocean, &params, &schedule, 1e-6).unwrap();
        }
        let stats = slot.accum.finish(&slot.dem, 10000.0);
        assert!((stats.mean_v.x - 2.0).abs() < 1e-10);
        assert_eq!(stats.mean_v.y, 0.0);
        assert_eq!(stats.mean_w, 0.0);
    }

    #[test]
    fn stats_drag_vanishes_when_floes_ride_the_ocean() {
        let params = PhysParams::default();
        let ocean = OceanField::Uniform { ux: 0.3, uy: 0.0 };
        let mut slot = CellSlot::new(cell_with(&[(1.0, 0.3, 0.0), (2.0, 0.3, 0.0)]));
        let schedule = CouplingSchedule {
            dt: 1e-4,
            n0: 10,
            n_t: 5,
            n1: 1,
        };
        for jj in 1..=schedule.n0 {
            slot.fine_step(jj, &ocean, &params, &schedule, 1e-6).unwrap();
        }
        let stats = slot.accum.finish(&slot.dem, 10000.0);
        assert_eq!(stats.drag_src.x, 0.0);
        assert_eq!(stats.drag_src.y, 0.0);
        assert!((stats.mean_v.x - 0.3).abs() < 1e-15);
    }

    #[test]
    fn radius_target_examples() {
        let cell = cell_with(&[(1.0, 0.0, 0.0), (2.0, 0.0, 0.0)]);
        let area = 100.0 * 100.0;
        let conc_now = cell.concentration(area);

        // Fixed point.
        let r = target_mean_radius(&cell, area, conc_now).unwrap();
        assert!((r - 1.5).abs() < 1e-14);
        // Quadrupled concentration doubles the mean radius.
        let r = target_mean_radius(&cell, area, 4.0 * conc_now).unwrap();
        assert!((r - 3.0).abs() < 1e-13);
        // Doubled concentration: 1.5 * sqrt(2).
        let r = target_mean_radius(&cell, area, 2.0 * conc_now).unwrap();
        assert!((r - 1.5 * 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn radius_update_hand_example() {
        // n = 2, radii {1, 3}, target mean 2.4 (delta 0.4), N0 = 100,
        // n_t = 10, final update j = 10: radii {1.2, 3.6}.
        let schedule = CouplingSchedule::default();
        let mut cell = cell_with(&[(1.0, 0.0, 0.0), (3.0, 0.0, 0.0)]);
        let snap = WindowSnapshot::take(&cell, &PhysParams::default());

        let clamped = gradual_update_radii(&mut cell, &snap, 2.4, 10, &schedule, 1e-6);
        assert_eq!(clamped, 0);
        assert!((cell.floes[0].r - 1.2).abs() < 1e-14);
        assert!((cell.floes[1].r - 3.6).abs() < 1e-14);
        let mean = (cell.floes[0].r + cell.floes[1].r) / 2.0;
        assert!((mean - 2.4).abs() < 1e-14);

        // Halfway (j = 5) the shift is half as large.
        let mut cell = cell_with(&[(1.0, 0.0, 0.0), (3.0, 0.0, 0.0)]);
        gradual_update_radii(&mut cell, &snap, 2.4, 5, &schedule, 1e-6);
        assert!((cell.floes[0].r - 1.1).abs() < 1e-14);
        assert!((cell.floes[1].r - 3.3).abs() < 1e-14);
    }

    #[test]
    fn radius_update_is_identity_at_the_fixed_point() {
        let schedule = CouplingSchedule::default();
        let mut cell = cell_with(&[(0.7, 0.0, 0.0), (1.3, 0.0, 0.0)]);
        let snap = WindowSnapshot::take(&cell, &PhysParams::default());
        for j in 1..=schedule.updates_per_window() {
            gradual_update_radii(&mut cell, &snap, 1.0, j, &schedule, 1e-6);
            assert_eq!(cell.floes[0].r, 0.7);
            assert_eq!(cell.floes[1].r, 1.3);
        }
    }

    #[test]
    fn full_radius_update_reaches_requested_concentration_exactly() {
        let schedule = CouplingSchedule::default();
        let mut cell = cell_with(&[(1.0, 0.0, 0.0), (2.0, 0.0, 0.0)]);
        let area = 100.0 * 100.0;
        let conc_target = 2.0 * cell.concentration(area);
        let r_target = target_mean_radius(&cell, area, conc_target).unwrap();
        let snap = WindowSnapshot::take(&cell, &PhysParams::default());
        let mut prev_mean = snap.mean_r0;
        for j in 1..=schedule.updates_per_window() {
            gradual_update_radii(&mut cell, &snap, r_target, j, &schedule, 1e-6);
            let mean = cell.floes.iter().map(|f| f.r).sum::<f64>() / 2.0;
            assert!(mean >= prev_mean - 1e-15, "radius interpolation not monotone");
            prev_mean = mean;
        }
        let conc = cell.concentration(area);
        assert!(
            (conc - conc_target).abs() / conc_target <= 1e-12,
            "conc {conc} vs target {conc_target}"
        );
    }

    #[test]
    fn momentum_update_examples() {
        let params = PhysParams::default();
        let schedule = CouplingSchedule::default();

        // Equal masses, delta P = (0.2 m, 0): every vx gains 0.2.
        let mut cell = cell_with(&[(1.0, 0.1, 0.0), (1.0, 0.5, 0.0)]);
        let snap = WindowSnapshot::take(&cell, &params);
        let m = cell.floes[0].mass(&params);
        let p_target = Vec2::new(snap.mean_p0.x + 0.2 * m, 0.0);
        for j in 1..=schedule.updates_per_window() {
            gradual_update_momentum(&mut cell, &snap, &params, p_target, j, &schedule);
        }
        assert!((cell.floes[0].vx - 0.3).abs() < 1e-13);
        assert!((cell.floes[1].vx - 0.7).abs() < 1e-13);
        // Relative velocities are invariant under the uniform shift.
        assert!(((cell.floes[1].vx - cell.floes[0].vx) - 0.4).abs() < 1e-13);

        // Target equal to the snapshot: no change at any substep.
        let mut cell = cell_with(&[(1.0, 0.1, 0.0), (2.0, -0.2, 0.0)]);
        let snap = WindowSnapshot::take(&cell, &params);
        for j in 1..=schedule.updates_per_window() {
            gradual_update_momentum(&mut cell, &snap, &params, snap.mean_p0, j, &schedule);
        }
        assert_eq!(cell.floes[0].vx, 0.1);
        assert_eq!(cell.floes[1].vx, -0.2);
    }

    #[test]
    fn momentum_attainment_survives_interleaved_radius_updates() {
        // Radii grow during the same window, changing every mass; the final
        // cell-mean momentum must still equal the target exactly.
        let params = PhysParams::default();
        let schedule = CouplingSchedule::default();
        let mut cell = cell_with(&[(1.0, 0.4, 0.0), (2.0, -0.1, 0.0), (1.5, 0.2, 0.0)]);
        let area = 100.0 * 100.0;
        let snap = WindowSnapshot::take(&cell, &params);

        let r_target = target_mean_radius(&cell, area, 1.7 * cell.concentration(area)).unwrap();
        let p_target = Vec2::new(snap.mean_p0.x * 1.3 + 0.01, -0.02);
        for j in 1..=schedule.updates_per_window() {
            gradual_update_radii(&mut cell, &snap, r_target, j, &schedule, 1e-6);
            gradual_update_momentum(&mut cell, &snap, &params, p_target, j, &schedule);
        }
        let n = cell.n_floes() as f64;
        let p = cell.momentum(&params) * (1.0 / n);
        assert!(
            (p - p_target).norm() / p_target.norm() <= 1e-12,
            "mean momentum {p:?} vs target {p_target:?}"
        );
        let mean_r = cell.floes.iter().map(|f| f.r).sum::<f64>() / n;
        assert!((mean_r - r_target).abs() / r_target <= 1e-12);
    }

    #[test]
    fn angular_update_examples() {
        let params = PhysParams::default();
        let schedule = CouplingSchedule::default();

        // Single floe: omega lands exactly on target / I.
        let mut cell = cell_with(&[(1.3, 0.0, 0.4)]);
        let snap = WindowSnapshot::take(&cell, &params);
        let inertia = cell.floes[0].inertia(&params);
        let pw_target = 0.9 * inertia;
        for j in 1..=schedule.updates_per_window() {
            gradual_update_angular(&mut cell, &snap, &params, pw_target, j, &schedule);
        }
        assert!((cell.floes[0].omega - 0.9).abs() < 1e-13);

        // Mixed inertias receive the identical increment.
        let mut cell = cell_with(&[(1.0, 0.0, 0.2), (2.0, 0.0, -0.3)]);
        let snap = WindowSnapshot::take(&cell, &params);
        let before = (cell.floes[0].omega, cell.floes[1].omega);
        gradual_update_angular(&mut cell, &snap, &params, snap.mean_pw0 + 0.05, 4, &schedule);
        let d0 = cell.floes[0].omega - before.0;
        let d1 = cell.floes[1].omega - before.1;
        assert!((d0 - d1).abs() < 1e-15);
        assert!(d0 > 0.0);

        // Fixed point stays put.
        let mut cell = cell_with(&[(1.0, 0.0, 0.2), (2.0, 0.0, -0.3)]);
        let snap = WindowSnapshot::take(&cell, &params);
        for j in 1..=schedule.updates_per_window() {
            gradual_update_angular(&mut cell, &snap, &params, snap.mean_pw0, j, &schedule);
        }
        assert!((cell.floes[0].omega - 0.2).abs() < 1e-15);
        assert!((cell.floes[1].omega + 0.3).abs() < 1e-15);
    }

    #[test]
    fn radius_clamp_counts_and_floors() {
        let schedule = CouplingSchedule::default();
        let mut cell = cell_with(&[(1.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        let snap = WindowSnapshot::take(&cell, &PhysParams::default());
        // A zero target drives every radius onto the floor.
        let clamped = gradual_update_radii(&mut cell, &snap, 0.0, 10, &schedule, 1e-6);
        assert_eq!(clamped, 2);
        assert_eq!(cell.floes[0].r, 1e-6);
    }
}
