//! Discrete element engine: contact detection, contact and drag forces, and
//! forward-Euler time stepping of the floe equations of motion.
//!
//! A [`DemCell`] owns a set of floes on a rectangular tile. Under
//! doubly-periodic boundaries the tile wraps in both axes (the local models of
//! the multiscale run); under [`Boundary::PeriodicY`] only y wraps and x is
//! open (the full-domain reference run of the wall scenario). Floe positions
//! are stored in tile-local coordinates; `origin` maps them back to the
//! global frame for ocean-field evaluation and output.

use crate::error::SimError;
use crate::ocean::OceanField;
use crate::types::{Floe, PhysParams, Vec2};
use std::f64::consts::PI;

/// Boundary treatment of a DEM tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Both axes wrap (minimum-image contacts across both seams).
    DoublyPeriodic,
    /// y wraps, x is open.
    PeriodicY,
}

/// What to do when one disc engulfs another (`d <= |r_l - r_j|`), a regime
/// the physical scenarios never reach.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngulfmentPolicy {
    /// Refuse to compute a contact force.
    Strict,
    /// Clamp the chord to its maximum `2*min(r_l, r_j)` and carry on.
    Clamp,
}

/// One detected contact, recorded with `l < j`.
#[derive(Clone, Copy, Debug)]
pub struct ContactPair {
    pub l: usize,
    pub j: usize,
    /// Centre distance under the tile's minimum-image metric.
    pub d: f64,
    /// Overlap indicator `d - (r_l + r_j)`; negative for every recorded pair.
    pub delta: f64,
    /// Unit normal pointing from floe j towards floe l.
    pub n_hat: Vec2,
    /// Unit tangent, `n_hat` rotated by +90 degrees.
    pub t_hat: Vec2,
}

/// Contact force on floe `l` (floe `j` receives the exact negation) plus the
/// spin torques on both floes.
#[derive(Clone, Copy, Debug)]
pub struct PairForce {
    pub normal: Vec2,
    pub tangential: Vec2,
    pub torque_l: f64,
    pub torque_j: f64,
}

/// Sum of the ocean drag applied to a cell during one step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepDrag {
    pub force: Vec2,
    pub torque: f64,
}

/// Chord length of the intersection of two overlapping circles.
///
/// Requires an actual overlap (`d < r_l + r_j`). Symmetric in the two radii.
pub fn chord_length(
    d: f64,
    r_l: f64,
    r_j: f64,
    policy: EngulfmentPolicy,
) -> Result<f64, SimError> {
    if d <= (r_l - r_j).abs() {
        return match policy {
            EngulfmentPolicy::Strict => Err(SimError::Engulfment { l: 0, j: 0, d }),
            EngulfmentPolicy::Clamp => Ok(2.0 * r_l.min(r_j)),
        };
    }
    let a = (d * d + r_l * r_l - r_j * r_j) / (2.0 * d);
    Ok(2.0 * (r_l * r_l - a * a).max(0.0).sqrt())
}

/// Hookean normal force, Coulomb-capped tangential force and spin torques for
/// one contact.
///
/// The tangential slip and both torque arms use the midpoint of the overlap
/// segment on the centre line as a common contact point, so the pair exerts
/// zero net torque about any fixed point and total angular momentum is exact
/// up to the integrator error.
pub fn contact_force(
    pair: &ContactPair,
    floe_l: &Floe,
    floe_j: &Floe,
    params: &PhysParams,
    policy: EngulfmentPolicy,
) -> Result<PairForce, SimError> {
    let c = chord_length(pair.d, floe_l.r, floe_j.r, policy).map_err(|e| match e {
        SimError::Engulfment { d, .. } => SimError::Engulfment {
            l: pair.l,
            j: pair.j,
            d,
        },
        other => other,
    })?;

    let fn_mag = c * params.bulk_modulus * (-pair.delta);
    let normal = pair.n_hat * fn_mag;

    // Contact point: midpoint of the overlap segment along the centre line.
    let arm_l = pair.n_hat * (0.5 * (floe_j.r - floe_l.r - pair.d));
    let arm_j = pair.n_hat * (0.5 * (floe_j.r + pair.d - floe_l.r));

    let u_l = floe_l.vel() + arm_l.perp() * floe_l.omega;
    let u_j = floe_j.vel() + arm_j.perp() * floe_j.omega;
    let v_t = (u_j - u_l).dot(pair.t_hat);

    let mut ft_mag = c * params.shear_modulus * v_t;
    let cap = params.friction_mu * fn_mag;
    if ft_mag.abs() > cap {
        ft_mag = cap.copysign(ft_mag);
    }
    let tangential = pair.t_hat * ft_mag;

    let torque_l = arm_l.cross_z(tangential);
    let torque_j = arm_j.cross_z(-tangential);

    Ok(PairForce {
        normal,
        tangential,
        torque_l,
        torque_j,
    })
}

/// Quadratic ocean drag on a floe, `alpha * (u_o - v) |u_o - v|` with
/// `alpha = d_o rho_o pi r^2`.
pub fn drag_force(floe: &Floe, u_ocean: Vec2, params: &PhysParams) -> Vec2 {
    let alpha = params.drag_coeff * params.rho_ocean * PI * floe.r * floe.r;
    let rel = u_ocean - floe.vel();
    rel * (alpha * rel.norm())
}

/// Quadratic spin drag, `beta * (curl/2 - omega) |curl/2 - omega|` with
/// `beta = d_o rho_o pi r^4`.
pub fn drag_torque(floe: &Floe, curl_z: f64, params: &PhysParams) -> f64 {
    let beta = params.drag_coeff * params.rho_ocean * PI * floe.r.powi(4);
    let rel = 0.5 * curl_z - floe.omega;
    beta * rel * rel.abs()
}

/// Uniform-bucket spatial hash, rebuilt every step, CSR layout.
#[derive(Clone, Debug, Default)]
struct SpatialHash {
    nbx: usize,
    nby: usize,
    bw: f64,
    bh: f64,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl SpatialHash {
    fn rebuild(&mut self, floes: &[Floe], width: f64, height: f64, r_max: f64) {
        let bucket = 2.0 * r_max;
        self.nbx = ((width / bucket).floor() as usize).max(1);
        self.nby = ((height / bucket).floor() as usize).max(1);
        self.bw = width / self.nbx as f64;
        self.bh = height / self.nby as f64;

        let n_buckets = self.nbx * self.nby;
        self.starts.clear();
        self.starts.resize(n_buckets + 1, 0);
        for f in floes {
            let b = self.bucket_of(f.x, f.y);
            self.starts[b + 1] += 1;
        }
        for b in 0..n_buckets {
            self.starts[b + 1] += self.starts[b];
        }
        self.items.clear();
        self.items.resize(floes.len(), 0);
        let mut cursor = self.starts.clone();
        for (idx, f) in floes.iter().enumerate() {
            let b = self.bucket_of(f.x, f.y);
            self.items[cursor[b] as usize] = idx as u32;
            cursor[b] += 1;
        }
    }

    fn bucket_of(&self, x: f64, y: f64) -> usize {
        let bx = ((x / self.bw) as usize).min(self.nbx - 1);
        let by = ((y / self.bh) as usize).min(self.nby - 1);
        by * self.nbx + bx
    }

    fn bucket_items(&self, bx: usize, by: usize) -> &[u32] {
        let b = by * self.nbx + bx;
        let lo = self.starts[b] as usize;
        let hi = self.starts[b + 1] as usize;
        &self.items[lo..hi]
    }
}

/// Neighbour bucket indices along one axis, deduplicated so a wrapped seam
/// never yields the same bucket twice.
fn axis_neighbors(b: usize, n: usize, periodic: bool, out: &mut [usize; 3]) -> usize {
    let mut len = 0;
    for off in -1i64..=1 {
        let raw = b as i64 + off;
        let idx = if periodic {
            raw.rem_euclid(n as i64) as usize
        } else if raw < 0 || raw >= n as i64 {
            continue;
        } else {
            raw as usize
        };
        if !out[..len].contains(&idx) {
            out[len] = idx;
            len += 1;
        }
    }
    len
}

/// Minimum-image reduction of a coordinate difference on a length-`len` torus.
#[inline]
fn wrap_delta(mut d: f64, len: f64) -> f64 {
    if d > 0.5 * len {
        d -= len;
    } else if d < -0.5 * len {
        d += len;
    }
    d
}

/// An independent local DEM on one rectangular tile.
#[derive(Clone, Debug)]
pub struct DemCell {
    /// Global coordinates of the tile's lower-left corner.
    pub origin: Vec2,
    /// Tile extents; wrap lengths along periodic axes.
    pub width: f64,
    pub height: f64,
    pub boundary: Boundary,
    pub engulfment: EngulfmentPolicy,
    pub floes: Vec<Floe>,
    hash: SpatialHash,
    pairs: Vec<ContactPair>,
    forces: Vec<(f64, f64, f64)>,
}

impl DemCell {
    pub fn new(
        origin: Vec2,
        width: f64,
        height: f64,
        boundary: Boundary,
        floes: Vec<Floe>,
    ) -> Result<Self, SimError> {
        if floes.is_empty() {
            return Err(SimError::Config("DEM cell initialised with no floes".into()));
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(SimError::Config(format!(
                "degenerate tile {width} x {height}"
            )));
        }
        for (i, f) in floes.iter().enumerate() {
            if !(f.r > 0.0) {
                return Err(SimError::Config(format!(
                    "floe {i} has non-positive radius {}",
                    f.r
                )));
            }
        }
        Ok(DemCell {
            origin,
            width,
            height,
            boundary,
            engulfment: EngulfmentPolicy::Strict,
            floes,
            hash: SpatialHash::default(),
            pairs: Vec::new(),
            forces: Vec::new(),
        })
    }

    pub fn n_floes(&self) -> usize {
        self.floes.len()
    }

    /// Global position of the i-th floe centre.
    pub fn global_pos(&self, i: usize) -> Vec2 {
        self.origin + self.floes[i].pos()
    }

    pub fn r_max(&self) -> f64 {
        self.floes.iter().fold(0.0_f64, |m, f| m.max(f.r))
    }

    /// Minimum-image displacement from floe j to floe l.
    pub fn displacement(&self, to_l: usize, from_j: usize) -> Vec2 {
        let raw = self.floes[to_l].pos() - self.floes[from_j].pos();
        self.wrap_vec(raw)
    }

    fn wrap_vec(&self, raw: Vec2) -> Vec2 {
        let dx = match self.boundary {
            Boundary::DoublyPeriodic => wrap_delta(raw.x, self.width),
            Boundary::PeriodicY => raw.x,
        };
        Vec2::new(dx, wrap_delta(raw.y, self.height))
    }

    /// All contacting pairs (`d < r_l + r_j`), each exactly once with
    /// canonical `l < j`, sorted.
    pub fn neighbor_pairs(&mut self) -> Result<Vec<ContactPair>, SimError> {
        self.detect_pairs()?;
        Ok(self.pairs.clone())
    }

    fn detect_pairs(&mut self) -> Result<(), SimError> {
        self.pairs.clear();
        if self.floes.len() < 2 {
            return Ok(());
        }
        let r_max = self.r_max();
        let limit = 4.0 * r_max;
        if self.boundary == Boundary::DoublyPeriodic && self.width < limit {
            return Err(SimError::SubdomainTooSmall {
                axis: 'x',
                extent: self.width,
                limit,
            });
        }
        if self.height < limit {
            return Err(SimError::SubdomainTooSmall {
                axis: 'y',
                extent: self.height,
                limit,
            });
        }

        self.hash.rebuild(&self.floes, self.width, self.height, r_max);
        let periodic_x = self.boundary == Boundary::DoublyPeriodic;

        let mut xs = [0usize; 3];
        let mut ys = [0usize; 3];
        for l in 0..self.floes.len() {
            let fl = self.floes[l];
            let bx = ((fl.x / self.hash.bw) as usize).min(self.hash.nbx - 1);
            let by = ((fl.y / self.hash.bh) as usize).min(self.hash.nby - 1);
            let nx = axis_neighbors(bx, self.hash.nbx, periodic_x, &mut xs);
            let ny = axis_neighbors(by, self.hash.nby, true, &mut ys);
            for yi in 0..ny {
                for xi in 0..nx {
                    for &cand in self.hash.bucket_items(xs[xi], ys[yi]) {
                        let j = cand as usize;
                        if j <= l {
                            continue;
                        }
                        let fj = self.floes[j];
                        let delta_vec = self.wrap_vec(fl.pos() - fj.pos());
                        let sum_r = fl.r + fj.r;
                        let d2 = delta_vec.dot(delta_vec);
                        if d2 < sum_r * sum_r {
                            let d = d2.sqrt();
                            let n_hat = if d > 0.0 {
                                delta_vec * (1.0 / d)
                            } else {
                                // Concentric discs: direction undefined, the
                                // force stage reports engulfment.
                                Vec2::new(1.0, 0.0)
                            };
                            self.pairs.push(ContactPair {
                                l,
                                j,
                                d,
                                delta: d - sum_r,
                                n_hat,
                                t_hat: n_hat.perp(),
                            });
                        }
                    }
                }
            }
        }
        self.pairs.sort_unstable_by_key(|p| (p.l, p.j));
        Ok(())
    }

    /// One forward-Euler step: contact + drag forces at the pre-step state,
    /// then position, angle, velocity and spin updates, then periodic wrap.
    ///
    /// Returns the summed drag applied to the cell, for the coupling
    /// statistics.
    pub fn step(
        &mut self,
        ocean: &OceanField,
        params: &PhysParams,
        dt: f64,
    ) -> Result<StepDrag, SimError> {
        self.detect_pairs()?;

        let n = self.floes.len();
        self.forces.clear();
        self.forces.resize(n, (0.0, 0.0, 0.0));

        {
            let floes = &self.floes;
            let forces = &mut self.forces;
            for pair in &self.pairs {
                let pf = contact_force(
                    pair,
                    &floes[pair.l],
                    &floes[pair.j],
                    params,
                    self.engulfment,
                )?;
                let f = pf.normal + pf.tangential;
                forces[pair.l].0 += f.x;
                forces[pair.l].1 += f.y;
                forces[pair.l].2 += pf.torque_l;
                forces[pair.j].0 -= f.x;
                forces[pair.j].1 -= f.y;
                forces[pair.j].2 += pf.torque_j;
            }
        }

        let mut drag_sum = StepDrag::default();
        for i in 0..n {
            let gp = self.origin + self.floes[i].pos();
            let u = ocean.velocity(gp.x, gp.y);
            let fd = drag_force(&self.floes[i], u, params);
            let td = drag_torque(&self.floes[i], ocean.curl_z(gp.x, gp.y), params);
            self.forces[i].0 += fd.x;
            self.forces[i].1 += fd.y;
            self.forces[i].2 += td;
            drag_sum.force += fd;
            drag_sum.torque += td;
        }

        let periodic_x = self.boundary == Boundary::DoublyPeriodic;
        for i in 0..n {
            let (fx, fy, tq) = self.forces[i];
            let f = &mut self.floes[i];
            let m = params.rho_ice * PI * f.r * f.r;
            let inertia = m * f.r * f.r;

            f.x += f.vx * dt;
            f.y += f.vy * dt;
            f.theta += f.omega * dt;
            f.vx += fx / m * dt;
            f.vy += fy / m * dt;
            f.omega += tq / inertia * dt;

            if periodic_x && (f.x < 0.0 || f.x >= self.width) {
                f.x = f.x.rem_euclid(self.width);
            }
            if f.y < 0.0 || f.y >= self.height {
                f.y = f.y.rem_euclid(self.height);
            }

            let finite = f.x.is_finite()
                && f.y.is_finite()
                && f.theta.is_finite()
                && f.vx.is_finite()
                && f.vy.is_finite()
                && f.omega.is_finite();
            if !finite {
                return Err(SimError::Divergence {
                    floe: i,
                    detail: format!("{f:?}"),
                });
            }
        }

        Ok(drag_sum)
    }

    /// Total linear momentum of the cell.
    pub fn momentum(&self, params: &PhysParams) -> Vec2 {
        self.floes
            .iter()
            .fold(Vec2::ZERO, |acc, f| acc + f.vel() * f.mass(params))
    }

    /// Area fraction covered by the floes, relative to the given cell area.
    pub fn concentration(&self, cell_area: f64) -> f64 {
        PI * self.floes.iter().map(|f| f.r * f.r).sum::<f64>() / cell_area
    }
}
