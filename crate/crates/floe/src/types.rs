//! Shared value types: physical parameters, 2-vectors and the floe state.

use crate::error::SimError;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Plain 2-vector over f64.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Vec2 {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// z-component of the cross product `self x o`.
    pub fn cross_z(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Rotation by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Global physical constants of the model, non-dimensional.
///
/// The defaults are the values used by the bundled scenarios; every run
/// records them in its manifest so experiments stay self-describing.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhysParams {
    /// Ice density per unit area (unit floe thickness).
    pub rho_ice: f64,
    /// Ocean drag coefficient d_o.
    pub drag_coeff: f64,
    /// Ocean density rho_o.
    pub rho_ocean: f64,
    /// Bulk modulus E of the normal contact force.
    pub bulk_modulus: f64,
    /// Shear modulus G of the tangential contact force.
    pub shear_modulus: f64,
    /// Coulomb friction coefficient mu, shared by all floe pairs.
    pub friction_mu: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            rho_ice: 1.0,
            drag_coeff: 1.0,
            rho_ocean: 1.0,
            bulk_modulus: 1000.0,
            shear_modulus: 1000.0,
            friction_mu: 0.5,
        }
    }
}

impl PhysParams {
    /// Check the positivity invariants (`mu` may be zero).
    pub fn validate(&self) -> Result<(), SimError> {
        let pos = [
            ("rho_ice", self.rho_ice),
            ("drag_coeff", self.drag_coeff),
            ("rho_ocean", self.rho_ocean),
            ("bulk_modulus", self.bulk_modulus),
            ("shear_modulus", self.shear_modulus),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.friction_mu >= 0.0) || !self.friction_mu.is_finite() {
            return Err(SimError::Config(format!(
                "friction_mu must be >= 0, got {}",
                self.friction_mu
            )));
        }
        Ok(())
    }
}

/// Lagrangian state of one cylindrical floe.
///
/// Positions are stored in the owning cell's local frame; mass and moment of
/// inertia are derived from the radius so they can never go stale when the
/// coupling rescales floes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Floe {
    pub r: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Floe {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn vel(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    /// Disc mass rho_ice * pi * r^2.
    pub fn mass(&self, params: &PhysParams) -> f64 {
        params.rho_ice * PI * self.r * self.r
    }

    /// Moment of inertia m * r^2.
    pub fn inertia(&self, params: &PhysParams) -> f64 {
        self.mass(params) * self.r * self.r
    }
}
