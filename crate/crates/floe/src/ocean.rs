//! Prescribed analytic ocean surface velocity fields.

use crate::types::Vec2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Ocean surface velocity, evaluable anywhere, together with its analytic
/// curl. Every variant keeps `curl_z` consistent with `velocity`; the unit
/// tests check this against central finite differences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OceanField {
    /// Constant current `(ux, uy)`.
    Uniform { ux: f64, uy: f64 },
    /// One-dimensional gather/scatter current `(mean - amp*cos(k*x), 0)`.
    CosineX { mean: f64, amp: f64, k: f64 },
    /// Mildly compressible cellular current
    /// `(mean - ax*sin(kx*x)*cos(ky*y), ay*cos(kx*x)*sin(ky*y))`.
    Cellular {
        mean: f64,
        ax: f64,
        ay: f64,
        kx: f64,
        ky: f64,
    },
}

impl OceanField {
    pub fn velocity(&self, x: f64, y: f64) -> Vec2 {
        match *self {
            OceanField::Uniform { ux, uy } => Vec2::new(ux, uy),
            OceanField::CosineX { mean, amp, k } => Vec2::new(mean - amp * (k * x).cos(), 0.0),
            OceanField::Cellular {
                mean,
                ax,
                ay,
                kx,
                ky,
            } => Vec2::new(
                mean - ax * (kx * x).sin() * (ky * y).cos(),
                ay * (kx * x).cos() * (ky * y).sin(),
            ),
        }
    }

    /// z-component of the curl of the velocity field.
    pub fn curl_z(&self, x: f64, y: f64) -> f64 {
        match *self {
            OceanField::Uniform { .. } => 0.0,
            OceanField::CosineX { .. } => 0.0,
            OceanField::Cellular {
                ax,
                ay,
                kx,
                ky,
                ..
            } => {
                // d(uy)/dx - d(ux)/dy
                -ay * kx * (kx * x).sin() * (ky * y).sin()
                    - ax * ky * (kx * x).sin() * (ky * y).sin()
            }
        }
    }

    /// Divergence of the velocity field.
    pub fn div(&self, x: f64, y: f64) -> f64 {
        match *self {
            OceanField::Uniform { .. } => 0.0,
            OceanField::CosineX { amp, k, .. } => amp * k * (k * x).sin(),
            OceanField::Cellular {
                ax,
                ay,
                kx,
                ky,
                ..
            } => {
                -ax * kx * (kx * x).cos() * (ky * y).cos()
                    + ay * ky * (kx * x).cos() * (ky * y).cos()
            }
        }
    }

    /// Curl by central finite differences, for consistency checks.
    pub fn curl_z_fd(&self, x: f64, y: f64, h: f64) -> f64 {
        let duy_dx = (self.velocity(x + h, y).y - self.velocity(x - h, y).y) / (2.0 * h);
        let dux_dy = (self.velocity(x, y + h).x - self.velocity(x, y - h).x) / (2.0 * h);
        duy_dx - dux_dy
    }
}

/// The gather/scatter current used by scenario s42.
pub fn gather_scatter() -> OceanField {
    OceanField::CosineX {
        mean: 0.3,
        amp: 0.1,
        k: PI,
    }
}

/// The mild compressible current used by scenario s43.
pub fn mild_compressible() -> OceanField {
    OceanField::Cellular {
        mean: 0.3,
        ax: 0.1,
        ay: 0.05,
        kx: 0.1 * PI,
        ky: PI,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields() -> Vec<OceanField> {
        vec![
            OceanField::Uniform { ux: 0.3, uy: 0.0 },
            gather_scatter(),
            mild_compressible(),
        ]
    }

    #[test]
    fn analytic_curl_matches_finite_differences() {
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for field in fields() {
            for _ in 0..100 {
                let x = 4.0 * next();
                let y = 2.0 * next();
                let err = (field.curl_z(x, y) - field.curl_z_fd(x, y, 1e-5)).abs();
                assert!(err <= 1e-6, "{field:?} at ({x}, {y}): |err| = {err}");
            }
        }
    }

    #[test]
    fn analytic_divergence_matches_finite_differences() {
        for field in fields() {
            for (x, y) in [(0.3, 0.4), (1.7, 1.2), (3.9, 0.1)] {
                let h = 1e-5;
                let fd = (field.velocity(x + h, y).x - field.velocity(x - h, y).x) / (2.0 * h)
                    + (field.velocity(x, y + h).y - field.velocity(x, y - h).y) / (2.0 * h);
                assert!((field.div(x, y) - fd).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gather_scatter_is_compressible_with_zero_curl() {
        let f = gather_scatter();
        // div u = 0.1*pi*sin(pi x)
        let x = 0.5;
        assert!((f.div(x, 0.0) - 0.1 * PI * (PI * x).sin()).abs() < 1e-15);
        assert!(f.div(x, 0.0) != 0.0);
        assert_eq!(f.curl_z(x, 1.3), 0.0);
    }

    #[test]
    fn cellular_curl_closed_form() {
        // curl_z = -(ay*kx + ax*ky) * sin(kx x) * sin(ky y)
        //        = -0.105 * pi * sin(0.1 pi x) * sin(pi y)
        let f = mild_compressible();
        for (x, y) in [(1.0, 0.5), (2.3, 1.7), (0.2, 0.9)] {
            let expect = -0.105 * PI * (0.1 * PI * x).sin() * (PI * y).sin();
            assert!((f.curl_z(x, y) - expect).abs() < 1e-14);
            assert!((f.curl_z(x, y) - f.curl_z_fd(x, y, 1e-5)).abs() < 1e-6);
        }
    }
}
