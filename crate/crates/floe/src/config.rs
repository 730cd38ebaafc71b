//! Run configuration: JSON-loadable, flag-overridable, validated into the
//! typed pieces the engines consume.

use crate::coupling::CouplingSchedule;
use crate::error::SimError;
use crate::grid::CoarseGrid;
use crate::harness::{make_scenario, ScenarioSpec};
use crate::types::PhysParams;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Which engine a `run` invocation drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Full-domain reference DEM.
    Dem,
    /// Coupled multiscale model.
    Msdem,
}

impl std::str::FromStr for Model {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "dem" => Ok(Model::Dem),
            "msdem" => Ok(Model::Msdem),
            other => Err(SimError::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Flat run configuration; every field has a default and is echoed into the
/// run manifest so experiments are self-describing.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub scale: f64,
    pub model: Model,
    pub grid_nx: usize,
    pub grid_ny: usize,
    /// Fine (DEM) time step.
    pub dt: f64,
    /// Coarse (continuum) time step; must be an integer multiple of `dt`.
    #[serde(rename = "dT")]
    pub dt_coarse: f64,
    /// Gradual-update stride in fine steps.
    pub n_t: usize,
    /// Continuum substeps per coarse step.
    pub n1: usize,
    pub t_end: f64,
    /// Times at which concentration snapshots are captured; empty means
    /// `[t_end]`.
    pub snapshot_times: Vec<f64>,
    pub rho_ice: f64,
    pub drag_coeff: f64,
    pub rho_ocean: f64,
    pub bulk_modulus: f64,
    pub shear_modulus: f64,
    pub friction_mu: f64,
    /// Packing guard for the continuum concentration.
    pub conc_max: f64,
    /// Floor for gradually updated radii.
    pub r_min: f64,
    pub permissive_engulfment: bool,
    pub workers: usize,
    /// Reserved; the bundled scenarios are deterministic.
    pub seed: u64,
    pub out_dir: String,
    pub dump_fields: bool,
    pub dump_floes: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PhysParams::default();
        RunConfig {
            scenario: "s41".into(),
            scale: 0.5,
            model: Model::Msdem,
            grid_nx: 48,
            grid_ny: 24,
            dt: 1e-4,
            dt_coarse: 0.01,
            n_t: 10,
            n1: 1,
            t_end: 0.2,
            snapshot_times: Vec::new(),
            rho_ice: p.rho_ice,
            drag_coeff: p.drag_coeff,
            rho_ocean: p.rho_ocean,
            bulk_modulus: p.bulk_modulus,
            shear_modulus: p.shear_modulus,
            friction_mu: p.friction_mu,
            conc_max: 0.91,
            r_min: 1e-6,
            permissive_engulfment: false,
            // 0 means "unset": fall back to MSDEM_WORKERS, then 1.
            workers: 0,
            seed: 0,
            out_dir: "out".into(),
            dump_fields: false,
            dump_floes: false,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<RunConfig, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| SimError::Config(format!("parse {}: {e}", path.display())))
    }

    pub fn params(&self) -> PhysParams {
        PhysParams {
            rho_ice: self.rho_ice,
            drag_coeff: self.drag_coeff,
            rho_ocean: self.rho_ocean,
            bulk_modulus: self.bulk_modulus,
            shear_modulus: self.shear_modulus,
            friction_mu: self.friction_mu,
        }
    }

    pub fn schedule(&self) -> Result<CouplingSchedule, SimError> {
        if !(self.dt > 0.0) || !(self.dt_coarse > 0.0) {
            return Err(SimError::Config("dt and dT must be positive".into()));
        }
        let n0 = (self.dt_coarse / self.dt).round() as usize;
        if n0 == 0 || (n0 as f64 * self.dt - self.dt_coarse).abs() > 1e-9 * self.dt_coarse {
            return Err(SimError::Config(format!(
                "dT = {} is not an integer multiple of dt = {}",
                self.dt_coarse, self.dt
            )));
        }
        let schedule = CouplingSchedule {
            dt: self.dt,
            n0,
            n_t: self.n_t,
            n1: self.n1,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        if self.snapshot_times.is_empty() {
            vec![self.t_end]
        } else {
            self.snapshot_times.clone()
        }
    }

    /// Worker count, falling back to the `MSDEM_WORKERS` environment
    /// variable when the config leaves it at zero.
    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            return self.workers;
        }
        std::env::var("MSDEM_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(1)
    }

    /// Cross-validate and materialise the typed run pieces.
    pub fn resolve(&self) -> Result<(ScenarioSpec, CoarseGrid, CouplingSchedule, PhysParams), SimError> {
        let scenario: crate::harness::ScenarioId = self.scenario.parse()?;
        let spec = make_scenario(scenario, self.scale)?;
        let grid = CoarseGrid::new(spec.x0, spec.x1, spec.y0, spec.y1, self.grid_nx, self.grid_ny)?;
        if spec.lattice_nx % grid.nx != 0 || spec.lattice_ny % grid.ny != 0 {
            return Err(SimError::Config(format!(
                "grid {}x{} does not divide the {}x{} floe lattice",
                grid.nx, grid.ny, spec.lattice_nx, spec.lattice_ny
            )));
        }
        let schedule = self.schedule()?;
        let params = self.params();
        params.validate()?;
        if !(self.t_end > 0.0) {
            return Err(SimError::Config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if !(self.conc_max > 0.0) || !(self.r_min > 0.0) {
            return Err(SimError::Config(
                "conc_max and r_min must be positive".into(),
            ));
        }
        Ok((spec, grid, schedule, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::default();
        let (spec, grid, schedule, _) = cfg.resolve().unwrap();
        assert_eq!(spec.lattice_nx, 240);
        assert_eq!(grid.nx, 48);
        assert_eq!(schedule.n0, 100);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.scenario = "s99".into();
        assert!(cfg.resolve().is_err());

        let mut cfg = RunConfig::default();
        cfg.grid_nx = 7;
        assert!(cfg.resolve().is_err());

        let mut cfg = RunConfig::default();
        cfg.dt_coarse = 0.0103;
        assert!(cfg.resolve().is_err());

        let mut cfg = RunConfig::default();
        cfg.friction_mu = -1.0;
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.scenario, cfg.scenario);
        assert_eq!(back.dt_coarse, cfg.dt_coarse);
        assert!(text.contains("\"dT\""));

        let bad = r#"{"scnario": "s41"}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
    }

    #[test]
    fn snapshot_times_default_to_t_end() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.snapshot_times(), vec![0.2]);
    }
}
