//! CSV and manifest output, plus the on-disk cache of reference runs.
//!
//! All CSVs carry a one-line header, '.' decimals and '\n' line endings so
//! golden-file comparisons are byte-exact.

use crate::config::RunConfig;
use crate::continuum::ContinuumState;
use crate::coupling::RunResult;
use crate::error::SimError;
use crate::grid::CoarseGrid;
use crate::harness::TruthRun;
use crate::types::{Floe, Vec2};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

fn io_err(path: &Path, e: std::io::Error) -> SimError {
    SimError::Config(format!("{}: {e}", path.display()))
}

/// Floe states, one row per floe, in global coordinates.
pub fn write_floes_csv(path: &Path, floes: &[Floe], origin: Vec2) -> Result<(), SimError> {
    let mut out = String::with_capacity(floes.len() * 64 + 64);
    out.push_str("id,r,x,y,theta,vx,vy,omega\n");
    for (id, f) in floes.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            id,
            f.r,
            origin.x + f.x,
            origin.y + f.y,
            f.theta,
            f.vx,
            f.vy,
            f.omega
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_floes_csv(path: &Path) -> Result<Vec<Floe>, SimError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut floes = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(SimError::Config(format!(
                "{}:{}: expected 8 columns",
                path.display(),
                ln + 1
            )));
        }
        let field = |k: usize| -> Result<f64, SimError> {
            cols[k]
                .parse()
                .map_err(|e| SimError::Config(format!("{}:{}: {e}", path.display(), ln + 1)))
        };
        floes.push(Floe {
            r: field(1)?,
            x: field(2)?,
            y: field(3)?,
            theta: field(4)?,
            vx: field(5)?,
            vy: field(6)?,
            omega: field(7)?,
        });
    }
    Ok(floes)
}

/// Per-cell conserved fields of the continuum state.
pub fn write_fields_csv(path: &Path, state: &ContinuumState) -> Result<(), SimError> {
    let g = state.grid;
    let mut out = String::with_capacity(g.n_cells() * 48 + 32);
    out.push_str("i,j,conc,px,py,pw\n");
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i, j, state.conc[k], state.px[k], state.py[k], state.pw[k]
            ));
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// A single per-cell scalar field.
pub fn write_cell_field_csv(
    path: &Path,
    grid: &CoarseGrid,
    name: &str,
    values: &[f64],
) -> Result<(), SimError> {
    let mut out = String::with_capacity(grid.n_cells() * 24 + 16);
    out.push_str(&format!("i,j,{name}\n"));
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            out.push_str(&format!("{},{},{}\n", i, j, values[grid.idx(i, j)]));
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// One convergence-study row per (scenario, time, grid).
pub fn write_convergence_csv(
    path: &Path,
    rows: &[(String, f64, f64, f64)],
) -> Result<(), SimError> {
    let mut out = String::new();
    out.push_str("scenario,T,dX,l2_error\n");
    for (scenario, t, dx, err) in rows {
        out.push_str(&format!("{scenario},{t},{dx},{err}\n"));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// One coarse step's global diagnostics, echoed into the manifest.
#[derive(Serialize)]
pub struct DiagRow {
    pub step: usize,
    pub t: f64,
    pub max_abs_omega: f64,
    pub attain_r: f64,
    pub attain_p: f64,
    pub attain_w: f64,
    pub conc_clamped: usize,
    pub radii_clamped: usize,
}

/// Everything a finished run reports besides its field files.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
    pub max_abs_omega: f64,
    pub worst_attainment: f64,
    pub conc_clamped: usize,
    pub radii_clamped: usize,
    pub wall_seconds: f64,
    pub coarse_steps: Vec<DiagRow>,
}

impl<'a> Manifest<'a> {
    pub fn for_run(config: &'a RunConfig, result: &RunResult, outputs: Vec<String>) -> Self {
        Manifest {
            config,
            outputs,
            max_abs_omega: result.max_abs_omega,
            worst_attainment: result.worst_attainment(),
            conc_clamped: result.diags.iter().map(|d| d.conc_clamped).sum(),
            radii_clamped: result.diags.iter().map(|d| d.radii_clamped).sum(),
            wall_seconds: result.wall_seconds,
            coarse_steps: result
                .diags
                .iter()
                .map(|d| DiagRow {
                    step: d.step,
                    t: d.t,
                    max_abs_omega: d.max_abs_omega,
                    attain_r: d.attain_r,
                    attain_p: d.attain_p,
                    attain_w: d.attain_w,
                    conc_clamped: d.conc_clamped,
                    radii_clamped: d.radii_clamped,
                })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| SimError::Config(format!("manifest: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| io_err(path, e))
    }
}

/// FNV-1a over a canonical string; keys the truth cache.
pub fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TruthMeta {
    scenario: String,
    scale: f64,
    dt: f64,
    t_end: f64,
    snapshot_times: Vec<f64>,
    params_json: String,
    max_abs_omega: f64,
}

/// Directory key of a cached reference run.
pub fn truth_cache_dir(
    out_dir: &Path,
    scenario: &str,
    scale: f64,
    dt: f64,
    t_end: f64,
    params_json: &str,
) -> PathBuf {
    let key = format!("{scenario}|{scale}|{dt}|{t_end}|{params_json}");
    out_dir
        .join("truth_cache")
        .join(format!("{scenario}_{:016x}", fnv1a(&key)))
}

/// Load a cached reference run if its metadata matches exactly.
pub fn load_truth(
    dir: &Path,
    scenario: &str,
    scale: f64,
    dt: f64,
    t_end: f64,
    snapshot_times: &[f64],
    params_json: &str,
) -> Option<TruthRun> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).ok()?;
    let meta: TruthMeta = serde_json::from_str(&text).ok()?;
    let want = TruthMeta {
        scenario: scenario.to_string(),
        scale,
        dt,
        t_end,
        snapshot_times: snapshot_times.to_vec(),
        params_json: params_json.to_string(),
        max_abs_omega: meta.max_abs_omega,
    };
    if meta != want {
        return None;
    }
    let mut run = TruthRun {
        snapshot_times: meta.snapshot_times.clone(),
        floe_snapshots: Vec::new(),
        max_abs_omega: meta.max_abs_omega,
    };
    for k in 0..meta.snapshot_times.len() {
        let floes = read_floes_csv(&dir.join(format!("t{k:04}.csv"))).ok()?;
        run.floe_snapshots.push(floes);
    }
    Some(run)
}

pub fn store_truth(
    dir: &Path,
    truth: &TruthRun,
    scenario: &str,
    scale: f64,
    dt: f64,
    t_end: f64,
    params_json: &str,
) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (k, floes) in truth.floe_snapshots.iter().enumerate() {
        write_floes_csv(&dir.join(format!("t{k:04}.csv")), floes, Vec2::ZERO)?;
    }
    let meta = TruthMeta {
        scenario: scenario.to_string(),
        scale,
        dt,
        t_end,
        snapshot_times: truth.snapshot_times.clone(),
        params_json: params_json.to_string(),
        max_abs_omega: truth.max_abs_omega,
    };
    let meta_path = dir.join("meta.json");
    let mut text = serde_json::to_string_pretty(&meta)
        .map_err(|e| SimError::Config(format!("truth meta: {e}")))?;
    text.push('\n');
    let mut file = fs::File::create(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| io_err(&meta_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floes_csv_round_trip() {
        let dir = std::env::temp_dir().join("floe_io_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("floes.csv");
        let floes = vec![
            Floe {
                r: 0.125,
                x: 1.0,
                y: 0.5,
                theta: 0.1,
                vx: 0.3,
                vy: -0.25,
                omega: 0.0,
            },
            Floe {
                r: 1.0 / 3.0,
                x: 2.2,
                y: 1.9,
                theta: -4.0,
                vx: 0.0,
                vy: 0.125,
                omega: 12.5,
            },
        ];
        write_floes_csv(&path, &floes, Vec2::ZERO).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,r,x,y,theta,vx,vy,omega\n"));
        assert!(!text.contains('\r'));

        let back = read_floes_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        // Shortest round-trip float formatting reproduces the bits.
        assert_eq!(back[1].r, floes[1].r);
        assert_eq!(back[0].vy, floes[0].vy);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a(""), 0xcbf29ce484222325);
        assert_ne!(fnv1a("s41|0.5"), fnv1a("s41|1"));
    }
}
