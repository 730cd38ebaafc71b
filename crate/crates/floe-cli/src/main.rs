//! Command-line entry points: single runs, convergence studies, config
//! validation and scenario inspection.
//!
//! Exit codes: 0 success, 2 configuration problems, 3 numerical failures.

use clap::{Args, Parser, Subcommand};
use floe::config::{Model, RunConfig};
use floe::coupling::{run_msdem, CellSlot, CoarseObserver};
use floe::error::SimError;
use floe::harness::{
    build_msdem_world, concentration_field_bc, convergence_study, make_scenario, velocity_field,
    ScenarioId, TruthRun,
};
use floe::io;
use floe::types::Vec2;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "floe", about = "Particle-continuum multiscale sea-ice floe simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation (full DEM or coupled msDEM) and write its fields.
    Run(RunArgs),
    /// Grid-refinement study: L2 errors against the full-DEM reference plus
    /// fitted convergence slopes.
    Convergence(ConvArgs),
    /// Parse and validate a config file, reporting problems.
    ValidateConfig {
        /// JSON config file.
        config: PathBuf,
    },
    /// Print the resolved parameters of a scenario as JSON.
    DumpScenario {
        /// Scenario id: s41, s42, s43 or s44.
        scenario: String,
        /// Lattice scale factor: 1, 0.5 or 0.25.
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario id: s41, s42, s43 or s44.
    #[arg(long)]
    scenario: Option<String>,
    /// Lattice scale factor: 1, 0.5 or 0.25.
    #[arg(long)]
    scale: Option<f64>,
    /// Fine time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Coarse time step (an integer multiple of dt).
    #[arg(long = "dT")]
    dt_coarse: Option<f64>,
    /// Gradual-update stride in fine steps.
    #[arg(long)]
    nt: Option<usize>,
    /// Continuum substeps per coarse step.
    #[arg(long)]
    n1: Option<usize>,
    /// Worker-pool size (falls back to MSDEM_WORKERS, then 1).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn merge_into(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.scenario {
            cfg.scenario = s.clone();
        }
        if let Some(v) = self.scale {
            cfg.scale = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.dt_coarse {
            cfg.dt_coarse = v;
        }
        if let Some(v) = self.nt {
            cfg.n_t = v;
        }
        if let Some(v) = self.n1 {
            cfg.n1 = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.display().to_string();
        }
    }

    fn load(&self) -> Result<RunConfig, SimError> {
        if self.config.is_none() && self.scenario.is_none() {
            return Err(SimError::Config(
                "a scenario is required: pass --scenario or --config".into(),
            ));
        }
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        self.merge_into(&mut cfg);
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Engine: dem (full-domain reference) or msdem (coupled multiscale).
    #[arg(long)]
    model: Option<String>,
    /// Coarse grid, e.g. 48x24.
    #[arg(long)]
    grid: Option<String>,
    /// End time.
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Comma-separated snapshot times (default: the end time).
    #[arg(long)]
    snapshots: Option<String>,
    /// Write continuum fields at every coarse step.
    #[arg(long)]
    dump_fields: bool,
    /// Write floe states at every coarse step.
    #[arg(long)]
    dump_floes: bool,
}

#[derive(Args)]
struct ConvArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated grid list, e.g. 12x6,24x12,48x24.
    #[arg(long, default_value = "12x6,24x12,48x24")]
    grids: String,
    /// Comma-separated evaluation times.
    #[arg(long, default_value = "0.2")]
    times: String,
}

fn parse_grid(text: &str) -> Result<(usize, usize), SimError> {
    let (a, b) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| SimError::Config(format!("grid '{text}' is not of the form 48x24")))?;
    let nx = a
        .parse()
        .map_err(|_| SimError::Config(format!("bad grid '{text}'")))?;
    let ny = b
        .parse()
        .map_err(|_| SimError::Config(format!("bad grid '{text}'")))?;
    Ok((nx, ny))
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>, SimError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| SimError::Config(format!("bad number '{s}'")))
        })
        .collect()
}

/// Reference run, reused from the on-disk cache when the configuration
/// matches.
fn cached_truth(cfg: &RunConfig, times: &[f64], t_max: f64) -> Result<TruthRun, SimError> {
    let scenario: ScenarioId = cfg.scenario.parse()?;
    let spec = make_scenario(scenario, cfg.scale)?;
    let params = cfg.params();
    let params_json = format!(
        "{}|permissive={}",
        serde_json::to_string(&params).map_err(|e| SimError::Config(e.to_string()))?,
        cfg.permissive_engulfment
    );
    let dir = io::truth_cache_dir(
        Path::new(&cfg.out_dir),
        &cfg.scenario,
        cfg.scale,
        cfg.dt,
        t_max,
        &params_json,
    );
    if let Some(truth) = io::load_truth(
        &dir,
        &cfg.scenario,
        cfg.scale,
        cfg.dt,
        t_max,
        times,
        &params_json,
    ) {
        eprintln!("truth: reusing cache {}", dir.display());
        return Ok(truth);
    }
    let policy = if cfg.permissive_engulfment {
        floe::dem::EngulfmentPolicy::Clamp
    } else {
        floe::dem::EngulfmentPolicy::Strict
    };
    let truth = floe::harness::run_full_dem_with(&spec, &params, cfg.dt, t_max, times, policy)?;
    io::store_truth(&dir, &truth, &cfg.scenario, cfg.scale, cfg.dt, t_max, &params_json)?;
    Ok(truth)
}

fn cmd_run(args: &RunArgs) -> Result<(), SimError> {
    let mut cfg = args.common.load()?;
    if let Some(m) = &args.model {
        cfg.model = m.parse()?;
    }
    if let Some(g) = &args.grid {
        let (nx, ny) = parse_grid(g)?;
        cfg.grid_nx = nx;
        cfg.grid_ny = ny;
    }
    if let Some(t) = args.t_end {
        cfg.t_end = t;
    }
    if let Some(s) = &args.snapshots {
        cfg.snapshot_times = parse_f64_list(s)?;
    }
    cfg.dump_fields |= args.dump_fields;
    cfg.dump_floes |= args.dump_floes;

    let (spec, grid, schedule, params) = cfg.resolve()?;
    let times = cfg.snapshot_times();
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| SimError::Config(format!("{}: {e}", out_dir.display())))?;

    let mut outputs = Vec::new();
    match cfg.model {
        Model::Dem => {
            let truth = cached_truth(&cfg, &times, cfg.t_end)?;
            for (k, &t) in truth.snapshot_times.iter().enumerate() {
                let floes = &truth.floe_snapshots[k];
                let conc = concentration_field_bc(floes, &grid, spec.coarse_bc)?;
                let name = format!("conc_dem_{}_t{:.4}.csv", cfg.scenario, t);
                io::write_cell_field_csv(&out_dir.join(&name), &grid, "conc", &conc.values)?;
                outputs.push(name);
                let vx = velocity_field(floes, &grid)?;
                let name = format!("vx_dem_{}_t{:.4}.csv", cfg.scenario, t);
                io::write_cell_field_csv(&out_dir.join(&name), &grid, "vx", &vx)?;
                outputs.push(name);
                if cfg.dump_floes {
                    let name = format!("floes_dem_{}_t{:.4}.csv", cfg.scenario, t);
                    io::write_floes_csv(&out_dir.join(&name), floes, Vec2::ZERO)?;
                    outputs.push(name);
                }
            }
            let manifest = io::Manifest {
                config: &cfg,
                outputs: outputs.clone(),
                max_abs_omega: truth.max_abs_omega,
                worst_attainment: 0.0,
                conc_clamped: 0,
                radii_clamped: 0,
                wall_seconds: 0.0,
                coarse_steps: Vec::new(),
            };
            manifest.write(&out_dir.join("manifest.json"))?;
            println!(
                "dem run complete: {} snapshots, max |omega| = {:.3e}",
                truth.snapshot_times.len(),
                truth.max_abs_omega
            );
        }
        Model::Msdem => {
            let mut world =
                build_msdem_world(&spec, grid, schedule, params, cfg.conc_max, cfg.r_min)?;
            if cfg.permissive_engulfment {
                for slot in &mut world.cells {
                    slot.dem.engulfment = floe::dem::EngulfmentPolicy::Clamp;
                }
            }

            let dump_fields = cfg.dump_fields;
            let dump_floes = cfg.dump_floes;
            let dump_dir = out_dir.clone();
            let mut dumped: Vec<String> = Vec::new();
            let mut observer = |step: usize,
                                _t: f64,
                                cont: &floe::continuum::ContinuumState,
                                cells: &[CellSlot]|
             -> Result<(), SimError> {
                if dump_fields {
                    let name = format!("fields_{step:04}.csv");
                    io::write_fields_csv(&dump_dir.join(&name), cont)?;
                    dumped.push(name);
                }
                if dump_floes {
                    let name = format!("floes_{step:04}.csv");
                    let mut all = Vec::new();
                    for c in cells {
                        for (i, f) in c.dem.floes.iter().enumerate() {
                            let mut g = *f;
                            g.x = c.dem.origin.x + f.x;
                            g.y = c.dem.origin.y + f.y;
                            let _ = i;
                            all.push(g);
                        }
                    }
                    io::write_floes_csv(&dump_dir.join(&name), &all, Vec2::ZERO)?;
                    dumped.push(name);
                }
                Ok(())
            };
            let obs: Option<&mut CoarseObserver<'_>> = if dump_fields || dump_floes {
                Some(&mut observer)
            } else {
                None
            };

            let result = run_msdem(&mut world, cfg.t_end, &times, cfg.effective_workers(), obs)?;

            for (k, &t) in result.snapshot_times.iter().enumerate() {
                let name = format!("conc_msdem_{}_t{:.4}.csv", cfg.scenario, t);
                io::write_cell_field_csv(
                    &out_dir.join(&name),
                    &grid,
                    "conc",
                    &result.conc_snapshots[k],
                )?;
                outputs.push(name);
                let name = format!("vx_msdem_{}_t{:.4}.csv", cfg.scenario, t);
                io::write_cell_field_csv(
                    &out_dir.join(&name),
                    &grid,
                    "vx",
                    &result.vx_snapshots[k],
                )?;
                outputs.push(name);
                if cfg.dump_floes {
                    let name = format!("floes_msdem_{}_t{:.4}.csv", cfg.scenario, t);
                    io::write_floes_csv(&out_dir.join(&name), &result.floe_snapshots[k], Vec2::ZERO)?;
                    outputs.push(name);
                }
            }
            outputs.extend(dumped);

            io::Manifest::for_run(&cfg, &result, outputs).write(&out_dir.join("manifest.json"))?;
            println!(
                "msdem run complete: {} coarse steps, max |omega| = {:.3e}, worst target miss = {:.3e}",
                result.diags.len(),
                result.max_abs_omega,
                result.worst_attainment()
            );
        }
    }
    Ok(())
}

fn cmd_convergence(args: &ConvArgs) -> Result<(), SimError> {
    let cfg = args.common.load()?;
    let grids: Vec<(usize, usize)> = args
        .grids
        .split(',')
        .map(|g| parse_grid(g.trim()))
        .collect::<Result<_, _>>()?;
    if grids.len() < 2 {
        return Err(SimError::Config(
            "convergence needs at least two grids".into(),
        ));
    }
    let times = parse_f64_list(&args.times)?;
    let t_max = times.iter().cloned().fold(0.0_f64, f64::max);

    let scenario: ScenarioId = cfg.scenario.parse()?;
    let spec = make_scenario(scenario, cfg.scale)?;
    let schedule = cfg.schedule()?;
    let params = cfg.params();
    params.validate()?;

    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| SimError::Config(format!("{}: {e}", out_dir.display())))?;

    let truth = cached_truth(&cfg, &times, t_max)?;
    let study = convergence_study(
        &spec,
        &grids,
        &times,
        schedule,
        params,
        cfg.conc_max,
        cfg.r_min,
        cfg.effective_workers(),
        Some(&truth),
    )?;

    let mut rows = Vec::new();
    for st in &study.per_time {
        for row in &st.rows {
            rows.push((cfg.scenario.clone(), st.t, row.dx, row.conc_err));
        }
    }
    io::write_convergence_csv(&out_dir.join("convergence.csv"), &rows)?;

    let summary = serde_json::json!({
        "scenario": cfg.scenario,
        "scale": cfg.scale,
        "grids": grids.iter().map(|(nx, ny)| format!("{nx}x{ny}")).collect::<Vec<_>>(),
        "times": study.per_time.iter().map(|st| serde_json::json!({
            "t": st.t,
            "conc_slope": st.conc_slope,
            "vx_slope": if st.vx_slope.is_nan() { None } else { Some(st.vx_slope) },
            "rows": st.rows.iter().map(|r| serde_json::json!({
                "grid": format!("{}x{}", r.nx, r.ny),
                "dX": r.dx,
                "conc_l2": r.conc_err,
                "vx_l2": r.vx_err,
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    let path = out_dir.join("convergence_summary.json");
    let mut text =
        serde_json::to_string_pretty(&summary).map_err(|e| SimError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;

    for st in &study.per_time {
        println!("{} T={}: conc slope {:.3}", cfg.scenario, st.t, st.conc_slope);
        for r in &st.rows {
            println!("  {:>3}x{:<3} dX={:.4}  conc_l2={:.6}  vx_l2={:.6}", r.nx, r.ny, r.dx, r.conc_err, r.vx_err);
        }
    }
    println!("wrote {}", out_dir.join("convergence_summary.json").display());
    Ok(())
}

fn cmd_validate(config: &Path) -> Result<(), SimError> {
    let cfg = RunConfig::from_json_file(config)?;
    cfg.resolve()?;
    println!("{}: ok", config.display());
    Ok(())
}

fn cmd_dump_scenario(scenario: &str, scale: f64) -> Result<(), SimError> {
    let id: ScenarioId = scenario.parse()?;
    let spec = make_scenario(id, scale)?;
    let doc = serde_json::json!({
        "id": spec.id.to_string(),
        "scale": spec.scale,
        "domain": [spec.x0, spec.x1, spec.y0, spec.y1],
        "lattice": [spec.lattice_nx, spec.lattice_ny],
        "floe_count": spec.lattice_nx * spec.lattice_ny,
        "r_c": spec.r_c,
        "ocean": spec.ocean,
        "coarse_bc": match spec.coarse_bc {
            floe::continuum::CoarseBc::Periodic => "periodic",
            floe::continuum::CoarseBc::WallX => "periodic_y_wall_x",
        },
        "wall_x": spec.wall_x,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).map_err(|e| SimError::Config(e.to_string()))?
    );
    Ok(())
}

/// 2 for configuration problems, 3 for numerical failures.
fn exit_code_for(e: &SimError) -> u8 {
    match e {
        SimError::Divergence { .. }
        | SimError::NonFiniteField { .. }
        | SimError::CflViolation { .. }
        | SimError::Engulfment { .. } => 3,
        SimError::AtCell { source, .. } | SimError::AtStep { source, .. } => {
            exit_code_for(source)
        }
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Convergence(args) => cmd_convergence(args),
        Cmd::ValidateConfig { config } => cmd_validate(config),
        Cmd::DumpScenario { scenario, scale } => cmd_dump_scenario(scenario, *scale),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
