//! Command implementations behind the `flagsim` binary.

pub mod manifest;
pub mod sweep;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use flagsim::analysis::{
    calibrate, nondimensionalize, planar, position_at, summarize_steady, synthesize, CalibrationOptions,
    Fidelity, Measurement, Vec2,
};
use flagsim::dynamics::{simulate, ActuationSchedule, SimOptions, Trajectory};
use flagsim::planner::{MotionPrimitiveMap, PathSpec, Plan};
use flagsim::{AnalysisError, ConfigError, PlanError, Preset, RobotConfig, SimError};

use manifest::RunManifest;
use sweep::SweepSpec;

/// Bad input: unreadable or malformed files, invalid values, bad flags.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Some sub-runs of a batch command failed numerically.
#[derive(Debug)]
pub struct BatchFailed(pub String);

impl fmt::Display for BatchFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BatchFailed {}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

fn sim_code(e: &SimError) -> u8 {
    match e {
        SimError::Config(_) | SimError::Geometry(_) | SimError::Schedule(_) => EXIT_USAGE,
        SimError::SolverFailure { .. } | SimError::Singular { .. } => EXIT_SOLVER,
    }
}

fn analysis_code(e: &AnalysisError) -> u8 {
    match e {
        AnalysisError::Sim(s) => sim_code(s),
        AnalysisError::Invalid(_) | AnalysisError::TooFewPoints { .. } => EXIT_USAGE,
        _ => EXIT_SOLVER,
    }
}

/// Exit status for an error: 2 for bad input, 3 when a simulation or the
/// analysis of its output fails, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() || cause.is::<ConfigError>() {
            return EXIT_USAGE;
        }
        if cause.is::<BatchFailed>() {
            return EXIT_SOLVER;
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return sim_code(e);
        }
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            return analysis_code(e);
        }
        if let Some(e) = cause.downcast_ref::<PlanError>() {
            return match e {
                PlanError::Analysis(a) => analysis_code(a),
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_FAILURE
}

fn usage(e: impl fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "flagsim",
    version,
    about = "Simulate, calibrate and plan a flagellated soft swimmer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one actuation schedule and record the head trajectory.
    Simulate(SimulateArgs),
    /// Extract the steady turning primitive at one motor speed.
    Characterize(CharacterizeArgs),
    /// Fit the drag triple (C_t, C_r, C_yr) to measured spin and turning rates.
    Calibrate(CalibrateArgs),
    /// Plan a binary actuation schedule that follows a path.
    Plan(PlanArgs),
    /// Sweep dimensionless parameters at constant motor speed.
    Sweep(SweepArgs),
    /// Generate measurements by simulation at a known drag triple.
    Synthesize(SynthesizeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Preset name (fitted_sec2, control_sec4) or path to a config file.
    #[arg(long)]
    pub config: String,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Actuation schedule CSV (`t_switch_s,omega_rad_s`).
    #[arg(long)]
    pub schedule: PathBuf,
    /// Trajectory sampling interval [s].
    #[arg(long, default_value_t = 0.05)]
    pub stride: f64,
    /// Initial forward heading, counter-clockwise from planar x [rad].
    #[arg(long, default_value_t = FRAC_PI_2, allow_hyphen_values = true)]
    pub initial_yaw: f64,
    /// Also write full-state snapshots at this interval [s].
    #[arg(long)]
    pub snapshot_stride: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Motor speed in units of the inverse intrinsic time scale.
    #[arg(long, allow_hyphen_values = true)]
    pub omega_bar: f64,
    /// Run length in intrinsic time scales.
    #[arg(long, default_value_t = 50.0)]
    pub duration_scales: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FidelityArg {
    /// 5 nodes per tail, 10 ms steps, 12 s runs.
    Reduced,
    /// Config resolution, 40 s runs.
    Full,
}

impl FidelityArg {
    fn fidelity(self) -> Fidelity {
        match self {
            FidelityArg::Reduced => Fidelity::reduced(),
            FidelityArg::Full => Fidelity::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Measurement CSV (`N,l_m,omega_motor_rad_s,omega_h_rad_s,omega_yr_rad_s`).
    #[arg(long)]
    pub measurements: PathBuf,
    /// Seed candidates CSV (`c_t,c_r,c_yr`) replacing the log-spaced grid.
    #[arg(long)]
    pub seed_grid: Option<PathBuf>,
    /// Grid points per coefficient of the default seed grid.
    #[arg(long, default_value_t = 5)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 200)]
    pub max_evaluations: usize,
    #[arg(long, value_enum, default_value_t = FidelityArg::Reduced)]
    pub fidelity: FidelityArg,
    /// Worker threads for the candidate simulations.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub common: Common,
    /// Path specification TOML.
    #[arg(long)]
    pub path_spec: PathBuf,
    /// Motor speed for the characterization run.
    #[arg(long, default_value_t = 10.0)]
    pub omega_bar: f64,
    /// Reuse a primitive written by `characterize` instead of running one.
    #[arg(long)]
    pub primitive: Option<PathBuf>,
    /// Execute the plan in simulation and report tracking errors.
    #[arg(long)]
    pub verify: bool,
    /// Trajectory sampling interval of the verification run [s].
    #[arg(long, default_value_t = 0.5)]
    pub stride: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sweep specification TOML with a `[grid]` table.
    #[arg(long)]
    pub sweep: PathBuf,
    /// Worker threads for the grid points.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Drag triple `C_t,C_r,C_yr`.
    #[arg(long, value_parser = parse_triple)]
    pub triple: [f64; 3],
    /// Build and motor speed `N,l_m,omega_motor_rad_s`; repeatable.
    #[arg(long = "setting", value_parser = parse_setting, required = true)]
    pub settings: Vec<(usize, f64, f64)>,
    #[arg(long, value_enum, default_value_t = FidelityArg::Reduced)]
    pub fidelity: FidelityArg,
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected C_t,C_r,C_yr".to_string())
}

fn parse_setting(s: &str) -> Result<(usize, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [n, l, w] = parts[..] else {
        return Err("expected N,l_m,omega_motor_rad_s".into());
    };
    Ok((
        n.parse().map_err(|e| format!("N: {e}"))?,
        l.parse().map_err(|e| format!("l_m: {e}"))?,
        w.parse().map_err(|e| format!("omega_motor_rad_s: {e}"))?,
    ))
}

pub fn load_config(spec: &str) -> Result<RobotConfig> {
    if let Some(p) = Preset::from_name(spec) {
        return Ok(p.config());
    }
    let text = fs::read_to_string(spec).map_err(|e| usage(format!("config {spec}: {e}")))?;
    RobotConfig::from_toml_str(&text).with_context(|| format!("config {spec}"))
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Collects outputs of one command and writes its manifest.
struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    start: Instant,
}

impl Run {
    fn start(command: &str, out: &Path, inputs: BTreeMap<String, String>) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            dir: out.to_path_buf(),
            manifest: RunManifest::new(command, inputs),
            start: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn write_trajectory(&mut self, traj: &Trajectory) -> Result<()> {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        self.write(TRAJECTORY_FILE, buf)?;
        self.write(PATH_FILE, path_csv(traj))?;
        self.manifest.simulated_s += traj.duration();
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_s = self.start.elapsed().as_secs_f64();
        self.manifest.write(&self.dir)
    }
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const PATH_FILE: &str = "path.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const PRIMITIVE_FILE: &str = "primitive.toml";
pub const VERIFICATION_FILE: &str = "verification.csv";
pub const REPORT_FILE: &str = "report.toml";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";

/// Planar head path `t_s,x_m,y_m`, with `(x, y) = (x, -z)` seen from above.
pub fn path_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t_s,x_m,y_m\n");
    for p in &traj.samples {
        let v = planar(&p.head);
        s.push_str(&format!("{:.9e},{:.9e},{:.9e}\n", p.t, v.x, v.y));
    }
    s
}

fn toml_text(value: &impl Serialize) -> String {
    toml::to_string(value).expect("options serialize")
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()?
            .install(f)),
        None => Ok(f()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Characterize(a) => cmd_characterize(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Plan(a) => cmd_plan(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Synthesize(a) => cmd_synthesize(&a),
    }
}

#[derive(Serialize)]
struct SimulateOptions {
    stride_s: f64,
    initial_yaw_rad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_stride_s: Option<f64>,
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.common.config)?;
    let schedule = ActuationSchedule::from_csv_str(&read_input(&a.schedule)?)
        .with_context(|| format!("schedule {}", a.schedule.display()))?;
    if !(a.stride > 0.0) || a.snapshot_stride.is_some_and(|s| !(s > 0.0)) {
        return Err(usage("strides must be positive"));
    }
    let options = SimulateOptions {
        stride_s: a.stride,
        initial_yaw_rad: a.initial_yaw,
        snapshot_stride_s: a.snapshot_stride,
    };
    let inputs = BTreeMap::from([
        ("config".to_string(), cfg.to_toml_string()),
        ("schedule".to_string(), schedule.to_csv_string()),
        ("options".to_string(), toml_text(&options)),
    ]);
    let mut run = Run::start("simulate", &a.common.out, inputs)?;
    let opts = SimOptions {
        output_stride: a.stride,
        snapshot_stride: a.snapshot_stride,
        initial_yaw: a.initial_yaw,
    };
    let traj = simulate(&cfg, &schedule, &opts)?;
    run.write_trajectory(&traj)?;
    if a.snapshot_stride.is_some() {
        let mut buf = Vec::new();
        traj.write_snapshots(&mut buf)?;
        run.write("snapshots.bin", buf)?;
    }
    log::info!(
        "simulated {:.3} s in {} samples",
        traj.duration(),
        traj.samples.len()
    );
    run.finish()
}

/// `primitive.toml`: the primitive plus the steady summary it came from.
#[derive(Debug, Serialize, Deserialize)]
pub struct PrimitiveFile {
    pub primitive: MotionPrimitiveMap,
    pub omega_bar_h: f64,
    pub omega_bar_t: f64,
    pub omega_bar_yr: f64,
    pub r_yr_over_l: f64,
    pub fit_residual_m: f64,
}

impl PrimitiveFile {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

fn characterize_run(
    cfg: &RobotConfig,
    omega_bar: f64,
    duration_scales: f64,
) -> Result<(PrimitiveFile, Trajectory)> {
    if omega_bar == 0.0 || !omega_bar.is_finite() {
        return Err(PlanError::Degenerate("omega_bar must be non-zero".into()).into());
    }
    if !(duration_scales > 0.0) {
        return Err(usage("duration must be positive"));
    }
    let scale = nondimensionalize(cfg);
    let omega = scale.omega(omega_bar);
    let duration = scale.time(duration_scales);
    let schedule = ActuationSchedule::constant(omega, duration)?;
    let opts = SimOptions {
        output_stride: duration / 2000.0,
        ..SimOptions::default()
    };
    let traj = simulate(cfg, &schedule, &opts)?;
    let s = summarize_steady(&traj, None)?;
    let primitive = MotionPrimitiveMap::from_summary(omega, &s, cfg)?;
    let file = PrimitiveFile {
        primitive,
        omega_bar_h: scale.omega_bar(s.omega_h),
        omega_bar_t: scale.omega_bar(s.omega_t),
        omega_bar_yr: scale.omega_bar(s.omega_yr),
        r_yr_over_l: s.r_yr / cfg.tail_length,
        fit_residual_m: s.fit_residual,
    };
    Ok((file, traj))
}

pub fn cmd_characterize(a: &CharacterizeArgs) -> Result<()> {
    let cfg = load_config(&a.common.config)?;
    let inputs = BTreeMap::from([
        ("config".to_string(), cfg.to_toml_string()),
        (
            "options".to_string(),
            format!(
                "omega_bar = {}\nduration_scales = {}\n",
                a.omega_bar, a.duration_scales
            ),
        ),
    ]);
    let mut run = Run::start("characterize", &a.common.out, inputs)?;
    let (file, traj) = characterize_run(&cfg, a.omega_bar, a.duration_scales)?;
    run.write(PRIMITIVE_FILE, toml_text(&file))?;
    run.write_trajectory(&traj)?;
    run.finish()
}

#[derive(Debug, Deserialize)]
struct SeedRow {
    c_t: f64,
    c_r: f64,
    c_yr: f64,
}

fn load_seed_grid(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = read_input(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let seeds = rdr
        .deserialize::<SeedRow>()
        .map(|r| r.map(|s| [s.c_t, s.c_r, s.c_yr]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("seed grid {}: {e}", path.display())))?;
    if seeds.is_empty() {
        return Err(usage(format!("seed grid {} has no rows", path.display())));
    }
    Ok(seeds)
}

fn measurements_text(ms: &[Measurement]) -> Result<String> {
    let mut buf = Vec::new();
    Measurement::write_csv(ms, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

#[derive(Serialize)]
struct CalibrateOptionsText<'a> {
    fidelity: &'a str,
    grid_points: usize,
    max_evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed_grid: Option<Vec<[f64; 3]>>,
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> Result<()> {
    let base = load_config(&a.common.config)?;
    let ms = Measurement::load(&a.measurements)
        .map_err(|e| usage(format!("measurements {}: {e}", a.measurements.display())))?;
    let seed_grid = a.seed_grid.as_deref().map(load_seed_grid).transpose()?;
    if a.grid_points < 2 {
        return Err(usage("grid-points must be at least 2"));
    }
    let text = CalibrateOptionsText {
        fidelity: match a.fidelity {
            FidelityArg::Reduced => "reduced",
            FidelityArg::Full => "full",
        },
        grid_points: a.grid_points,
        max_evaluations: a.max_evaluations,
        seed_grid: seed_grid.clone(),
    };
    let inputs = BTreeMap::from([
        ("config".to_string(), base.to_toml_string()),
        ("measurements".to_string(), measurements_text(&ms)?),
        ("options".to_string(), toml_text(&text)),
    ]);
    let options = CalibrationOptions {
        grid_points: a.grid_points,
        seed_grid,
        max_evaluations: a.max_evaluations,
        fidelity: a.fidelity.fidelity(),
        jobs: a.jobs,
        ..CalibrationOptions::default()
    };
    let mut run = Run::start("calibrate", &a.common.out, inputs)?;
    let result = calibrate(&ms, &base, &options)?;
    run.manifest.simulated_s = result.evaluations as f64 * ms.len() as f64 * options.fidelity.duration;
    run.write("calibration.txt", result.report())?;
    let fitted = base.with_drag(result.c_t, result.c_r, result.c_yr);
    run.write("calibrated.toml", fitted.to_toml_string())?;
    println!(
        "C_t = {:.4}  C_r = {:.4}  C_yr = {:.4}  error = {:.4e}",
        result.c_t, result.c_r, result.c_yr, result.fit_error
    );
    run.finish()
}

/// Tracking errors of a verified plan. Positions are relative to the
/// executed start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Distance between the executed and planned end points [m].
    pub closure_error_m: f64,
    /// Line length, circle radius or mean polygon edge [m].
    pub reference_length_m: f64,
    pub closure_error_rel: f64,
    pub max_checkpoint_error_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_radial_deviation_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_radial_deviation_rel: Option<f64>,
}

fn reference_length(spec: &PathSpec) -> f64 {
    match spec {
        PathSpec::Line { length_m, .. } => *length_m,
        PathSpec::Circle { radius_m, .. } => *radius_m,
        PathSpec::Polygon {
            vertices_m, closed, ..
        } => {
            let v: Vec<Vec2> = vertices_m.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            let mut edges: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
            if *closed {
                edges.push((v[0] - v[v.len() - 1]).norm());
            }
            edges.iter().sum::<f64>() / edges.len() as f64
        }
    }
}

/// Compares an executed trajectory with the plan's checkpoints. Returns the
/// report and the `verification.csv` text.
pub fn verify_plan(spec: &PathSpec, plan: &Plan, traj: &Trajectory) -> Result<(VerificationReport, String)> {
    let origin = planar(&traj.samples[0].head);
    let at = |t: f64| -> Result<Vec2> {
        position_at(traj, t)
            .map(|p| p - origin)
            .ok_or_else(|| anyhow::anyhow!("trajectory does not cover t = {t}"))
    };
    let mut csv = String::from("t_s,target_x_m,target_y_m,executed_x_m,executed_y_m,error_m\n");
    let mut max_err: f64 = 0.0;
    let mut radial = Vec::new();
    for &(t, target) in &plan.checkpoints {
        let p = at(t)?;
        let err = (p - target).norm();
        max_err = max_err.max(err);
        if let (Some(c), PathSpec::Circle { radius_m, .. }) = (plan.circle_center, spec) {
            radial.push((p - c).norm() - radius_m);
        }
        csv.push_str(&format!(
            "{t:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{err:.9e}\n",
            target.x, target.y, p.x, p.y
        ));
    }
    let (t_end, end) = *plan.checkpoints.last().expect("plans have checkpoints");
    let closure = (at(t_end)? - end).norm();
    let reference = reference_length(spec);
    let rms = (!radial.is_empty())
        .then(|| (radial.iter().map(|r| r * r).sum::<f64>() / radial.len() as f64).sqrt());
    let report = VerificationReport {
        closure_error_m: closure,
        reference_length_m: reference,
        closure_error_rel: closure / reference,
        max_checkpoint_error_m: max_err,
        rms_radial_deviation_m: rms,
        rms_radial_deviation_rel: rms.map(|r| r / reference),
    };
    Ok((report, csv))
}

#[derive(Serialize)]
struct PlanSummary {
    initial_yaw_rad: f64,
    duration_s: f64,
    switches: usize,
    omega_motor_rad_s: f64,
}

pub fn cmd_plan(a: &PlanArgs) -> Result<()> {
    let cfg = load_config(&a.common.config)?;
    let spec_text = read_input(&a.path_spec)?;
    let spec = PathSpec::from_toml_str(&spec_text)
        .with_context(|| format!("path spec {}", a.path_spec.display()))?;
    if !(a.stride > 0.0) {
        return Err(usage("stride must be positive"));
    }
    let given = a.primitive.as_deref().map(PrimitiveFile::load).transpose()?;
    let mut inputs = BTreeMap::from([
        ("config".to_string(), cfg.to_toml_string()),
        ("path_spec".to_string(), spec.to_toml_string()),
        (
            "options".to_string(),
            format!(
                "omega_bar = {}\nverify = {}\nstride_s = {}\n",
                a.omega_bar, a.verify, a.stride
            ),
        ),
    ]);
    if let Some(p) = &given {
        inputs.insert("primitive".to_string(), toml_text(p));
    }
    let mut run = Run::start("plan", &a.common.out, inputs)?;
    let file = match given {
        Some(p) => p,
        None => {
            let (p, traj) = characterize_run(&cfg, a.omega_bar, 50.0)?;
            run.manifest.simulated_s += traj.duration();
            p
        }
    };
    let plan = spec.plan(&file.primitive)?;
    run.write(SCHEDULE_FILE, plan.schedule.to_csv_string())?;
    run.write("predicted.csv", plan.predicted_csv())?;
    run.write(PRIMITIVE_FILE, toml_text(&file))?;
    let summary = PlanSummary {
        initial_yaw_rad: plan.initial_yaw,
        duration_s: plan.schedule.duration(),
        switches: plan.schedule.switches().len(),
        omega_motor_rad_s: file.primitive.omega_motor,
    };
    run.write("plan.toml", toml_text(&summary))?;
    log::info!(
        "plan: {} switches over {:.1} s, start yaw {:.4} rad",
        summary.switches,
        summary.duration_s,
        summary.initial_yaw_rad
    );
    if a.verify {
        let traj = simulate(&cfg, &plan.schedule, &plan.sim_options(a.stride))?;
        run.write_trajectory(&traj)?;
        let (report, csv) = verify_plan(&spec, &plan, &traj)?;
        run.write(VERIFICATION_FILE, csv)?;
        run.write(REPORT_FILE, toml_text(&report))?;
        println!(
            "closure error {:.4e} m ({:.2}% of {:.4} m)",
            report.closure_error_m,
            100.0 * report.closure_error_rel,
            report.reference_length_m
        );
        if let Some(r) = report.rms_radial_deviation_rel {
            println!("rms radial deviation {:.2}% of radius", 100.0 * r);
        }
    }
    run.finish()
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let base = load_config(&a.common.config)?;
    let spec = SweepSpec::from_toml_str(&read_input(&a.sweep)?)?;
    let points = spec.points();
    for p in &points {
        sweep::apply(&base, p).map_err(|e| usage(format!("grid point {p:?}: {e:#}")))?;
    }
    let inputs = BTreeMap::from([
        ("config".to_string(), base.to_toml_string()),
        ("sweep".to_string(), spec.to_toml_string()),
    ]);
    let mut run = Run::start("sweep", &a.common.out, inputs)?;
    let rows: Vec<_> = with_pool(a.jobs, || {
        points
            .par_iter()
            .map(|p| {
                (
                    p.clone(),
                    sweep::run_point(&spec, &base, p).map_err(|e| format!("{e:#}")),
                )
            })
            .collect()
    })?;
    run.manifest.simulated_s = rows
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .map(|r| r.simulated_s)
        .sum();
    run.write(SUMMARY_FILE, sweep::summary_csv(&spec, &rows))?;
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|(p, r)| r.as_ref().err().map(|e| format!("{p:?}: {e}")))
        .collect();
    run.finish()?;
    if !failed.is_empty() {
        return Err(BatchFailed(format!(
            "{} of {} grid points failed:\n{}",
            failed.len(),
            rows.len(),
            failed.join("\n")
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_synthesize(a: &SynthesizeArgs) -> Result<()> {
    let base = load_config(&a.common.config)?;
    let triple = a.triple;
    if triple.iter().any(|c| !(*c > 0.0)) {
        return Err(usage("drag coefficients must be positive"));
    }
    let settings_text: String = a
        .settings
        .iter()
        .map(|(n, l, w)| format!("{n},{l},{w}\n"))
        .collect();
    let inputs = BTreeMap::from([
        ("config".to_string(), base.to_toml_string()),
        (
            "options".to_string(),
            format!(
                "triple = [{}, {}, {}]\nfidelity = \"{:?}\"\nsettings = \"\"\"\n{settings_text}\"\"\"\n",
                triple[0], triple[1], triple[2], a.fidelity
            ),
        ),
    ]);
    let fidelity = a.fidelity.fidelity();
    let mut run = Run::start("synthesize", &a.common.out, inputs)?;
    let ms = with_pool(a.jobs, || synthesize(&base, &a.settings, triple, &fidelity))??;
    run.manifest.simulated_s = ms.len() as f64 * fidelity.duration;
    run.write(MEASUREMENTS_FILE, measurements_text(&ms)?)?;
    run.finish()
}
