//! `capsim` commands: simulate, fit, eval, sweep and scene.
//!
//! Exit codes: 0 success, 1 planning or output failure, 2 usage, 3 parse,
//! 4 detachment, 5 insufficient data, 6 empty window.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use capsule_core::config::{self, ConfigError, ModelFile, SceneFile};
use capsule_core::controller::{self, CompensationPolicy, ControlError, WaypointPath};
use capsule_core::dynamics::{DynamicsError, Scene};
use capsule_core::log::{LogError, TrajectoryLog};
use capsule_core::metrics::{self, MetricsError, TrackingReport};
use capsule_core::sysid::{self, SysidError};

pub const SCENE_ENV: &str = "CAPSULE_SCENE";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Detached(String),
    InsufficientData(String),
    EmptyWindow(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Detached(_) => 4,
            CliError::InsufficientData(_) => 5,
            CliError::EmptyWindow(_) => 6,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Parse(m)
            | CliError::Detached(m)
            | CliError::InsufficientData(m)
            | CliError::EmptyWindow(m)
            | CliError::Failed(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Path(c) => c.into(),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Detached { .. } => CliError::Detached(e.to_string()),
            DynamicsError::InvalidScene(_) => CliError::Parse(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::EmptyWindow { .. } => CliError::EmptyWindow(e.to_string()),
            MetricsError::EmptyLog => CliError::InsufficientData(e.to_string()),
        }
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::InvalidPath(_) => CliError::Parse(e.to_string()),
            ControlError::InvalidPolicy(_) => CliError::Usage(e.to_string()),
            ControlError::Dynamics(d) => d.into(),
            ControlError::Metrics(m) => m.into(),
            other => CliError::Failed(format!("planning failed: {other}")),
        }
    }
}

impl From<SysidError> for CliError {
    fn from(e: SysidError) -> Self {
        match e {
            SysidError::TooFewSamples { .. } | SysidError::InsufficientData { .. } | SysidError::RankDeficient => {
                CliError::InsufficientData(e.to_string())
            }
            SysidError::BadWindow(_) => CliError::Usage(e.to_string()),
            SysidError::NonUniformSpacing(_) => CliError::Parse(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        CliError::Parse(e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failed(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "capsim", version, about = "Magnetic capsule simulator and friction-model fitter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan and simulate one tracked run along a waypoint path.
    Simulate(SimulateArgs),
    /// Fit c(v) from one or more logs.
    Fit(FitArgs),
    /// Tracking error statistics of a log.
    Eval(EvalArgs),
    /// Tracked runs at several speeds, with and without compensation.
    Sweep(SweepArgs),
    /// Print the default scene file.
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    None,
    FixedScale,
    ModelInverse,
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Scene file; the built-in default scene when absent.
    #[arg(long, env = SCENE_ENV)]
    pub scene: Option<PathBuf>,
    /// Replace the scene's c(v) with a fitted model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Integrator step in seconds; must divide the sample period.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    #[arg(long, value_enum, default_value = "none")]
    pub policy: PolicyName,
    /// Speed factor for fixed-scale.
    #[arg(long, default_value_t = 0.8)]
    pub scale: f64,
    /// Freed acceleration for model-inverse, m/s².
    #[arg(long, default_value_t = 0.2)]
    pub target_accel: f64,
}

impl PolicyArgs {
    pub fn policy(&self) -> CompensationPolicy {
        policy_of(self.policy, self.scale, self.target_accel)
    }
}

fn policy_of(name: PolicyName, scale: f64, target_accel: f64) -> CompensationPolicy {
    match name {
        PolicyName::None => CompensationPolicy::None,
        PolicyName::FixedScale => CompensationPolicy::FixedScale { factor: scale },
        PolicyName::ModelInverse => CompensationPolicy::ModelInverse { target_accel },
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Recorded in the metrics file; the simulation itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metrics file; defaults to `<out>.metrics.toml`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = sysid::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = sysid::DEFAULT_DEGREE)]
    pub degree: usize,
    #[arg(long, env = SCENE_ENV)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub log: PathBuf,
    #[arg(long)]
    pub window_start: Option<f64>,
    #[arg(long)]
    pub window_end: Option<f64>,
    /// Metrics file; defaults to `<log>.metrics.toml`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Error-vs-time table; defaults to `<log>.errors.csv`.
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub speeds: Vec<f64>,
    /// Compensation compared against policy none.
    #[arg(long, value_enum, default_value = "model-inverse")]
    pub policy: PolicyName,
    #[arg(long, default_value_t = 0.8)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.2)]
    pub target_accel: f64,
    /// Also write the summary table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Appends `suffix` to the full file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_failure(path, e))
}

pub fn load_scene(args: &SceneArgs) -> Result<Scene, CliError> {
    let file = match &args.scene {
        Some(p) => SceneFile::parse(&config::read_file(p)?)?,
        None => SceneFile::default(),
    };
    let mut params = file.to_params()?;
    if let Some(m) = &args.model {
        params.c_model = ModelFile::parse(&config::read_file(m)?)?.model()?;
    }
    if let Some(dt) = args.dt {
        let period = params.integrator_step * params.control_substeps as f64;
        let n = (period / dt).round();
        if !(dt > 0.0 && n >= 1.0 && (n * dt - period).abs() <= 1e-9 * period) {
            return Err(CliError::Usage(format!(
                "--dt {dt} s does not divide the {period} s sample period"
            )));
        }
        params.integrator_step = dt;
        params.control_substeps = n as usize;
    }
    Ok(Scene::build(params)?)
}

fn load_path(path: &Path) -> Result<WaypointPath, CliError> {
    Ok(config::parse_path(&config::read_file(path)?)?)
}

fn load_log(path: &Path) -> Result<TrajectoryLog, CliError> {
    let text = config::read_file(path)?;
    TrajectoryLog::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn render_metrics(report: &TrackingReport, extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in extra {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "window_start_s = {}", report.window.0);
    let _ = writeln!(s, "window_end_s = {}", report.window.1);
    let _ = writeln!(s, "mean_error_m = {}", report.mean);
    let _ = writeln!(s, "std_error_m = {}", report.std);
    s
}

pub fn render_errors(report: &TrackingReport) -> String {
    let mut s = String::from("t_s,error_m\n");
    for e in &report.per_sample_error {
        let _ = writeln!(s, "{},{}", e.t, e.error);
    }
    s
}

fn out(w: &mut dyn Write, text: std::fmt::Arguments) -> Result<(), CliError> {
    w.write_fmt(text).map_err(|e| CliError::Failed(format!("stdout: {e}")))
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scene = load_scene(&args.scene)?;
    let path = load_path(&args.path)?;
    let policy = args.policy.policy();
    policy.validate()?;
    let planned = controller::plan_epm_trajectory(&path, policy, &scene)?;
    let initial = capsule_core::CapsuleState::at_rest(path.waypoints()[0]);
    let log = capsule_core::dynamics::simulate(&initial, &planned.trajectory, &scene)?;
    write_file(&args.out, log.render().as_bytes())?;
    if let capsule_core::Termination::Detached { t } = log.termination {
        return Err(CliError::Detached(format!(
            "capsule detached at t = {t} s; partial log written to {}",
            args.out.display()
        )));
    }
    let report = metrics::report(&log, None)?;
    let speeds = planned
        .segment_speeds
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let metrics_path = args.metrics.clone().unwrap_or_else(|| sibling(&args.out, ".metrics.toml"));
    let body = render_metrics(
        &report,
        &[
            ("scene_hash", format!("\"{}\"", log.scene_hash)),
            ("seed", args.seed.to_string()),
            ("segment_speeds_m_s", format!("[{speeds}]")),
            ("extrapolated_steps", log.extrapolated_steps.to_string()),
        ],
    );
    write_file(&metrics_path, body.as_bytes())?;
    out(
        stdout,
        format_args!(
            "rows {} seed {} segment speeds [{speeds}] m/s\nmean {:.3} mm std {:.3} mm extrapolated steps {}\n",
            log.rows.len(),
            args.seed,
            report.mean * 1e3,
            report.std * 1e3,
            log.extrapolated_steps
        ),
    )
}

pub fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scene = load_scene(&SceneArgs {
        scene: args.scene.clone(),
        model: None,
        dt: None,
    })?;
    let fingerprint = scene.fingerprint();
    let mut logs = Vec::new();
    for p in &args.logs {
        let log = load_log(p)?;
        if log.scene_hash != fingerprint {
            out(
                stdout,
                format_args!(
                    "warning: {} was produced by scene {}, fitting with scene {fingerprint}\n",
                    p.display(),
                    log.scene_hash
                ),
            )?;
        }
        logs.push(log);
    }
    let learned = sysid::learn_model_from_logs(&logs, &scene, args.window, args.degree)?;
    let fit = &learned.fit;
    write_file(&args.out, ModelFile::from_fit(fit).render().as_bytes())?;
    let mut table = Vec::new();
    config::write_residuals(fit, &mut table)?;
    write_file(&sibling(&args.out, ".residuals.csv"), &table)?;
    let mut curve = Vec::new();
    config::write_curve(&fit.model, &mut curve)?;
    write_file(&sibling(&args.out, ".curve.csv"), &curve)?;
    let t = learned.tally;
    let (lo, hi) = fit.model.valid_range();
    out(
        stdout,
        format_args!(
            "samples {} accepted {} rejected {} (speed out of range {}, detached {}, singular {})\n\
             degree {} sse {:e} condition {:.3e} valid range [{lo}, {hi}] m/s\n",
            t.total(),
            t.accepted,
            t.rejected(),
            t.speed_out_of_range,
            t.detached,
            t.singular_denominator,
            fit.model.degree(),
            fit.sse,
            fit.condition_number,
        ),
    )?;
    if fit.ill_conditioned() {
        out(stdout, format_args!("warning: design matrix is ill-conditioned\n"))?;
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let log = load_log(&args.log)?;
    let window = match (args.window_start, args.window_end) {
        (None, None) => None,
        (start, end) => {
            let (d0, d1) = metrics::default_window(&log)?;
            Some((start.unwrap_or(d0), end.unwrap_or(d1)))
        }
    };
    let report = metrics::report(&log, window)?;
    let metrics_path = args.metrics.clone().unwrap_or_else(|| sibling(&args.log, ".metrics.toml"));
    write_file(&metrics_path, render_metrics(&report, &[]).as_bytes())?;
    let errors_path = args.errors.clone().unwrap_or_else(|| sibling(&args.log, ".errors.csv"));
    write_file(&errors_path, render_errors(&report).as_bytes())?;
    out(
        stdout,
        format_args!(
            "window [{}, {}] s mean {:.3} mm std {:.3} mm\n",
            report.window.0,
            report.window.1,
            report.mean * 1e3,
            report.std * 1e3
        ),
    )
}

/// One sweep row. Standard deviations are in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub speed: f64,
    pub in_range: bool,
    pub uncompensated: Result<(f64, usize), CliError>,
    pub compensated: Result<(f64, usize), CliError>,
}

impl SweepRow {
    pub fn succeeded(&self) -> bool {
        self.uncompensated.is_ok() || self.compensated.is_ok()
    }
}

fn tracked(path: &WaypointPath, policy: CompensationPolicy, scene: &Scene) -> Result<(f64, usize), CliError> {
    let (log, report) = controller::track(path, policy, scene)?;
    Ok((report.std, log.extrapolated_steps))
}

pub fn sweep(path: &WaypointPath, speeds: &[f64], policy: CompensationPolicy, scene: &Scene) -> Result<Vec<SweepRow>, CliError> {
    if let Some(v) = speeds.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(CliError::Usage(format!("speeds must be positive, got {v}")));
    }
    policy.validate()?;
    // par_iter + collect keeps input order
    Ok(speeds
        .par_iter()
        .map(|&speed| {
            let run = |p| path.with_speed(speed).map_err(CliError::from).and_then(|path| tracked(&path, p, scene));
            SweepRow {
                speed,
                in_range: scene.c_model.contains(speed),
                uncompensated: run(CompensationPolicy::None),
                compensated: run(policy),
            }
        })
        .collect())
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let cell = |r: &Result<(f64, usize), CliError>| match r {
        Ok((std, _)) => format!("{:.4}", std * 1e3),
        Err(_) => "NA".to_string(),
    };
    let ext = |r: &Result<(f64, usize), CliError>| match r {
        Ok((_, n)) => n.to_string(),
        Err(_) => "NA".to_string(),
    };
    let mut s = String::from("speed_m_s,range,std_none_mm,std_comp_mm,extrapolated_none,extrapolated_comp,note\n");
    for r in rows {
        let note = [&r.uncompensated, &r.compensated]
            .iter()
            .zip(["none", "comp"])
            .filter_map(|(res, tag)| res.as_ref().err().map(|e| format!("{tag}: {e}")))
            .collect::<Vec<_>>()
            .join("; ");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},\"{}\"",
            r.speed,
            if r.in_range { "ok" } else { "out-of-range" },
            cell(&r.uncompensated),
            cell(&r.compensated),
            ext(&r.uncompensated),
            ext(&r.compensated),
            note.replace('"', "'")
        );
    }
    s
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scene = load_scene(&args.scene)?;
    let path = load_path(&args.path)?;
    let policy = policy_of(args.policy, args.scale, args.target_accel);
    let rows = sweep(&path, &args.speeds, policy, &scene)?;
    let table = render_sweep(&rows);
    if let Some(p) = &args.out {
        write_file(p, table.as_bytes())?;
    }
    out(stdout, format_args!("{table}"))?;
    match rows.iter().find(|r| r.succeeded()) {
        Some(_) => Ok(()),
        None => Err(rows[0].uncompensated.clone().unwrap_err()),
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Fit(a) => cmd_fit(a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Scene => out(stdout, format_args!("{}", SceneFile::default().render())),
    }
}
