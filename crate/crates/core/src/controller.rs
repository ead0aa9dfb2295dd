//! Feedforward waypoint streaming for the EPM, with optional friction
//! compensation by speed adjustment.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::dynamics::{self, CapsuleState, DynamicsError, EpmTrajectory, Scene};
use crate::friction::c_of_v;
use crate::log::{Termination, TrajectoryLog};
use crate::metrics::{self, MetricsError, TrackingReport};

/// Bisection tolerance for the model-inverse speed, m/s.
pub const SPEED_TOLERANCE: f64 = 1e-6;

/// Grid used to bracket the lowest root before bisecting.
const ROOT_SCAN_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("segment {segment}: no speed in [{lo}, {hi}] m/s meets the target acceleration")]
    NoRoot { segment: usize, lo: f64, hi: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, ControlError>;

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    waypoints: Vec<Vector2<f64>>,
    commanded_speed: f64,
}

impl WaypointPath {
    pub fn new(waypoints: Vec<Vector2<f64>>, commanded_speed: f64) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(ControlError::InvalidPath(format!(
                "need at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        if waypoints.iter().any(|w| !(w.x.is_finite() && w.y.is_finite())) {
            return Err(ControlError::InvalidPath("waypoints must be finite".into()));
        }
        if waypoints.windows(2).any(|w| w[0] == w[1]) {
            return Err(ControlError::InvalidPath("consecutive waypoints must be distinct".into()));
        }
        if !(commanded_speed.is_finite() && commanded_speed > 0.0) {
            return Err(ControlError::InvalidPath(format!(
                "commanded speed must be positive, got {commanded_speed}"
            )));
        }
        Ok(Self {
            waypoints,
            commanded_speed,
        })
    }

    /// Axis-aligned closed rectangle starting and ending at `origin`.
    pub fn rectangle(origin: Vector2<f64>, width: f64, height: f64, speed: f64) -> Result<Self> {
        let o = origin;
        Self::new(
            vec![
                o,
                o + Vector2::new(width, 0.0),
                o + Vector2::new(width, height),
                o + Vector2::new(0.0, height),
                o,
            ],
            speed,
        )
    }

    pub fn waypoints(&self) -> &[Vector2<f64>] {
        &self.waypoints
    }

    pub fn commanded_speed(&self) -> f64 {
        self.commanded_speed
    }

    pub fn with_speed(&self, speed: f64) -> Result<Self> {
        Self::new(self.waypoints.clone(), speed)
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }

    pub fn length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompensationPolicy {
    None,
    /// Command `factor ×` the path speed.
    FixedScale { factor: f64 },
    /// Per segment, the speed whose friction drop frees `target_accel` of
    /// acceleration relative to the commanded speed.
    ModelInverse { target_accel: f64 },
}

impl CompensationPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CompensationPolicy::None => Ok(()),
            CompensationPolicy::FixedScale { factor } if factor > 0.0 && factor <= 1.0 => Ok(()),
            CompensationPolicy::FixedScale { factor } => Err(ControlError::InvalidPolicy(format!(
                "scale factor must lie in (0, 1], got {factor}"
            ))),
            CompensationPolicy::ModelInverse { target_accel } if target_accel >= 0.0 => Ok(()),
            CompensationPolicy::ModelInverse { target_accel } => Err(ControlError::InvalidPolicy(format!(
                "target acceleration must be non-negative, got {target_accel}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrajectory {
    pub trajectory: EpmTrajectory,
    pub segment_speeds: Vec<f64>,
}

/// Unclamped low-speed friction coefficient used for planning.
fn planning_mu(speed: f64, scene: &Scene) -> f64 {
    let p = &scene.friction;
    p.mu0 - c_of_v(&scene.c_model, speed).c * (p.v_star / speed).ln()
}

/// Lowest speed in the model's range that satisfies the compensated
/// force balance
///
/// ```text
/// m·a = F_N (μ(v_cmd) − μ(v))
/// ```
///
/// i.e. the traction that holds the capsule at the commanded speed, minus
/// tether drag and the friction at the slower speed, leaves `m·a` to spare.
fn model_inverse_speed(segment: usize, start: Vector2<f64>, commanded: f64, target_accel: f64, scene: &Scene) -> Result<f64> {
    let (lo, hi) = scene.c_model.valid_range();
    if hi >= scene.friction.v_star || commanded >= scene.friction.v_star {
        return Err(ControlError::InvalidPolicy(
            "model inverse needs speeds below the typical speed v*".into(),
        ));
    }
    let capsule = CapsuleState::at_rest(start);
    let normal = dynamics::compute_forces(&capsule, scene.epm_above(start), scene)?.normal;
    let reference = planning_mu(commanded, scene);
    let spare = scene.capsule_mass * target_accel;
    let balance = |v: f64| normal * (reference - planning_mu(v, scene)) - spare;

    let mut prev_v = lo;
    let mut prev_g = balance(lo);
    if prev_g == 0.0 {
        return Ok(lo.min(commanded));
    }
    for i in 1..=ROOT_SCAN_POINTS {
        let v = lo + (hi - lo) * i as f64 / ROOT_SCAN_POINTS as f64;
        let g = balance(v);
        if g == 0.0 {
            return Ok(v.min(commanded));
        }
        if g.signum() != prev_g.signum() {
            let (mut a, mut b, mut ga) = (prev_v, v, prev_g);
            while b - a > SPEED_TOLERANCE {
                let mid = 0.5 * (a + b);
                let gm = balance(mid);
                if gm.signum() == ga.signum() {
                    a = mid;
                    ga = gm;
                } else {
                    b = mid;
                }
            }
            return Ok((0.5 * (a + b)).min(commanded));
        }
        prev_v = v;
        prev_g = g;
    }
    Err(ControlError::NoRoot { segment, lo, hi })
}

pub fn segment_speeds(path: &WaypointPath, policy: CompensationPolicy, scene: &Scene) -> Result<Vec<f64>> {
    policy.validate()?;
    let v = path.commanded_speed();
    let n = path.waypoints().len() - 1;
    match policy {
        CompensationPolicy::None => Ok(vec![v; n]),
        CompensationPolicy::FixedScale { factor } => Ok(vec![v * factor; n]),
        CompensationPolicy::ModelInverse { target_accel } => (0..n)
            .map(|i| model_inverse_speed(i, path.waypoints()[i], v, target_accel, scene))
            .collect(),
    }
}

/// EPM samples at the scene's sample period, moving at constant height
/// along the path. Corners are taken without slowing down or blending.
pub fn plan_epm_trajectory(path: &WaypointPath, policy: CompensationPolicy, scene: &Scene) -> Result<PlannedTrajectory> {
    let speeds = segment_speeds(path, policy, scene)?;
    let lengths = path.segment_lengths();
    let mut ends = Vec::with_capacity(lengths.len());
    let mut total = 0.0;
    for (len, v) in lengths.iter().zip(&speeds) {
        total += len / v;
        ends.push(total);
    }
    let period = scene.sample_period();
    let n = (total / period - 1e-9).ceil().max(1.0) as usize;
    let wp = path.waypoints();
    let last = *wp.last().expect("path has waypoints");

    let mut points = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for k in 0..=n {
        let t = k as f64 * period;
        while seg < ends.len() && t > ends[seg] {
            seg += 1;
        }
        let p = if seg >= ends.len() {
            last
        } else {
            let seg_start = if seg == 0 { 0.0 } else { ends[seg - 1] };
            let s = ((t - seg_start) * speeds[seg]).min(lengths[seg]);
            wp[seg] + (wp[seg + 1] - wp[seg]) * (s / lengths[seg])
        };
        points.push(scene.epm_above(p));
    }
    Ok(PlannedTrajectory {
        trajectory: EpmTrajectory::new(period, points)?,
        segment_speeds: speeds,
    })
}

/// Arc length along the path of an in-plane point that lies on it.
pub fn arc_length_of(path: &WaypointPath, samples: &[Vector3<f64>]) -> Vec<f64> {
    let wp = path.waypoints();
    let lengths = path.segment_lengths();
    let mut seg = 0;
    let mut offset = 0.0;
    samples
        .iter()
        .map(|p| {
            let q = p.xy();
            // advance while the point sits past the current segment
            loop {
                let dir = (wp[seg + 1] - wp[seg]) / lengths[seg];
                let s = (q - wp[seg]).dot(&dir);
                let on_segment = (q - wp[seg] - dir * s).norm() < 1e-9;
                if on_segment && s <= lengths[seg] + 1e-12 && (s < lengths[seg] - 1e-12 || seg + 1 == lengths.len()) {
                    return offset + s.max(0.0);
                }
                if seg + 1 == lengths.len() {
                    return offset + s.clamp(0.0, lengths[seg]);
                }
                offset += lengths[seg];
                seg += 1;
            }
        })
        .collect()
}

/// Plans, simulates from rest at the first waypoint, and scores the run
/// over `window` (default: skip the first 10 %).
pub fn track_with_window(
    path: &WaypointPath,
    policy: CompensationPolicy,
    scene: &Scene,
    window: Option<(f64, f64)>,
) -> Result<(TrajectoryLog, TrackingReport)> {
    let plan = plan_epm_trajectory(path, policy, scene)?;
    let initial = CapsuleState::at_rest(path.waypoints()[0]);
    let log = dynamics::simulate(&initial, &plan.trajectory, scene)?;
    if let Termination::Detached { .. } = log.termination {
        let last = log.rows.last().expect("detached log has a final row");
        let weight = scene.weight();
        return Err(DynamicsError::Detached {
            f_z: last.magnetic_force.z,
            weight,
        }
        .into());
    }
    let report = metrics::report(&log, window)?;
    Ok((log, report))
}

pub fn track(path: &WaypointPath, policy: CompensationPolicy, scene: &Scene) -> Result<(TrajectoryLog, TrackingReport)> {
    track_with_window(path, policy, scene, None)
}
