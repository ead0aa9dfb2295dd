//! Planar capsule dynamics under magnetic pull, tether drag, friction and
//! stiction, integrated with fixed-step semi-implicit Euler.
//!
//! The capsule is held against the underside of the plate (z = 0) by the EPM
//! above it, so the plate reaction is `F_N = F_z − m g`. Motion is confined to
//! the plate plane.

use nalgebra::{Vector2, Vector3};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::friction::{self, c_of_v, CModel, FrictionParams, ThetaState};
use crate::log::{LogRow, Termination, TrajectoryLog};
use crate::magnetics::{self, Dipole, MagnetAssembly, MagnetSpec, MagneticsError};

/// Speeds below this are treated as rest; the stiction rule applies there.
pub const V_MIN: f64 = 1e-4;

const STEP_RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("capsule detached: vertical pull {f_z:.4} N does not exceed weight {weight:.4} N")]
    Detached { f_z: f64, weight: f64 },
    #[error(transparent)]
    Magnetics(#[from] MagneticsError),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// Which friction law runs inside the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrictionLaw {
    /// μ = μ₀ − c(|v|) ln(v*/|v|) with the learned `c(v)`.
    #[default]
    SteadyLowSpeed,
    /// Full rate-and-state law with θ evolving along the run.
    RateState,
}

/// EPM layout used to build the source assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpmLayout {
    /// The whole block as one equivalent dipole at its center.
    #[default]
    Single,
    Halbach4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub capsule_mass: f64,
    /// Constant tether drag f_s, N.
    pub tether_drag: f64,
    pub gravity: f64,
    /// Vertical EPM–IPM dipole separation, m.
    pub plate_height: f64,
    pub friction: FrictionParams,
    pub friction_law: FrictionLaw,
    pub c_model: CModel,
    pub epm_spec: MagnetSpec,
    pub epm_layout: EpmLayout,
    pub epm: MagnetAssembly,
    pub ipm_spec: MagnetSpec,
    pub ipm_moment: Vector3<f64>,
    pub integrator_step: f64,
    /// Integrator steps per planner sample.
    pub control_substeps: usize,
}

impl Default for Scene {
    fn default() -> Self {
        Self::build(SceneParams::default()).expect("default scene is valid")
    }
}

/// Plain parameter record that [`Scene::build`] validates and expands.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub capsule_mass: f64,
    pub tether_drag: f64,
    pub gravity: f64,
    pub plate_height: f64,
    pub friction: FrictionParams,
    pub friction_law: FrictionLaw,
    pub c_model: CModel,
    pub epm_spec: MagnetSpec,
    pub epm_layout: EpmLayout,
    pub ipm_spec: MagnetSpec,
    pub integrator_step: f64,
    pub control_substeps: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            capsule_mass: 0.0209,
            tether_drag: 0.03,
            gravity: 9.81,
            plate_height: 0.1,
            friction: FrictionParams::default(),
            friction_law: FrictionLaw::SteadyLowSpeed,
            c_model: CModel::default_fit(),
            epm_spec: MagnetSpec::default_epm_block(),
            epm_layout: EpmLayout::Single,
            ipm_spec: MagnetSpec::default_ipm_annulus(),
            integrator_step: 1e-3,
            control_substeps: 10,
        }
    }
}

impl Scene {
    pub fn build(p: SceneParams) -> Result<Self> {
        let bad = |msg: String| Err(DynamicsError::InvalidScene(msg));
        if !(p.capsule_mass.is_finite() && p.capsule_mass > 0.0) {
            return bad(format!("capsule mass must be positive, got {}", p.capsule_mass));
        }
        if !(p.tether_drag.is_finite() && p.tether_drag >= 0.0) {
            return bad(format!("tether drag must be non-negative, got {}", p.tether_drag));
        }
        if !(p.gravity.is_finite() && p.gravity >= 0.0) {
            return bad(format!("gravity must be non-negative, got {}", p.gravity));
        }
        if !(p.plate_height >= magnetics::MIN_SEPARATION) {
            return bad(format!(
                "plate height {} m is below the {} m dipole limit",
                p.plate_height,
                magnetics::MIN_SEPARATION
            ));
        }
        if !(p.integrator_step.is_finite() && p.integrator_step > 0.0) {
            return bad(format!("integrator step must be positive, got {}", p.integrator_step));
        }
        if p.control_substeps == 0 {
            return bad("control substeps must be at least 1".into());
        }
        p.friction
            .validate()
            .map_err(|e| DynamicsError::InvalidScene(e.to_string()))?;
        let epm = match p.epm_layout {
            EpmLayout::Single => MagnetAssembly::single(p.epm_spec),
            EpmLayout::Halbach4 => MagnetAssembly::halbach4(p.epm_spec)?,
        };
        let ipm_moment = magnetics::moment_from_spec(&p.ipm_spec)?;
        Ok(Self {
            capsule_mass: p.capsule_mass,
            tether_drag: p.tether_drag,
            gravity: p.gravity,
            plate_height: p.plate_height,
            friction: p.friction,
            friction_law: p.friction_law,
            c_model: p.c_model,
            epm_spec: p.epm_spec,
            epm_layout: p.epm_layout,
            epm,
            ipm_spec: p.ipm_spec,
            ipm_moment,
            integrator_step: p.integrator_step,
            control_substeps: p.control_substeps,
        })
    }

    pub fn params(&self) -> SceneParams {
        SceneParams {
            capsule_mass: self.capsule_mass,
            tether_drag: self.tether_drag,
            gravity: self.gravity,
            plate_height: self.plate_height,
            friction: self.friction,
            friction_law: self.friction_law,
            c_model: self.c_model.clone(),
            epm_spec: self.epm_spec,
            epm_layout: self.epm_layout,
            ipm_spec: self.ipm_spec,
            integrator_step: self.integrator_step,
            control_substeps: self.control_substeps,
        }
    }

    pub fn weight(&self) -> f64 {
        self.capsule_mass * self.gravity
    }

    /// Planner sample period.
    pub fn sample_period(&self) -> f64 {
        self.integrator_step * self.control_substeps as f64
    }

    /// EPM pose directly above a plate point.
    pub fn epm_above(&self, point: Vector2<f64>) -> Vector3<f64> {
        Vector3::new(point.x, point.y, self.plate_height)
    }

    pub fn ipm_dipole(&self, position: Vector2<f64>) -> Dipole {
        Dipole {
            position: Vector3::new(position.x, position.y, 0.0),
            moment: self.ipm_moment,
        }
    }

    /// Magnetic wrench on the IPM at `capsule` from the EPM at `epm_position`.
    pub fn magnetic_wrench(&self, capsule: Vector2<f64>, epm_position: Vector3<f64>) -> Result<magnetics::Wrench> {
        let sources = self.epm.dipoles_at(epm_position)?;
        Ok(magnetics::force_between(&sources, &self.ipm_dipole(capsule))?)
    }

    /// Hex SHA-256 over the exact bit patterns of every parameter.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |x: f64| h.update(x.to_bits().to_le_bytes());
        for x in [
            self.capsule_mass,
            self.tether_drag,
            self.gravity,
            self.plate_height,
            self.friction.mu0,
            self.friction.a,
            self.friction.b,
            self.friction.v_star,
            self.friction.d_c,
            self.integrator_step,
            self.control_substeps as f64,
            self.c_model.valid_range().0,
            self.c_model.valid_range().1,
        ] {
            put(x);
        }
        for p in self.c_model.coefficients() {
            put(*p);
        }
        for e in self.epm.elements() {
            put(e.spec.remanence);
            put(e.spec.shape.volume());
            for x in e.offset.iter().chain(e.rotation.matrix().iter()) {
                put(*x);
            }
        }
        for x in self.ipm_moment.iter() {
            put(*x);
        }
        put(match self.friction_law {
            FrictionLaw::SteadyLowSpeed => 0.0,
            FrictionLaw::RateState => 1.0,
        });
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsuleState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    pub theta: ThetaState,
    pub attached: bool,
}

impl CapsuleState {
    pub fn at_rest(position: Vector2<f64>) -> Self {
        Self {
            position,
            velocity: Vector2::zeros(),
            theta: ThetaState::default(),
            attached: true,
        }
    }

    pub fn kinetic_energy(&self, mass: f64) -> f64 {
        0.5 * mass * self.velocity.norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceBreakdown {
    pub magnetic_planar: Vector2<f64>,
    pub magnetic_vertical: f64,
    pub normal: f64,
    pub friction: Vector2<f64>,
    pub drag: Vector2<f64>,
    pub net: Vector2<f64>,
    /// Kinetic friction coefficient actually applied (zero when static).
    pub mu: f64,
    /// The capsule is at rest and held by static friction.
    pub held: bool,
    /// `c(v)` had to be clamped to the model range.
    pub extrapolated: bool,
}

fn unit_or_zero(v: Vector2<f64>) -> Vector2<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vector2::zeros()
    }
}

/// Applied kinetic friction coefficient at `speed` (≥ [`V_MIN`]), clamped
/// at zero. Returns the coefficient and the extrapolation flag.
pub fn kinetic_mu(speed: f64, theta: ThetaState, scene: &Scene) -> (f64, bool) {
    let p = &scene.friction;
    match scene.friction_law {
        FrictionLaw::SteadyLowSpeed => {
            let cv = c_of_v(&scene.c_model, speed);
            // The low-speed log term is zero once |v| reaches v*.
            let mu = if speed < p.v_star {
                friction::mu_steady_lowspeed(speed, cv.c, p).expect("speed inside (0, v*)")
            } else {
                p.mu0
            };
            (mu.max(0.0), cv.extrapolated)
        }
        FrictionLaw::RateState => {
            let mu = friction::mu_rate_state(speed, theta, p).expect("speed above internal minimum");
            (mu.max(0.0), false)
        }
    }
}

/// Largest planar pull static friction plus tether drag can hold.
pub fn static_budget(normal: f64, scene: &Scene) -> f64 {
    scene.friction.mu0 * normal + scene.tether_drag
}

pub fn compute_forces(state: &CapsuleState, epm_position: Vector3<f64>, scene: &Scene) -> Result<ForceBreakdown> {
    let w = scene.magnetic_wrench(state.position, epm_position)?;
    let planar = w.force.xy();
    let f_z = w.force.z;
    let weight = scene.weight();
    if !state.attached || f_z <= weight {
        return Err(DynamicsError::Detached { f_z, weight });
    }
    let normal = (f_z - weight).max(0.0);
    let speed = state.velocity.norm();

    let (friction, drag, mu, held, extrapolated) = if speed >= V_MIN {
        let dir = state.velocity / speed;
        let (mu, extrapolated) = kinetic_mu(speed, state.theta, scene);
        (-dir * (mu * normal), -dir * scene.tether_drag, mu, false, extrapolated)
    } else {
        let pull = planar.norm();
        let dir = unit_or_zero(planar);
        if pull <= static_budget(normal, scene) {
            let drag_part = pull.min(scene.tether_drag);
            (-dir * (pull - drag_part), -dir * drag_part, 0.0, true, false)
        } else {
            // breaking away: kinetic friction at the rest threshold
            let (mu, extrapolated) = kinetic_mu(V_MIN, state.theta, scene);
            (-dir * (mu * normal), -dir * scene.tether_drag, mu, false, extrapolated)
        }
    };

    Ok(ForceBreakdown {
        magnetic_planar: planar,
        magnetic_vertical: f_z,
        normal,
        friction,
        drag,
        net: planar + friction + drag,
        mu,
        held,
        extrapolated,
    })
}

fn advance_theta(theta: ThetaState, speed: f64, dt: f64, params: &FrictionParams) -> ThetaState {
    if speed >= V_MIN {
        friction::theta_closed_form(dt, theta, speed, params).expect("positive speed and step")
    } else {
        friction::theta_static(dt, theta)
    }
}

/// One integrator step. Returns the new state and the forces it was built from.
pub fn step_with_forces(
    state: &CapsuleState,
    epm_position: Vector3<f64>,
    scene: &Scene,
    dt: f64,
) -> Result<(CapsuleState, ForceBreakdown)> {
    let forces = compute_forces(state, epm_position, scene)?;
    if forces.held {
        let next = CapsuleState {
            velocity: Vector2::zeros(),
            theta: friction::theta_static(dt, state.theta),
            ..*state
        };
        return Ok((next, forces));
    }

    let mut velocity = state.velocity + forces.net * (dt / scene.capsule_mass);
    // A velocity that reverses or dies out inside the step passed through
    // rest; static friction catches it if the pull is within budget.
    let crossed_rest = velocity.norm() < V_MIN || velocity.dot(&state.velocity) < 0.0;
    if crossed_rest && forces.magnetic_planar.norm() <= static_budget(forces.normal, scene) {
        velocity = Vector2::zeros();
    }
    let position = state.position + velocity * dt;
    let theta = advance_theta(state.theta, velocity.norm(), dt, &scene.friction);
    Ok((
        CapsuleState {
            position,
            velocity,
            theta,
            attached: true,
        },
        forces,
    ))
}

pub fn step(state: &CapsuleState, epm_position: Vector3<f64>, scene: &Scene, dt: f64) -> Result<CapsuleState> {
    step_with_forces(state, epm_position, scene, dt).map(|(s, _)| s)
}

/// EPM positions sampled uniformly in time, starting at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EpmTrajectory {
    sample_period: f64,
    points: Vec<Vector3<f64>>,
}

impl EpmTrajectory {
    pub fn new(sample_period: f64, points: Vec<Vector3<f64>>) -> Result<Self> {
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(DynamicsError::InvalidTrajectory(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(DynamicsError::InvalidTrajectory("non-finite EPM position".into()));
        }
        Ok(Self {
            sample_period,
            points,
        })
    }

    /// Builds from explicit `(t, position)` pairs; times must start at 0 and
    /// be uniformly spaced.
    pub fn from_timed(samples: &[(f64, Vector3<f64>)]) -> Result<Self> {
        if samples.len() < 2 {
            let period = 1.0;
            return Self::new(period, samples.iter().map(|s| s.1).collect());
        }
        let period = samples[1].0 - samples[0].0;
        if samples[0].0 != 0.0 {
            return Err(DynamicsError::InvalidTrajectory("first sample must be at t = 0".into()));
        }
        for (k, w) in samples.windows(2).enumerate() {
            let dt = w[1].0 - w[0].0;
            if !(dt > 0.0) {
                return Err(DynamicsError::InvalidTrajectory(format!(
                    "timestamps must increase strictly (sample {})",
                    k + 1
                )));
            }
            if ((dt - period) / period).abs() > 1e-9 {
                return Err(DynamicsError::InvalidTrajectory(format!(
                    "non-uniform spacing at sample {}",
                    k + 1
                )));
            }
        }
        Self::new(period, samples.iter().map(|s| s.1).collect())
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.sample_period
    }

    pub fn duration(&self) -> f64 {
        self.time(self.points.len().saturating_sub(1))
    }
}

fn row(t: f64, epm: Vector3<f64>, state: &CapsuleState, force: Vector3<f64>, normal: f64) -> LogRow {
    LogRow {
        t,
        epm,
        ipm_position: state.position,
        ipm_velocity: state.velocity,
        magnetic_force: force,
        normal_force: normal,
        theta: state.theta.get(),
        attached: state.attached,
    }
}

/// Runs the capsule along an EPM trajectory, logging one row per EPM sample.
///
/// Between samples the EPM moves linearly. The first row is the initial
/// state at t = 0. A detachment ends the run early with a marked log.
pub fn simulate(initial: &CapsuleState, trajectory: &EpmTrajectory, scene: &Scene) -> Result<TrajectoryLog> {
    let dt = scene.integrator_step;
    let ratio = trajectory.sample_period() / dt;
    let substeps = ratio.round();
    if trajectory.len() > 1 && (substeps < 1.0 || (ratio - substeps).abs() > STEP_RATIO_TOLERANCE * ratio) {
        return Err(DynamicsError::InvalidTrajectory(format!(
            "sample period {} s is not a whole multiple of the {} s integrator step",
            trajectory.sample_period(),
            dt
        )));
    }
    let substeps = substeps.max(1.0) as usize;
    let period = if trajectory.len() > 1 {
        trajectory.sample_period()
    } else {
        scene.sample_period()
    };
    let mut log = TrajectoryLog::new(scene.fingerprint(), period);

    let first_epm = trajectory
        .points()
        .first()
        .copied()
        .unwrap_or_else(|| scene.epm_above(initial.position));
    let mut state = *initial;
    match compute_forces(&state, first_epm, scene) {
        Ok(f) => {
            let force = Vector3::new(f.magnetic_planar.x, f.magnetic_planar.y, f.magnetic_vertical);
            log.push(row(0.0, first_epm, &state, force, f.normal));
        }
        Err(DynamicsError::Detached { .. }) => {
            let w = scene.magnetic_wrench(state.position, first_epm)?;
            state.attached = false;
            log.push(row(0.0, first_epm, &state, w.force, 0.0));
            log.termination = Termination::Detached { t: 0.0 };
            return Ok(log);
        }
        Err(e) => return Err(e),
    }

    for k in 1..trajectory.len() {
        let from = trajectory.points()[k - 1];
        let to = trajectory.points()[k];
        // forces use the EPM pose at the start of each integrator step
        for j in 0..substeps {
            let epm = from + (to - from) * (j as f64 / substeps as f64);
            match step_with_forces(&state, epm, scene, dt) {
                Ok((next, forces)) => {
                    if forces.extrapolated {
                        log.extrapolated_steps += 1;
                    }
                    state = next;
                }
                Err(DynamicsError::Detached { .. }) => {
                    let t = trajectory.time(k - 1) + j as f64 * dt;
                    let w = scene.magnetic_wrench(state.position, epm)?;
                    state.attached = false;
                    log.push(row(t, epm, &state, w.force, 0.0));
                    log.termination = Termination::Detached { t };
                    return Ok(log);
                }
                Err(e) => return Err(e),
            }
        }
        let t = trajectory.time(k);
        match compute_forces(&state, to, scene) {
            Ok(f) => {
                let force = Vector3::new(f.magnetic_planar.x, f.magnetic_planar.y, f.magnetic_vertical);
                log.push(row(t, to, &state, force, f.normal));
            }
            Err(DynamicsError::Detached { .. }) => {
                let w = scene.magnetic_wrench(state.position, to)?;
                state.attached = false;
                log.push(row(t, to, &state, w.force, 0.0));
                log.termination = Termination::Detached { t };
                return Ok(log);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Scene {
        Scene::default()
    }

    #[test]
    fn overhead_epm_holds_capsule_still() {
        let s = scene();
        let st = CapsuleState::at_rest(Vector2::new(0.01, -0.02));
        let f = compute_forces(&st, s.epm_above(st.position), &s).unwrap();
        assert!(f.magnetic_planar.norm() < 1e-15);
        assert_eq!(f.net, Vector2::zeros());
        assert!(f.held);
        let next = step(&st, s.epm_above(st.position), &s, s.integrator_step).unwrap();
        assert_eq!(next.position, st.position);
        assert_eq!(next.velocity, Vector2::zeros());
        assert!((next.theta.get() - s.integrator_step).abs() < 1e-18);
    }

    #[test]
    fn coaxial_normal_force() {
        let s = scene();
        let st = CapsuleState::at_rest(Vector2::zeros());
        let f = compute_forces(&st, s.epm_above(Vector2::zeros()), &s).unwrap();
        assert!((f.magnetic_vertical - 2.547).abs() < 1e-3);
        assert!((s.weight() - 0.20503).abs() < 1e-5);
        assert!((f.normal - 2.342).abs() < 1e-3, "{}", f.normal);
    }

    #[test]
    fn weak_pull_detaches() {
        let s = scene();
        let st = CapsuleState::at_rest(Vector2::zeros());
        let err = compute_forces(&st, Vector3::new(0.15, 0.0, 0.25), &s).unwrap_err();
        assert!(matches!(err, DynamicsError::Detached { .. }));
    }

    #[test]
    fn strong_pull_acceleration_matches_hand_balance() {
        let s = scene();
        let f_n = compute_forces(&CapsuleState::at_rest(Vector2::zeros()), s.epm_above(Vector2::zeros()), &s)
            .unwrap()
            .normal;
        // Hand balance with F = 1 N along +x and the capsule moving at 0.02 m/s.
        let mu = 0.22 - 0.093956 * 10f64.ln();
        let a = (1.0 - 0.03 - mu * f_n) / 0.0209;
        assert!((a - 46.0).abs() < 0.1, "{a}");
        let st = CapsuleState {
            velocity: Vector2::new(0.02, 0.0),
            ..CapsuleState::at_rest(Vector2::zeros())
        };
        let (m, _) = kinetic_mu(0.02, st.theta, &s);
        assert!((m - mu).abs() < 1e-6);
        let net = 1.0 - s.tether_drag - m * f_n;
        assert!((net / s.capsule_mass - a).abs() < 0.01);
    }

    #[test]
    fn moving_friction_opposes_velocity() {
        let s = scene();
        let st = CapsuleState {
            velocity: Vector2::new(0.015, -0.02),
            ..CapsuleState::at_rest(Vector2::zeros())
        };
        let f = compute_forces(&st, Vector3::new(0.004, 0.001, s.plate_height), &s).unwrap();
        assert!(f.friction.dot(&st.velocity) <= 0.0);
        assert!(f.drag.dot(&st.velocity) <= 0.0);
        assert!(!f.held);
    }

    #[test]
    fn sliding_capsule_under_fixed_epm_stops() {
        let s = scene();
        let mut st = CapsuleState {
            velocity: Vector2::new(0.02, 0.0),
            ..CapsuleState::at_rest(Vector2::zeros())
        };
        let epm = s.epm_above(Vector2::zeros());
        let mut speed = st.velocity.norm();
        for _ in 0..200 {
            st = step(&st, epm, &s, s.integrator_step).unwrap();
            let now = st.velocity.norm();
            assert!(now <= speed);
            speed = now;
        }
        assert_eq!(speed, 0.0);
    }

    #[test]
    fn rate_state_law_runs() {
        let s = Scene::build(SceneParams {
            friction_law: FrictionLaw::RateState,
            ..SceneParams::default()
        })
        .unwrap();
        let st = CapsuleState {
            velocity: Vector2::new(0.02, 0.0),
            theta: friction::theta_steady(0.02, &s.friction).unwrap(),
            ..CapsuleState::at_rest(Vector2::zeros())
        };
        let (mu, _) = kinetic_mu(0.02, st.theta, &s);
        assert!((mu - s.friction.mu0).abs() < 1e-12);
        let next = step(&st, s.epm_above(Vector2::zeros()), &s, s.integrator_step).unwrap();
        assert!(next.velocity.x < 0.02);
        assert_ne!(s.fingerprint(), scene().fingerprint());
    }

    #[test]
    fn empty_trajectory_logs_initial_sample_only() {
        let s = scene();
        let traj = EpmTrajectory::new(s.sample_period(), vec![]).unwrap();
        let log = simulate(&CapsuleState::at_rest(Vector2::zeros()), &traj, &s).unwrap();
        assert_eq!(log.rows.len(), 1);
        assert_eq!(log.rows[0].t, 0.0);
        assert_eq!(log.termination, Termination::Complete);
    }

    #[test]
    fn period_must_be_multiple_of_step() {
        let s = scene();
        let pts = vec![s.epm_above(Vector2::zeros()); 3];
        let traj = EpmTrajectory::new(0.0105, pts).unwrap();
        assert!(simulate(&CapsuleState::at_rest(Vector2::zeros()), &traj, &s).is_err());
        let bad = [(0.0, Vector3::zeros()), (0.01, Vector3::zeros()), (0.03, Vector3::zeros())];
        assert!(EpmTrajectory::from_timed(&bad).is_err());
        let backwards = [(0.0, Vector3::zeros()), (-0.01, Vector3::zeros())];
        assert!(EpmTrajectory::from_timed(&backwards).is_err());
    }

    #[test]
    fn detachment_ends_run_with_marker() {
        let s = scene();
        let pts: Vec<_> = (0..50)
            .map(|k| Vector3::new(0.0, 0.0, s.plate_height + 0.004 * k as f64))
            .collect();
        let traj = EpmTrajectory::new(s.sample_period(), pts).unwrap();
        let log = simulate(&CapsuleState::at_rest(Vector2::zeros()), &traj, &s).unwrap();
        let Termination::Detached { t } = log.termination else {
            panic!("expected detachment");
        };
        assert!(t > 0.0);
        assert!(!log.rows.last().unwrap().attached);
        assert!(log.rows[..log.rows.len() - 1].iter().all(|r| r.attached));
    }
}
