//! Friction-model identification from logged trajectories.
//!
//! The pipeline differentiates the logged EPM and IPM positions, inverts the
//! low-speed force balance
//!
//! ```text
//! m a∥ = F∥ − f_s − F_N (μ₀ − c ln(v*/|v|))
//! ```
//!
//! for `c` at every sample (projecting onto the EPM's direction of motion,
//! with `v` the EPM speed), and fits a polynomial `c(v)` by least squares.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::dynamics::{DynamicsError, Scene, V_MIN};
use crate::friction::{CModel, FrictionError};
use crate::log::TrajectoryLog;

pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_DEGREE: usize = 4;
/// Fits whose equilibrated design exceeds this condition number are flagged.
pub const CONDITION_WARNING: f64 = 1e10;
/// Minimum accepted samples for [`learn_model`].
pub const MIN_ACCEPTED: usize = 50;
/// Samples with `|ln(v*/|v|)|` below this are rejected.
pub const SINGULAR_LOG: f64 = 1e-3;

const SPACING_TOLERANCE: f64 = 1e-6;
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SysidError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("smoothing window must be a positive odd number, got {0}")]
    BadWindow(usize),
    #[error("sample spacing is not uniform at row {0}")]
    NonUniformSpacing(usize),
    #[error("design matrix is rank deficient (all speeds identical?)")]
    RankDeficient,
    #[error("only {accepted} samples survived rejection, need {needed}")]
    InsufficientData { accepted: usize, needed: usize },
    #[error("fitted model is unusable: {0}")]
    Model(#[from] FrictionError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

pub type Result<T> = std::result::Result<T, SysidError>;

/// Why a sample could not yield a friction constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rejection {
    SpeedOutOfRange,
    Detached,
    SingularDenominator,
}

/// One time step with its derived kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub epm_position: Vector3<f64>,
    pub ipm_position: Vector2<f64>,
    pub attached: bool,
    pub epm_velocity: Vector3<f64>,
    pub epm_speed: f64,
    pub ipm_velocity: Vector2<f64>,
    pub ipm_accel: Vector2<f64>,
}

/// Pointwise fit residual `c − p(v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub v: f64,
    pub c: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: CModel,
    pub sample_count: usize,
    pub sse: f64,
    pub residuals: Vec<Residual>,
    pub condition_number: f64,
}

impl FitReport {
    pub fn ill_conditioned(&self) -> bool {
        self.condition_number > CONDITION_WARNING
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RejectionTally {
    pub accepted: usize,
    pub speed_out_of_range: usize,
    pub detached: usize,
    pub singular_denominator: usize,
}

impl RejectionTally {
    pub fn rejected(&self) -> usize {
        self.speed_out_of_range + self.detached + self.singular_denominator
    }

    pub fn total(&self) -> usize {
        self.accepted + self.rejected()
    }

    fn count(&mut self, outcome: &std::result::Result<f64, Rejection>) {
        match outcome {
            Ok(_) => self.accepted += 1,
            Err(Rejection::SpeedOutOfRange) => self.speed_out_of_range += 1,
            Err(Rejection::Detached) => self.detached += 1,
            Err(Rejection::SingularDenominator) => self.singular_denominator += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    pub fit: FitReport,
    pub tally: RejectionTally,
}

/// Least-squares quadratic weights over a `2m+1` window, evaluated at
/// offset `j` from the window center.
fn quadratic_weights(m: usize, j: isize) -> Vec<f64> {
    let w = 2 * m + 1;
    let a = DMatrix::from_fn(w, 3, |r, c| (r as f64 - m as f64).powi(c as i32));
    let ata: Matrix3<f64> = (a.transpose() * &a).fixed_view::<3, 3>(0, 0).into_owned();
    let inv = ata.try_inverse().expect("quadratic design over 3+ points is invertible");
    let e = Vector3::new(1.0, j as f64, (j * j) as f64);
    let row = e.transpose() * inv;
    (0..w)
        .map(|r| {
            let k = r as f64 - m as f64;
            row[0] + row[1] * k + row[2] * k * k
        })
        .collect()
}

/// Moving least-squares quadratic smoothing. Edge points take their value
/// from the fit over the first (or last) full window.
pub fn smooth_quadratic(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(SysidError::BadWindow(window));
    }
    if values.len() < window {
        return Err(SysidError::TooFewSamples {
            needed: window,
            got: values.len(),
        });
    }
    if window <= 3 {
        // a quadratic through three points reproduces them
        return Ok(values.to_vec());
    }
    let m = window / 2;
    let n = values.len();
    let center = quadratic_weights(m, 0);
    let dot = |w: &[f64], start: usize| w.iter().zip(&values[start..start + window]).map(|(a, b)| a * b).sum::<f64>();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate().take(n - m).skip(m) {
        *o = dot(&center, i - m);
    }
    for i in 0..m {
        let j = i as isize - m as isize;
        out[i] = dot(&quadratic_weights(m, j), 0);
        out[n - 1 - i] = dot(&quadratic_weights(m, -j), n - window);
    }
    Ok(out)
}

/// First and second derivatives: central differences inside, second-order
/// one-sided stencils at the ends. Exact for quadratics.
fn derivatives(x: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        d1[i] = (x[i + 1] - x[i - 1]) / (2.0 * h);
        d2[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / (h * h);
    }
    d1[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * h);
    d1[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * h);
    d2[0] = (x[0] - 2.0 * x[1] + x[2]) / (h * h);
    d2[n - 1] = (x[n - 1] - 2.0 * x[n - 2] + x[n - 3]) / (h * h);
    (d1, d2)
}

/// Smooths and differentiates one uniformly sampled coordinate.
pub fn differentiate_series(values: &[f64], h: f64, window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let needed = window.max(3);
    if values.len() < needed {
        return Err(SysidError::TooFewSamples {
            needed,
            got: values.len(),
        });
    }
    let smoothed = smooth_quadratic(values, window)?;
    Ok(derivatives(&smoothed, h))
}

pub fn differentiate(log: &TrajectoryLog, smoothing_window: usize) -> Result<Vec<SampleRecord>> {
    if smoothing_window == 0 || smoothing_window.is_multiple_of(2) {
        return Err(SysidError::BadWindow(smoothing_window));
    }
    let rows = &log.rows;
    let needed = smoothing_window.max(3);
    if rows.len() < needed {
        return Err(SysidError::TooFewSamples {
            needed,
            got: rows.len(),
        });
    }
    let h = rows[1].t - rows[0].t;
    for (k, w) in rows.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if !(h > 0.0) || ((dt - h) / h).abs() > SPACING_TOLERANCE {
            return Err(SysidError::NonUniformSpacing(k + 1));
        }
    }
    let column = |f: &dyn Fn(&crate::log::LogRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let d = |f: &dyn Fn(&crate::log::LogRow) -> f64| differentiate_series(&column(f), h, smoothing_window);
    let (ex, _) = d(&|r| r.epm.x)?;
    let (ey, _) = d(&|r| r.epm.y)?;
    let (ez, _) = d(&|r| r.epm.z)?;
    let (ix, iax) = d(&|r| r.ipm_position.x)?;
    let (iy, iay) = d(&|r| r.ipm_position.y)?;
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let epm_velocity = Vector3::new(ex[i], ey[i], ez[i]);
            SampleRecord {
                t: r.t,
                epm_position: r.epm,
                ipm_position: r.ipm_position,
                attached: r.attached,
                epm_velocity,
                epm_speed: epm_velocity.norm(),
                ipm_velocity: Vector2::new(ix[i], iy[i]),
                ipm_accel: Vector2::new(iax[i], iay[i]),
            }
        })
        .collect())
}

/// Accepted-sample quantities entering the force balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceTerms {
    pub speed: f64,
    /// Capsule acceleration along the EPM's direction of motion.
    pub accel_parallel: f64,
    /// Planar magnetic pull along the same direction.
    pub force_parallel: f64,
    pub normal: f64,
}

/// Projects a record onto its motion direction, or says why it cannot be.
pub fn balance_terms(record: &SampleRecord, scene: &Scene) -> std::result::Result<BalanceTerms, Rejection> {
    if !record.attached {
        return Err(Rejection::Detached);
    }
    let w = scene
        .magnetic_wrench(record.ipm_position, record.epm_position)
        .map_err(|_| Rejection::Detached)?;
    let normal = w.force.z - scene.weight();
    if !(normal > 0.0) {
        return Err(Rejection::Detached);
    }
    let speed = record.epm_speed;
    let v_star = scene.friction.v_star;
    if speed > 0.0 && (v_star / speed).ln().abs() < SINGULAR_LOG {
        return Err(Rejection::SingularDenominator);
    }
    if !(speed > V_MIN && speed < v_star) {
        return Err(Rejection::SpeedOutOfRange);
    }
    let planar = record.epm_velocity.xy();
    let dir = planar / planar.norm();
    Ok(BalanceTerms {
        speed,
        accel_parallel: record.ipm_accel.dot(&dir),
        force_parallel: w.force.xy().dot(&dir),
        normal,
    })
}

/// `c` solving the balance for the given terms.
pub fn solve_c(terms: &BalanceTerms, scene: &Scene) -> f64 {
    let p = &scene.friction;
    (scene.capsule_mass * terms.accel_parallel - terms.force_parallel + scene.tether_drag + p.mu0 * terms.normal)
        / (terms.normal * (p.v_star / terms.speed).ln())
}

/// Acceleration along the motion direction predicted for a given `c`.
pub fn predicted_accel(c: f64, speed: f64, force_parallel: f64, normal: f64, scene: &Scene) -> f64 {
    let p = &scene.friction;
    let mu = p.mu0 - c * (p.v_star / speed).ln();
    (force_parallel - scene.tether_drag - normal * mu) / scene.capsule_mass
}

pub fn extract_c(record: &SampleRecord, scene: &Scene) -> std::result::Result<f64, Rejection> {
    balance_terms(record, scene).map(|t| solve_c(&t, scene))
}

/// Least-squares polynomial fit of `c` against `v`.
///
/// Columns of the Vandermonde design are equilibrated to unit norm and the
/// system is solved by Householder QR.
pub fn fit_polynomial(samples: &[(f64, f64)], degree: usize) -> Result<FitReport> {
    let n = samples.len();
    let cols = degree + 1;
    if n < cols {
        return Err(SysidError::TooFewSamples { needed: cols, got: n });
    }
    // highest power first, matching CModel
    let design = DMatrix::from_fn(n, cols, |r, c| samples[r].0.powi((degree - c) as i32));
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let norms: Vec<f64> = (0..cols).map(|c| design.column(c).norm()).collect();
    if norms.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(SysidError::RankDeficient);
    }
    let mut scaled = design.clone();
    for (c, s) in norms.iter().enumerate() {
        scaled.column_mut(c).scale_mut(1.0 / s);
    }
    let sv = scaled.clone().singular_values();
    let (smin, smax) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
    if !(smin > RANK_TOLERANCE * smax) {
        return Err(SysidError::RankDeficient);
    }
    let condition_number = smax / smin;

    let qr = scaled.qr();
    let qty = qr.q().transpose() * &y;
    let r = qr.r();
    let z = r
        .solve_upper_triangular(&qty)
        .ok_or(SysidError::RankDeficient)?;
    let coefficients: Vec<f64> = z.iter().zip(&norms).map(|(z, s)| z / s).collect();

    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.0), hi.max(s.0)));
    let model = CModel::new(coefficients, (lo, hi))?;
    let residuals: Vec<Residual> = samples
        .iter()
        .map(|&(v, c)| Residual {
            v,
            c,
            residual: c - model.eval(v),
        })
        .collect();
    let sse = residuals.iter().map(|r| r.residual * r.residual).sum();
    Ok(FitReport {
        model,
        sample_count: n,
        sse,
        residuals,
        condition_number,
    })
}

/// Extracts `c` from every record, returning accepted `(v, c)` pairs.
pub fn extract_all(records: &[SampleRecord], scene: &Scene) -> (Vec<(f64, f64)>, RejectionTally) {
    let mut tally = RejectionTally::default();
    let mut pairs = Vec::new();
    for r in records {
        let outcome = extract_c(r, scene);
        tally.count(&outcome);
        if let Ok(c) = outcome {
            pairs.push((r.epm_speed, c));
        }
    }
    (pairs, tally)
}

/// Pools accepted samples from several logs, each differentiated on its own,
/// and fits a polynomial of `degree`.
pub fn learn_model_from_logs(logs: &[TrajectoryLog], scene: &Scene, smoothing_window: usize, degree: usize) -> Result<LearnedModel> {
    let mut pairs = Vec::new();
    let mut tally = RejectionTally::default();
    for log in logs {
        let records = differentiate(log, smoothing_window)?;
        let (p, t) = extract_all(&records, scene);
        pairs.extend(p);
        tally.accepted += t.accepted;
        tally.speed_out_of_range += t.speed_out_of_range;
        tally.detached += t.detached;
        tally.singular_denominator += t.singular_denominator;
    }
    if tally.accepted < MIN_ACCEPTED {
        return Err(SysidError::InsufficientData {
            accepted: tally.accepted,
            needed: MIN_ACCEPTED,
        });
    }
    let fit = fit_polynomial(&pairs, degree)?;
    Ok(LearnedModel { fit, tally })
}

pub fn learn_model_with_degree(log: &TrajectoryLog, scene: &Scene, smoothing_window: usize, degree: usize) -> Result<LearnedModel> {
    learn_model_from_logs(std::slice::from_ref(log), scene, smoothing_window, degree)
}

pub fn learn_model(log: &TrajectoryLog, scene: &Scene, smoothing_window: usize) -> Result<LearnedModel> {
    learn_model_with_degree(log, scene, smoothing_window, DEFAULT_DEGREE)
}

/// RK4 substeps per sample in [`synthesize_ramp`].
const SYNTH_SUBSTEPS: usize = 20;

/// Log of a capsule obeying the force balance exactly while the EPM moves
/// along +x with speed ramping linearly from `speeds.0` to `speeds.1`.
///
/// Friction follows `scene.c_model` evaluated at the EPM speed, so applying
/// [`learn_model`] to the result should recover that model.
pub fn synthesize_ramp(scene: &Scene, speeds: (f64, f64), duration: f64) -> Result<TrajectoryLog> {
    let (v0, v1) = speeds;
    let p = &scene.friction;
    if !(v0 > V_MIN && v1 > V_MIN && v0 < p.v_star && v1 < p.v_star && duration > 0.0) {
        return Err(SysidError::Dynamics(DynamicsError::InvalidTrajectory(format!(
            "ramp speeds must lie in ({V_MIN}, {}) m/s", p.v_star
        ))));
    }
    let period = scene.sample_period();
    let alpha = (v1 - v0) / duration;
    let epm_x = |t: f64| v0 * t + 0.5 * alpha * t * t;
    let epm_v = |t: f64| v0 + alpha * t;
    let pull = |x_ipm: f64, t: f64| -> Result<(Vector3<f64>, f64)> {
        let w = scene.magnetic_wrench(Vector2::new(x_ipm, 0.0), scene.epm_above(Vector2::new(epm_x(t), 0.0)))?;
        Ok((w.force, w.force.z - scene.weight()))
    };
    let accel = |x_ipm: f64, t: f64| -> Result<f64> {
        let (f, normal) = pull(x_ipm, t)?;
        let v = epm_v(t);
        let mu = p.mu0 - scene.c_model.eval(v) * (p.v_star / v).ln();
        Ok((f.x - scene.tether_drag - normal * mu) / scene.capsule_mass)
    };

    // start on the moving equilibrium: the lag whose net force gives accel alpha
    let (mut lo, mut hi) = (0.0, 0.5 * scene.plate_height);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if accel(-mid, 0.0)? < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = -0.5 * (lo + hi);
    let mut v = v0;

    let samples = (duration / period).floor() as usize;
    let mut log = TrajectoryLog::new(scene.fingerprint(), period);
    let h = period / SYNTH_SUBSTEPS as f64;
    for k in 0..=samples {
        let t = k as f64 * period;
        if k > 0 {
            let t0 = (k - 1) as f64 * period;
            for j in 0..SYNTH_SUBSTEPS {
                let s = t0 + j as f64 * h;
                let k1 = (v, accel(x, s)?);
                let k2 = (v + 0.5 * h * k1.1, accel(x + 0.5 * h * k1.0, s + 0.5 * h)?);
                let k3 = (v + 0.5 * h * k2.1, accel(x + 0.5 * h * k2.0, s + 0.5 * h)?);
                let k4 = (v + h * k3.1, accel(x + h * k3.0, s + h)?);
                x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            }
        }
        let (force, normal) = pull(x, t)?;
        log.push(crate::log::LogRow {
            t,
            epm: scene.epm_above(Vector2::new(epm_x(t), 0.0)),
            ipm_position: Vector2::new(x, 0.0),
            ipm_velocity: Vector2::new(v, 0.0),
            magnetic_force: force,
            normal_force: normal,
            theta: p.d_c / epm_v(t),
            attached: normal > 0.0,
        });
    }
    Ok(log)
}
