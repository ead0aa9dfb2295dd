//! Tracking quality: planar EPM–IPM distance over time and its population
//! standard deviation inside an evaluation window.

use thiserror::Error;

use crate::log::TrajectoryLog;

/// Fraction of the run skipped at the start by [`default_window`].
pub const STARTUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("log has no rows")]
    EmptyLog,
    #[error("window [{start}, {end}] s holds {count} samples, need at least 2")]
    EmptyWindow { start: f64, end: f64, count: usize },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Tracking error sample: time in seconds and distance in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingReport {
    pub per_sample_error: Vec<ErrorSample>,
    pub window: (f64, f64),
    pub std: f64,
    pub mean: f64,
}

/// Distance between the EPM's footprint on the plate and the IPM, per row.
pub fn tracking_error(log: &TrajectoryLog) -> Result<Vec<ErrorSample>> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    Ok(log
        .rows
        .iter()
        .map(|r| ErrorSample {
            t: r.t,
            error: (r.epm.xy() - r.ipm_position).norm(),
        })
        .collect())
}

/// Population std and mean of the errors with `start <= t <= end`.
pub fn tracking_std(errors: &[ErrorSample], window: (f64, f64)) -> Result<(f64, f64)> {
    let (start, end) = window;
    let inside: Vec<f64> = errors
        .iter()
        .filter(|e| e.t >= start && e.t <= end)
        .map(|e| e.error)
        .collect();
    if inside.len() < 2 {
        return Err(MetricsError::EmptyWindow {
            start,
            end,
            count: inside.len(),
        });
    }
    let n = inside.len() as f64;
    let mean = inside.iter().sum::<f64>() / n;
    let var = inside.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok((var.sqrt(), mean))
}

/// The run minus its first [`STARTUP_FRACTION`].
pub fn default_window(log: &TrajectoryLog) -> Result<(f64, f64)> {
    let (t0, t1) = log.time_span().ok_or(MetricsError::EmptyLog)?;
    Ok((t0 + STARTUP_FRACTION * (t1 - t0), t1))
}

pub fn report(log: &TrajectoryLog, window: Option<(f64, f64)>) -> Result<TrackingReport> {
    let per_sample_error = tracking_error(log)?;
    let window = match window {
        Some(w) => w,
        None => default_window(log)?,
    };
    let (std, mean) = tracking_std(&per_sample_error, window)?;
    Ok(TrackingReport {
        per_sample_error,
        window,
        std,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::LogRow;
    use nalgebra::{Vector2, Vector3};
    use proptest::prelude::*;

    fn log_with_offset(offset: Vector2<f64>, n: usize) -> TrajectoryLog {
        let mut log = TrajectoryLog::new("x".into(), 0.01);
        for k in 0..n {
            let t = k as f64 * 0.01;
            let epm = Vector3::new(0.02 * t, 0.01 * t, 0.1);
            log.push(LogRow {
                t,
                epm,
                ipm_position: epm.xy() + offset,
                ipm_velocity: Vector2::zeros(),
                magnetic_force: Vector3::zeros(),
                normal_force: 1.0,
                theta: 0.0,
                attached: true,
            });
        }
        log
    }

    fn samples(errors: &[f64]) -> Vec<ErrorSample> {
        errors
            .iter()
            .enumerate()
            .map(|(k, &error)| ErrorSample { t: k as f64, error })
            .collect()
    }

    #[test]
    fn coincident_and_offset_errors() {
        let zero = tracking_error(&log_with_offset(Vector2::zeros(), 5)).unwrap();
        assert!(zero.iter().all(|e| e.error == 0.0));
        let off = tracking_error(&log_with_offset(Vector2::new(0.003, 0.004), 5)).unwrap();
        assert!(off.iter().all(|e| (e.error - 0.005).abs() < 1e-15));
        assert_eq!(
            tracking_error(&TrajectoryLog::new("x".into(), 0.01)),
            Err(MetricsError::EmptyLog)
        );
    }

    #[test]
    fn std_of_simple_sequences() {
        let (s, m) = tracking_std(&samples(&[0.004; 6]), (0.0, 10.0)).unwrap();
        assert_eq!(s, 0.0);
        assert!((m - 0.004).abs() < 1e-18);
        let (s, m) = tracking_std(&samples(&[0.001, 0.003]), (0.0, 1.0)).unwrap();
        assert!((m - 0.002).abs() < 1e-18);
        assert!((s - 0.001).abs() < 1e-18);
    }

    #[test]
    fn empty_window_rejected() {
        let e = samples(&[1.0, 2.0, 3.0]);
        assert!(matches!(tracking_std(&e, (10.0, 20.0)), Err(MetricsError::EmptyWindow { count: 0, .. })));
        assert!(matches!(tracking_std(&e, (0.5, 1.5)), Err(MetricsError::EmptyWindow { count: 1, .. })));
    }

    #[test]
    fn default_window_skips_startup() {
        let log = log_with_offset(Vector2::zeros(), 101);
        let (a, b) = default_window(&log).unwrap();
        assert!((a - 0.1).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn scale_equivariance(errs in prop::collection::vec(0.0f64..0.01, 2..50), k in 0.1f64..100.0) {
            let base = samples(&errs);
            let scaled: Vec<_> = base.iter().map(|e| ErrorSample { error: e.error * k, ..*e }).collect();
            let w = (0.0, 1e9);
            let (s1, m1) = tracking_std(&base, w).unwrap();
            let (s2, m2) = tracking_std(&scaled, w).unwrap();
            prop_assert!((s2 - k * s1).abs() <= 1e-12 * (k * s1).max(1e-300) + 1e-18);
            prop_assert!((m2 - k * m1).abs() <= 1e-12 * k * m1 + 1e-18);
        }

        #[test]
        fn variance_identity(errs in prop::collection::vec(0.0f64..0.01, 2..50)) {
            let (s, m) = tracking_std(&samples(&errs), (0.0, 1e9)).unwrap();
            let msq = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
            let lhs = s * s;
            let rhs = msq - m * m;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * msq.max(1e-300) * 10.0);
        }

        #[test]
        fn window_shift_on_periodic_errors(period in 2usize..6, shift in 0usize..10) {
            // stationary: a repeating pattern, window spans whole periods
            let errs: Vec<f64> = (0..200).map(|k| 1e-3 * (1 + k % period) as f64).collect();
            let e = samples(&errs);
            let len = (period * 10) as f64;
            let (s0, _) = tracking_std(&e, (0.0, len - 1.0)).unwrap();
            let (s1, _) = tracking_std(&e, (shift as f64, shift as f64 + len - 1.0)).unwrap();
            prop_assert!((s0 - s1).abs() < 1e-15);
        }
    }
}
