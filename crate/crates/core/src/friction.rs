//! Rate-and-state (Dieterich-Ruina) friction and the learned steady-state
//! rate coefficient `c(v)`.
//!
//! The full law evolves a contact-age variable θ:
//!
//! ```text
//! μ  = μ₀ − a ln(v*/|v| + 1) + b ln(v* θ / D_c + 1)
//! θ̇ = 1 − |v| θ / D_c
//! ```
//!
//! At steady sliding θ → D_c/|v| and the rate dependence collapses into a
//! single coefficient `c`, which is what the fitted [`CModel`] provides.

use thiserror::Error;

/// Lower speed bound accepted by [`mu_rate_state`].
pub const V_MIN_INTERNAL: f64 = 1e-12;

/// Sample count used to check that a [`CModel`] stays positive on its range.
const POSITIVITY_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrictionError {
    #[error("invalid friction parameters: {0}")]
    InvalidParams(String),
    #[error("speed {speed:e} m/s is outside the law's domain: {reason}")]
    Domain { speed: f64, reason: &'static str },
    #[error("invalid c(v) model: {0}")]
    InvalidModel(String),
}

pub type Result<T> = std::result::Result<T, FrictionError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionParams {
    pub mu0: f64,
    pub a: f64,
    pub b: f64,
    /// Typical speed v*, m/s.
    pub v_star: f64,
    /// Critical slip length D_c, m.
    pub d_c: f64,
}

impl Default for FrictionParams {
    /// PVC/PLA contact: μ₀ = 0.22, v* = 0.2 m/s, D_c = 10 µm, a = b = 0.01.
    fn default() -> Self {
        Self {
            mu0: 0.22,
            a: 0.01,
            b: 0.01,
            v_star: 0.2,
            d_c: 1e-5,
        }
    }
}

impl FrictionParams {
    pub fn new(mu0: f64, a: f64, b: f64, v_star: f64, d_c: f64) -> Result<Self> {
        let p = Self {
            mu0,
            a,
            b,
            v_star,
            d_c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0 && self.mu0 <= 2.0) {
            return Err(FrictionError::InvalidParams(format!(
                "mu0 must lie in (0, 2], got {}",
                self.mu0
            )));
        }
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("v_star", self.v_star),
            ("d_c", self.d_c),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FrictionError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Contact-age state variable θ, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct ThetaState(f64);

impl ThetaState {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(FrictionError::InvalidParams(format!(
                "theta must be finite and non-negative, got {theta}"
            )));
        }
        Ok(Self(theta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Full rate-and-state friction coefficient.
pub fn mu_rate_state(speed: f64, state: ThetaState, params: &FrictionParams) -> Result<f64> {
    if !(speed >= V_MIN_INTERNAL) {
        return Err(FrictionError::Domain {
            speed,
            reason: "rate term diverges; clamp the speed before evaluating",
        });
    }
    let p = params;
    Ok(p.mu0 - p.a * (p.v_star / speed + 1.0).ln()
        + p.b * (p.v_star * state.get() / p.d_c + 1.0).ln())
}

/// θ̇ = 1 − |v|θ/D_c.
pub fn theta_derivative(speed: f64, state: ThetaState, params: &FrictionParams) -> f64 {
    1.0 - speed * state.get() / params.d_c
}

/// Exact θ(t) at constant speed starting from θ₀.
pub fn theta_closed_form(t: f64, theta0: ThetaState, speed: f64, params: &FrictionParams) -> Result<ThetaState> {
    if !(speed > 0.0) {
        return Err(FrictionError::Domain {
            speed,
            reason: "closed form needs motion; at rest θ ages as θ₀ + t",
        });
    }
    if !(t >= 0.0) {
        return Err(FrictionError::InvalidParams(format!(
            "time must be non-negative, got {t}"
        )));
    }
    let steady = params.d_c / speed;
    let theta = steady + (theta0.get() - steady) * (-speed * t / params.d_c).exp();
    Ok(ThetaState(theta.max(0.0)))
}

/// Static aging: θ grows one-for-one with time while the contact is at rest.
pub fn theta_static(t: f64, theta0: ThetaState) -> ThetaState {
    ThetaState(theta0.get() + t.max(0.0))
}

/// Steady-state contact age D_c/|v|.
pub fn theta_steady(speed: f64, params: &FrictionParams) -> Result<ThetaState> {
    if !(speed > 0.0) {
        return Err(FrictionError::Domain {
            speed,
            reason: "no steady state at rest",
        });
    }
    Ok(ThetaState(params.d_c / speed))
}

/// μ = μ₀ − c ln(v*/|v| + 1).
pub fn mu_steady(speed: f64, c: f64, params: &FrictionParams) -> Result<f64> {
    if !(speed > 0.0) {
        return Err(FrictionError::Domain {
            speed,
            reason: "steady law needs positive speed",
        });
    }
    Ok(params.mu0 - c * (params.v_star / speed + 1.0).ln())
}

/// μ = μ₀ − c ln(v*/|v|), valid for |v| well below v*.
pub fn mu_steady_lowspeed(speed: f64, c: f64, params: &FrictionParams) -> Result<f64> {
    if !(speed > 0.0 && speed < params.v_star) {
        return Err(FrictionError::Domain {
            speed,
            reason: "low-speed form holds only for 0 < |v| < v*",
        });
    }
    Ok(params.mu0 - c * (params.v_star / speed).ln())
}

/// Value of `c(v)` together with whether the speed had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CValue {
    pub c: f64,
    pub extrapolated: bool,
}

/// Polynomial model of the steady-state rate coefficient `c` as a function
/// of speed, with the speed range it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct CModel {
    /// Highest power first: `c = p[0] v^n + … + p[n]`.
    coefficients: Vec<f64>,
    valid_range: (f64, f64),
}

impl CModel {
    pub fn new(coefficients: Vec<f64>, valid_range: (f64, f64)) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(FrictionError::InvalidModel(
                "coefficients must be non-empty and finite".into(),
            ));
        }
        let (lo, hi) = valid_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(FrictionError::InvalidModel(format!(
                "valid range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        let model = Self {
            coefficients,
            valid_range,
        };
        for i in 0..=POSITIVITY_SAMPLES {
            let v = lo + (hi - lo) * i as f64 / POSITIVITY_SAMPLES as f64;
            let c = model.eval(v);
            if !(c > 0.0) {
                return Err(FrictionError::InvalidModel(format!(
                    "c({v:.6}) = {c:e} is not positive inside the valid range"
                )));
            }
        }
        Ok(model)
    }

    /// Quartic fitted on PVC with speeds 0.005–0.04 m/s.
    pub fn default_fit() -> Self {
        Self::new(
            vec![-1.189e5, 1.173e4, -404.7, 7.44, 0.03222],
            (0.005, 0.04),
        )
        .expect("default c(v) model is positive on its range")
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn valid_range(&self) -> (f64, f64) {
        self.valid_range
    }

    pub fn contains(&self, speed: f64) -> bool {
        speed >= self.valid_range.0 && speed <= self.valid_range.1
    }

    /// Raw polynomial value, no clamping (Horner).
    pub fn eval(&self, speed: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, p| acc * speed + p)
    }
}

/// Evaluates `c(v)`, clamping speeds outside the model's range to the
/// nearest boundary and flagging them.
pub fn c_of_v(model: &CModel, speed: f64) -> CValue {
    let (lo, hi) = model.valid_range;
    let clamped = speed.clamp(lo, hi);
    CValue {
        c: model.eval(clamped),
        extrapolated: !model.contains(speed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> FrictionParams {
        FrictionParams::default()
    }

    #[test]
    fn symmetric_parameters_cancel_at_reference_point() {
        let p = params();
        let theta = ThetaState::new(p.d_c / p.v_star).unwrap();
        let mu = mu_rate_state(p.v_star, theta, &p).unwrap();
        assert!((mu - p.mu0).abs() < 1e-15);
        let q = FrictionParams { a: 0.01, b: 0.03, ..p };
        let mu = mu_rate_state(q.v_star, theta, &q).unwrap();
        assert!((mu - (q.mu0 + 0.02 * 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn fast_fresh_contact_tends_to_mu0() {
        let p = params();
        let mu = mu_rate_state(1e9, ThetaState::default(), &p).unwrap();
        assert!((mu - p.mu0).abs() < 1e-9);
    }

    #[test]
    fn worked_rate_state_value() {
        let p = params();
        let mu = mu_rate_state(0.02, ThetaState::new(5e-4).unwrap(), &p).unwrap();
        assert!((mu - 0.22).abs() < 1e-15);
        assert!(mu_rate_state(0.0, ThetaState::default(), &p).is_err());
    }

    #[test]
    fn theta_rates() {
        let p = params();
        let v = 0.02;
        assert_eq!(theta_derivative(v, theta_steady(v, &p).unwrap(), &p), 0.0);
        assert_eq!(theta_derivative(0.3, ThetaState::default(), &p), 1.0);
        let r = theta_derivative(0.02, ThetaState::new(1e-3).unwrap(), &p);
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_values() {
        let p = params();
        let th0 = ThetaState::new(3e-4).unwrap();
        assert_eq!(theta_closed_form(0.0, th0, 0.02, &p).unwrap(), th0);
        let fixed = theta_steady(0.02, &p).unwrap();
        for t in [0.0, 1e-4, 1e-2, 1.0] {
            let th = theta_closed_form(t, fixed, 0.02, &p).unwrap();
            assert!((th.get() - fixed.get()).abs() < 1e-18);
        }
        let th = theta_closed_form(5e-4, ThetaState::default(), 0.02, &p).unwrap();
        let expected = 5e-4 * (1.0 - (-1f64).exp());
        assert!((th.get() - expected).abs() < 1e-15);
        assert!((th.get() - 3.161e-4).abs() < 1e-7);
        assert!(theta_closed_form(1.0, th0, 0.0, &p).is_err());
        assert_eq!(theta_static(0.5, th0).get(), 3e-4 + 0.5);
    }

    #[test]
    fn steady_theta_values() {
        let p = params();
        assert!((theta_steady(0.2, &p).unwrap().get() - 5e-5).abs() < 1e-18);
        assert!((theta_steady(0.02, &p).unwrap().get() - 5e-4).abs() < 1e-18);
        let a = theta_steady(0.01, &p).unwrap().get();
        let b = theta_steady(0.02, &p).unwrap().get();
        assert!((a - 2.0 * b).abs() < 1e-18);
        assert!(theta_steady(0.0, &p).is_err());
    }

    #[test]
    fn steady_mu_values() {
        let p = params();
        assert!((mu_steady(1e12, 0.1, &p).unwrap() - p.mu0).abs() < 1e-10);
        assert!((mu_steady(p.v_star, 0.1, &p).unwrap() - (p.mu0 - 0.1 * 2f64.ln())).abs() < 1e-15);
        let mu = mu_steady(0.02, 0.094, &p).unwrap();
        assert!((mu - (0.22 - 0.094 * 11f64.ln())).abs() < 1e-15);
        assert!((mu + 0.00540).abs() < 1e-5);
    }

    #[test]
    fn lowspeed_mu_values() {
        let p = params();
        let mu = mu_steady_lowspeed(0.02, 0.093956, &p).unwrap();
        assert!((mu - 0.003659).abs() < 1e-6, "{mu}");
        let v = p.v_star * (-1f64).exp();
        assert!((mu_steady_lowspeed(v, 0.37, &p).unwrap() - (p.mu0 - 0.37)).abs() < 1e-14);
        assert!(mu_steady_lowspeed(p.v_star, 0.1, &p).is_err());
        assert!(mu_steady_lowspeed(0.0, 0.1, &p).is_err());
        let near = p.v_star * (1.0 - 1e-9);
        let gap = mu_steady_lowspeed(near, 0.1, &p).unwrap() - mu_steady(near, 0.1, &p).unwrap();
        assert!((gap - 0.1 * 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn lowspeed_gap_vanishes_toward_rest() {
        let p = params();
        let c = 0.08;
        let mut last = f64::INFINITY;
        for k in 2..12 {
            let v = 10f64.powi(-k);
            let gap = (mu_steady_lowspeed(v, c, &p).unwrap() - mu_steady(v, c, &p).unwrap()).abs();
            let x = p.v_star / v;
            // the subtraction cancels to ~1e-15 absolute
            assert!((gap - c * (1.0 / x).ln_1p()).abs() < 1e-14);
            assert!(gap < last);
            last = gap;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn default_model_evaluation() {
        let m = CModel::default_fit();
        let hand = -0.019024 + 0.09384 - 0.16188 + 0.1488 + 0.03222;
        let at = c_of_v(&m, 0.02);
        assert!(!at.extrapolated);
        assert!((at.c - hand).abs() < 1e-12);
        assert!((at.c - 0.093956).abs() < 1e-6);
        let rest = c_of_v(&m, 0.0);
        assert!(rest.extrapolated);
        assert_eq!(rest.c, m.eval(0.005));
        assert!((rest.c - 0.060695).abs() < 1e-5, "{}", rest.c);
        let fast = c_of_v(&m, 0.045);
        assert!(fast.extrapolated);
        assert_eq!(fast.c, m.eval(0.04));
        assert!((fast.c - 0.12864).abs() < 1e-5, "{}", fast.c);
    }

    #[test]
    fn model_validation() {
        assert!(CModel::new(vec![], (0.01, 0.02)).is_err());
        assert!(CModel::new(vec![1.0], (0.02, 0.01)).is_err());
        assert!(CModel::new(vec![1.0], (0.0, 0.01)).is_err());
        // crosses zero at v = 0.015
        assert!(CModel::new(vec![-1.0, 0.015], (0.01, 0.02)).is_err());
        assert!(FrictionParams::new(0.0, 0.01, 0.01, 0.2, 1e-5).is_err());
        assert!(FrictionParams::new(0.22, -0.01, 0.01, 0.2, 1e-5).is_err());
        assert!(ThetaState::new(-1.0).is_err());
    }
}
