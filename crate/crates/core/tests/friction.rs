use capsule_core::friction::*;
use proptest::prelude::*;

fn rk4(theta0: f64, speed: f64, p: &FrictionParams, h: f64, steps: usize) -> Vec<f64> {
    let f = |th: f64| theta_derivative(speed, ThetaState::new(th).unwrap(), p);
    let mut out = vec![theta0];
    let mut th = theta0;
    for _ in 0..steps {
        let k1 = f(th);
        let k2 = f(th + 0.5 * h * k1);
        let k3 = f(th + 0.5 * h * k2);
        let k4 = f(th + h * k3);
        th += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(th);
    }
    out
}

proptest! {
    #[test]
    fn closed_form_agrees_with_rk4(speed in 0.001f64..0.5, ratio in 0.0f64..20.0) {
        let p = FrictionParams::default();
        let tau = p.d_c / speed;
        let theta0 = ratio * tau;
        let h = tau / 100.0;
        let traj = rk4(theta0, speed, &p, h, 1000);
        for (k, th) in traj.iter().enumerate() {
            let exact = theta_closed_form(k as f64 * h, ThetaState::new(theta0).unwrap(), speed, &p).unwrap().get();
            if exact > 0.0 {
                prop_assert!((th - exact).abs() / exact < 1e-6);
            }
        }
    }

    #[test]
    fn theta_relaxes_to_steady_state(speed in 0.001f64..0.5, ratio in 0.0f64..1000.0) {
        let p = FrictionParams::default();
        let tau = p.d_c / speed;
        let theta0 = ratio * tau;
        let th = *rk4(theta0, speed, &p, tau / 100.0, 2000).last().unwrap();
        let ss = theta_steady(speed, &p).unwrap().get();
        prop_assert!((th - ss).abs() / ss < 1e-3);
    }

    #[test]
    fn mu_increases_with_state_and_speed(speed in 1e-3f64..0.5, th in 1e-5f64..1.0, k in 1.01f64..10.0) {
        let p = FrictionParams::default();
        let mu = |v: f64, t: f64| mu_rate_state(v, ThetaState::new(t).unwrap(), &p).unwrap();
        prop_assert!(mu(speed, th * k) > mu(speed, th));
        prop_assert!(mu(speed * k, th) > mu(speed, th));
    }

    #[test]
    fn symmetric_law_is_mu0_at_steady_state(speed in 1e-4f64..1.0, ab in 1e-4f64..0.05) {
        let p = FrictionParams::new(0.22, ab, ab, 0.2, 1e-5).unwrap();
        let ss = theta_steady(speed, &p).unwrap();
        // D_c/v fed back through v*θ/D_c can differ from v*/v in the last bit
        prop_assert!((mu_rate_state(speed, ss, &p).unwrap() - p.mu0).abs() <= 4.0 * f64::EPSILON * p.mu0);
        prop_assert_eq!(mu_steady(speed, p.a - p.b, &p).unwrap(), p.mu0);
    }

    #[test]
    fn clamped_model_value_is_boundary_value(speed in 0.0f64..1.0) {
        let m = CModel::default_fit();
        let (lo, hi) = m.valid_range();
        let cv = c_of_v(&m, speed);
        prop_assert_eq!(cv.extrapolated, !(lo..=hi).contains(&speed));
        prop_assert_eq!(cv.c, m.eval(speed.clamp(lo, hi)));
    }
}

#[test]
fn doubling_speed_halves_steady_theta() {
    let p = FrictionParams::default();
    let a = theta_steady(0.01, &p).unwrap().get();
    let b = theta_steady(0.02, &p).unwrap().get();
    assert!((a - 2.0 * b).abs() < 1e-18);
}
