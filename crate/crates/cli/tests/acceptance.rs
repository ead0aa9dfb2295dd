//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use capsule_core::controller::{self, CompensationPolicy};
use capsule_core::friction::{self, c_of_v, CModel, FrictionParams, ThetaState};
use capsule_core::magnetics::{self, Dipole, MU_VACUUM};
use capsule_core::sysid::{self, SampleRecord};
use capsule_core::{dynamics, CapsuleState, Scene, Vector2, Vector3, WaypointPath};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit, format!("{s:.2} s (limit {limit} s)"))
}

fn rk4_theta(theta0: f64, speed: f64, p: &FrictionParams, h: f64, steps: usize) -> Vec<f64> {
    let f = |th: f64| friction::theta_derivative(speed, ThetaState::new(th).unwrap(), p);
    let mut th = theta0;
    let mut out = vec![th];
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

fn theta_law_consistency() -> Outcome {
    let start = Instant::now();
    let p = FrictionParams::default();
    let mut worst: f64 = 0.0;
    for speed in [0.005, 0.02, 0.2] {
        let tau = p.d_c / speed;
        for theta0 in [0.0, 0.3 * tau, 4.0 * tau] {
            let h = tau / 100.0;
            for (k, th) in rk4_theta(theta0, speed, &p, h, 1000).iter().enumerate() {
                let exact = friction::theta_closed_form(k as f64 * h, ThetaState::new(theta0).unwrap(), speed, &p)
                    .unwrap()
                    .get();
                if exact > 0.0 {
                    worst = worst.max((th - exact).abs() / exact);
                }
            }
        }
    }
    let (fast, time) = within(start.elapsed(), 1.0);
    check(worst < 1e-6 && fast, format!("max rel err {worst:.2e} (< 1e-6), {time}"))
}

fn steady_state() -> Outcome {
    let p = FrictionParams::default();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let speed = 10f64.powf(rng.random_range(-3.0..0.0));
        let tau = p.d_c / speed;
        let theta0 = rng.random_range(0.0..100.0) * tau;
        let th = *rk4_theta(theta0, speed, &p, tau / 100.0, 2000).last().unwrap();
        let ss = friction::theta_steady(speed, &p).unwrap().get();
        worst = worst.max((th - ss).abs() / ss);
    }
    check(worst < 1e-3, format!("20 random pairs, max rel deviation {worst:.2e} (< 1e-3)"))
}

fn magnetics_oracles() -> Outcome {
    let start = Instant::now();
    let (m1, m2) = (240.64, 1.764);
    // coaxial
    let mut coax: f64 = 0.0;
    for d in [0.05, 0.1, 0.2] {
        let a = Dipole::new(Vector3::zeros(), Vector3::new(0.0, 0.0, m1)).unwrap();
        let b = Dipole::new(Vector3::new(0.0, 0.0, d), Vector3::new(0.0, 0.0, m2)).unwrap();
        let f = magnetics::dipole_wrench(&a, &b).unwrap().force.z.abs();
        let oracle = 3.0 * MU_VACUUM * m1 * m2 / (2.0 * std::f64::consts::PI * d.powi(4));
        coax = coax.max((f - oracle).abs() / oracle);
    }
    let mut rng = StdRng::seed_from_u64(99);
    let mut unit = || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
    let (mut third, mut grad): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let a = Dipole::new(unit() * 0.05, unit() * m1).unwrap();
        let b = Dipole::new(a.position + unit() * 0.08, unit() * m2).unwrap();
        let fb = magnetics::dipole_wrench(&a, &b).unwrap().force;
        let fa = magnetics::dipole_wrench(&b, &a).unwrap().force;
        third = third.max((fa + fb).abs().max() / fb.norm());
        let h = 1e-7;
        let mut g = Vector3::zeros();
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let up = magnetics::potential_energy(&[a], &b.at(b.position + e)).unwrap();
            let dn = magnetics::potential_energy(&[a], &b.at(b.position - e)).unwrap();
            g[i] = (up - dn) / (2.0 * h);
        }
        grad = grad.max((fb + g).norm() / fb.norm());
    }
    let src = Dipole::new(Vector3::zeros(), Vector3::new(0.0, 0.0, m1)).unwrap();
    let dir = Vector3::new(0.2, 0.1, 1.0).normalize();
    let f = |d: f64| magnetics::dipole_wrench(&src, &Dipole::new(dir * d, Vector3::new(0.0, 0.0, m2)).unwrap()).unwrap().force.norm();
    let slope = (f(0.5).ln() - f(0.05).ln()) / (0.5f64.ln() - 0.05f64.ln());
    let (fast, time) = within(start.elapsed(), 5.0);
    check(
        coax < 1e-10 && third < 1e-12 && grad < 1e-4 && (slope + 4.0).abs() < 0.01 && fast,
        format!("coaxial {coax:.1e}, third law {third:.1e}, -grad U {grad:.1e}, slope {slope:.4}, {time}"),
    )
}

fn default_model_evaluation() -> Outcome {
    let m = CModel::default_fit();
    let c = c_of_v(&m, 0.02);
    let zero = c_of_v(&m, 0.0);
    let clamped = zero.extrapolated && zero.c == m.eval(0.005);
    check(
        (c.c - 0.093956).abs() <= 1e-6 && !c.extrapolated && clamped,
        format!("c(0.02) = {:.7}, c(0) = {:.6} extrapolated={}", c.c, zero.c, zero.extrapolated),
    )
}

fn sysid_recovery() -> Outcome {
    let start = Instant::now();
    let scene = Scene::default();
    let log = sysid::synthesize_ramp(&scene, (0.005, 0.04), 60.0).unwrap();
    let learned = sysid::learn_model(&log, &scene, 11).unwrap();
    let (lo, hi) = learned.fit.model.valid_range();
    let (dl, dh) = scene.c_model.valid_range();
    let (lo, hi) = (lo.max(dl), hi.min(dh));
    let (mut e, mut r) = (0.0, 0.0);
    for i in 0..=1000 {
        let v = lo + (hi - lo) * i as f64 / 1000.0;
        e += (learned.fit.model.eval(v) - scene.c_model.eval(v)).powi(2);
        r += scene.c_model.eval(v).powi(2);
    }
    let rms = (e / r).sqrt();

    // forward balance then extraction on admissible records
    let mut rng = StdRng::seed_from_u64(5);
    let mut round_trip: f64 = 0.0;
    for _ in 0..500 {
        let c0 = rng.random_range(0.01..0.2);
        let speed = rng.random_range(0.005..0.15);
        let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let dir = Vector2::new(ang.cos(), ang.sin());
        let ipm = -dir * rng.random_range(1e-4..3e-3);
        let epm = scene.epm_above(Vector2::zeros());
        let w = scene.magnetic_wrench(ipm, epm).unwrap();
        let normal = w.force.z - scene.weight();
        let a = sysid::predicted_accel(c0, speed, w.force.xy().dot(&dir), normal, &scene);
        let rec = SampleRecord {
            t: 0.0,
            epm_position: epm,
            ipm_position: ipm,
            attached: true,
            epm_velocity: Vector3::new(dir.x, dir.y, 0.0) * speed,
            epm_speed: speed,
            ipm_velocity: dir * speed,
            ipm_accel: dir * a,
        };
        round_trip = round_trip.max((sysid::extract_c(&rec, &scene).unwrap() - c0).abs() / c0);
    }

    let records = sysid::differentiate(&log, 11).unwrap();
    let (pairs, _) = sysid::extract_all(&records, &scene);
    let quartic = sysid::fit_polynomial(&pairs, 4).unwrap().sse;
    let monotone = (0..4).all(|k| sysid::fit_polynomial(&pairs, k).map_or(true, |f| quartic <= f.sse));
    let (fast, time) = within(start.elapsed(), 30.0);
    check(
        rms < 0.03 && round_trip <= 1e-12 && monotone && fast,
        format!("model rel RMS {rms:.2e} (< 3%), round trip {round_trip:.1e}, sse monotone {monotone}, {time}"),
    )
}

fn ab_rectangle() -> Outcome {
    let start = Instant::now();
    let scene = Scene::default();
    let path = WaypointPath::rectangle(Vector2::zeros(), 0.10, 0.06, 0.025).unwrap();
    let (_, a) = controller::track(&path, CompensationPolicy::None, &scene).unwrap();
    let (_, b) = controller::track(&path, CompensationPolicy::FixedScale { factor: 0.8 }, &scene).unwrap();
    let reduction = 1.0 - b.std / a.std;
    let (fast, time) = within(start.elapsed(), 60.0);
    check(
        b.std < a.std && fast,
        format!(
            "STD none {:.4} mm, fixed-scale 0.8 {:.4} mm, reduction {:.1}% (target 3%: {}), {time}",
            a.std * 1e3,
            b.std * 1e3,
            reduction * 100.0,
            if reduction >= 0.03 { "met" } else { "not met" }
        ),
    )
}

fn capsim(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_capsim"))
        .current_dir(dir)
        .env_remove("CAPSULE_SCENE")
        .args(args)
        .output()
        .expect("capsim runs")
}

const RECTANGLE: &str = "speed_m_s = 0.025\n0, 0\n0.1, 0\n0.1, 0.06\n0, 0.06\n0, 0\n";

fn speed_validity(dir: &Path) -> Outcome {
    std::fs::write(dir.join("rect.path"), RECTANGLE).unwrap();
    let o = capsim(dir, &["sweep", "--path", "rect.path", "--speeds", "0.005,0.02,0.045", "--out", "sweep.csv"]);
    if !o.status.success() {
        return check(false, format!("sweep failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let table = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<String>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    let find = |speed: &str| rows.iter().find(|r| r[0] == speed).cloned();
    let (Some(slow), Some(mid), Some(fast)) = (find("0.005"), find("0.02"), find("0.045")) else {
        return check(false, format!("missing rows in\n{table}"));
    };
    let flagged = fast[1] == "out-of-range" && slow[1] == "ok" && mid[1] == "ok";
    let comp_mid: f64 = mid[3].parse().unwrap_or(f64::INFINITY);
    let none_fast: f64 = fast[2].parse().unwrap_or(f64::NAN);
    check(
        flagged && comp_mid <= none_fast,
        format!("0.045 flagged={flagged}, STD 0.02 compensated {comp_mid} mm <= 0.045 uncompensated {none_fast} mm"),
    )
}

fn determinism(dir: &Path) -> Outcome {
    std::fs::write(dir.join("rect.path"), RECTANGLE).unwrap();
    let run = |out: &str| {
        let o = capsim(dir, &["simulate", "--path", "rect.path", "--out", out, "--policy", "fixed-scale"]);
        o.status.success()
    };
    if !(run("a.csv") && run("b.csv")) {
        return check(false, "simulate failed");
    }
    let a = std::fs::read(dir.join("a.csv")).unwrap();
    let b = std::fs::read(dir.join("b.csv")).unwrap();
    let ma = std::fs::read(dir.join("a.csv.metrics.toml")).unwrap();
    let mb = std::fs::read(dir.join("b.csv.metrics.toml")).unwrap();
    check(a == b && ma == mb, format!("log {} bytes, identical={}, metrics identical={}", a.len(), a == b, ma == mb))
}

fn dissipation() -> Outcome {
    let scene = Scene::default();
    let epm = scene.epm_above(Vector2::zeros());
    let mut steps = 0;
    let mut violations = 0;
    for k in 0..16 {
        let ang = k as f64 * std::f64::consts::TAU / 16.0;
        let speed = 0.005 * (1 + k) as f64;
        let mut s = CapsuleState {
            velocity: Vector2::new(ang.cos(), ang.sin()) * speed,
            ..CapsuleState::at_rest(Vector2::zeros())
        };
        let mut ke = s.kinetic_energy(scene.capsule_mass);
        for _ in 0..2000 {
            s = dynamics::step(&s, epm, &scene, scene.integrator_step).unwrap();
            let next = s.kinetic_energy(scene.capsule_mass);
            if next > ke {
                violations += 1;
            }
            ke = next;
            steps += 1;
        }
    }
    check(violations == 0, format!("{steps} steps over 16 launches, {violations} KE increases"))
}

fn main() {
    let tmp = tempfile::TempDir::new().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("theta-law consistency", Box::new(theta_law_consistency)),
        ("steady state", Box::new(steady_state)),
        ("magnetics oracles", Box::new(magnetics_oracles)),
        ("default model evaluation", Box::new(default_model_evaluation)),
        ("system-identification recovery", Box::new(sysid_recovery)),
        ("compensation A/B", Box::new(ab_rectangle)),
        ("speed validity", Box::new(|| speed_validity(tmp.path()))),
        ("determinism", Box::new(|| determinism(tmp.path()))),
        ("dissipation", Box::new(dissipation)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
