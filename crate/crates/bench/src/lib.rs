//! Fixtures shared by the kernel benchmarks.

use capsule_core::magnetics::Dipole;
use capsule_core::sysid::{self, SampleRecord};
use capsule_core::{Scene, Vector2};

/// EPM dipoles above the origin and the IPM dipole slightly behind them.
pub fn lagging_pair(scene: &Scene) -> (Vec<Dipole>, Dipole) {
    let epm = scene.epm_above(Vector2::zeros());
    let sources = scene.epm.dipoles_at(epm).expect("default EPM");
    (sources, scene.ipm_dipole(Vector2::new(-0.002, 0.0)))
}

/// Noise-free (v, c) pairs from the scene's model on a uniform grid.
pub fn model_samples(scene: &Scene, count: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = scene.c_model.valid_range();
    (0..count)
        .map(|k| {
            let v = lo + (hi - lo) * k as f64 / (count - 1) as f64;
            (v, scene.c_model.eval(v))
        })
        .collect()
}

pub fn ramp_records(scene: &Scene) -> Vec<SampleRecord> {
    let log = sysid::synthesize_ramp(scene, (0.005, 0.04), 20.0).expect("ramp");
    sysid::differentiate(&log, sysid::DEFAULT_WINDOW).expect("differentiable")
}
