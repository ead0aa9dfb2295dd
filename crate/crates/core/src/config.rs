//! Text formats: scene configuration, waypoint path files and fitted models.
//!
//! Scene files are TOML with units spelled out in the key names:
//!
//! ```toml
//! [capsule]
//! mass_kg = 0.0209
//! tether_drag_n = 0.03
//!
//! [friction]
//! law = "steady-low-speed"
//! mu0 = 0.22
//! typical_speed_m_s = 0.2
//!
//! [epm]
//! layout = "single"
//! shape = "block"
//! length_m = 0.08
//! ```
//!
//! Every key is optional and falls back to the default scene.

use std::io::Write;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControlError, WaypointPath};
use crate::dynamics::{DynamicsError, EpmLayout, FrictionLaw, Scene, SceneParams};
use crate::friction::{CModel, FrictionError, FrictionParams};
use crate::magnetics::{MagnetShape, MagnetSpec, MagneticsError};
use crate::sysid::FitReport;

/// Points written to the fit-curve table.
pub const CURVE_POINTS: usize = 200;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("path: {0}")]
    Path(#[from] ControlError),
    #[error(transparent)]
    Scene(#[from] DynamicsError),
    #[error(transparent)]
    Magnet(#[from] MagneticsError),
    #[error(transparent)]
    Model(#[from] FrictionError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

pub fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapsuleSection {
    pub mass_kg: f64,
    pub tether_drag_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub gravity_m_s2: f64,
    pub plate_height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CModelSection {
    pub coefficients: Vec<f64>,
    pub valid_range_m_s: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawName {
    #[default]
    SteadyLowSpeed,
    RateState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionSection {
    pub law: LawName,
    pub mu0: f64,
    pub a: f64,
    pub b: f64,
    pub typical_speed_m_s: f64,
    pub critical_slip_m: f64,
    pub c_model: CModelSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutName {
    Single,
    Halbach4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutName>,
    pub remanence_t: f64,
    pub magnetization_axis: [f64; 3],
    #[serde(flatten)]
    pub shape: MagnetShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub step_s: f64,
    pub substeps_per_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneFile {
    pub capsule: CapsuleSection,
    pub environment: EnvironmentSection,
    pub friction: FrictionSection,
    pub epm: MagnetSection,
    pub ipm: MagnetSection,
    pub integrator: IntegratorSection,
}

fn magnet_section(spec: &MagnetSpec, layout: Option<LayoutName>) -> MagnetSection {
    let a = spec.magnetization_axis;
    MagnetSection {
        layout,
        remanence_t: spec.remanence,
        magnetization_axis: [a.x, a.y, a.z],
        shape: spec.shape,
    }
}

impl From<&SceneParams> for SceneFile {
    fn from(p: &SceneParams) -> Self {
        let (lo, hi) = p.c_model.valid_range();
        SceneFile {
            capsule: CapsuleSection {
                mass_kg: p.capsule_mass,
                tether_drag_n: p.tether_drag,
            },
            environment: EnvironmentSection {
                gravity_m_s2: p.gravity,
                plate_height_m: p.plate_height,
            },
            friction: FrictionSection {
                law: match p.friction_law {
                    FrictionLaw::SteadyLowSpeed => LawName::SteadyLowSpeed,
                    FrictionLaw::RateState => LawName::RateState,
                },
                mu0: p.friction.mu0,
                a: p.friction.a,
                b: p.friction.b,
                typical_speed_m_s: p.friction.v_star,
                critical_slip_m: p.friction.d_c,
                c_model: CModelSection {
                    coefficients: p.c_model.coefficients().to_vec(),
                    valid_range_m_s: [lo, hi],
                },
            },
            epm: magnet_section(
                &p.epm_spec,
                Some(match p.epm_layout {
                    EpmLayout::Single => LayoutName::Single,
                    EpmLayout::Halbach4 => LayoutName::Halbach4,
                }),
            ),
            ipm: magnet_section(&p.ipm_spec, None),
            integrator: IntegratorSection {
                step_s: p.integrator_step,
                substeps_per_sample: p.control_substeps,
            },
        }
    }
}

macro_rules! default_from_scene {
    ($($ty:ident => $field:ident),*) => {$(
        impl Default for $ty {
            fn default() -> Self {
                SceneFile::default().$field
            }
        }
    )*};
}

impl Default for SceneFile {
    fn default() -> Self {
        SceneFile::from(&SceneParams::default())
    }
}

default_from_scene!(
    CapsuleSection => capsule,
    EnvironmentSection => environment,
    FrictionSection => friction,
    IntegratorSection => integrator
);

impl Default for CModelSection {
    fn default() -> Self {
        FrictionSection::default().c_model
    }
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("scene file serializes")
    }

    pub fn to_params(&self) -> Result<SceneParams> {
        let spec = |m: &MagnetSection| {
            let [x, y, z] = m.magnetization_axis;
            MagnetSpec::new(m.shape, m.remanence_t, Vector3::new(x, y, z))
        };
        let f = &self.friction;
        let [lo, hi] = f.c_model.valid_range_m_s;
        Ok(SceneParams {
            capsule_mass: self.capsule.mass_kg,
            tether_drag: self.capsule.tether_drag_n,
            gravity: self.environment.gravity_m_s2,
            plate_height: self.environment.plate_height_m,
            friction: FrictionParams::new(f.mu0, f.a, f.b, f.typical_speed_m_s, f.critical_slip_m)?,
            friction_law: match f.law {
                LawName::SteadyLowSpeed => FrictionLaw::SteadyLowSpeed,
                LawName::RateState => FrictionLaw::RateState,
            },
            c_model: CModel::new(f.c_model.coefficients.clone(), (lo, hi))?,
            epm_spec: spec(&self.epm)?,
            epm_layout: match self.epm.layout.unwrap_or(LayoutName::Single) {
                LayoutName::Single => EpmLayout::Single,
                LayoutName::Halbach4 => EpmLayout::Halbach4,
            },
            ipm_spec: spec(&self.ipm)?,
            integrator_step: self.integrator.step_s,
            control_substeps: self.integrator.substeps_per_sample,
        })
    }

    pub fn build(&self) -> Result<Scene> {
        Ok(Scene::build(self.to_params()?)?)
    }
}

/// Parses a scene file into a ready scene.
pub fn parse_scene(text: &str) -> Result<Scene> {
    SceneFile::parse(text)?.build()
}

/// Waypoint path file: a `speed_m_s = <v>` line followed by one `x, y`
/// pair per line, in meters. `#` starts a comment.
pub fn parse_path(text: &str) -> Result<WaypointPath> {
    let mut speed = None;
    let mut points = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = n + 1;
        if let Some((key, value)) = line.split_once('=') {
            if key.trim() != "speed_m_s" {
                return Err(ConfigError::Parse(format!("line {lineno}: unknown key '{}'", key.trim())));
            }
            if speed.is_some() {
                return Err(ConfigError::Parse(format!("line {lineno}: speed given twice")));
            }
            speed = Some(parse_number(value, lineno)?);
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(ConfigError::Parse(format!("line {lineno}: expected 'x, y', got '{line}'")));
        }
        points.push(Vector2::new(parse_number(fields[0], lineno)?, parse_number(fields[1], lineno)?));
    }
    let speed = speed.ok_or_else(|| ConfigError::Parse("path file lacks 'speed_m_s = ...'".into()))?;
    Ok(WaypointPath::new(points, speed)?)
}

pub fn render_path(path: &WaypointPath) -> String {
    let mut out = format!("speed_m_s = {}\n", path.commanded_speed());
    for p in path.waypoints() {
        out.push_str(&format!("{}, {}\n", p.x, p.y));
    }
    out
}

fn parse_number(s: &str, lineno: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| ConfigError::Parse(format!("line {lineno}: bad number '{}'", s.trim())))?;
    if !v.is_finite() {
        return Err(ConfigError::Parse(format!("line {lineno}: non-finite value")));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMetadata {
    pub degree: usize,
    pub sample_count: usize,
    pub sse: f64,
    pub condition_number: f64,
}

/// Fitted-model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    /// Highest power first.
    pub coefficients: Vec<f64>,
    pub valid_range_m_s: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitMetadata>,
}

impl ModelFile {
    pub fn from_fit(fit: &FitReport) -> Self {
        let (lo, hi) = fit.model.valid_range();
        ModelFile {
            coefficients: fit.model.coefficients().to_vec(),
            valid_range_m_s: [lo, hi],
            fit: Some(FitMetadata {
                degree: fit.model.degree(),
                sample_count: fit.sample_count,
                sse: fit.sse,
                condition_number: fit.condition_number,
            }),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("model file serializes")
    }

    pub fn model(&self) -> Result<CModel> {
        let [lo, hi] = self.valid_range_m_s;
        Ok(CModel::new(self.coefficients.clone(), (lo, hi))?)
    }
}

/// `v_m_s,c,residual` scatter of the accepted samples.
pub fn write_residuals<W: Write>(fit: &FitReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["v_m_s", "c", "residual"])?;
    for r in &fit.residuals {
        w.write_record([r.v.to_string(), r.c.to_string(), r.residual.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `v_m_s,c_fit` samples of the model across its valid range.
pub fn write_curve<W: Write>(model: &CModel, out: W) -> Result<()> {
    let (lo, hi) = model.valid_range();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["v_m_s", "c_fit"])?;
    for i in 0..CURVE_POINTS {
        let v = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
        w.write_record([v.to_string(), model.eval(v).to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
