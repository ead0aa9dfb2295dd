//! Point-dipole model of the external Halbach magnet (EPM) and the capsule's
//! internal magnet (IPM).
//!
//! Every magnet is reduced to one or more point dipoles. The field of a dipole
//! with moment `m` at offset `r` is
//!
//! ```text
//! B(r) = μ₀/(4π) · (3 r̂ (m·r̂) − m) / |r|³
//! ```
//!
//! and the force on a target dipole `m_t` sitting in the field of `m_s` is
//!
//! ```text
//! F = 3μ₀/(4π|r|⁴) · [(r̂·m_t) m_s + (r̂·m_s) m_t + (m_s·m_t) r̂ − 5 (r̂·m_s)(r̂·m_t) r̂]
//! ```
//!
//! with `r` pointing from source to target. Assemblies are handled by plain
//! superposition over their elements.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vacuum permeability in T·m/A.
pub const MU_VACUUM: f64 = 4.0e-7 * PI;

/// Pairs of dipoles closer than this are outside the model's validity.
pub const MIN_SEPARATION: f64 = 5.0e-3;

/// Default central-difference step for [`force_jacobian`].
pub const JACOBIAN_STEP: f64 = 1.0e-5;

const AXIS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MagneticsError {
    #[error("invalid magnet: {0}")]
    InvalidMagnet(String),
    #[error("dipole separation {separation:.3e} m is below the {min:.1e} m model limit")]
    Singularity { separation: f64, min: f64 },
    #[error("magnet assembly has no elements")]
    EmptyAssembly,
}

pub type Result<T> = std::result::Result<T, MagneticsError>;

/// A point magnetic source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dipole {
    pub position: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl Dipole {
    pub fn new(position: Vector3<f64>, moment: Vector3<f64>) -> Result<Self> {
        if !position.iter().all(|c| c.is_finite()) {
            return Err(MagneticsError::InvalidMagnet(
                "dipole position must be finite".into(),
            ));
        }
        let norm = moment.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(MagneticsError::InvalidMagnet(
                "dipole moment must have finite non-zero magnitude".into(),
            ));
        }
        Ok(Self { position, moment })
    }

    /// Same moment, new position.
    pub fn at(&self, position: Vector3<f64>) -> Self {
        Self {
            position,
            moment: self.moment,
        }
    }
}

/// Magnet body geometry. Dimensions are in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum MagnetShape {
    Block {
        length_m: f64,
        width_m: f64,
        height_m: f64,
    },
    Annulus {
        length_m: f64,
        outer_diameter_m: f64,
        inner_diameter_m: f64,
    },
}

impl MagnetShape {
    pub fn volume(&self) -> f64 {
        match *self {
            MagnetShape::Block {
                length_m,
                width_m,
                height_m,
            } => length_m * width_m * height_m,
            MagnetShape::Annulus {
                length_m,
                outer_diameter_m,
                inner_diameter_m,
            } => {
                PI / 4.0
                    * (outer_diameter_m * outer_diameter_m - inner_diameter_m * inner_diameter_m)
                    * length_m
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let dims: &[f64] = match self {
            MagnetShape::Block {
                length_m,
                width_m,
                height_m,
            } => &[*length_m, *width_m, *height_m],
            MagnetShape::Annulus {
                length_m,
                outer_diameter_m,
                inner_diameter_m,
            } => {
                if inner_diameter_m >= outer_diameter_m {
                    return Err(MagneticsError::InvalidMagnet(format!(
                        "annulus inner diameter {inner_diameter_m} must be below outer diameter {outer_diameter_m}"
                    )));
                }
                &[*length_m, *outer_diameter_m, *inner_diameter_m]
            }
        };
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(MagneticsError::InvalidMagnet(format!(
                "all dimensions must be positive, got {dims:?}"
            )));
        }
        Ok(())
    }
}

/// A uniformly magnetized permanent magnet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetSpec {
    pub shape: MagnetShape,
    /// Remanent flux density in Tesla.
    pub remanence: f64,
    pub magnetization_axis: Vector3<f64>,
}

impl MagnetSpec {
    pub fn new(shape: MagnetShape, remanence: f64, magnetization_axis: Vector3<f64>) -> Result<Self> {
        shape.validate()?;
        if !(remanence.is_finite() && remanence > 0.0) {
            return Err(MagneticsError::InvalidMagnet(format!(
                "remanence must be positive, got {remanence}"
            )));
        }
        if (magnetization_axis.norm() - 1.0).abs() > AXIS_TOLERANCE {
            return Err(MagneticsError::InvalidMagnet(
                "magnetization axis must have unit norm".into(),
            ));
        }
        Ok(Self {
            shape,
            remanence,
            magnetization_axis,
        })
    }

    /// The 80 × 60 × 50 mm N35 block, magnetized along +z.
    pub fn default_epm_block() -> Self {
        Self::new(
            MagnetShape::Block {
                length_m: 0.080,
                width_m: 0.060,
                height_m: 0.050,
            },
            1.26,
            Vector3::z(),
        )
        .expect("default EPM spec is valid")
    }

    /// The 35 mm long D10/D6 ring magnet inside the capsule, magnetized along +z.
    pub fn default_ipm_annulus() -> Self {
        Self::new(
            MagnetShape::Annulus {
                length_m: 0.035,
                outer_diameter_m: 0.010,
                inner_diameter_m: 0.006,
            },
            1.26,
            Vector3::z(),
        )
        .expect("default IPM spec is valid")
    }
}

/// Equivalent dipole moment `m = B_r V / μ₀` along the magnetization axis.
pub fn moment_from_spec(spec: &MagnetSpec) -> Result<Vector3<f64>> {
    spec.shape.validate()?;
    if !(spec.remanence.is_finite() && spec.remanence > 0.0) {
        return Err(MagneticsError::InvalidMagnet(format!(
            "remanence must be positive, got {}",
            spec.remanence
        )));
    }
    Ok(spec.magnetization_axis * (spec.remanence * spec.shape.volume() / MU_VACUUM))
}

/// One magnet placed inside an assembly frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyElement {
    pub spec: MagnetSpec,
    pub offset: Vector3<f64>,
    pub rotation: Rotation3<f64>,
}

/// A rigid group of magnets, positioned by the origin of its frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetAssembly {
    elements: Vec<AssemblyElement>,
}

impl MagnetAssembly {
    pub fn new(elements: Vec<AssemblyElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(MagneticsError::EmptyAssembly);
        }
        for e in &elements {
            e.spec.shape.validate()?;
        }
        let total: f64 = elements.iter().map(|e| e.spec.shape.volume()).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(MagneticsError::InvalidMagnet(
                "assembly volume must be finite and positive".into(),
            ));
        }
        Ok(Self { elements })
    }

    pub fn single(spec: MagnetSpec) -> Self {
        Self {
            elements: vec![AssemblyElement {
                spec,
                offset: Vector3::zeros(),
                rotation: Rotation3::identity(),
            }],
        }
    }

    /// Four equal sub-blocks laid out along x with the magnetization rotating
    /// by 90° about y from one block to the next (+z, +x, −z, −x when the
    /// parent axis is +z). The parent block is split along its length.
    pub fn halbach4(parent: MagnetSpec) -> Result<Self> {
        let MagnetShape::Block {
            length_m,
            width_m,
            height_m,
        } = parent.shape
        else {
            return Err(MagneticsError::InvalidMagnet(
                "Halbach layout needs a rectangular block".into(),
            ));
        };
        let sub = length_m / 4.0;
        let elements = (0..4)
            .map(|i| {
                let x = -1.5 * sub + i as f64 * sub;
                AssemblyElement {
                    spec: MagnetSpec {
                        shape: MagnetShape::Block {
                            length_m: sub,
                            width_m,
                            height_m,
                        },
                        ..parent
                    },
                    offset: Vector3::new(x, 0.0, 0.0),
                    rotation: Rotation3::from_axis_angle(&Vector3::y_axis(), i as f64 * PI / 2.0),
                }
            })
            .collect();
        Self::new(elements)
    }

    pub fn elements(&self) -> &[AssemblyElement] {
        &self.elements
    }

    pub fn total_volume(&self) -> f64 {
        self.elements.iter().map(|e| e.spec.shape.volume()).sum()
    }

    /// Dipoles of every element with the assembly frame at `origin`.
    pub fn dipoles_at(&self, origin: Vector3<f64>) -> Result<Vec<Dipole>> {
        self.elements
            .iter()
            .map(|e| {
                let m = e.rotation * moment_from_spec(&e.spec)?;
                Dipole::new(origin + e.offset, m)
            })
            .collect()
    }
}

/// Force and torque on a body.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
        }
    }
}

fn separation(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<(Vector3<f64>, f64)> {
    let r = to - from;
    let d = r.norm();
    if !(d >= MIN_SEPARATION) {
        return Err(MagneticsError::Singularity {
            separation: d,
            min: MIN_SEPARATION,
        });
    }
    Ok((r, d))
}

pub fn field_at(source: &Dipole, point: &Vector3<f64>) -> Result<Vector3<f64>> {
    let (r, d) = separation(&source.position, point)?;
    let u = r / d;
    let m = &source.moment;
    Ok((3.0 * u * m.dot(&u) - m) * (MU_VACUUM / (4.0 * PI * d * d * d)))
}

/// Superposed field of several sources.
pub fn total_field(sources: &[Dipole], point: &Vector3<f64>) -> Result<Vector3<f64>> {
    sources
        .iter()
        .try_fold(Vector3::zeros(), |acc, s| Ok(acc + field_at(s, point)?))
}

/// Wrench exerted by one source dipole on the target dipole.
pub fn dipole_wrench(source: &Dipole, target: &Dipole) -> Result<Wrench> {
    let (r, d) = separation(&source.position, &target.position)?;
    let u = r / d;
    let ms = &source.moment;
    let mt = &target.moment;
    let us = u.dot(ms);
    let ut = u.dot(mt);
    let k = 3.0 * MU_VACUUM / (4.0 * PI * d.powi(4));
    let force = (ms * ut + mt * us + u * (ms.dot(mt) - 5.0 * us * ut)) * k;
    let b = field_at(source, &target.position)?;
    Ok(Wrench {
        force,
        torque: mt.cross(&b),
    })
}

/// Total wrench on `target` from every source dipole.
pub fn force_between(sources: &[Dipole], target: &Dipole) -> Result<Wrench> {
    sources
        .iter()
        .try_fold(Wrench::default(), |acc, s| Ok(acc + dipole_wrench(s, target)?))
}

/// ∂F/∂(target position) by central differences with step `h`.
pub fn force_jacobian_with_step(sources: &[Dipole], target: &Dipole, h: f64) -> Result<Matrix3<f64>> {
    let mut jac = Matrix3::zeros();
    for j in 0..3 {
        let mut dp = Vector3::zeros();
        dp[j] = h;
        let plus = force_between(sources, &target.at(target.position + dp))?.force;
        let minus = force_between(sources, &target.at(target.position - dp))?.force;
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}

/// ∂F/∂(target position), central differences at [`JACOBIAN_STEP`].
pub fn force_jacobian(sources: &[Dipole], target: &Dipole) -> Result<Matrix3<f64>> {
    force_jacobian_with_step(sources, target, JACOBIAN_STEP)
}

/// Closed-form ∂F/∂(target position): the Hessian of `m_t · B_s(r)`.
pub fn force_jacobian_analytic(sources: &[Dipole], target: &Dipole) -> Result<Matrix3<f64>> {
    let mut jac = Matrix3::zeros();
    for s in sources {
        let (r, d) = separation(&s.position, &target.position)?;
        let a = &s.moment;
        let b = &target.moment;
        let ar = a.dot(&r);
        let br = b.dot(&r);
        let ab = a.dot(b);
        let d2 = d * d;
        let d5 = d2 * d2 * d;
        let d7 = d5 * d2;
        let d9 = d7 * d2;
        let mut h = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                h[(i, j)] = 3.0 * (a[i] * b[j] + b[i] * a[j]) / d5
                    - 15.0 * (a[i] * br + b[i] * ar) * r[j] / d7
                    - 15.0 * (a[j] * br + b[j] * ar) * r[i] / d7
                    - 15.0 * ar * br * delta / d7
                    + 105.0 * ar * br * r[i] * r[j] / d9
                    + 3.0 * ab * delta / d5
                    - 15.0 * ab * r[i] * r[j] / d7;
            }
        }
        jac += h * (MU_VACUUM / (4.0 * PI));
    }
    Ok(jac)
}

/// Interaction energy `U = −m_t · B_s(r_t)`.
pub fn potential_energy(sources: &[Dipole], target: &Dipole) -> Result<f64> {
    Ok(-target.moment.dot(&total_field(sources, &target.position)?))
}
