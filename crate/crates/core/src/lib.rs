//! Simulation and friction-model identification for a magnetically actuated,
//! tethered capsule robot sliding under a plate.
//!
//! An external permanent magnet (EPM) above the plate drags an internal
//! permanent magnet (IPM) in the capsule. [`dynamics`] integrates the capsule
//! under magnetic pull, rate-dependent friction and tether drag;
//! [`controller`] plans EPM motion along waypoint paths with optional speed
//! compensation; [`sysid`] recovers the friction rate coefficient `c(v)`
//! from logged runs; [`metrics`] scores tracking quality.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controller;
pub mod dynamics;
pub mod friction;
pub mod log;
pub mod magnetics;
pub mod metrics;
pub mod sysid;

pub use controller::{CompensationPolicy, WaypointPath};
pub use dynamics::{CapsuleState, EpmTrajectory, Scene, SceneParams};
pub use friction::{CModel, FrictionParams, ThetaState};
pub use log::{LogRow, Termination, TrajectoryLog};
pub use magnetics::{Dipole, MagnetAssembly, MagnetSpec, Wrench};
pub use metrics::TrackingReport;
pub use sysid::{FitReport, SampleRecord};

pub use nalgebra::{Vector2, Vector3};
