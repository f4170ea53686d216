//! Shared driver / automation steering control.
//!
//! This crate closes the loop between a two-point preview driver model, a
//! haptic guidance torque controller, a steering column and a linear bicycle
//! vehicle model. It also computes lane-keeping metrics and identifies
//! driver-model parameters from logged data with a prediction-error fit.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and parallel sweeps live in the `hapsteer` companion crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod course;
pub mod driver;
pub mod error;
pub mod guidance;
pub mod ident;
pub mod metrics;
pub mod ode;
pub mod plant;
pub mod simloop;

mod math;

pub use course::{Course, PreviewErrors, Segment, SegmentKind};
pub use driver::{DriverParams, DriverState, NeuromuscularParams, VisionMode};
pub use error::{Error, Result};
pub use guidance::{GuidanceLevel, HapticParams};
pub use ident::{FixedParams, IdentProblem, IdentResult, ParamBounds, ParamVector};
pub use metrics::{LaneGeometry, MetricReport, ReportOptions};
pub use plant::{PlantInputs, PlantState, VehicleParams};
pub use simloop::{Condition, Pulse, Scenario, SimLog, SimRecord};
