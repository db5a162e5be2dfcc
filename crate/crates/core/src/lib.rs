//! Observability-aware trajectory optimization for IMU-to-camera extrinsic
//! self-calibration.
//!
//! The crate is organized bottom-up:
//!
//! - [`system`]: state types, dynamics, IMU/pose measurement models and
//!   error-state Jacobians.
//! - [`lie`]: Lie derivatives, their exact gradients and the nonlinear
//!   observability matrix.
//! - [`metrics`]: the deterministic (E²LOG) and stochastic
//!   (information-filter) observability metrics.
//! - [`spline`]: uniform B-splines over position and yaw, and the
//!   differential-flatness map to vehicle states.
//! - [`optim`]: constrained trajectory optimization over spline knots.
//! - [`sim`]: IMU/pose simulation and an error-state Kalman filter for
//!   extrinsic calibration.
//! - [`experiment`]: configuration and the end-to-end comparison protocol.

pub mod error;
pub mod experiment;
pub mod jet;
pub mod lie;
pub mod metrics;
pub mod optim;
pub mod sim;
pub mod spline;
pub mod system;

pub use error::{Error, Result};
pub use lie::{LieEngine, LieOrderConfig, ObservabilityMatrix, RankReport};
pub use metrics::{MetricAccumulator, MetricKind, ScalarMode, SelectionSpec, WindowSpec};
pub use spline::{FlatState, UniformSpline};
pub use system::{
    AugmentedState, ExtrinsicParams, ImuSignal, KinematicInput, NoiseSpec, Quaternion, VehicleState,
};
