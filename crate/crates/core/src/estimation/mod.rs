//! Per-robot state estimation: EKF math plus delay-aware measurement intake.

mod ekf;
mod filter;

pub use ekf::{
    diag3, motion_jacobian, predict, r_gps, r_lidar, trace3, update, EkfState, EstimationError, FilterParams, Mat2,
    Mat3,
};
pub use filter::{
    canonical_order, chronological_filter, DelayHandling, DropCounts, Measurement, ReplayBuffer, RobotFilter,
};
