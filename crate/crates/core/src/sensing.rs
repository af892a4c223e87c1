//! Noisy GPS self-fixes and distance-dependent inter-robot position
//! measurements, plus the fixed little-endian wire record used to carry the
//! latter across a transport session.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kinematics::VehicleState;

/// Bytes occupied by an encoded [`InterRobotMeasurement`].
pub const WIRE_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsMeasurement {
    pub robot_id: u16,
    pub slot: u32,
    pub x: f64,
    pub y: f64,
}

/// Robot `sender_id`'s noisy reading of robot `target_id`'s global position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterRobotMeasurement {
    pub sender_id: u16,
    pub target_id: u16,
    pub slot: u32,
    pub x: f64,
    pub y: f64,
    pub d_hat: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("measurement record needs {WIRE_LEN} bytes, got {0}")]
    TooShort(usize),
    #[error("payload length {0} cannot hold a {WIRE_LEN}-byte record")]
    PayloadTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingParams {
    pub sigma_gps: f64,
    pub sigma_internal: f64,
    /// Workspace side `M`; sets the range-dependent noise scale.
    pub workspace: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        SensingParams { sigma_gps: 3.0, sigma_internal: 2.0, workspace: 200.0 }
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    std * z
}

pub fn gps_measure<R: Rng + ?Sized>(
    robot_id: u16,
    slot: u32,
    truth: &VehicleState,
    sigma_gps: f64,
    rng: &mut R,
) -> GpsMeasurement {
    let nx = gauss(rng, sigma_gps);
    let ny = gauss(rng, sigma_gps);
    GpsMeasurement { robot_id, slot, x: truth.x + nx, y: truth.y + ny }
}

/// Range scale `d / (sqrt(2) M)`: 1 at the workspace diagonal.
pub fn range_noise_std(d: f64, workspace: f64) -> f64 {
    d / (core::f64::consts::SQRT_2 * workspace)
}

/// Position-noise standard deviation of an inter-robot measurement at range `d`.
pub fn sigma_l(d: f64, sigma_internal: f64, workspace: f64) -> f64 {
    sigma_internal + range_noise_std(d, workspace)
}

pub fn lidar_measure<R: Rng + ?Sized>(
    sender_id: u16,
    target_id: u16,
    observer: &VehicleState,
    target: &VehicleState,
    slot: u32,
    params: &SensingParams,
    rng: &mut R,
) -> InterRobotMeasurement {
    let d = observer.distance_to(target);
    let s = sigma_l(d, params.sigma_internal, params.workspace);
    let nx = gauss(rng, s);
    let ny = gauss(rng, s);
    let nd = gauss(rng, range_noise_std(d, params.workspace));
    InterRobotMeasurement { sender_id, target_id, slot, x: target.x + nx, y: target.y + ny, d_hat: (d + nd).max(0.0) }
}

impl InterRobotMeasurement {
    /// Encode into `payload_len` bytes, zero padded past the 32-byte record.
    pub fn to_wire(&self, payload_len: usize) -> Result<Vec<u8>, WireError> {
        if payload_len < WIRE_LEN {
            return Err(WireError::PayloadTooSmall(payload_len));
        }
        let mut out = Vec::with_capacity(payload_len);
        out.extend_from_slice(&self.sender_id.to_le_bytes());
        out.extend_from_slice(&self.target_id.to_le_bytes());
        out.extend_from_slice(&self.slot.to_le_bytes());
        out.extend_from_slice(&self.x.to_le_bytes());
        out.extend_from_slice(&self.y.to_le_bytes());
        out.extend_from_slice(&self.d_hat.to_le_bytes());
        out.resize(payload_len, 0);
        Ok(out)
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < WIRE_LEN {
            return Err(WireError::TooShort(bytes.len()));
        }
        let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        Ok(InterRobotMeasurement {
            sender_id: u16::from_le_bytes([bytes[0], bytes[1]]),
            target_id: u16::from_le_bytes([bytes[2], bytes[3]]),
            slot: u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")),
            x: f(8),
            y: f(16),
            d_hat: f(24),
        })
    }
}
