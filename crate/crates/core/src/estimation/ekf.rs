//! EKF over the kinematic bicycle model with position-only observations.

use crate::kinematics::{ackermann_step, normalize_angle, ControlInput, VehicleState};

pub type Mat3 = [[f64; 3]; 3];
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EstimationError {
    #[error("non-finite value in filter input")]
    NonFinite,
    #[error("innovation covariance is singular")]
    Singular,
    #[error("steering angle outside (-pi/2, pi/2)")]
    Steering,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub mean: VehicleState,
    pub cov: Mat3,
}

/// Constants the filter believes in (not necessarily the generator's truth).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub dt: f64,
    pub wheelbase: f64,
    pub sigma_process: f64,
    /// Heading process noise, rad.
    pub sigma_theta: f64,
    pub sigma_gps: f64,
    pub workspace: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            dt: 0.1,
            wheelbase: 2.5,
            sigma_process: 1.0,
            sigma_theta: 1f64.to_radians(),
            sigma_gps: 3.0,
            workspace: 200.0,
        }
    }
}

impl FilterParams {
    pub fn process_noise(&self) -> Mat3 {
        diag3(
            self.sigma_process * self.sigma_process,
            self.sigma_process * self.sigma_process,
            self.sigma_theta * self.sigma_theta,
        )
    }
}

pub fn diag3(a: f64, b: f64, c: f64) -> Mat3 {
    [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]
}

pub fn trace3(m: &Mat3) -> f64 {
    m[0][0] + m[1][1] + m[2][2]
}

fn mul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose3(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

fn symmetrize(p: &mut Mat3) {
    for i in 0..3 {
        for j in (i + 1)..3 {
            let m = 0.5 * (p[i][j] + p[j][i]);
            p[i][j] = m;
            p[j][i] = m;
        }
    }
}

fn finite_state(s: &EkfState) -> bool {
    s.mean.x.is_finite()
        && s.mean.y.is_finite()
        && s.mean.theta.is_finite()
        && s.cov.iter().flatten().all(|v| v.is_finite())
}

/// Motion Jacobian of the bicycle model with respect to the state.
pub fn motion_jacobian(theta: f64, v: f64, dt: f64) -> Mat3 {
    [[1.0, 0.0, -dt * v * libm::sin(theta)], [0.0, 1.0, dt * v * libm::cos(theta)], [0.0, 0.0, 1.0]]
}

pub fn predict(s: &EkfState, u: ControlInput, p: &FilterParams) -> Result<EkfState, EstimationError> {
    if !finite_state(s) || !u.v.is_finite() || !u.delta.is_finite() {
        return Err(EstimationError::NonFinite);
    }
    let mean = ackermann_step(s.mean, u, p.dt, p.wheelbase).map_err(|_| EstimationError::Steering)?;
    let f = motion_jacobian(s.mean.theta, u.v, p.dt);
    let mut cov = mul3(&mul3(&f, &s.cov), &transpose3(&f));
    let q = p.process_noise();
    for i in 0..3 {
        cov[i][i] += q[i][i];
    }
    symmetrize(&mut cov);
    Ok(EkfState { mean, cov })
}

/// Position update with `H = [[1, 0, 0], [0, 1, 0]]`.
pub fn update(s: &EkfState, z: [f64; 2], r: Mat2) -> Result<EkfState, EstimationError> {
    if !finite_state(s) || !z.iter().chain(r.iter().flatten()).all(|v| v.is_finite()) {
        return Err(EstimationError::NonFinite);
    }
    let p = &s.cov;
    let sm = [[p[0][0] + r[0][0], p[0][1] + r[0][1]], [p[1][0] + r[1][0], p[1][1] + r[1][1]]];
    let det = sm[0][0] * sm[1][1] - sm[0][1] * sm[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return Err(EstimationError::Singular);
    }
    let si = [[sm[1][1] / det, -sm[0][1] / det], [-sm[1][0] / det, sm[0][0] / det]];
    // K = P H^T S^-1; P H^T is the first two columns of P.
    let mut k = [[0.0; 2]; 3];
    for i in 0..3 {
        for j in 0..2 {
            k[i][j] = p[i][0] * si[0][j] + p[i][1] * si[1][j];
        }
    }
    let innov = [z[0] - s.mean.x, z[1] - s.mean.y];
    let dx: [f64; 3] = core::array::from_fn(|i| k[i][0] * innov[0] + k[i][1] * innov[1]);
    let mean = VehicleState { x: s.mean.x + dx[0], y: s.mean.y + dx[1], theta: normalize_angle(s.mean.theta + dx[2]) };
    // (I - K H) P
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] = p[i][j] - (k[i][0] * p[0][j] + k[i][1] * p[1][j]);
        }
    }
    symmetrize(&mut cov);
    Ok(EkfState { mean, cov })
}

pub fn r_gps(sigma_gps: f64) -> Mat2 {
    let v = sigma_gps * sigma_gps;
    [[v, 0.0], [0.0, v]]
}

/// The receiver's own guess at an inter-robot measurement's covariance,
/// built from its process noise rather than the sensor's true noise.
pub fn r_lidar(sigma_process: f64, d_hat: f64, workspace: f64) -> Mat2 {
    let s = sigma_process + d_hat / (core::f64::consts::SQRT_2 * workspace);
    [[s * s, 0.0], [0.0, s * s]]
}
