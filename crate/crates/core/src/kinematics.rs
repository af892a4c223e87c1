//! Ackermann (bicycle) motion, the randomized control policy of the
//! localization robots, and oriented-bounding-box collision tests.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("steering angle {0} rad is not inside (-pi/2, pi/2)")]
    SteeringOutOfRange(f64),
    #[error("wheelbase must be positive, got {0}")]
    BadWheelbase(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading in (-pi, pi].
    pub theta: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        VehicleState { x, y, theta: normalize_angle(theta) }
    }

    pub fn distance_to(&self, other: &VehicleState) -> f64 {
        libm::hypot(other.x - self.x, other.y - self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Forward speed, m/s.
    pub v: f64,
    /// Steering angle, rad.
    pub delta: f64,
}

/// Wrap an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let two_pi = 2.0 * PI;
    let mut r = libm::fmod(a + PI, two_pi);
    if r < 0.0 {
        r += two_pi;
    }
    // r in [0, 2pi); map 0 to +pi so the interval is open at -pi.
    if r == 0.0 {
        PI
    } else {
        r - PI
    }
}

/// One explicit-Euler step of the kinematic bicycle model.
pub fn ackermann_step(
    s: VehicleState,
    u: ControlInput,
    dt: f64,
    wheelbase: f64,
) -> Result<VehicleState, KinematicsError> {
    if !(wheelbase > 0.0) {
        return Err(KinematicsError::BadWheelbase(wheelbase));
    }
    if !(u.delta.abs() < FRAC_PI_2) {
        return Err(KinematicsError::SteeringOutOfRange(u.delta));
    }
    Ok(VehicleState {
        x: s.x + dt * u.v * libm::cos(s.theta),
        y: s.y + dt * u.v * libm::sin(s.theta),
        theta: normalize_angle(s.theta + dt * u.v * libm::tan(u.delta) / wheelbase),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub dt: f64,
    /// Acceleration and steering are redrawn every this many slots.
    pub resample_period: u32,
    /// Steering returns to zero every this many slots.
    pub reset_period: u32,
    pub v_max: f64,
    pub accel_bound: f64,
    pub steer_bound: f64,
    /// Neighbors closer than this and closing trigger an evasive turn.
    pub proximity: f64,
    /// Distance from a wall at which robots turn back inward.
    pub wall_margin: f64,
    /// Side of the square workspace `[0, workspace] x [0, workspace]`.
    pub workspace: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            dt: 0.1,
            resample_period: 8,
            reset_period: 3,
            v_max: 10.0,
            accel_bound: 1.0,
            steer_bound: 20f64.to_radians(),
            proximity: 8.0,
            wall_margin: 5.0,
            workspace: 200.0,
        }
    }
}

/// Piecewise-constant random controller for one robot.
#[derive(Debug, Clone)]
pub struct ControlPolicy {
    params: PolicyParams,
    rng: StreamRng,
    accel: f64,
    control: ControlInput,
    last_ranges: Vec<f64>,
}

impl ControlPolicy {
    pub fn new(params: PolicyParams, initial_speed: f64, rng: StreamRng) -> Self {
        ControlPolicy {
            params,
            rng,
            accel: 0.0,
            control: ControlInput { v: initial_speed, delta: 0.0 },
            last_ranges: Vec::new(),
        }
    }

    pub fn accel(&self) -> f64 {
        self.accel
    }

    pub fn control(&self) -> ControlInput {
        self.control
    }

    /// Control to apply during `slot`. `neighbors` must list the other robots
    /// in the same order every slot.
    pub fn step(&mut self, slot: u32, own: &VehicleState, neighbors: &[VehicleState]) -> ControlInput {
        let p = &self.params;
        if slot.is_multiple_of(p.resample_period) {
            self.accel = self.rng.random_range(-p.accel_bound..=p.accel_bound);
            self.control.delta = self.rng.random_range(-p.steer_bound..=p.steer_bound);
        }
        if slot.is_multiple_of(p.reset_period) {
            self.control.delta = 0.0;
        }
        self.control.v = (self.control.v + self.accel * p.dt).clamp(0.0, p.v_max);

        let ranges: Vec<f64> = neighbors.iter().map(|n| own.distance_to(n)).collect();
        let mut closest: Option<(f64, &VehicleState)> = None;
        if self.last_ranges.len() == ranges.len() {
            for ((n, &d), &prev) in neighbors.iter().zip(&ranges).zip(&self.last_ranges) {
                if d < p.proximity && d < prev && closest.is_none_or(|(c, _)| d < c) {
                    closest = Some((d, n));
                }
            }
        }
        if let Some((_, n)) = closest {
            let bearing = relative_bearing(own, n.x, n.y);
            self.control.delta = if bearing > 0.0 { -p.steer_bound } else { p.steer_bound };
        }
        let near_wall = own.x < p.wall_margin
            || own.y < p.wall_margin
            || own.x > p.workspace - p.wall_margin
            || own.y > p.workspace - p.wall_margin;
        if near_wall {
            let c = p.workspace / 2.0;
            let bearing = relative_bearing(own, c, c);
            if bearing.abs() > 1e-3 {
                self.control.delta = if bearing > 0.0 { p.steer_bound } else { -p.steer_bound };
            }
        }
        self.last_ranges = ranges;
        self.control
    }
}

/// Angle of `(x, y)` as seen from `own`, relative to its heading, in (-pi, pi].
fn relative_bearing(own: &VehicleState, x: f64, y: f64) -> f64 {
    normalize_angle(libm::atan2(y - own.y, x - own.x) - own.theta)
}

/// Closed rectangle centered at `(cx, cy)` with its length along `heading`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> Self {
        OrientedBox { cx, cy, heading, length, width }
    }

    pub fn around(state: &VehicleState, length: f64, width: f64) -> Self {
        OrientedBox::new(state.x, state.y, state.theta, length, width)
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = libm::sincos(self.heading);
        [(c, s), (-s, c)]
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let [(ux, uy), (vx, vy)] = self.axes();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let mut out = [(0.0, 0.0); 4];
        for (k, (a, b)) in [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].into_iter().enumerate() {
            out[k] = (self.cx + a * ux + b * vx, self.cy + a * uy + b * vy);
        }
        out
    }

    /// Point-in-box test, boundary included.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let [(ux, uy), (vx, vy)] = self.axes();
        let (dx, dy) = (px - self.cx, py - self.cy);
        (dx * ux + dy * uy).abs() <= self.length / 2.0 && (dx * vx + dy * vy).abs() <= self.width / 2.0
    }

    fn radius_along(&self, ax: f64, ay: f64) -> f64 {
        let [(ux, uy), (vx, vy)] = self.axes();
        self.length / 2.0 * (ux * ax + uy * ay).abs() + self.width / 2.0 * (vx * ax + vy * ay).abs()
    }
}

/// Signed separation along the best separating axis: positive means a gap of
/// that width exists, zero or negative means the boxes overlap (touching counts).
pub fn obb_separation(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (dx, dy) = (b.cx - a.cx, b.cy - a.cy);
    let mut best = f64::NEG_INFINITY;
    for (ax, ay) in a.axes().into_iter().chain(b.axes()) {
        let gap = (dx * ax + dy * ay).abs() - a.radius_along(ax, ay) - b.radius_along(ax, ay);
        best = best.max(gap);
    }
    best
}

/// Separating-axis test over the four edge normals.
pub fn obb_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    obb_separation(a, b) <= 0.0
}
