//! Three-vehicle overtake on a straight two-lane road.
//!
//! Ego `A` is in the outer lane behind truck `T` (inner lane) and `B` comes
//! head-on in the outer lane. `B` streams one packet per slot to `A`; once
//! `msg_req` packets have been released in order, `A` brakes and tucks back
//! into the inner lane behind `T`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::channel::ErasureProfile;
use crate::kinematics::{ackermann_step, obb_overlap, ControlInput, OrientedBox, VehicleState};
use crate::rng::seed_stream;
use crate::transport::{LinkErasures, Protocol, ProtocolParams, TransportSession};

use super::ScenarioError;

/// Bytes per V2V packet body.
pub const PACKET_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct OvertakeConfig {
    pub lane_width: f64,
    pub v_ego: f64,
    pub v_oncoming: f64,
    pub v_truck: f64,
    pub a_max: f64,
    pub delta_abort_deg: f64,
    /// Time to ramp steering between zero and full lock, seconds.
    pub steer_ramp: f64,
    /// Abort braking stops at `v_truck - floor_margin`.
    pub floor_margin: f64,
    pub dt: f64,
    pub horizon: u32,
    pub interval_len: u32,
    /// Channel success probability in the first and last interval.
    pub first_success: f64,
    pub last_success: f64,
    pub rtt: u32,
    pub beta: u32,
    pub sr_factor: f64,
    pub ac_factor: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub initial_erasure_estimate: f64,
    pub estimate_memory: f64,
    pub msg_req: u32,
    /// Fixed deadline; `None` means use [`compute_deadline`].
    pub deadline: Option<u32>,
    /// Gap from the ego's front bumper to the truck's rear bumper at slot 0.
    pub truck_gap: f64,
    /// Subtracted from the full-horizon closing distance when placing `B`.
    pub oncoming_margin: f64,
    pub car_length: f64,
    pub car_width: f64,
    pub truck_length: f64,
    pub truck_width: f64,
    /// Wheelbase as a fraction of vehicle length.
    pub wheelbase_ratio: f64,
    /// Abort rollouts end after this many seconds even if unfinished.
    pub rollout_cap: f64,
    pub done_offset: f64,
    pub done_heading_deg: f64,
    pub seed: u64,
}

impl Default for OvertakeConfig {
    fn default() -> Self {
        OvertakeConfig {
            lane_width: 3.5,
            v_ego: 28.0,
            v_oncoming: 28.0,
            v_truck: 22.0,
            a_max: 10.0,
            delta_abort_deg: 10.0,
            steer_ramp: 0.5,
            floor_margin: 2.0,
            dt: 0.05,
            horizon: 160,
            interval_len: 16,
            first_success: 0.1,
            last_success: 0.9,
            rtt: 8,
            beta: 1,
            sr_factor: 2.0,
            ac_factor: 1.5,
            alpha: 0.11,
            lambda: 0.15,
            initial_erasure_estimate: 0.5,
            estimate_memory: 0.9,
            msg_req: 25,
            deadline: Some(110),
            truck_gap: 35.0,
            oncoming_margin: 30.0,
            car_length: 4.5,
            car_width: 1.9,
            truck_length: 12.0,
            truck_width: 2.6,
            wheelbase_ratio: 0.6,
            rollout_cap: 4.0,
            done_offset: 0.3,
            done_heading_deg: 2.0,
            seed: 0,
        }
    }
}

impl OvertakeConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |field: &'static str, why: String| Err(ScenarioError::Invalid { field, why });
        let positive: [(&'static str, f64); 15] = [
            ("lane_width", self.lane_width),
            ("v_ego", self.v_ego),
            ("v_truck", self.v_truck),
            ("a_max", self.a_max),
            ("steer_ramp", self.steer_ramp),
            ("dt", self.dt),
            ("sr_factor", self.sr_factor),
            ("ac_factor", self.ac_factor),
            ("lambda", self.lambda),
            ("car_length", self.car_length),
            ("car_width", self.car_width),
            ("truck_length", self.truck_length),
            ("truck_width", self.truck_width),
            ("wheelbase_ratio", self.wheelbase_ratio),
            ("rollout_cap", self.rollout_cap),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        for (field, v) in [
            ("v_oncoming", self.v_oncoming),
            ("floor_margin", self.floor_margin),
            ("alpha", self.alpha),
            ("done_offset", self.done_offset),
            ("done_heading_deg", self.done_heading_deg),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(field, format!("must be finite and non-negative, got {v}"));
            }
        }
        for (field, v) in [("truck_gap", self.truck_gap), ("oncoming_margin", self.oncoming_margin)] {
            if !v.is_finite() {
                return bad(field, format!("must be finite, got {v}"));
            }
        }
        for (field, p) in [
            ("first_success", self.first_success),
            ("last_success", self.last_success),
            ("initial_erasure_estimate", self.initial_erasure_estimate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(field, format!("must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..1.0).contains(&self.estimate_memory) {
            return bad("estimate_memory", "must lie in [0, 1)".into());
        }
        if !(self.delta_abort_deg > 0.0 && self.delta_abort_deg < 90.0) {
            return bad("delta_abort_deg", "must lie in (0, 90)".into());
        }
        if self.floor_margin > self.v_truck {
            return bad("floor_margin", "braking floor would be negative".into());
        }
        if self.horizon == 0 || self.interval_len == 0 || !self.horizon.is_multiple_of(self.interval_len) {
            return bad(
                "interval_len",
                format!("horizon {} must be a positive multiple of interval_len {}", self.horizon, self.interval_len),
            );
        }
        if self.rtt == 0 || !self.rtt.is_multiple_of(2) {
            return bad("rtt", format!("must be a positive even number of slots, got {}", self.rtt));
        }
        if self.beta == 0 {
            return bad("beta", "must be at least 1".into());
        }
        if self.msg_req == 0 {
            return bad("msg_req", "must be at least 1".into());
        }
        if let Some(d) = self.deadline {
            if d >= self.horizon {
                return bad("deadline", format!("must be below the horizon {}, got {d}", self.horizon));
            }
        }
        Ok(())
    }

    pub fn intervals(&self) -> u32 {
        self.horizon / self.interval_len
    }

    pub fn profile(&self) -> Result<ErasureProfile, ScenarioError> {
        Ok(ErasureProfile::success_ramp(self.intervals(), self.interval_len, self.first_success, self.last_success)?)
    }

    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams {
            rtt: self.rtt,
            sr_factor: self.sr_factor,
            ac_factor: self.ac_factor,
            alpha: self.alpha,
            lambda: self.lambda,
            beta: self.beta,
            payload_len: PACKET_LEN,
            initial_erasure_estimate: self.initial_erasure_estimate,
            estimate_memory: self.estimate_memory,
        }
    }

    fn car_wheelbase(&self) -> f64 {
        self.wheelbase_ratio * self.car_length
    }

    fn steer_rate(&self) -> f64 {
        self.delta_abort_deg.to_radians() * self.dt / self.steer_ramp
    }

    fn cap_slots(&self) -> u32 {
        libm::ceil(self.rollout_cap / self.dt - 1e-9) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    AbortedSafe,
    Collision,
    /// No abort and no collision within the horizon.
    PassedUnsafe,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::AbortedSafe => "aborted_safe",
            Outcome::Collision => "collision",
            Outcome::PassedUnsafe => "passed_unsafe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub run_id: u32,
    pub protocol: Protocol,
    /// Slot at which the `msg_req`-th packet was released.
    pub t25: Option<u32>,
    /// First slot whose motion step uses the abort controls.
    pub abort_slot: Option<u32>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Vehicle {
    pose: VehicleState,
    v: f64,
}

/// Poses of ego, truck and oncoming car at slot 0.
fn initial_vehicles(cfg: &OvertakeConfig) -> [Vehicle; 3] {
    let ego_x = 0.0;
    let truck_x = ego_x + cfg.car_length / 2.0 + cfg.truck_gap + cfg.truck_length / 2.0;
    let closing = (cfg.v_ego + cfg.v_oncoming) * cfg.horizon as f64 * cfg.dt;
    let oncoming_x = ego_x + closing - cfg.oncoming_margin;
    [
        Vehicle { pose: VehicleState::new(ego_x, cfg.lane_width, 0.0), v: cfg.v_ego },
        Vehicle { pose: VehicleState::new(truck_x, 0.0, 0.0), v: cfg.v_truck },
        Vehicle { pose: VehicleState::new(oncoming_x, cfg.lane_width, PI), v: cfg.v_oncoming },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    TurnIn,
    Straighten,
    Done,
}

/// Brake-and-tuck controller for the ego.
#[derive(Debug, Clone, Copy)]
struct AbortController {
    phase: Phase,
    delta: f64,
}

impl AbortController {
    fn new() -> Self {
        AbortController { phase: Phase::TurnIn, delta: 0.0 }
    }

    fn slew(&self, target: f64, cfg: &OvertakeConfig) -> f64 {
        let rate = cfg.steer_rate();
        self.delta + (target - self.delta).clamp(-rate, rate)
    }

    /// Heading change accumulated while steering unwinds from `delta` to zero
    /// at the ramp rate, at speed `v`.
    fn unwind_yaw(delta: f64, v: f64, cfg: &OvertakeConfig) -> f64 {
        let rate = cfg.steer_rate();
        let mut d = delta.abs();
        let mut yaw = 0.0;
        while d > 0.0 {
            yaw += v * libm::tan(d) * cfg.dt / cfg.car_wheelbase();
            d -= rate;
        }
        yaw * delta.signum()
    }

    /// Bring the heading back to zero: steer against it, and start unwinding
    /// once the unwind alone would cancel what is left.
    fn straighten_target(&self, ego: &Vehicle, v: f64, cfg: &OvertakeConfig) -> f64 {
        let lock = cfg.delta_abort_deg.to_radians();
        let theta = ego.pose.theta;
        let opposing = self.delta * theta < 0.0;
        if opposing && Self::unwind_yaw(self.delta, v, cfg).abs() >= theta.abs() {
            0.0
        } else {
            -lock * theta.signum()
        }
    }

    /// Lateral position at which a straightening phase begun now levels out.
    fn landing_offset(&self, ego: &Vehicle, cfg: &OvertakeConfig) -> Result<f64, ScenarioError> {
        let mut sim = AbortController { phase: Phase::Straighten, delta: self.delta };
        let mut ego = *ego;
        for _ in 0..cfg.cap_slots() {
            if sim.phase == Phase::Done {
                break;
            }
            let u = sim.control(&ego, cfg)?;
            ego.pose = ackermann_step(ego.pose, u, cfg.dt, cfg.car_wheelbase())?;
            ego.v = u.v;
        }
        Ok(ego.pose.y)
    }

    /// Lateral landing position if this step steers `delta` and straightening follows.
    fn landing_after(&self, ego: &Vehicle, v: f64, delta: f64, cfg: &OvertakeConfig) -> Result<f64, ScenarioError> {
        let pose = ackermann_step(ego.pose, ControlInput { v, delta }, cfg.dt, cfg.car_wheelbase())?;
        AbortController { phase: Phase::Straighten, delta }.landing_offset(&Vehicle { pose, v }, cfg)
    }

    /// Turn-in steering for this step, and whether it is the last one. The
    /// last step's angle is chosen within the ramp limit so that the
    /// straightening that follows ends on the inner lane centre.
    fn turn_in(&self, ego: &Vehicle, v: f64, cfg: &OvertakeConfig) -> Result<(f64, bool), ScenarioError> {
        let lock = cfg.delta_abort_deg.to_radians();
        let rate = cfg.steer_rate();
        let mut hard = (self.delta - rate).max(-lock);
        let mut soft = (self.delta + rate).min(lock);
        if self.landing_after(ego, v, hard, cfg)? > 0.0 {
            return Ok((hard, false));
        }
        if self.landing_after(ego, v, soft, cfg)? <= 0.0 {
            return Ok((soft, true));
        }
        for _ in 0..40 {
            let mid = 0.5 * (hard + soft);
            if self.landing_after(ego, v, mid, cfg)? > 0.0 {
                soft = mid;
            } else {
                hard = mid;
            }
        }
        Ok((hard, true))
    }

    fn control(&mut self, ego: &Vehicle, cfg: &OvertakeConfig) -> Result<ControlInput, ScenarioError> {
        let floor = cfg.v_truck - cfg.floor_margin;
        let v = (ego.v - cfg.a_max * cfg.dt).max(floor.min(ego.v));
        self.delta = match self.phase {
            Phase::TurnIn => {
                let (d, last) = self.turn_in(ego, v, cfg)?;
                if last {
                    self.phase = Phase::Straighten;
                }
                d
            }
            Phase::Straighten => {
                let rate = cfg.steer_rate();
                let exact = libm::atan(-ego.pose.theta * cfg.car_wheelbase() / (v * cfg.dt));
                if exact.abs() <= rate && (exact - self.delta).abs() <= rate {
                    self.phase = Phase::Done;
                    exact
                } else {
                    self.slew(self.straighten_target(ego, v, cfg), cfg)
                }
            }
            Phase::Done => 0.0,
        };
        Ok(ControlInput { v, delta: self.delta })
    }
}

fn footprints(cfg: &OvertakeConfig, vs: &[Vehicle; 3]) -> [OrientedBox; 3] {
    [
        OrientedBox::around(&vs[0].pose, cfg.car_length, cfg.car_width),
        OrientedBox::around(&vs[1].pose, cfg.truck_length, cfg.truck_width),
        OrientedBox::around(&vs[2].pose, cfg.car_length, cfg.car_width),
    ]
}

fn ego_hits(cfg: &OvertakeConfig, vs: &[Vehicle; 3]) -> bool {
    let [a, t, b] = footprints(cfg, vs);
    obb_overlap(&a, &t) || obb_overlap(&a, &b)
}

fn cruise(v: &mut Vehicle, cfg: &OvertakeConfig, wheelbase: f64) -> Result<(), ScenarioError> {
    v.pose = ackermann_step(v.pose, ControlInput { v: v.v, delta: 0.0 }, cfg.dt, wheelbase)?;
    Ok(())
}

/// Deterministic three-vehicle motion. The ego switches to the abort
/// controller for every step starting at `abort_slot`.
struct Traffic<'a> {
    cfg: &'a OvertakeConfig,
    slot: u32,
    vehicles: [Vehicle; 3],
    abort: Option<(u32, AbortController)>,
}

impl<'a> Traffic<'a> {
    fn new(cfg: &'a OvertakeConfig) -> Self {
        Traffic { cfg, slot: 0, vehicles: initial_vehicles(cfg), abort: None }
    }

    fn schedule_abort(&mut self, slot: u32) {
        self.abort = Some((slot, AbortController::new()));
    }

    fn collided(&self) -> bool {
        ego_hits(self.cfg, &self.vehicles)
    }

    fn abort_finished(&self) -> bool {
        let ego = &self.vehicles[0].pose;
        matches!(self.abort, Some((s, _)) if s <= self.slot)
            && ego.y.abs() < self.cfg.done_offset
            && ego.theta.abs() < self.cfg.done_heading_deg.to_radians()
    }

    fn advance(&mut self) -> Result<(), ScenarioError> {
        let cfg = self.cfg;
        let car_l = cfg.car_wheelbase();
        let truck_l = cfg.wheelbase_ratio * cfg.truck_length;
        match &mut self.abort {
            Some((start, ctl)) if *start <= self.slot => {
                let u = ctl.control(&self.vehicles[0], cfg)?;
                let ego = &mut self.vehicles[0];
                ego.pose = ackermann_step(ego.pose, u, cfg.dt, car_l)?;
                ego.v = u.v;
            }
            _ => cruise(&mut self.vehicles[0], cfg, car_l)?,
        }
        cruise(&mut self.vehicles[1], cfg, truck_l)?;
        cruise(&mut self.vehicles[2], cfg, car_l)?;
        self.slot += 1;
        Ok(())
    }
}

/// Whether an abort decided at `candidate` (maneuver from the next slot)
/// finishes without the ego touching either other vehicle.
pub fn abort_is_safe(cfg: &OvertakeConfig, candidate: u32) -> Result<bool, ScenarioError> {
    let mut traffic = Traffic::new(cfg);
    let start = candidate + 1;
    traffic.schedule_abort(start);
    let end = start + cfg.cap_slots();
    loop {
        if traffic.collided() {
            return Ok(false);
        }
        if traffic.abort_finished() || traffic.slot >= end {
            return Ok(true);
        }
        traffic.advance()?;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlineScan {
    /// Latest safe decision slot, or `-1` when none is safe.
    pub deadline: i64,
    /// Safety of every candidate `0..horizon`.
    pub safe: Vec<bool>,
}

impl DeadlineScan {
    /// Safe candidates form a prefix of the scan.
    pub fn is_monotone(&self) -> bool {
        self.safe.windows(2).all(|w| w[0] || !w[1])
    }
}

pub fn compute_deadline(cfg: &OvertakeConfig) -> Result<DeadlineScan, ScenarioError> {
    cfg.validate()?;
    let safe = (0..cfg.horizon).map(|c| abort_is_safe(cfg, c)).collect::<Result<Vec<_>, _>>()?;
    let deadline = safe.iter().rposition(|&s| s).map_or(-1, |c| c as i64);
    Ok(DeadlineScan { deadline, safe })
}

/// Deadline in force: the override, or the computed one.
pub fn effective_deadline(cfg: &OvertakeConfig) -> Result<i64, ScenarioError> {
    match cfg.deadline {
        Some(d) => Ok(d as i64),
        None => Ok(compute_deadline(cfg)?.deadline),
    }
}

/// Per-run erasure stream; both protocols of a run share it.
pub fn channel_label(run_id: u32) -> String {
    format!("channel:B->A:run{run_id}")
}

/// Slots `0..horizon` at which packets were released in order, one entry per packet.
fn releases(cfg: &OvertakeConfig, protocol: Protocol, run_id: u32) -> Result<Vec<u32>, ScenarioError> {
    let erasures = LinkErasures::Random { profile: cfg.profile()?, rng: seed_stream(cfg.seed, &channel_label(run_id)) };
    let coding = seed_stream(cfg.seed, &format!("coding:B->A:run{run_id}"));
    let mut session = TransportSession::new(protocol, &cfg.protocol_params(), erasures, coding)?;
    let mut out = Vec::new();
    for slot in 0..cfg.horizon {
        let mut body = [0u8; PACKET_LEN];
        body[..4].copy_from_slice(&slot.to_le_bytes());
        for d in session.tick(slot, [body.to_vec()])? {
            out.push(d.delivered_slot);
        }
    }
    Ok(out)
}

pub fn run_once(cfg: &OvertakeConfig, protocol: Protocol, run_id: u32) -> Result<RunOutcome, ScenarioError> {
    cfg.validate()?;
    if !protocol.is_ordered() {
        return Err(ScenarioError::Invalid { field: "protocol", why: format!("{protocol} does not release in order") });
    }
    let released = releases(cfg, protocol, run_id)?;
    let t25 = released.get(cfg.msg_req as usize - 1).copied();
    let abort_slot = t25.map(|t| t + 1).filter(|&s| s < cfg.horizon);
    let mut traffic = Traffic::new(cfg);
    if let Some(s) = abort_slot {
        traffic.schedule_abort(s);
    }
    let mut collided = false;
    loop {
        if traffic.collided() {
            collided = true;
            break;
        }
        if traffic.slot + 1 >= cfg.horizon {
            break;
        }
        traffic.advance()?;
    }
    let outcome = match (collided, abort_slot) {
        (true, _) => Outcome::Collision,
        (false, Some(_)) => Outcome::AbortedSafe,
        (false, None) => Outcome::PassedUnsafe,
    };
    Ok(RunOutcome { run_id, protocol, t25, abort_slot, outcome })
}

/// `cdf[t] = Pr[T25 <= t]` for `t in 0..horizon`; runs that never reach the
/// threshold count in the denominator only.
pub fn reliability_latency(t25: &[Option<u32>], horizon: u32) -> Vec<f64> {
    let mut counts = alloc::vec![0u64; horizon as usize];
    for t in t25.iter().flatten() {
        if let Some(c) = counts.get_mut(*t as usize) {
            *c += 1;
        }
    }
    let n = t25.len().max(1) as f64;
    let mut acc = 0u64;
    counts
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect()
}

/// Ego trajectory for slots `0..horizon` with an optional abort start; for
/// inspection and plotting.
pub fn ego_trajectory(cfg: &OvertakeConfig, abort_slot: Option<u32>) -> Result<Vec<VehicleState>, ScenarioError> {
    let mut traffic = Traffic::new(cfg);
    if let Some(s) = abort_slot {
        traffic.schedule_abort(s);
    }
    let mut out = Vec::with_capacity(cfg.horizon as usize);
    out.push(traffic.vehicles[0].pose);
    while traffic.slot + 1 < cfg.horizon {
        traffic.advance()?;
        out.push(traffic.vehicles[0].pose);
    }
    Ok(out)
}
