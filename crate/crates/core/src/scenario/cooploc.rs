//! Cooperative localization: `n` robots drive randomly, fix themselves with
//! GPS, measure each other, and ship those measurements over per-pair
//! transport sessions to the robot that was measured.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ErasureProfile;
use crate::estimation::{diag3, DelayHandling, DropCounts, EkfState, FilterParams, Measurement, RobotFilter};
use crate::kinematics::{ackermann_step, ControlInput, ControlPolicy, PolicyParams, VehicleState};
use crate::rng::{seed_stream, StreamRng};
use crate::sensing::{gps_measure, lidar_measure, InterRobotMeasurement, SensingParams, WIRE_LEN};
use crate::transport::{
    collect_metrics, compute_beta, LinkErasures, Protocol, ProtocolParams, TransportMetrics, TransportSession,
};

use super::ScenarioError;

/// Trailing window of the error metric, in slots.
pub const ERR_WINDOW: usize = 200;
/// Length of the final stretch averaged into the tail metric.
pub const TAIL_LEN: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayMode {
    /// Measurements reach the target in the slot they are taken.
    None,
    /// Measurements travel over the transport and its RTT/2 channel.
    OneWay,
}

impl DelayMode {
    pub fn name(self) -> &'static str {
        match self {
            DelayMode::None => "none",
            DelayMode::OneWay => "one_way",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(DelayMode::None),
            "one_way" => Some(DelayMode::OneWay),
            _ => None,
        }
    }
}

pub fn estimator_name(e: DelayHandling) -> &'static str {
    match e {
        DelayHandling::Naive => "naive",
        DelayHandling::Iree => "iree",
    }
}

pub fn parse_estimator(s: &str) -> Option<DelayHandling> {
    match s {
        "naive" => Some(DelayHandling::Naive),
        "iree" => Some(DelayHandling::Iree),
        _ => None,
    }
}

/// `None` disables inter-robot measurements altogether.
pub fn protocol_name(p: Option<Protocol>) -> &'static str {
    p.map_or("none", Protocol::name)
}

pub fn parse_protocol(s: &str) -> Option<Option<Protocol>> {
    if s == "none" {
        Some(None)
    } else {
        Protocol::parse(s).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoopLocConfig {
    pub robots: usize,
    pub workspace: f64,
    pub dt: f64,
    pub horizon: u32,
    pub resample_period: u32,
    pub reset_period: u32,
    pub wheelbase: f64,
    pub sigma_gps: f64,
    pub sigma_internal: f64,
    pub sigma_process: f64,
    pub sigma_theta_deg: f64,
    pub sigma_v: f64,
    pub sigma_delta_deg: f64,
    pub rtt: u32,
    pub window: u32,
    pub alpha: f64,
    pub lambda: f64,
    pub sr_factor: f64,
    pub ac_factor: f64,
    pub epsilon: f64,
    pub protocol: Option<Protocol>,
    pub delay_mode: DelayMode,
    pub estimator: DelayHandling,
    pub v_max: f64,
    pub accel_bound: f64,
    pub steer_bound_deg: f64,
    pub initial_speed_min: f64,
    pub initial_speed_max: f64,
    pub min_separation: f64,
    pub proximity: f64,
    pub wall_margin: f64,
    pub sensing_radius: f64,
    pub estimate_memory: f64,
    pub seed: u64,
}

impl Default for CoopLocConfig {
    fn default() -> Self {
        CoopLocConfig {
            robots: 10,
            workspace: 200.0,
            dt: 0.1,
            horizon: 2000,
            resample_period: 8,
            reset_period: 3,
            wheelbase: 2.5,
            sigma_gps: 3.0,
            sigma_internal: 2.0,
            sigma_process: 1.0,
            sigma_theta_deg: 1.0,
            sigma_v: 3.0,
            sigma_delta_deg: 2.0,
            rtt: 4,
            window: 10,
            alpha: 0.11,
            lambda: 0.15,
            sr_factor: 2.0,
            ac_factor: 1.5,
            epsilon: 0.0,
            protocol: Some(Protocol::AcRlnc),
            delay_mode: DelayMode::OneWay,
            estimator: DelayHandling::Iree,
            v_max: 10.0,
            accel_bound: 1.0,
            steer_bound_deg: 20.0,
            initial_speed_min: 1.0,
            initial_speed_max: 5.0,
            min_separation: 10.0,
            proximity: 8.0,
            wall_margin: 5.0,
            sensing_radius: f64::INFINITY,
            estimate_memory: 0.9,
            seed: 0,
        }
    }
}

impl CoopLocConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |field: &'static str, why: String| Err(ScenarioError::Invalid { field, why });
        let positive: [(&'static str, f64); 11] = [
            ("workspace", self.workspace),
            ("dt", self.dt),
            ("wheelbase", self.wheelbase),
            ("v_max", self.v_max),
            ("sigma_process", self.sigma_process),
            ("sr_factor", self.sr_factor),
            ("ac_factor", self.ac_factor),
            ("lambda", self.lambda),
            ("min_separation", self.min_separation),
            ("sensing_radius", self.sensing_radius),
            ("initial_speed_max", self.initial_speed_max),
        ];
        for (field, v) in positive {
            if !(v > 0.0) {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        let non_negative: [(&'static str, f64); 9] = [
            ("sigma_gps", self.sigma_gps),
            ("sigma_internal", self.sigma_internal),
            ("sigma_theta_deg", self.sigma_theta_deg),
            ("sigma_v", self.sigma_v),
            ("sigma_delta_deg", self.sigma_delta_deg),
            ("alpha", self.alpha),
            ("accel_bound", self.accel_bound),
            ("initial_speed_min", self.initial_speed_min),
            ("proximity", self.proximity),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(field, format!("must be finite and non-negative, got {v}"));
            }
        }
        if self.robots < 2 || self.robots > u16::MAX as usize {
            return bad("robots", format!("need between 2 and 65535 robots, got {}", self.robots));
        }
        if self.horizon == 0 {
            return bad("horizon", "must be positive".into());
        }
        if self.resample_period == 0 || self.reset_period == 0 {
            return bad("resample_period", "control periods must be positive".into());
        }
        if self.rtt == 0 || !self.rtt.is_multiple_of(2) {
            return bad("rtt", format!("must be a positive even number of slots, got {}", self.rtt));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", format!("must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.steer_bound_deg > 0.0 && self.steer_bound_deg < 90.0) {
            return bad("steer_bound_deg", "must lie in (0, 90)".into());
        }
        if self.initial_speed_min > self.initial_speed_max || self.initial_speed_max > self.v_max {
            return bad("initial_speed_max", "need initial_speed_min <= initial_speed_max <= v_max".into());
        }
        if !(0.0..1.0).contains(&self.estimate_memory) {
            return bad("estimate_memory", "must lie in [0, 1)".into());
        }
        if 2.0 * self.wall_margin >= self.workspace {
            return bad("wall_margin", "must be less than half the workspace".into());
        }
        let span = self.workspace * self.workspace;
        let need = self.robots as f64 * self.min_separation * self.min_separation;
        if need > span / 4.0 {
            return bad("min_separation", "too large to place every robot in the workspace".into());
        }
        Ok(())
    }

    pub fn beta(&self) -> Result<u32, ScenarioError> {
        Ok(compute_beta(self.epsilon, self.alpha, self.lambda)?)
    }

    pub fn protocol_params(&self) -> Result<ProtocolParams, ScenarioError> {
        Ok(ProtocolParams {
            rtt: self.rtt,
            sr_factor: self.sr_factor,
            ac_factor: self.ac_factor,
            alpha: self.alpha,
            lambda: self.lambda,
            beta: self.beta()?,
            payload_len: WIRE_LEN,
            initial_erasure_estimate: self.epsilon,
            estimate_memory: self.estimate_memory,
        })
    }

    fn policy_params(&self) -> PolicyParams {
        PolicyParams {
            dt: self.dt,
            resample_period: self.resample_period,
            reset_period: self.reset_period,
            v_max: self.v_max,
            accel_bound: self.accel_bound,
            steer_bound: self.steer_bound_deg.to_radians(),
            proximity: self.proximity,
            wall_margin: self.wall_margin,
            workspace: self.workspace,
        }
    }

    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            dt: self.dt,
            wheelbase: self.wheelbase,
            sigma_process: self.sigma_process,
            sigma_theta: self.sigma_theta_deg.to_radians(),
            sigma_gps: self.sigma_gps,
            workspace: self.workspace,
        }
    }

    fn sensing_params(&self) -> SensingParams {
        SensingParams { sigma_gps: self.sigma_gps, sigma_internal: self.sigma_internal, workspace: self.workspace }
    }

    /// Whether inter-robot readings are taken at all.
    fn shares_measurements(&self) -> bool {
        self.protocol.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct CoopLocResult {
    /// Trailing-window error metric per slot, over the estimated trajectory
    /// as revised by any replays.
    pub err: Vec<f64>,
    /// Mean of `err` over the final [`TAIL_LEN`] slots.
    pub tail_mean_err: f64,
    /// Same metric over the estimates each robot held at the time.
    pub err_realtime: Vec<f64>,
    /// Aggregated over every directed pair; `None` without a channel.
    pub transport: Option<TransportMetrics>,
    pub drops: DropCounts,
    /// `truth[i][t]`, `estimates[i][t]`, `realtime[i][t]`.
    pub truth: Vec<Vec<VehicleState>>,
    pub estimates: Vec<Vec<VehicleState>>,
    pub realtime: Vec<Vec<VehicleState>>,
}

/// Err(t) for every slot: robot-averaged trailing mean of position errors
/// over the last `min(200, t + 1)` slots.
pub fn err_series(truth: &[Vec<VehicleState>], estimates: &[Vec<VehicleState>]) -> Vec<f64> {
    let n = truth.len();
    let slots = truth.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(slots);
    let mut sums = alloc::vec![0.0f64; n];
    for t in 0..slots {
        let k = ERR_WINDOW.min(t + 1);
        let mut total = 0.0;
        for i in 0..n {
            sums[i] += truth[i][t].distance_to(&estimates[i][t]);
            if t >= ERR_WINDOW {
                sums[i] -= truth[i][t - ERR_WINDOW].distance_to(&estimates[i][t - ERR_WINDOW]);
            }
            total += sums[i] / k as f64;
        }
        out.push(total / n as f64);
    }
    out
}

/// Err(t) computed directly from the definition.
pub fn err_at(truth: &[Vec<VehicleState>], estimates: &[Vec<VehicleState>], t: usize) -> f64 {
    let k = ERR_WINDOW.min(t + 1);
    let n = truth.len();
    let mut total = 0.0;
    for i in 0..n {
        let s: f64 = (t + 1 - k..=t).map(|tau| truth[i][tau].distance_to(&estimates[i][tau])).sum();
        total += s / k as f64;
    }
    total / n as f64
}

pub fn tail_mean(err: &[f64]) -> f64 {
    let tail = &err[err.len().saturating_sub(TAIL_LEN)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn place_robots(cfg: &CoopLocConfig, rng: &mut StreamRng) -> Vec<(VehicleState, f64)> {
    let mut out: Vec<(VehicleState, f64)> = Vec::with_capacity(cfg.robots);
    let lo = cfg.wall_margin;
    let hi = cfg.workspace - cfg.wall_margin;
    while out.len() < cfg.robots {
        let s = VehicleState::new(rng.random_range(lo..=hi), rng.random_range(lo..=hi), 0.0);
        if out.iter().all(|(o, _)| o.distance_to(&s) >= cfg.min_separation) {
            let v = rng.random_range(cfg.initial_speed_min..=cfg.initial_speed_max);
            out.push((s, v));
        }
    }
    out
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    i * (n - 1) + if j > i { j - 1 } else { j }
}

pub fn run(cfg: &CoopLocConfig) -> Result<CoopLocResult, ScenarioError> {
    cfg.validate()?;
    let n = cfg.robots;
    let seed = cfg.seed;
    let horizon = cfg.horizon as usize;
    let fp = cfg.filter_params();
    let sp = cfg.sensing_params();

    let mut motion = seed_stream(seed, "motion");
    let start = place_robots(cfg, &mut motion);
    let mut truth_now: Vec<VehicleState> = start.iter().map(|(s, _)| *s).collect();
    let mut policies: Vec<ControlPolicy> = start
        .iter()
        .enumerate()
        .map(|(i, (_, v))| ControlPolicy::new(cfg.policy_params(), *v, seed_stream(seed, &format!("control:{i}"))))
        .collect();
    let mut control_noise: Vec<StreamRng> = (0..n).map(|i| seed_stream(seed, &format!("control-noise:{i}"))).collect();
    let mut gps_rng: Vec<StreamRng> = (0..n).map(|i| seed_stream(seed, &format!("gps:{i}"))).collect();
    let mut lidar_rng: Vec<StreamRng> = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            lidar_rng.push(seed_stream(seed, &format!("lidar:{i}->{j}")));
        }
    }

    let mut sessions: Vec<TransportSession> = Vec::new();
    if cfg.delay_mode == DelayMode::OneWay {
        if let Some(protocol) = cfg.protocol {
            let params = cfg.protocol_params()?;
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let erasures = LinkErasures::Random {
                        profile: ErasureProfile::constant(cfg.epsilon, cfg.horizon)?,
                        rng: seed_stream(seed, &format!("channel:{i}->{j}")),
                    };
                    let coding = seed_stream(seed, &format!("coding:{i}->{j}"));
                    sessions.push(TransportSession::new(protocol, &params, erasures, coding)?);
                }
            }
        }
    }

    let mut filters: Vec<RobotFilter> = Vec::with_capacity(n);
    let mut truth: Vec<Vec<VehicleState>> = (0..n).map(|_| Vec::with_capacity(horizon)).collect();
    let mut estimates: Vec<Vec<VehicleState>> = (0..n).map(|_| Vec::with_capacity(horizon)).collect();
    let mut realtime: Vec<Vec<VehicleState>> = (0..n).map(|_| Vec::with_capacity(horizon)).collect();
    let sigma_delta = cfg.sigma_delta_deg.to_radians();

    for t in 0..cfg.horizon {
        let mut noisy = alloc::vec![ControlInput::default(); n];
        if t > 0 {
            let snapshot = truth_now.clone();
            for i in 0..n {
                let neighbors: Vec<VehicleState> =
                    snapshot.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| *s).collect();
                let u = policies[i].step(t, &snapshot[i], &neighbors);
                truth_now[i] = ackermann_step(snapshot[i], u, cfg.dt, cfg.wheelbase)?;
                let rng = &mut control_noise[i];
                let nv: f64 = rng.sample(StandardNormal);
                let nd: f64 = rng.sample(StandardNormal);
                noisy[i] = ControlInput { v: u.v + cfg.sigma_v * nv, delta: u.delta + sigma_delta * nd };
            }
        }

        let mut batches: Vec<Vec<Measurement>> = (0..n).map(|_| Vec::new()).collect();
        let gps: Vec<_> =
            (0..n).map(|i| gps_measure(i as u16, t, &truth_now[i], cfg.sigma_gps, &mut gps_rng[i])).collect();

        if cfg.shares_measurements() {
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let k = pair_index(n, i, j);
                    let in_range = truth_now[i].distance_to(&truth_now[j]) <= cfg.sensing_radius;
                    let m = in_range.then(|| {
                        lidar_measure(i as u16, j as u16, &truth_now[i], &truth_now[j], t, &sp, &mut lidar_rng[k])
                    });
                    match cfg.delay_mode {
                        DelayMode::None => {
                            if let Some(m) = m {
                                batches[j].push(Measurement::Inter(m));
                            }
                        }
                        DelayMode::OneWay => {
                            let body = m.map(|m| m.to_wire(WIRE_LEN)).transpose()?;
                            for d in sessions[k].tick(t, body)? {
                                let m = InterRobotMeasurement::from_wire(&d.body)?;
                                batches[j].push(Measurement::Inter(m));
                            }
                        }
                    }
                }
            }
        }

        for (i, batch) in batches.into_iter().enumerate() {
            let mut all = Vec::with_capacity(batch.len() + 1);
            if t == 0 {
                let init = EkfState {
                    mean: VehicleState::new(gps[i].x, gps[i].y, 0.0),
                    cov: diag3(
                        cfg.sigma_gps * cfg.sigma_gps,
                        cfg.sigma_gps * cfg.sigma_gps,
                        10f64.to_radians() * 10f64.to_radians(),
                    ),
                };
                filters.push(RobotFilter::new(init, 0, fp, cfg.estimator, cfg.window));
                all.extend(batch);
                filters[i].ingest_initial(all)?;
            } else {
                all.push(Measurement::Gps(gps[i]));
                all.extend(batch);
                filters[i].step(t, noisy[i], all)?;
            }
            truth[i].push(truth_now[i]);
            realtime[i].push(filters[i].estimate().mean);
            estimates[i].push(filters[i].estimate().mean);
            for (tau, post) in filters[i].history().posteriors() {
                estimates[i][tau as usize] = post.mean;
            }
        }
    }

    let err = err_series(&truth, &estimates);
    let err_realtime = err_series(&truth, &realtime);
    let transport = (!sessions.is_empty()).then(|| {
        let records: Vec<_> = sessions.iter().flat_map(|s| s.records().iter().copied()).collect();
        let frames = sessions.iter().map(|s| s.metrics().frames_sent).sum();
        collect_metrics(&records, frames)
    });
    let mut drops = DropCounts::default();
    for f in &filters {
        let d = f.drops();
        drops.stale += d.stale;
        drops.underrun += d.underrun;
        drops.future += d.future;
    }
    Ok(CoopLocResult {
        tail_mean_err: tail_mean(&err),
        err,
        err_realtime,
        transport,
        drops,
        truth,
        estimates,
        realtime,
    })
}

/// The ε × protocol grid run by a sweep, in row-major order.
pub fn sweep_cells(template: &CoopLocConfig, epsilons: &[f64], protocols: &[Protocol]) -> Vec<CoopLocConfig> {
    let mut out = Vec::with_capacity(epsilons.len() * protocols.len());
    for &epsilon in epsilons {
        for &p in protocols {
            out.push(CoopLocConfig { epsilon, protocol: Some(p), delay_mode: DelayMode::OneWay, ..template.clone() });
        }
    }
    out
}

/// The lossless, delay-free reference run for `template`'s seed.
pub fn ideal_baseline(template: &CoopLocConfig) -> CoopLocConfig {
    CoopLocConfig { epsilon: 0.0, delay_mode: DelayMode::None, ..template.clone() }
}

pub const SWEEP_EPSILONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 0.9];
