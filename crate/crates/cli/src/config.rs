//! Run configuration: flat `section.key = value` files.
//!
//! Files are TOML restricted to dotted keys (`channel.epsilon = 0.5`). Nested
//! tables are flattened back into dotted keys, so `[channel]` headers work
//! too. Unknown keys are rejected; unset keys keep the scenario defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use mrsim_core::estimation::DelayHandling;
use mrsim_core::scenario::cooploc::{self, CoopLocConfig, DelayMode, SWEEP_EPSILONS};
use mrsim_core::scenario::overtake::OvertakeConfig;
use mrsim_core::scenario::ScenarioError;
use mrsim_core::transport::Protocol;
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use toml::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` must be {expected}")]
    Type { key: String, expected: &'static str },
    #[error("invalid `{key}`: {why}")]
    Invalid { key: String, why: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    CoopLoc,
    Overtake,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CoopLoc => "cooploc",
            ScenarioKind::Overtake => "overtake",
        }
    }
}

/// Cooperative localization settings plus the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoopLocSetup {
    pub cfg: CoopLocConfig,
    pub epsilons: Vec<f64>,
    pub protocols: Vec<Protocol>,
}

impl Default for CoopLocSetup {
    fn default() -> Self {
        CoopLocSetup {
            cfg: CoopLocConfig::default(),
            epsilons: SWEEP_EPSILONS.to_vec(),
            protocols: Protocol::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvertakeSetup {
    pub cfg: OvertakeConfig,
    pub runs: u32,
}

impl Default for OvertakeSetup {
    fn default() -> Self {
        OvertakeSetup { cfg: OvertakeConfig::default(), runs: 1000 }
    }
}

/// A value type that can appear on the right of a config key.
trait Field: Sized {
    const EXPECTED: &'static str;
    fn read(v: &Value) -> Option<Self>;
    fn echo(&self) -> Json;
}

impl Field for f64 {
    const EXPECTED: &'static str = "a number";
    fn read(v: &Value) -> Option<Self> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }
    fn echo(&self) -> Json {
        serde_json::Number::from_f64(*self).map_or_else(|| Json::String(self.to_string()), Json::Number)
    }
}

macro_rules! int_field {
    ($($t:ty),*) => {$(
        impl Field for $t {
            const EXPECTED: &'static str = "a non-negative integer";
            fn read(v: &Value) -> Option<Self> {
                v.as_integer().and_then(|i| <$t>::try_from(i).ok())
            }
            fn echo(&self) -> Json {
                Json::from(*self)
            }
        }
    )*};
}
int_field!(u32, u64, usize);

impl Field for Option<Protocol> {
    const EXPECTED: &'static str = "one of none, udp, sr_arq, ac_rlnc";
    fn read(v: &Value) -> Option<Self> {
        v.as_str().and_then(cooploc::parse_protocol)
    }
    fn echo(&self) -> Json {
        Json::from(cooploc::protocol_name(*self))
    }
}

impl Field for DelayMode {
    const EXPECTED: &'static str = "one of none, one_way";
    fn read(v: &Value) -> Option<Self> {
        v.as_str().and_then(DelayMode::parse)
    }
    fn echo(&self) -> Json {
        Json::from(self.name())
    }
}

impl Field for DelayHandling {
    const EXPECTED: &'static str = "one of naive, iree";
    fn read(v: &Value) -> Option<Self> {
        v.as_str().and_then(cooploc::parse_estimator)
    }
    fn echo(&self) -> Json {
        Json::from(cooploc::estimator_name(*self))
    }
}

/// An abort deadline: a slot, or `"auto"` to use the computed one.
impl Field for Option<u32> {
    const EXPECTED: &'static str = "a slot number or \"auto\"";
    fn read(v: &Value) -> Option<Self> {
        match v {
            Value::String(s) if s == "auto" => Some(None),
            _ => u32::read(v).map(Some),
        }
    }
    fn echo(&self) -> Json {
        self.map_or_else(|| Json::from("auto"), Json::from)
    }
}

impl Field for Vec<f64> {
    const EXPECTED: &'static str = "a non-empty list of numbers";
    fn read(v: &Value) -> Option<Self> {
        let items: Option<Vec<f64>> = v.as_array()?.iter().map(f64::read).collect();
        items.filter(|l| !l.is_empty())
    }
    fn echo(&self) -> Json {
        Json::Array(self.iter().map(Field::echo).collect())
    }
}

impl Field for Vec<Protocol> {
    const EXPECTED: &'static str = "a non-empty list of udp, sr_arq, ac_rlnc";
    fn read(v: &Value) -> Option<Self> {
        let items: Option<Vec<Protocol>> = v.as_array()?.iter().map(|x| x.as_str().and_then(Protocol::parse)).collect();
        items.filter(|l| !l.is_empty())
    }
    fn echo(&self) -> Json {
        Json::Array(self.iter().map(|p| Json::from(p.name())).collect())
    }
}

fn read<T: Field>(key: &str, v: &Value) -> Result<T, ConfigError> {
    T::read(v).ok_or_else(|| ConfigError::Type { key: key.to_string(), expected: T::EXPECTED })
}

/// Binds dotted keys to fields of a setup struct.
macro_rules! schema {
    ($name:ident for $setup:ty { $($key:literal => $($path:ident).+),* $(,)? }) => {
        struct $name;
        impl $name {
            /// (dotted key, field name) pairs.
            const KEYS: &'static [(&'static str, &'static str)] = &[$(($key, stringify!($($path).+))),*];

            fn apply(s: &mut $setup, key: &str, v: &Value) -> Result<bool, ConfigError> {
                match key {
                    $($key => s.$($path).+ = read($key, v)?,)*
                    _ => return Ok(false),
                }
                Ok(true)
            }

            fn echo(s: &$setup) -> BTreeMap<String, Json> {
                let mut out = BTreeMap::new();
                $(out.insert($key.to_string(), s.$($path).+.echo());)*
                out
            }
        }
    };
}

schema!(CoopLocSchema for CoopLocSetup {
    "scenario.seed" => cfg.seed,
    "scenario.robots" => cfg.robots,
    "scenario.workspace" => cfg.workspace,
    "scenario.dt" => cfg.dt,
    "scenario.horizon" => cfg.horizon,
    "scenario.resample_period" => cfg.resample_period,
    "scenario.reset_period" => cfg.reset_period,
    "scenario.wheelbase" => cfg.wheelbase,
    "scenario.v_max" => cfg.v_max,
    "scenario.accel_bound" => cfg.accel_bound,
    "scenario.steer_bound_deg" => cfg.steer_bound_deg,
    "scenario.initial_speed_min" => cfg.initial_speed_min,
    "scenario.initial_speed_max" => cfg.initial_speed_max,
    "scenario.min_separation" => cfg.min_separation,
    "scenario.proximity" => cfg.proximity,
    "scenario.wall_margin" => cfg.wall_margin,
    "sensing.sigma_gps" => cfg.sigma_gps,
    "sensing.sigma_internal" => cfg.sigma_internal,
    "sensing.sigma_process" => cfg.sigma_process,
    "sensing.sigma_theta_deg" => cfg.sigma_theta_deg,
    "sensing.sigma_v" => cfg.sigma_v,
    "sensing.sigma_delta_deg" => cfg.sigma_delta_deg,
    "sensing.radius" => cfg.sensing_radius,
    "estimator.kind" => cfg.estimator,
    "estimator.window" => cfg.window,
    "channel.epsilon" => cfg.epsilon,
    "channel.rtt" => cfg.rtt,
    "channel.delay_mode" => cfg.delay_mode,
    "transport.protocol" => cfg.protocol,
    "transport.alpha" => cfg.alpha,
    "transport.lambda" => cfg.lambda,
    "transport.sr_factor" => cfg.sr_factor,
    "transport.ac_factor" => cfg.ac_factor,
    "transport.estimate_memory" => cfg.estimate_memory,
    "sweep.epsilons" => epsilons,
    "sweep.protocols" => protocols,
});

schema!(OvertakeSchema for OvertakeSetup {
    "scenario.seed" => cfg.seed,
    "scenario.runs" => runs,
    "scenario.lane_width" => cfg.lane_width,
    "scenario.v_ego" => cfg.v_ego,
    "scenario.v_oncoming" => cfg.v_oncoming,
    "scenario.v_truck" => cfg.v_truck,
    "scenario.a_max" => cfg.a_max,
    "scenario.delta_abort_deg" => cfg.delta_abort_deg,
    "scenario.steer_ramp" => cfg.steer_ramp,
    "scenario.floor_margin" => cfg.floor_margin,
    "scenario.dt" => cfg.dt,
    "scenario.horizon" => cfg.horizon,
    "scenario.msg_req" => cfg.msg_req,
    "scenario.deadline" => cfg.deadline,
    "scenario.truck_gap" => cfg.truck_gap,
    "scenario.oncoming_margin" => cfg.oncoming_margin,
    "scenario.car_length" => cfg.car_length,
    "scenario.car_width" => cfg.car_width,
    "scenario.truck_length" => cfg.truck_length,
    "scenario.truck_width" => cfg.truck_width,
    "scenario.wheelbase_ratio" => cfg.wheelbase_ratio,
    "scenario.rollout_cap" => cfg.rollout_cap,
    "scenario.done_offset" => cfg.done_offset,
    "scenario.done_heading_deg" => cfg.done_heading_deg,
    "channel.interval_len" => cfg.interval_len,
    "channel.first_success" => cfg.first_success,
    "channel.last_success" => cfg.last_success,
    "channel.rtt" => cfg.rtt,
    "transport.beta" => cfg.beta,
    "transport.alpha" => cfg.alpha,
    "transport.lambda" => cfg.lambda,
    "transport.sr_factor" => cfg.sr_factor,
    "transport.ac_factor" => cfg.ac_factor,
    "transport.initial_erasure_estimate" => cfg.initial_erasure_estimate,
    "transport.estimate_memory" => cfg.estimate_memory,
});

const KIND_KEY: &str = "scenario.kind";

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

/// Parsed but not yet interpreted config text.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Value>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut entries = BTreeMap::new();
        flatten("", &table, &mut entries);
        Ok(RawConfig { entries })
    }

    /// The declared `scenario.kind`, if any.
    pub fn kind(&self) -> Result<Option<ScenarioKind>, ConfigError> {
        match self.entries.get(KIND_KEY) {
            None => Ok(None),
            Some(v) => match v.as_str() {
                Some("cooploc") => Ok(Some(ScenarioKind::CoopLoc)),
                Some("overtake") => Ok(Some(ScenarioKind::Overtake)),
                _ => Err(ConfigError::Type { key: KIND_KEY.into(), expected: "one of cooploc, overtake" }),
            },
        }
    }

    fn check_kind(&self, want: ScenarioKind) -> Result<(), ConfigError> {
        match self.kind()? {
            Some(k) if k != want => Err(ConfigError::Invalid {
                key: KIND_KEY.into(),
                why: format!("config is for {}, command runs {}", k.name(), want.name()),
            }),
            _ => Ok(()),
        }
    }

    pub fn cooploc(&self) -> Result<CoopLocSetup, ConfigError> {
        self.check_kind(ScenarioKind::CoopLoc)?;
        let mut s = CoopLocSetup::default();
        for (k, v) in self.entries.iter().filter(|(k, _)| *k != KIND_KEY) {
            if !CoopLocSchema::apply(&mut s, k, v)? {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        validate_cooploc(&s)?;
        Ok(s)
    }

    pub fn overtake(&self) -> Result<OvertakeSetup, ConfigError> {
        self.check_kind(ScenarioKind::Overtake)?;
        let mut s = OvertakeSetup::default();
        for (k, v) in self.entries.iter().filter(|(k, _)| *k != KIND_KEY) {
            if !OvertakeSchema::apply(&mut s, k, v)? {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        validate_overtake(&s)?;
        Ok(s)
    }
}

/// Maps a core validation error back onto the dotted key that sets the field.
fn invalid(keys: &[(&str, &str)], e: ScenarioError) -> ConfigError {
    match e {
        ScenarioError::Invalid { field, why } => {
            let key = keys
                .iter()
                .find(|(_, path)| path.rsplit('.').next().map(str::trim) == Some(field))
                .map_or(field, |(k, _)| *k);
            ConfigError::Invalid { key: key.to_string(), why }
        }
        other => ConfigError::Invalid { key: "config".into(), why: other.to_string() },
    }
}

pub fn validate_cooploc(s: &CoopLocSetup) -> Result<(), ConfigError> {
    let keys = CoopLocSchema::KEYS;
    s.cfg.validate().map_err(|e| invalid(keys, e))?;
    s.cfg.beta().map_err(|e| invalid(keys, e))?;
    if let Some(e) = s.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(ConfigError::Invalid { key: "sweep.epsilons".into(), why: format!("{e} is outside [0, 1]") });
    }
    Ok(())
}

pub fn validate_overtake(s: &OvertakeSetup) -> Result<(), ConfigError> {
    s.cfg.validate().map_err(|e| invalid(OvertakeSchema::KEYS, e))?;
    if s.runs == 0 {
        return Err(ConfigError::Invalid { key: "scenario.runs".into(), why: "need at least one run".into() });
    }
    Ok(())
}

/// Every effective setting, keyed by its dotted name.
pub fn echo_cooploc(s: &CoopLocSetup) -> BTreeMap<String, Json> {
    CoopLocSchema::echo(s)
}

pub fn echo_overtake(s: &OvertakeSetup) -> BTreeMap<String, Json> {
    OvertakeSchema::echo(s)
}

/// Content hash of an echoed config, computed like a git blob id but with
/// SHA-256 over `key = value` lines in key order.
pub fn config_hash(echo: &BTreeMap<String, Json>) -> String {
    let mut text = String::new();
    for (k, v) in echo {
        let _ = writeln!(text, "{k} = {v}");
    }
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}
