//! The two experiments built from the lower layers.

use alloc::string::String;

use crate::channel::ChannelError;
use crate::estimation::EstimationError;
use crate::kinematics::KinematicsError;
use crate::sensing::WireError;
use crate::transport::TransportError;

pub mod cooploc;
pub mod overtake;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid `{field}`: {why}")]
    Invalid { field: &'static str, why: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Wire(#[from] WireError),
}
