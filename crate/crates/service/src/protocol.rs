//! Wire messages. Every frame is one JSON object with a mandatory
//! `version`, a `kind` and a kind-specific `payload`.

use serde::{Deserialize, Serialize};
use teleop_core::se3::{Pose, Rotation3, UnitQuaternion, Vec3};
use teleop_core::session::{EngagementStatus, EngagementView, LogRecord};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest accepted deviation of a stylus quaternion from unit norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InboundMsg {
    pub version: u32,
    /// Sender clock (s). Informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_time: Option<f64>,
    #[serde(flatten)]
    pub body: Inbound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Inbound {
    StylusPose(StylusPose),
    EngageRequest(Empty),
    SetParam(SetParam),
    ToggleLimiter(ToggleLimiter),
    FootPedal(FootPedal),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Empty {}

/// Raw stylus pose in the leader base. The quaternion is `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StylusPose {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl StylusPose {
    pub fn from_pose(p: &Pose) -> Self {
        Self {
            position: p.position.into(),
            orientation: p.orientation.into(),
        }
    }

    pub fn to_pose(&self) -> Result<Pose, ProtocolError> {
        let q = self.orientation;
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(self.position.iter().all(|c| c.is_finite()) && (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
            return Err(ProtocolError::Invalid(format!(
                "stylus pose needs finite position and unit quaternion (norm {norm})"
            )));
        }
        Ok(Pose::new(Vec3::from(self.position), UnitQuaternion::from(q)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    /// Force-limiter gain (1/N).
    ForceScalingGain,
    /// Uniform translational motion scaling.
    TranslationScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetParam {
    pub name: ParamName,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToggleLimiter {
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PedalFunction {
    /// Activates the scaler tip; reported back, no effect on motion.
    #[default]
    Scaler,
    /// Holds the follower while pressed; motion resumes from the stylus
    /// pose at release.
    Clutch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootPedal {
    pub pressed: bool,
    #[serde(default)]
    pub function: PedalFunction,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0} (expected {PROTOCOL_VERSION})")]
    Version(u32),
    #[error("invalid message: {0}")]
    Invalid(String),
}

/// Parses and checks one inbound frame.
pub fn parse_inbound(text: &str) -> Result<InboundMsg, ProtocolError> {
    let msg: InboundMsg = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if msg.version != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(msg.version));
    }
    match &msg.body {
        Inbound::StylusPose(p) => {
            p.to_pose()?;
        }
        Inbound::SetParam(p) if !(p.value.is_finite() && p.value >= 0.0) => {
            return Err(ProtocolError::Invalid("parameter values must be finite and non-negative".into()));
        }
        Inbound::SetParam(SetParam {
            name: ParamName::TranslationScale,
            value,
        }) if *value <= 0.0 => {
            return Err(ProtocolError::Invalid("translation_scale must be positive".into()));
        }
        _ => {}
    }
    Ok(msg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboundMsg {
    pub version: u32,
    /// Position in the outbound stream, strictly increasing.
    pub seq: u64,
    /// Control tick the frame describes.
    pub tick: u64,
    #[serde(flatten)]
    pub body: Outbound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Outbound {
    State(StateFrame),
    EngagementStatus(EngagementFrame),
    SafetyEvent(SafetyFrame),
    FeedbackForce(FeedbackFrame),
    StatsSnapshot(StatsFrame),
    /// A rejected inbound frame. Not decimated, never dropped.
    Error(ErrorFrame),
}

impl Outbound {
    /// Frames that may be discarded under backpressure.
    pub fn droppable(&self) -> bool {
        matches!(self, Outbound::State(_) | Outbound::FeedbackForce(_) | Outbound::StatsSnapshot(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub record: LogRecord,
    pub limiter_enabled: bool,
    pub force_scaling_gain: f64,
    pub scaler_active: bool,
    pub clutch_pressed: bool,
    /// The client connection was lost at least once.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementFrame {
    pub t: f64,
    /// Desired TCP orientation generated from the stylus.
    pub target: Rotation3,
    /// Current TCP orientation.
    pub measured: Rotation3,
    /// Angle between the two (rad).
    pub error: f64,
    pub aligned: bool,
    pub status: EngagementStatus,
}

impl From<&EngagementView> for EngagementFrame {
    fn from(v: &EngagementView) -> Self {
        Self {
            t: v.t,
            target: v.target,
            measured: v.measured,
            error: v.error,
            aligned: v.aligned,
            status: v.status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyFrame {
    pub stale_reference: bool,
    pub deviation_clamped: bool,
    pub emergency_active: bool,
    pub degraded: bool,
    pub engagement_timed_out: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackFrame {
    pub force: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsFrame {
    pub engaged_ticks: u64,
    pub mean_force: f64,
    pub max_force: f64,
    pub stale_ticks: u64,
    pub clamped_ticks: u64,
    pub emergency_ticks: u64,
    pub dropped_frames: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub message: String,
}
