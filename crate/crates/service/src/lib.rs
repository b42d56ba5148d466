//! Live session bridge: a fixed-rate control loop owning the teleoperation
//! session, fed and observed by one WebSocket client.

pub mod control;
pub mod protocol;
pub mod queue;
pub mod server;

pub use control::{replay, InputEvent, LoopReport, ServiceConfig, SessionLoop, TickInput};
pub use protocol::{parse_inbound, Inbound, InboundMsg, Outbound, OutboundMsg, PROTOCOL_VERSION};
pub use server::Server;
