//! JSON messages exchanged over the teleoperation WebSocket.
//!
//! Every message is one JSON object on one line with a `"type"` tag.
//! Clients open with `hello`, may `claim_driver`, and the driver streams
//! `command`s. The server answers `hello` with its own `hello` and then
//! streams `frame`s; anything it rejects comes back as an `error`.

use serde::{Deserialize, Serialize};

use gyroegg_core::harness::TelemetryFrame;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Driver,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello { v: u32 },
    ClaimDriver,
    Command { forward: f64, turn: f64, timestamp_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not valid JSON, or not a known message.
    Malformed,
    VersionMismatch,
    /// Something other than `hello` arrived first.
    HelloRequired,
    /// Another client holds the driver role.
    RoleDenied,
    /// A command from a client that is not the driver.
    NotDriver,
    /// The simulation stopped; the reason is in the message.
    RunEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Sent in reply to the client's `hello`, and again with
    /// `role: driver` when a driver claim succeeds.
    Hello {
        v: u32,
        role: Role,
        dt_s: f64,
        telemetry_rate_hz: f64,
    },
    Frame { frame: Box<TelemetryFrame> },
    Error { code: ErrorCode, message: String },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            message: message.into(),
        }
    }

    /// Compact JSON. serde_json escapes control characters inside strings,
    /// so the text never contains a raw newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages always serialize")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}
