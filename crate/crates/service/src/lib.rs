//! Session server for live and replayed cue detection.
//!
//! Clients connect over TCP and exchange newline-delimited JSON messages
//! (see [`protocol`]). Each session runs one detector in its own task;
//! every client joined to a session receives its trace points, cues and
//! threshold acknowledgements.

pub mod clock;
pub mod protocol;
mod server;
mod session;

use thiserror::Error;

pub use clock::{ClockMode, SessionClock};
pub use protocol::{notify, Kind, Message};
pub use server::{Server, ServerConfig, Source};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid server config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
