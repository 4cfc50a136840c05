//! Network edge for the tank controller: a newline-delimited JSON ingest
//! socket, the `/api/v1` HTTP API and a server-sent event stream.

pub mod api;
pub mod ingest;
pub mod server;
mod state;

pub use api::router;
pub use ingest::{IngestReply, RejectReason, MAX_LINE_BYTES};
pub use server::{ServeError, Server};
pub use state::{
    wall_clock_ms, ActuatorView, ApiSnapshot, ConditionChange, ConditionView, Gateway, StreamEvent, TickSummary,
};
