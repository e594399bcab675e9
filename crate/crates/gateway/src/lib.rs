//! Streaming gateway for the peritact guidance engine: protocol v1 over
//! newline-delimited TCP and WebSocket, one trial session per connection.

pub mod connection;
pub mod protocol;
pub mod server;

pub use connection::{Connection, Reply, ServerContext};
pub use peritact_core as core;
