//! Command implementations and the HTTP API behind the `hearlink` binary.

pub mod api;
pub mod commands;
