//! HTTP front end and command implementations for the `slotedit` binary.

pub mod api;
pub mod commands;

pub use api::router;
