//! Command-line runner and HTTP gateway for the CVDeP platform.

pub mod commands;
pub mod gateway;
