//! Command implementations for the `emoclass` binary.

pub mod aggregate;
pub mod backends;
pub mod commands;
