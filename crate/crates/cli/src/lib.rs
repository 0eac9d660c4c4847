//! Library form of the CLI so the acceptance suite can drive the same code
//! paths the binary uses.

pub mod commands;
pub mod config;
pub mod error;
