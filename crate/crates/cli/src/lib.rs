//! Configuration parsing and experiment orchestration for the `alignlab`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
