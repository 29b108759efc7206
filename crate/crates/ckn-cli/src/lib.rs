//! Library side of the `ckn` command-line tool: run configuration,
//! dataset loading, manifests, feature-file I/O and the command
//! implementations. The binary in `main.rs` is a thin argument-parsing
//! layer over these.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod feature_io;
pub mod manifest;
