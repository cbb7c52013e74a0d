//! Benchmark generators, file formats and the experiment driver behind the
//! `lqo-mor` command-line tool.

pub mod bench;
pub mod config;
pub mod error;
pub mod expr;
pub mod generators;
pub mod io;
pub mod methods;
