//! Instance generation, text formats, benchmarks and the command line.

pub mod bench;
pub mod cli;
pub mod config;
pub mod gen;
pub mod io;
