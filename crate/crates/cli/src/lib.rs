//! Scenario files, bundled fixtures, the randomized spectrum harness and file
//! export for the `bearing` command-line tool.

pub mod commands;
pub mod conjecture;
pub mod export;
pub mod fixtures;
pub mod scenario;
