//! File formats, experiment suites and the `modcredit` command line on
//! top of `modcredit-core`.

pub mod checkpoint;
pub mod config;
pub mod selfcheck;
pub mod suite;
pub mod verdict;
