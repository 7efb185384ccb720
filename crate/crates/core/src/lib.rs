//! Core of the modular credit-assignment toolkit.
//!
//! Everything in this crate is pure computation and builds without `std`
//! (only `alloc` is required):
//!
//! - [`graph`]: directed acyclic factor graphs, d-separation (reachability
//!   and a brute-force path oracle) and DOT rendering.
//! - [`analysis`]: builds the execution / credit-assignment graph of a
//!   learning algorithm over a decision sequence and decides whether its
//!   per-step gradients are d-separated by the trace and the mechanisms.
//! - [`env`]: the binary-vector key-door task family.
//! - [`nn`], [`rl`]: a small MLP with manual backprop, Adam, GAE, PPO, a
//!   per-logit factorized PPO, the cloned Vickrey society and tabular TD.
//! - [`harness`]: training loops, learning curves and convergence metrics.
//!
//! File formats, the CLI and the experiment suites live in the `modcredit`
//! companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod env;
pub mod graph;
pub mod harness;
pub mod nn;
pub mod rl;

pub(crate) mod math;
