//! Feedback capacity of the (1,∞)-RLL input-constrained binary erasure channel.
//!
//! The input to the channel is a binary sequence with no two consecutive ones;
//! each transmitted bit is erased independently with probability ε and the
//! encoder sees every past channel output through a unit-delay feedback link.
//! This crate computes the feedback capacity of that setting in closed form,
//! solves the equivalent average-reward dynamic program (value iteration plus
//! an exact Bellman certificate), and implements the zero-error coding scheme
//! that achieves the capacity, together with a seeded channel simulator for
//! measuring empirical rates.
//!
//! The crate is `no_std` (it requires `alloc`); all file formats and the
//! command-line front end live in the companion `rllfbc-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod capacity;
pub mod channel;
pub mod coding;
pub mod dp;
mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
