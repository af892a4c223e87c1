//! Deterministic slot-based co-simulation of multi-robot autonomy over a
//! modeled communication stack.
//!
//! The crate is `no_std` (with `alloc`); enable the default `std` feature
//! only to get `std::error::Error` impls through `thiserror`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod channel;
pub mod estimation;
pub mod gf256;
pub mod kinematics;
pub mod rlnc;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod transport;
