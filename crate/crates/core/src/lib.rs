//! First-order martingale expansion for continuous stochastic volatility
//! models.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is on; the
//! `parallel` feature spreads Monte Carlo path blocks over a rayon pool
//! without changing any result bit.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bs;
pub mod error;
pub mod expansion;
pub mod mc;
pub mod model;
pub mod quadrature;

pub use error::{Error, Result};
