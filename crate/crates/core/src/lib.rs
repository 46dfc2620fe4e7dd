//! Hierarchical model predictive control for a residential microgrid.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod building;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod microgrid;
pub mod mld;
pub mod negotiation;
pub mod opt;
pub mod plant;
pub mod scenario;
