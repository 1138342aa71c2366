//! Core arithmetic for a computable model of hyperreal integration.
//!
//! The model replaces the full hyperreal field by truncated generalized
//! Laurent series in a single distinguished infinitesimal `w` (with `W = 1/w`
//! its unlimited reciprocal). On top of that sit an expression language for
//! real functions, symbolic right-hand sums over unlimited partition counts,
//! integrability verdicts, and machine checks of the fundamental theorem of
//! calculus.
//!
//! The crate is `no_std`-compatible (`alloc` required); the `std` feature
//! (default) is purely a convenience for downstream std builds.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod calculus;
pub mod expr;
pub mod hyperreal;
pub mod integral;
pub mod omegasum;
pub mod real;

pub use hyperreal::{ord, Comparison, HClass, Hyperreal, HyperrealError, Order};
pub use real::Real;
