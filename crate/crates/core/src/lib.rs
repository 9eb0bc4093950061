//! Flows of Lipschitz vector fields on boxes, and numerical checks of the
//! calculus they induce: difference quotients along the flow, mean
//! operators, Jacobian bounds, and distributional identities.
//!
//! The crate is `no_std` with `alloc`; elementary functions come from `libm`.
//! The `std` feature lets node-wise loops run on several threads.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod calculus;
pub mod expr;
pub mod field;
pub mod flow;
pub mod grid;
pub mod linalg;
mod par;
pub mod theorems;

pub use expr::{Expression, Node};
pub use field::{Cuboid, Field, Region, VectorField};
pub use flow::{FlowSample, IntegratorConfig, JacobianMode};
pub use grid::{Bump, FlaggedFunction, Grid, SampledFunction};
