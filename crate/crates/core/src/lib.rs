//! Numerics for the affine special linear group ASL(2,R), the space of
//! unimodular affine lattices `ASL(2,Z)\ASL(2,R)`, and the horocycle
//! averages that equidistribute on it.
//!
//! The crate is `no_std` and only needs `alloc`. Anything touching files,
//! threads or clocks lives in the companion `horocycle` crate; parallel
//! evaluation is plugged in through [`exec::Executor`].
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod fmath;

pub mod ensembles;
pub mod error;
pub mod exec;
pub mod group;
pub mod modular;
pub mod numtheory;
pub mod quad;
pub mod sections;
pub mod sum;

pub use error::{Error, Result};
pub use group::{CartanFactors, GroupElement, LieGenerator, Mat2};
pub use modular::{HaarSampler, ReducedPoint, TestFunction};
pub use num_complex::Complex64;
pub use sections::{HorocycleSection, SectionWindow};
