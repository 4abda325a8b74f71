//! Numerical core for the planar Landau-Lifshitz-Gilbert flow.
//!
//! Everything in this crate is a pure computation over in-memory grids: the
//! discrete calculus on a truncated plane ([`field`]), the geometry of the two
//! supported targets ([`targets`]), time stepping with an energy ledger
//! ([`dynamics`], [`ledger`]), Coulomb-gauge diagnostics ([`gauge`]), the
//! Townes ground state and the sharp Gagliardo-Nirenberg constant
//! ([`groundstate`]), and the trajectory audits and bubbling detector
//! ([`analytics`], [`bubble`]).
//!
//! The crate is `no_std` with `alloc`. The `parallel` feature pulls in `std`
//! and `rayon` and spreads site-wise maps over row bands; reductions always
//! run in a fixed pairwise order so results do not depend on the worker count.
#![no_std]
// `!(x > 0.0)` is the NaN-rejecting form used throughout parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "std")]
extern crate std;

extern crate alloc;

pub mod analytics;
pub mod bubble;
pub mod dynamics;
mod error;
pub mod fft;
pub mod field;
pub mod gauge;
pub mod grid;
pub mod groundstate;
pub mod init;
pub mod ledger;
pub mod linalg;
mod par;
pub mod poisson;
pub mod sum;
pub mod targets;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::{Grid, Point};
pub use targets::{SpinField, Target};
