//! Dyadic point-tube incidence geometry.
//!
//! Cells of `[0,1)²` at scale `δ = 2^-m` stand for points, dual cells of the
//! (slope, intercept) plane stand for dyadic tubes. On top of an exact integer
//! incidence predicate the crate provides counting, Katz-Tao scans,
//! uniformization and branching analysis, and a clique extraction pipeline,
//! together with generators for planted test configurations.

// Float checks are written as negated comparisons so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cliques;
pub mod error;
pub mod exec;
pub mod gen;
pub mod grid;
pub mod incidence;
pub mod io;
pub mod sets;
pub mod structure;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::{Cell, DualCell, Line, Rect, Scale};
pub use sets::{CellFamily, DualCellFamily};
