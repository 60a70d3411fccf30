//! Finite-scale machinery for packing dimension profiles of compactly
//! supported measures.
//!
//! Measures are weighted atom clouds in the unit cube. The [`kernel`] module
//! evaluates the classical potential and the three-term interpolating kernel
//! potential over radius grids; [`estimate`] turns ball masses and potentials
//! into dimension estimates; [`envelope`], [`projection`] and [`fbm`] build the
//! experiments on top of them, and [`harness`] wires everything into
//! reproducible reports.

pub mod envelope;
pub mod error;
pub mod estimate;
pub mod fbm;
pub mod harness;
pub mod kernel;
pub mod measure;
pub mod projection;
pub mod stats;

pub use error::{Error, Result};
pub use estimate::{DimensionEstimate, EstimatorConfig};
pub use kernel::{KernelParams, PotentialTable, ScaleGrid};
pub use measure::{IfsSystem, PointMeasure};
