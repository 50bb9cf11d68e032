//! Developability optimization for bicubic B-spline surfaces.
//!
//! The crate thins the Gauss image of a surface patch by patch, pulling the
//! normals of every patch toward a circle on the unit sphere, and panelizes
//! freeform surfaces with C⁰ grids of bicubic Bézier panels that are driven
//! toward planes, cylinders and cones of revolution.
//!
//! Rough map of the crate:
//!
//! - [`surface`]: knot vectors, control grids, cached basis rows
//! - [`diffgeo`]: normals, fundamental forms, curvature
//! - [`sampling`]: parameter lattices and patch grouping
//! - [`init`]: target plane and rotation-axis initialization
//! - [`energy`]: residual blocks, variable layout, assembly
//! - [`solver`]: damped Gauss-Newton driver
//! - [`paneling`]: reference fitting and the paneling pipeline
//! - [`analysis`]: Gauss images, curvature maps, induced rulings
//! - [`io`]: meshes, surfaces and reports on disk
//! - [`config`] and [`cli`]: run configuration and the command line

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod diffgeo;
pub mod energy;
pub mod error;
pub mod init;
pub mod io;
pub mod kdtree;
pub mod paneling;
pub mod par;
pub mod sampling;
pub mod solver;
pub mod sparse;
pub mod surface;
pub mod synthetic;

pub use error::{Error, Result};

/// Three-dimensional vector used throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;
