//! Bijective spherical density-equalizing maps for genus-0 triangle meshes.
//!
//! A closed surface is first mapped conformally onto the unit sphere, then its
//! vertices are advected by a diffusion-driven flow until mapped face areas are
//! proportional to a prescribed per-face population. Fold-overs introduced by a
//! step are repaired through quasi-conformal reconstruction in the stereographic
//! plane, so every returned map is flip-free.

pub mod apps;
pub mod beltrami;
pub mod conformal;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lsdem;
pub mod mesh;
pub mod metrics;
pub mod operators;
pub mod overlap;
pub mod primitives;
pub mod sdem;
pub mod sparse;
pub mod sphere;

pub use error::{Error, Result};
pub use mesh::{TriMesh, Vec3};
