//! Applications built on spherical maps: point location, registration,
//! remeshing and population cartograms.

pub mod cartogram;
pub mod locate;
pub mod register;
pub mod remesh;

pub use cartogram::{cartogram_population, RegionLabeling, SEA};
pub use locate::{sphere_point_locate, Location, SphereLocator};
pub use register::{register, SurfaceCorrespondence};
pub use remesh::{remesh, uniform_sphere};
