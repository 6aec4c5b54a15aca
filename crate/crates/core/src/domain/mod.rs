//! The bike-collection world: map documents, their compilation into a
//! planning problem, bundled fixtures and a seeded generator.

pub mod bundled;
mod generate;
mod map;
mod model;

pub use generate::{generate_map, GenerateError, GenerateParams};
pub use map::{Bike, District, Landmark, MapError, MapSpec, PartialReport, Visibility, MAP_FORMAT_VERSION};
pub use model::{Act, CompileOptions, MoveCost, TaskModel};
