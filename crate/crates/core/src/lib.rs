pub mod clustering;
pub mod data;
pub mod datagen;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod io;
pub mod math;
pub mod selection;
pub mod trainer;
