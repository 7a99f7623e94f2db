pub mod error;
pub mod geometry;
mod root;
pub mod sets;
pub mod models;
pub mod solver;
pub mod multilevel;
pub mod config;
pub mod run;
