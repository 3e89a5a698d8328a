pub mod error;
pub mod kernel;
pub mod mesh;
pub mod quadrature;
pub mod special;
pub mod solver;
pub mod assembly;
pub mod control;
pub mod benchmark;
pub mod experiments;
