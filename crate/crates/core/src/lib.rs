pub mod algebra;
pub mod cli;
pub mod config;
pub mod report;
pub mod eikonal;
pub mod error;
pub mod fit;
pub mod potential;
pub mod quadrature;
pub mod amplitude;
pub mod grid;
pub mod lab;
pub mod propagate;
pub mod psdo;
