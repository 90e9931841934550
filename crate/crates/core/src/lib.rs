pub mod clifford;
pub mod dsl;
pub mod consistency;
pub mod potential;
pub mod symmetry;
pub mod solver;
