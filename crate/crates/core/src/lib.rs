pub mod bench;
pub mod conic;
pub mod cycle_constraints;
pub mod graph;
pub mod jabr;
pub mod matpower;
pub mod multilinear;
pub mod network;
pub mod recovery;
pub mod convexify;
