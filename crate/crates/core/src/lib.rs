//! Graph Fock spaces, Cuntz-Krieger-Toeplitz families, Wold decompositions,
//! dilations of row contractions, and numerical von Neumann inequalities.

pub mod cstar;
pub mod dilation;
pub mod family;
pub mod fock;
pub mod graph;
pub mod json;
pub mod linalg;
pub mod poly;
pub mod synth;
pub mod wold;
