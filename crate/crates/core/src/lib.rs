pub mod constraints;
pub mod instance;
pub mod io;
pub mod learn;
pub mod robustness;
pub mod simulate;
pub mod solver;
pub mod valuefn;
