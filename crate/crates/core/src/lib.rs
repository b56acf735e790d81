pub mod dataset;
pub mod edgecount;
pub mod eval;
pub mod model;
pub mod nn;
pub mod optimizer;
pub mod tensor;
pub mod trainer;
