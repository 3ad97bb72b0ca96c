pub mod audio;
pub mod backbone;
pub mod config;
pub mod frontend;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ops;
pub mod tensor;
pub mod training;
