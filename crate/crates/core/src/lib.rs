pub mod compare;
pub mod error;
pub mod hj;
pub mod mc;
pub mod model;
pub mod optim;
pub mod parisi;
pub mod quadrature;
pub mod rng;
pub mod uninverted;
