pub mod dictionary;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod operators;
pub mod quadratic;
pub mod quadrature;
pub mod sensing;
pub mod tv;
