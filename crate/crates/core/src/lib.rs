pub mod cli;
pub mod cover;
pub mod epsreg;
pub mod error;
pub mod fdgeom;
pub mod integration;
pub mod iteration;
pub mod models;
pub mod neighbors;
pub mod quadrature;
pub mod radius;
pub mod tensor4;
pub mod transgression;
