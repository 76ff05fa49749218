#![no_std]
extern crate alloc;

pub mod brackets;
pub mod combinatorics;
pub mod dynamics;
pub mod embedding;
pub mod fields;
pub mod quadrature;
pub mod statmech;
pub mod systems;

pub use brackets::{nambu_bracket, poisson_bracket, BracketContext, BracketError};
pub use fields::{gradient, jacobian_determinant, FieldError, Layout, Point, ScalarField};
