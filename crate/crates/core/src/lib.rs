//! Isoparametric finite elements on curvilinear polygons.

pub mod domains;
pub mod experiments;
pub mod femcore;
pub mod flowmap;
pub mod geometry;
pub mod isogeom;
pub mod linalg;
pub mod meshgen;
pub mod meshio;
pub mod operators;
pub mod quadrature;
pub mod rates;
pub mod reference;
pub mod scalar;
pub mod sparse;

pub use scalar::Real;

/// Points and displacements in double precision.
pub type Vec2 = linalg::Vec2<f64>;
pub type Mat2 = linalg::Mat2<f64>;
pub type ReferenceElement = reference::ReferenceElement<f64>;
pub type TriangleRule = quadrature::TriangleRule<f64>;
