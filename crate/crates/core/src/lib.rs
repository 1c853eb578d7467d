//! Guiding vector fields for following a 3D path given as the intersection
//! of two implicit surfaces.
//!
//! The field `χ = n₁ × n₂ − N K e` steers trajectories onto the path
//! `φ₁ = φ₂ = 0` and then along it. This crate evaluates the field and its
//! derivatives, integrates the flows it induces together with a fixed-wing
//! aircraft guidance loop, and provides numerical checks of its
//! convergence properties.

pub mod analysis;
pub mod dynamics;
pub mod expr;
pub mod field;
pub mod fmt;
pub mod jet;
pub mod ode;
pub mod path;
pub mod trajectory;
