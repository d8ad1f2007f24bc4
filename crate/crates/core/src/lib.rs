//! Generalized Cahn–Hilliard model with p-Laplacian: potential, phase-plane
//! profiles, finite-volume dynamics and metastability diagnostics.

pub mod dynamics;
pub mod field;
pub mod metastability;
pub mod phaseplane;
pub mod potential;
pub mod quadrature;
pub mod roots;
