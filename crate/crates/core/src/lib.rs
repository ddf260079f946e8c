//! Spectral Monte Carlo for regularized Gaussian free fields on spheres.

pub mod estimator;
pub mod gaussian;
pub mod geometry;
pub mod harmonics;
pub mod interaction;
pub mod quadrature;
pub mod regularization;
pub mod symmetry;
