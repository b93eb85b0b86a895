//! Effective electrokinetic transport coefficients of random disperse porous
//! media: equilibrium Poisson-Boltzmann solves, corrector cell problems,
//! Onsager tensor assembly, the homogenized macroscopic problem, and direct
//! epsilon-scale simulations for convergence studies.

pub mod cell;
pub mod epsilon;
pub mod geometry;
pub mod grid;
pub mod macrosolve;
pub mod model;
pub mod onsager;
pub mod pb;
