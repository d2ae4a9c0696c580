//! Simulation of driven-dissipative spin-1/2 lattices.
//!
//! The model is an anisotropic Heisenberg (XYZ) lattice of spins 1/2 with
//! local spontaneous decay. The crate provides three routes to its dynamics
//! and steady state:
//!
//! * brute-force density-matrix integration and quantum-jump Monte Carlo for
//!   small systems ([`exact`], [`jump`]),
//! * stochastic trajectories of cumulant-truncated moment hierarchies that
//!   scale to hundreds of sites ([`qsd`]),
//! * observable estimation and finite-size analysis on top of either
//!   ([`observables`], [`ensemble`], [`analysis`]).

pub mod analysis;
pub mod cumulant;
pub mod ensemble;
pub mod exact;
pub mod jump;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod output;
pub mod qsd;
