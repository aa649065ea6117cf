//! Exact decoupling of interacting particle clusters with harmonic
//! inter-cluster couplings.
//!
//! M clusters with arbitrary in-group interactions and pairwise harmonic
//! couplings between clusters separate into M independent relative problems
//! plus one analytically solvable system of M coupled center-of-mass
//! oscillators, exactly when every coupling matrix factorizes as
//! `d_ik = m_i m_k d0`. This crate provides:
//!
//! - the validated data model and strict JSON config format ([`model`]),
//! - the factorization test and the separated Hamiltonians ([`separation`]),
//! - normal-mode spectra of the CM problem plus a brute-force
//!   full-diagonalization oracle ([`modes`]),
//! - quench dynamics of the impurity/bath two-mode problem through the
//!   Ermakov scaling equation ([`quench`], [`bessel`], [`ode`]),
//! - the physical impurity-in-ion-ring scenario in SI units ([`ion_ring`],
//!   [`units`], [`constants`]).

pub mod bessel;
pub mod constants;
pub mod ion_ring;
pub mod model;
pub mod modes;
pub mod ode;
pub mod quench;
pub mod separation;
pub mod units;

pub use model::{
    validate_system, ClusterSpec, InGroupInteraction, InterClusterCoupling, SystemSpec,
    UnitSystem, Violation,
};
pub use modes::{brute_force_full_harmonic, separated_spectrum, NormalModeDecomposition};
pub use quench::{EvolutionRecord, FrequencyProtocol, QuenchScenario};
pub use separation::{check_decoupling, separate, CmHamiltonian, DecouplingReport};
