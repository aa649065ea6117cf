//! Conversion between SI and natural units.
//!
//! Natural units fix `hbar = 1` and pick a reference mass and angular
//! frequency; lengths scale as `sqrt(hbar / (m_ref omega_ref))` and energies
//! as `hbar omega_ref`. All numerics run in natural units so that SI scales
//! like 1e-26 kg never enter the linear algebra.

use crate::constants::HBAR;
use crate::model::{InGroupInteraction, SystemSpec, UnitSystem};

/// Reference scales defining a natural-unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    /// Reference mass in kg.
    pub mass: f64,
    /// Reference angular frequency in rad/s.
    pub frequency: f64,
}

impl Scales {
    pub fn identity() -> Self {
        Scales { mass: 1.0, frequency: 1.0 }
    }

    /// Pick reference scales from an SI spec: the largest mass and the
    /// largest frequency scale present (trap frequencies, or the coupling
    /// and spring stiffness scales when all traps vanish).
    pub fn for_system(spec: &SystemSpec) -> Self {
        let mass = spec
            .clusters
            .iter()
            .flat_map(|c| c.masses.iter().copied())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut freq = spec.clusters.iter().map(|c| c.omega).fold(0.0f64, f64::max);
        if freq == 0.0 {
            let mut stiffness = spec
                .couplings
                .iter()
                .flat_map(|c| c.d_matrix.iter().copied())
                .fold(0.0f64, |acc, d| acc.max(d.abs()));
            for c in &spec.clusters {
                if let InGroupInteraction::Harmonic(s) = &c.in_group {
                    stiffness = s.iter().fold(stiffness, |acc, k| acc.max(k.abs()));
                }
            }
            freq = (stiffness / mass).sqrt();
        }
        if freq == 0.0 {
            freq = 1.0;
        }
        Scales { mass, frequency: freq }
    }

    /// Ground-state length scale `sqrt(hbar / (m_ref omega_ref))` in m.
    pub fn length(&self) -> f64 {
        (HBAR / (self.mass * self.frequency)).sqrt()
    }

    /// Energy scale `hbar omega_ref` in J.
    pub fn energy(&self) -> f64 {
        HBAR * self.frequency
    }

    /// Stiffness scale `m_ref omega_ref^2` (units of the coupling constants
    /// `d` and spring constants `k`).
    pub fn stiffness(&self) -> f64 {
        self.mass * self.frequency * self.frequency
    }

    /// Convert an SI spec to natural units.
    pub fn to_natural(&self, spec: &SystemSpec) -> SystemSpec {
        let mut out = spec.clone();
        out.unit_system = UnitSystem::Natural;
        for c in &mut out.clusters {
            for m in &mut c.masses {
                *m /= self.mass;
            }
            c.omega /= self.frequency;
            if let InGroupInteraction::Harmonic(s) = &mut c.in_group {
                *s /= self.stiffness();
            }
        }
        for c in &mut out.couplings {
            c.d_matrix /= self.stiffness();
            for r in &mut c.r0 {
                *r /= self.length();
            }
            if let Some(v) = &mut c.v_const {
                *v /= self.energy();
            }
        }
        out
    }

    pub fn frequency_to_si(&self, natural: f64) -> f64 {
        natural * self.frequency
    }

    pub fn energy_to_si(&self, natural: f64) -> f64 {
        natural * self.energy()
    }

    pub fn length_to_si(&self, natural: f64) -> f64 {
        natural * self.length()
    }
}
