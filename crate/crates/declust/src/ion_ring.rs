//! The physical impurity-in-ring scenario: a charged impurity on the axis of
//! a ring of N identical ions, coupled through the quadratic expansion of
//! the Coulomb interaction.
//!
//! For axial displacements small against the ring radius, the pair energy
//! `k_e Q Q_I / (rho sqrt(1 + (z_i - z_I)^2 / rho^2))` expands to a constant
//! minus `d_z (z_i - z_I)^2 / 2` with `d_z = k_e Q Q_I / rho^3`: every bath
//! ion couples to the impurity with the same strength, so the factorization
//! condition holds by construction and the impurity talks only to the bath
//! center of mass. The external traps are softened by the Coulomb
//! anti-trapping: `m omega_zI^2 = m omega_ext^2 - N d_z` and
//! `m Omega^2 = m Omega_ext^2 - d_z`.
//!
//! Everything here converts SI inputs to natural units (`hbar = 1`,
//! `m = 1`, `omega(0) = 1`) at the boundary and hands dimensionless
//! scenarios to [`crate::quench`].

use serde::Serialize;
use thiserror::Error;

use crate::constants;
use crate::model::{ClusterSpec, InGroupInteraction, InterClusterCoupling, SystemSpec, UnitSystem};
use crate::quench::{EvolutionRecord, QuenchScenario};
use crate::separation::{CmCoupling, CmHamiltonian};
use nalgebra::DMatrix;

/// CODATA values used by the scenario builder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    /// Coulomb constant, N m^2 / C^2.
    pub coulomb: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Elementary charge, C.
    pub elementary_charge: f64,
    /// Atomic mass unit, kg.
    pub atomic_mass: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            coulomb: constants::COULOMB_CONSTANT,
            hbar: constants::HBAR,
            elementary_charge: constants::ELEMENTARY_CHARGE,
            atomic_mass: constants::ATOMIC_MASS_KG,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{name} must be positive, got {value}")]
    NonPositiveInput { name: &'static str, value: f64 },
    #[error("derived squared trap frequency {name} = {value} is not positive (trap does not dominate the Coulomb anti-trapping)")]
    InvalidTrap { name: &'static str, value: f64 },
    #[error("branch construction assumes Omega = omega_zI; got {omega_bath} vs {omega_impurity} rad/s")]
    UnequalTrapFrequencies { omega_bath: f64, omega_impurity: f64 },
}

/// Impurity-in-ring scenario with every derived quantity in SI.
#[derive(Debug, Clone, Serialize)]
pub struct IonRingScenario {
    /// Number of bath ions in the ring.
    pub n_bath: usize,
    /// Ring radius, m.
    pub ring_radius: f64,
    /// Bath ion charge, C.
    pub bath_charge: f64,
    /// Impurity charge, C.
    pub impurity_charge: f64,
    /// Ion mass, kg (impurity and bath ions are the same species).
    pub ion_mass: f64,
    /// Coulomb coupling `d_z = k_e Q Q_I / rho^3`, kg / s^2.
    pub coupling_dz: f64,
    /// Effective impurity axial frequency `omega_zI`, rad/s. This is the
    /// reference `omega(0)` of the quench.
    pub omega_impurity: f64,
    /// Effective bath axial frequency `Omega`, rad/s.
    pub omega_bath: f64,
    /// External impurity trap frequency, rad/s.
    pub omega_impurity_ext: f64,
    /// External bath trap frequency, rad/s.
    pub omega_bath_ext: f64,
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ScenarioError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::NonPositiveInput { name, value })
    }
}

impl IonRingScenario {
    /// The published setup: 40Ca+ ions, a 45 um ring, N = 10, equal charges,
    /// equal effective frequencies, and `m omega^2(0) = 20 d_z sqrt(N)`.
    pub fn paper_preset() -> Self {
        Self::from_dimensionless_preset(
            10,
            45e-6,
            constants::CA40_ION_MASS_KG,
            constants::ELEMENTARY_CHARGE,
            PhysicalConstants::default(),
        )
        .expect("paper preset inputs are positive")
    }

    /// Dimensionless prescription: both effective frequencies equal
    /// `omega(0)` with `m omega^2(0) = 20 d_z sqrt(N)`; the external
    /// frequencies are derived backwards from the Coulomb softening.
    pub fn from_dimensionless_preset(
        n_bath: usize,
        ring_radius: f64,
        ion_mass: f64,
        charge: f64,
        consts: PhysicalConstants,
    ) -> Result<Self, ScenarioError> {
        require_positive("n_bath", n_bath as f64)?;
        require_positive("ring_radius", ring_radius)?;
        require_positive("ion_mass", ion_mass)?;
        require_positive("charge", charge)?;
        let coupling_dz = consts.coulomb * charge * charge / ring_radius.powi(3);
        let omega_sq = 20.0 * coupling_dz * (n_bath as f64).sqrt() / ion_mass;
        let omega = omega_sq.sqrt();
        Ok(IonRingScenario {
            n_bath,
            ring_radius,
            bath_charge: charge,
            impurity_charge: charge,
            ion_mass,
            coupling_dz,
            omega_impurity: omega,
            omega_bath: omega,
            omega_impurity_ext: (omega_sq + n_bath as f64 * coupling_dz / ion_mass).sqrt(),
            omega_bath_ext: (omega_sq + coupling_dz / ion_mass).sqrt(),
        })
    }

    /// Explicit SI path: external trap frequencies given, effective
    /// frequencies derived by subtracting the Coulomb anti-trapping.
    #[allow(clippy::too_many_arguments)]
    pub fn from_external(
        n_bath: usize,
        ring_radius: f64,
        ion_mass: f64,
        bath_charge: f64,
        impurity_charge: f64,
        omega_impurity_ext: f64,
        omega_bath_ext: f64,
        consts: PhysicalConstants,
    ) -> Result<Self, ScenarioError> {
        require_positive("n_bath", n_bath as f64)?;
        require_positive("ring_radius", ring_radius)?;
        require_positive("ion_mass", ion_mass)?;
        require_positive("bath_charge", bath_charge)?;
        require_positive("impurity_charge", impurity_charge)?;
        require_positive("omega_impurity_ext", omega_impurity_ext)?;
        require_positive("omega_bath_ext", omega_bath_ext)?;
        let coupling_dz = consts.coulomb * bath_charge * impurity_charge / ring_radius.powi(3);
        let omega_impurity_sq =
            omega_impurity_ext.powi(2) - n_bath as f64 * coupling_dz / ion_mass;
        if omega_impurity_sq <= 0.0 {
            return Err(ScenarioError::InvalidTrap { name: "omega_zI^2", value: omega_impurity_sq });
        }
        let omega_bath_sq = omega_bath_ext.powi(2) - coupling_dz / ion_mass;
        if omega_bath_sq <= 0.0 {
            return Err(ScenarioError::InvalidTrap { name: "Omega^2", value: omega_bath_sq });
        }
        Ok(IonRingScenario {
            n_bath,
            ring_radius,
            bath_charge,
            impurity_charge,
            ion_mass,
            coupling_dz,
            omega_impurity: omega_impurity_sq.sqrt(),
            omega_bath: omega_bath_sq.sqrt(),
            omega_impurity_ext,
            omega_bath_ext,
        })
    }

    /// Reference frequency `omega(0)` of the natural-unit system, rad/s.
    pub fn omega_ref(&self) -> f64 {
        self.omega_impurity
    }

    /// `d_z sqrt(N) / m` in units of `omega(0)^2`: the branch offset of the
    /// two-mode problem.
    pub fn coupling_delta_natural(&self) -> f64 {
        self.coupling_dz * (self.n_bath as f64).sqrt()
            / (self.ion_mass * self.omega_ref().powi(2))
    }

    /// Squared length scale `hbar / (m omega(0))` converting the natural
    /// variance to m^2.
    pub fn variance_scale_si(&self) -> f64 {
        constants::HBAR / (self.ion_mass * self.omega_ref())
    }

    /// Dimensionless quench scenario with the paper's target
    /// `m omega^2(t_f) = 2 d_z sqrt(N)`. Requires the equal-frequency
    /// assumption `Omega = omega_zI` (the normal coordinates
    /// `(z_I -+ sqrt(N) Z)/sqrt(2)` presuppose it).
    pub fn quench_scenario(&self) -> Result<QuenchScenario, ScenarioError> {
        let rel = (self.omega_bath - self.omega_impurity).abs() / self.omega_impurity;
        if rel > 1e-9 {
            return Err(ScenarioError::UnequalTrapFrequencies {
                omega_bath: self.omega_bath,
                omega_impurity: self.omega_impurity,
            });
        }
        let delta = self.coupling_delta_natural();
        Ok(QuenchScenario {
            coupling_delta: delta,
            omega_sq_init: 1.0,
            omega_sq_final: 2.0 * delta,
            n_bath: Some(self.n_bath),
        })
    }

    /// The full system in natural units: impurity cluster plus bath cluster
    /// with the constant Coulomb coupling `-d_z` on every pair (the negative
    /// sign reproduces the `+d_z z_i z_I` cross term of the expansion; the
    /// diagonal parts are what soften the external traps into the effective
    /// frequencies).
    pub fn natural_system_spec(&self) -> SystemSpec {
        let omega_ref = self.omega_ref();
        let d_nat = self.coupling_dz / (self.ion_mass * omega_ref.powi(2));
        SystemSpec {
            dimension: 1,
            unit_system: UnitSystem::Natural,
            clusters: vec![
                ClusterSpec::new(vec![1.0], self.omega_impurity_ext / omega_ref),
                ClusterSpec {
                    masses: vec![1.0; self.n_bath],
                    omega: self.omega_bath_ext / omega_ref,
                    in_group: InGroupInteraction::External("ring-coulomb".into()),
                },
            ],
            couplings: vec![InterClusterCoupling::new(
                1,
                0,
                DMatrix::from_element(self.n_bath, 1, -d_nat),
            )],
        }
    }

    /// The reduced two-mode CM Hamiltonian, natural units.
    pub fn cm_hamiltonian(&self) -> CmHamiltonian {
        let omega_ref = self.omega_ref();
        let n = self.n_bath as f64;
        let d_nat = self.coupling_dz / (self.ion_mass * omega_ref.powi(2));
        CmHamiltonian {
            masses: vec![1.0, n],
            omegas: vec![self.omega_impurity_ext / omega_ref, self.omega_bath_ext / omega_ref],
            dimension: 1,
            energy_offset: 0.0,
            couplings: vec![CmCoupling { alpha: 1, beta: 0, d0: -d_nat, r0: vec![0.0] }],
        }
    }
}

/// Severity of the small-displacement check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplacementLevel {
    Ok,
    Warning,
    Error,
}

/// Validity report for the quadratic Coulomb expansion: the impurity cloud
/// must stay small against the ring radius.
#[derive(Debug, Clone, Serialize)]
pub struct DisplacementReport {
    /// `max_t sqrt(<z_I^2>) / rho`.
    pub max_ratio: f64,
    /// Time (natural units) where the maximum occurs.
    pub worst_time: f64,
    pub level: DisplacementLevel,
}

/// Check `sqrt(<z_I^2>) << rho` over a completed quench run. Warns above a
/// ratio of 0.05 and flags an error above 0.2.
pub fn validate_small_displacement(
    scenario: &IonRingScenario,
    record: &EvolutionRecord,
) -> DisplacementReport {
    let scale = scenario.variance_scale_si();
    let mut max_ratio = 0.0f64;
    let mut worst_time = 0.0f64;
    for (t, v) in record.times.iter().zip(&record.variance_impurity) {
        let ratio = (v * scale).sqrt() / scenario.ring_radius;
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_time = *t;
        }
    }
    let level = if max_ratio >= 0.2 {
        DisplacementLevel::Error
    } else if max_ratio >= 0.05 {
        DisplacementLevel::Warning
    } else {
        DisplacementLevel::Ok
    };
    DisplacementReport { max_ratio, worst_time, level }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes;
    use crate::ode::StepControl;
    use crate::quench;
    use crate::separation::{self, DEFAULT_REL_TOL};
    use approx::assert_relative_eq;

    #[test]
    fn paper_preset_omega_matches_reported_value() {
        let s = IonRingScenario::paper_preset();
        // omega(0) ~ 1.5 MHz (rad/s)
        assert!((s.omega_ref() - 1.5e6).abs() / 1.5e6 < 0.05, "omega(0) = {}", s.omega_ref());
        // and the derived coupling delta is 1/20 by construction
        assert_relative_eq!(s.coupling_delta_natural(), 0.05, max_relative = 1e-12);
    }

    #[test]
    fn coupling_scales_with_inverse_radius_cubed() {
        let a = IonRingScenario::paper_preset();
        let b = IonRingScenario::from_dimensionless_preset(
            10,
            2.0 * 45e-6,
            constants::CA40_ION_MASS_KG,
            constants::ELEMENTARY_CHARGE,
            PhysicalConstants::default(),
        )
        .unwrap();
        assert_relative_eq!(b.coupling_dz, a.coupling_dz / 8.0, max_relative = 1e-12);
    }

    #[test]
    fn quadratic_expansion_matches_exact_coulomb_curvature() {
        // d_z equals minus the second derivative of the exact pair energy
        // k_e Q Q_I / (rho sqrt(1 + s^2/rho^2)) at s = 0
        let s = IonRingScenario::paper_preset();
        let amplitude = constants::COULOMB_CONSTANT * s.bath_charge * s.impurity_charge;
        let v = |z: f64| amplitude / (s.ring_radius * (1.0 + (z / s.ring_radius).powi(2)).sqrt());
        let h = 3e-4 * s.ring_radius;
        let second_derivative = (v(h) - 2.0 * v(0.0) + v(-h)) / (h * h);
        assert_relative_eq!(-second_derivative, s.coupling_dz, max_relative = 1e-6);
    }

    #[test]
    fn si_natural_round_trip() {
        let s = IonRingScenario::paper_preset();
        let omega_ref = s.omega_ref();
        let stiffness = s.ion_mass * omega_ref * omega_ref;
        // natural quantities scaled back to SI reproduce the originals
        let d_nat = s.coupling_dz / stiffness;
        assert_relative_eq!(d_nat * stiffness, s.coupling_dz, max_relative = 1e-12);
        let spec = s.natural_system_spec();
        assert_relative_eq!(
            spec.clusters[0].omega * omega_ref,
            s.omega_impurity_ext,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            spec.clusters[1].omega * omega_ref,
            s.omega_bath_ext,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            -spec.couplings[0].d_matrix[(0, 0)] * stiffness,
            s.coupling_dz,
            max_relative = 1e-12
        );
    }

    #[test]
    fn generated_system_decouples_exactly() {
        let spec = IonRingScenario::paper_preset().natural_system_spec();
        let reports = separation::check_all(&spec, DEFAULT_REL_TOL).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(reports[0].decoupled);
        // identical entries: residual at the rounding floor of the mean
        assert!(reports[0].max_residual < 1e-14);
    }

    #[test]
    fn cm_matches_separated_system() {
        let s = IonRingScenario::paper_preset();
        let (cm_from_spec, _) = separation::separate(&s.natural_system_spec(), DEFAULT_REL_TOL).unwrap();
        let cm_direct = s.cm_hamiltonian();
        assert_relative_eq!(cm_from_spec.masses[1], cm_direct.masses[1], max_relative = 1e-12);
        assert_relative_eq!(
            cm_from_spec.d0_between(0, 1),
            cm_direct.d0_between(0, 1),
            max_relative = 1e-12
        );
        // the mass-weighted stiffness has equal diagonals omega(0)^2 = 1 and
        // eigenvalues 1 -+ delta
        let form = modes::build_cm_stiffness(&cm_direct);
        assert_relative_eq!(form.stiffness[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(form.stiffness[(1, 1)], 1.0, max_relative = 1e-12);
        let d = modes::diagonalize(&form, &cm_direct.masses, 1).unwrap();
        let delta = s.coupling_delta_natural();
        assert_relative_eq!(d.frequencies[0], (1.0 - delta).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(d.frequencies[1], (1.0 + delta).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn single_ion_ring_is_a_hooke_pair() {
        let s = IonRingScenario::from_dimensionless_preset(
            1,
            45e-6,
            constants::CA40_ION_MASS_KG,
            constants::ELEMENTARY_CHARGE,
            PhysicalConstants::default(),
        )
        .unwrap();
        let spec = s.natural_system_spec();
        assert_eq!(spec.particle_count(), 2);
        assert_eq!(spec.couplings[0].d_matrix.shape(), (1, 1));
        let cm = s.cm_hamiltonian();
        assert_eq!(cm.masses, vec![1.0, 1.0]);
    }

    #[test]
    fn invalid_trap_detected() {
        // external trap far too weak to beat the Coulomb anti-trapping
        let err = IonRingScenario::from_external(
            10,
            45e-6,
            constants::CA40_ION_MASS_KG,
            constants::ELEMENTARY_CHARGE,
            constants::ELEMENTARY_CHARGE,
            1.0e3,
            1.0e6,
            PhysicalConstants::default(),
        );
        assert!(matches!(err, Err(ScenarioError::InvalidTrap { .. })));
    }

    #[test]
    fn unequal_frequencies_rejected_for_quench() {
        let s = IonRingScenario::from_external(
            10,
            45e-6,
            constants::CA40_ION_MASS_KG,
            constants::ELEMENTARY_CHARGE,
            constants::ELEMENTARY_CHARGE,
            2.0e6,
            1.8e6,
            PhysicalConstants::default(),
        )
        .unwrap();
        assert!(matches!(s.quench_scenario(), Err(ScenarioError::UnequalTrapFrequencies { .. })));
    }

    #[test]
    fn small_displacement_paper_run() {
        let s = IonRingScenario::paper_preset();
        let scenario = s.quench_scenario().unwrap();
        let record =
            quench::run_single(&scenario, 10.0, 40.0, 400, &StepControl::default()).unwrap();
        let report = validate_small_displacement(&s, &record);
        assert_eq!(report.level, DisplacementLevel::Ok);
        assert!(report.max_ratio < 0.05);
    }

    #[test]
    fn small_displacement_flags_tiny_ring() {
        let s = IonRingScenario::paper_preset();
        let mut shrunk = s.clone();
        shrunk.ring_radius /= 1000.0;
        // keep the recorded dynamics; only the SI scale changes
        let scenario = s.quench_scenario().unwrap();
        let record =
            quench::run_single(&scenario, 10.0, 10.0, 100, &StepControl::default()).unwrap();
        let report = validate_small_displacement(&shrunk, &record);
        assert_eq!(report.level, DisplacementLevel::Error);
    }

    #[test]
    fn zero_coupling_control_ratio_constant() {
        let s = IonRingScenario::paper_preset();
        let scenario = QuenchScenario {
            coupling_delta: 0.0,
            omega_sq_init: 1.0,
            omega_sq_final: 1.0,
            n_bath: Some(10),
        };
        let record =
            quench::run_single(&scenario, 0.5, 10.0, 100, &StepControl::default()).unwrap();
        let scale = s.variance_scale_si();
        let ratios: Vec<f64> = record
            .variance_impurity
            .iter()
            .map(|v| (v * scale).sqrt() / s.ring_radius)
            .collect();
        for r in &ratios {
            assert_relative_eq!(*r, ratios[0], max_relative = 1e-9);
        }
    }
}
