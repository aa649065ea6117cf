//! Physical constants (CODATA 2018 / AME 2020), SI units.

/// Coulomb constant `1/(4 pi eps_0)` in N m^2 / C^2.
pub const COULOMB_CONSTANT: f64 = 8.987_551_787_368_176e9;

/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Elementary charge in C (exact since the 2019 SI redefinition).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Atomic mass unit in kg.
pub const ATOMIC_MASS_KG: f64 = 1.660_539_066_60e-27;

/// Electron mass in atomic mass units.
pub const ELECTRON_MASS_U: f64 = 5.485_799_090_65e-4;

/// Atomic mass of neutral 40Ca in u (AME).
pub const CA40_ATOMIC_MASS_U: f64 = 39.962_590_863;

/// Mass of a singly charged 40Ca+ ion in kg (neutral atom minus one
/// electron; the ~1e-5 relative correction is below every tolerance used
/// here but costs nothing to carry).
pub const CA40_ION_MASS_KG: f64 = (CA40_ATOMIC_MASS_U - ELECTRON_MASS_U) * ATOMIC_MASS_KG;
