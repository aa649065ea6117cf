//! Normal-mode analysis of the center-of-mass Hamiltonian and the
//! brute-force all-harmonic oracle.
//!
//! The CM problem is diagonalized in mass-weighted coordinates
//! `s_a = sqrt(M_a) R_a`, where the stiffness matrix is symmetric and the
//! eigenvectors come out orthonormal. The isotropic problem is solved once
//! and replicated over the spatial dimensions; only the linear (shift) term
//! differs per dimension.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{ClusterSpec, InGroupInteraction, SystemSpec};
use crate::separation::{self, CmHamiltonian, SeparationError};

/// Relative zero-mode classification threshold; scaled by
/// `max(1, ||K||_inf)`. Translation invariance is exact in theory, fuzzy in
/// floats.
pub const ZERO_MODE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModeError {
    #[error("mode {mode} has negative squared frequency {omega_sq} (spectrum unbounded below)")]
    UnstableMode { mode: usize, omega_sq: f64 },
    #[error("stiffness is singular along a direction the shift term pushes on (no equilibrium exists)")]
    InconsistentShift,
    #[error("cluster {cluster} has a non-harmonic in-group interaction; brute force requires harmonic or none")]
    NonHarmonicInGroup { cluster: usize },
    #[error("got {got} occupation numbers, expected {expected}")]
    OccupationMismatch { got: usize, expected: usize },
}

/// Errors from the full separated-spectrum pipeline.
#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Separation(#[from] SeparationError),
    #[error(transparent)]
    Mode(#[from] ModeError),
}

/// Quadratic form of the CM potential in mass-weighted coordinates:
/// `V = 1/2 s^T K s + b^T s + c` per spatial dimension (the same `K` serves
/// every dimension; `b` has one column per dimension).
#[derive(Debug, Clone)]
pub struct CmQuadraticForm {
    pub stiffness: DMatrix<f64>,
    /// `M x D`; column `d` is the linear term for dimension `d`.
    pub linear: DMatrix<f64>,
    /// Constant from the shift expansion plus the system's energy offset.
    pub constant: f64,
}

/// Assemble the mass-weighted stiffness, linear term and constant of the CM
/// Hamiltonian. Diagonal entries are `omega_a^2 + sum_b M_b d0(a,b)`,
/// off-diagonal entries are `-sqrt(M_a M_b) d0(a,b)`; the shift vectors
/// `r0` feed only `b` and `c`, never `K`.
pub fn build_cm_stiffness(cm: &CmHamiltonian) -> CmQuadraticForm {
    let m = cm.cluster_count();
    let dim = cm.dimension;
    let mut stiffness = DMatrix::zeros(m, m);
    for a in 0..m {
        let mut diag = cm.omegas[a].powi(2);
        for b in 0..m {
            if b != a {
                let d0 = cm.d0_between(a, b);
                diag += cm.masses[b] * d0;
                stiffness[(a, b)] = -(cm.masses[a] * cm.masses[b]).sqrt() * d0;
            }
        }
        stiffness[(a, a)] = diag;
    }

    let mut linear = DMatrix::zeros(m, dim);
    let mut constant = cm.energy_offset;
    for c in &cm.couplings {
        let weight = cm.masses[c.alpha] * cm.masses[c.beta] * c.d0;
        for d in 0..dim {
            let r = c.r0[d];
            // 1/2 w (R_a - R_b - r)^2 contributes -w r R_a + w r R_b + w r^2 / 2
            linear[(c.alpha, d)] += -weight * r / cm.masses[c.alpha].sqrt();
            linear[(c.beta, d)] += weight * r / cm.masses[c.beta].sqrt();
            constant += 0.5 * weight * r * r;
        }
    }
    CmQuadraticForm { stiffness, linear, constant }
}

/// Normal modes of the CM Hamiltonian. Frequencies are per spatial
/// dimension; the isotropic spectrum repeats `dimension` times.
#[derive(Debug, Clone)]
pub struct NormalModeDecomposition {
    /// Mode frequencies sorted ascending; zero modes are stored as exact 0.
    pub frequencies: Vec<f64>,
    /// Columns are mode vectors, orthonormal in mass-weighted coordinates,
    /// ordered like `frequencies`.
    pub mode_vectors: DMatrix<f64>,
    /// Equilibrium CM displacement `R*_a`, one row per cluster, one column
    /// per dimension.
    pub equilibrium: DMatrix<f64>,
    /// Potential at the equilibrium plus the constant offsets.
    pub energy_offset: f64,
    /// Number of zero modes (per dimension). Zero modes contribute no
    /// oscillator energy and are excluded from occupation lists.
    pub zero_modes: usize,
    pub dimension: usize,
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|k| m[(i, k)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Sorted eigenpairs of a symmetric matrix, ascending by eigenvalue.
fn sorted_symmetric_eigen(matrix: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eigen = matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eigen.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let values = order.iter().map(|&i| eigen.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(matrix.nrows(), matrix.ncols(), |i, k| {
        eigen.eigenvectors[(i, order[k])]
    });
    (values, vectors)
}

/// Diagonalize the CM quadratic form: eigenmodes, equilibrium and constant
/// energy offset. `masses` converts the mass-weighted equilibrium back to
/// cluster coordinates.
pub fn diagonalize(
    form: &CmQuadraticForm,
    masses: &[f64],
    dimension: usize,
) -> Result<NormalModeDecomposition, ModeError> {
    let m = form.stiffness.nrows();
    let scale = inf_norm(&form.stiffness).max(1.0);
    let ztol = ZERO_MODE_TOL * scale;

    let (values, vectors) = sorted_symmetric_eigen(&form.stiffness);

    let mut frequencies = Vec::with_capacity(m);
    let mut zero_modes = 0;
    for (k, &lambda) in values.iter().enumerate() {
        if lambda < -ztol {
            return Err(ModeError::UnstableMode { mode: k, omega_sq: lambda });
        }
        if lambda.abs() < ztol {
            zero_modes += 1;
            frequencies.push(0.0);
        } else {
            frequencies.push(lambda.sqrt());
        }
    }

    // equilibrium solves K s* = -b per dimension, expanded in the eigenbasis;
    // a zero mode with a force component along it has no equilibrium
    let b_scale = form.linear.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let shift_tol = ZERO_MODE_TOL * scale.max(b_scale).max(1.0);
    let mut equilibrium = DMatrix::zeros(m, dimension);
    let mut energy_offset = form.constant;
    for d in 0..dimension {
        let b = form.linear.column(d);
        let mut s_star = DVector::zeros(m);
        for (k, &lambda) in values.iter().enumerate() {
            let projection = vectors.column(k).dot(&b);
            if frequencies[k] == 0.0 {
                if projection.abs() > shift_tol {
                    return Err(ModeError::InconsistentShift);
                }
            } else {
                s_star += vectors.column(k) * (-projection / lambda);
            }
        }
        energy_offset +=
            0.5 * (&form.stiffness * &s_star).dot(&s_star) + b.dot(&s_star);
        for a in 0..m {
            equilibrium[(a, d)] = s_star[a] / masses[a].sqrt();
        }
    }

    Ok(NormalModeDecomposition {
        frequencies,
        mode_vectors: vectors,
        equilibrium,
        energy_offset,
        zero_modes,
        dimension,
    })
}

/// Build and diagonalize in one step.
pub fn decompose(cm: &CmHamiltonian) -> Result<NormalModeDecomposition, ModeError> {
    diagonalize(&build_cm_stiffness(cm), &cm.masses, cm.dimension)
}

impl NormalModeDecomposition {
    /// Frequencies of the oscillating (non-zero) modes, ascending.
    pub fn oscillating_frequencies(&self) -> &[f64] {
        &self.frequencies[self.zero_modes..]
    }

    /// CM energy for the given occupation numbers.
    ///
    /// `occupations` covers the non-zero modes only, dimension-major: the
    /// first `frequencies - zero_modes` entries belong to dimension 0 in
    /// ascending mode order, and so on. Zero modes carry no oscillator sum;
    /// free-particle CM dispersion is not modeled.
    pub fn cm_energy(&self, occupations: &[u64]) -> Result<f64, ModeError> {
        let per_dim = self.frequencies.len() - self.zero_modes;
        let expected = per_dim * self.dimension;
        if occupations.len() != expected {
            return Err(ModeError::OccupationMismatch { got: occupations.len(), expected });
        }
        let mut energy = self.energy_offset;
        for (slot, &n) in occupations.iter().enumerate() {
            let omega = self.oscillating_frequencies()[slot % per_dim];
            energy += omega * (n as f64 + 0.5);
        }
        Ok(energy)
    }

    /// Ground-state CM energy: all occupations zero.
    pub fn ground_state_energy(&self) -> f64 {
        let per_dim = self.frequencies.len() - self.zero_modes;
        self.cm_energy(&vec![0; per_dim * self.dimension]).expect("zero occupations fit")
    }
}

/// Energy bookkeeping for the assembled spectrum: CM occupations plus one
/// relative energy per cluster (user-supplied or from the harmonic oracle).
#[derive(Debug, Clone)]
pub struct SpectrumQuery {
    pub occupations: Vec<u64>,
    pub relative_energies: Vec<f64>,
}

/// Total energy `E = E_cm + sum_a E_rel_a`, natural units.
pub fn assemble_total_energy(
    query: &SpectrumQuery,
    decomposition: &NormalModeDecomposition,
) -> Result<f64, ModeError> {
    let e_cm = decomposition.cm_energy(&query.occupations)?;
    Ok(e_cm + query.relative_energies.iter().sum::<f64>())
}

/// Mass-weighted stiffness of the full system assembled directly from the
/// particle-level Hamiltonian, one spatial dimension. Pair terms
/// `k (x_i - x_k)^2 / 2` add `k` on both diagonals and `-k` off-diagonal,
/// then everything is scaled by `1 / sqrt(m_i m_k)`.
fn full_mass_weighted_stiffness(spec: &SystemSpec) -> Result<DMatrix<f64>, ModeError> {
    let n_total = spec.particle_count();
    let mut offsets = Vec::with_capacity(spec.cluster_count());
    let mut acc = 0;
    for c in &spec.clusters {
        offsets.push(acc);
        acc += c.len();
    }
    let masses: Vec<f64> = spec.clusters.iter().flat_map(|c| c.masses.iter().copied()).collect();

    let mut h = DMatrix::zeros(n_total, n_total);
    for (a, cluster) in spec.clusters.iter().enumerate() {
        for i in 0..cluster.len() {
            let gi = offsets[a] + i;
            h[(gi, gi)] += cluster.masses[i] * cluster.omega.powi(2);
        }
        match &cluster.in_group {
            InGroupInteraction::None => {}
            InGroupInteraction::Harmonic(springs) => {
                for i in 0..cluster.len() {
                    for k in 0..i {
                        let kk = springs[(i, k)];
                        let (gi, gk) = (offsets[a] + i, offsets[a] + k);
                        h[(gi, gi)] += kk;
                        h[(gk, gk)] += kk;
                        h[(gi, gk)] -= kk;
                        h[(gk, gi)] -= kk;
                    }
                }
            }
            InGroupInteraction::External(_) => {
                return Err(ModeError::NonHarmonicInGroup { cluster: a });
            }
        }
    }
    for c in &spec.couplings {
        for i in 0..spec.clusters[c.alpha].len() {
            for k in 0..spec.clusters[c.beta].len() {
                let d = c.d_matrix[(i, k)];
                let (gi, gk) = (offsets[c.alpha] + i, offsets[c.beta] + k);
                h[(gi, gi)] += d;
                h[(gk, gk)] += d;
                h[(gi, gk)] -= d;
                h[(gk, gi)] -= d;
            }
        }
    }
    for i in 0..n_total {
        for k in 0..n_total {
            h[(i, k)] /= (masses[i] * masses[k]).sqrt();
        }
    }
    Ok(h)
}

/// Diagonalize the full particle-level Hamiltonian without any separation:
/// the equivalence oracle for the separated path. Returns the sorted
/// mode-frequency multiset of one spatial dimension (the isotropic spectrum
/// repeats per dimension); zero modes appear as exact zeros.
pub fn brute_force_full_harmonic(spec: &SystemSpec) -> Result<Vec<f64>, ModeError> {
    let h = full_mass_weighted_stiffness(spec)?;
    let ztol = ZERO_MODE_TOL * inf_norm(&h).max(1.0);
    let (values, _) = sorted_symmetric_eigen(&h);
    values
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            if lambda < -ztol {
                Err(ModeError::UnstableMode { mode: k, omega_sq: lambda })
            } else if lambda.abs() < ztol {
                Ok(0.0)
            } else {
                Ok(lambda.sqrt())
            }
        })
        .collect()
}

/// Relative-motion mode frequencies of one all-harmonic cluster at its
/// effective frequency: the spring-only mass-weighted stiffness restricted
/// to the complement of the center-of-mass direction, shifted by
/// `omega_bar^2`. Returns `N - 1` frequencies.
pub fn harmonic_relative_modes(
    cluster_index: usize,
    cluster: &ClusterSpec,
    effective_frequency: f64,
) -> Result<Vec<f64>, ModeError> {
    let n = cluster.len();
    let springs = match &cluster.in_group {
        InGroupInteraction::None => None,
        InGroupInteraction::Harmonic(s) => Some(s),
        InGroupInteraction::External(_) => {
            return Err(ModeError::NonHarmonicInGroup { cluster: cluster_index })
        }
    };
    let omega_bar_sq = effective_frequency.powi(2);
    if n == 1 {
        return Ok(Vec::new());
    }
    let Some(springs) = springs else {
        return Ok(vec![effective_frequency; n - 1]);
    };

    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..i {
            let kk = springs[(i, k)];
            s[(i, i)] += kk;
            s[(k, k)] += kk;
            s[(i, k)] -= kk;
            s[(k, i)] -= kk;
        }
    }
    for i in 0..n {
        for k in 0..n {
            s[(i, k)] /= (cluster.masses[i] * cluster.masses[k]).sqrt();
        }
    }

    // the CM direction (sqrt(m_i), normalized) spans the spring null space;
    // deflate it with a Householder reflection and keep the complement
    let mut u = DVector::from_fn(n, |i, _| cluster.masses[i].sqrt());
    u /= u.norm();
    let sign = if u[n - 1] >= 0.0 { 1.0 } else { -1.0 };
    let mut w = u.clone();
    w[n - 1] += sign;
    w /= w.norm();
    let reflector = DMatrix::identity(n, n) - 2.0 * &w * w.transpose();
    let complement = reflector.columns(0, n - 1).into_owned();

    let projected = complement.transpose() * &s * &complement;
    let (values, _) = sorted_symmetric_eigen(&projected);
    let ztol = ZERO_MODE_TOL * inf_norm(&s).max(omega_bar_sq).max(1.0);
    values
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let omega_sq = omega_bar_sq + lambda;
            if omega_sq < -ztol {
                Err(ModeError::UnstableMode { mode: k, omega_sq })
            } else {
                Ok(omega_sq.max(0.0).sqrt())
            }
        })
        .collect()
}

/// The separated route to the full spectrum: CM modes union the per-cluster
/// relative modes, sorted ascending. Same length and, for a decoupled
/// all-harmonic system, the same multiset as
/// [`brute_force_full_harmonic`].
pub fn separated_spectrum(spec: &SystemSpec, rel_tol: f64) -> Result<Vec<f64>, SpectrumError> {
    let (cm, descriptors) = separation::separate(spec, rel_tol)?;
    let decomposition = decompose(&cm)?;
    let mut freqs = decomposition.frequencies.clone();
    for d in &descriptors {
        freqs.extend(harmonic_relative_modes(
            d.cluster,
            &spec.clusters[d.cluster],
            d.effective_frequency,
        )?);
    }
    freqs.sort_by(f64::total_cmp);
    Ok(freqs)
}

/// Element-wise relative deviation between two sorted frequency multisets.
pub fn multiset_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "multiset lengths differ");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InterClusterCoupling, UnitSystem};
    use crate::separation::{CmCoupling, DEFAULT_REL_TOL};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn pair_cm(m: [f64; 2], omega: [f64; 2], d0: f64, r0: f64) -> CmHamiltonian {
        CmHamiltonian {
            masses: m.to_vec(),
            omegas: omega.to_vec(),
            dimension: 1,
            energy_offset: 0.0,
            couplings: vec![CmCoupling { alpha: 1, beta: 0, d0, r0: vec![r0] }],
        }
    }

    #[test]
    fn stiffness_single_oscillator() {
        let cm = CmHamiltonian {
            masses: vec![2.0],
            omegas: vec![0.7],
            dimension: 1,
            energy_offset: 0.0,
            couplings: vec![],
        };
        let form = build_cm_stiffness(&cm);
        assert_relative_eq!(form.stiffness[(0, 0)], 0.49, max_relative = 1e-15);
        assert_eq!(form.linear, DMatrix::zeros(1, 1));
        assert_eq!(form.constant, 0.0);
    }

    #[test]
    fn stiffness_impurity_bath_eigenvalues() {
        // impurity (mass m) + bath CM (mass N m) with CM coupling d0 such
        // that the cross term is d_z N: d0 = -d_z / m^2. Eigenvalues must be
        // omega^2 -+ d_z sqrt(N) / m.
        let (m, n, d_z, omega): (f64, f64, f64, f64) = (1.3, 9.0, 0.05, 1.1);
        let d0 = -d_z / (m * m);
        // one-body frequencies chosen so both diagonals equal omega^2
        let omega_imp = (omega * omega - n * m * d0).sqrt();
        let omega_bath = (omega * omega - m * d0).sqrt();
        let cm = pair_cm([m, n * m], [omega_imp, omega_bath], d0, 0.0);
        let form = build_cm_stiffness(&cm);
        assert_relative_eq!(form.stiffness[(0, 0)], omega * omega, max_relative = 1e-12);
        assert_relative_eq!(form.stiffness[(1, 1)], omega * omega, max_relative = 1e-12);
        let decomposition = diagonalize(&form, &cm.masses, 1).unwrap();
        let expected_low = (omega * omega - d_z * n.sqrt() / m).sqrt();
        let expected_high = (omega * omega + d_z * n.sqrt() / m).sqrt();
        assert_relative_eq!(decomposition.frequencies[0], expected_low, max_relative = 1e-12);
        assert_relative_eq!(decomposition.frequencies[1], expected_high, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_pair_zero_mode() {
        let cm = pair_cm([1.0, 1.0], [0.0, 0.0], 1.0, 0.0);
        let form = build_cm_stiffness(&cm);
        assert_relative_eq!(form.stiffness, dmatrix![1.0, -1.0; -1.0, 1.0], epsilon = 1e-15);
        let decomposition = diagonalize(&form, &cm.masses, 1).unwrap();
        assert_eq!(decomposition.zero_modes, 1);
        assert_eq!(decomposition.frequencies[0], 0.0);
        assert_relative_eq!(decomposition.frequencies[1], 2.0f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(decomposition.ground_state_energy(), 2.0f64.sqrt() / 2.0,
            max_relative = 1e-12);
    }

    /// Cyclic Jacobi eigenvalue iteration, written out as an independent
    /// oracle for the library eigensolver.
    fn jacobi_eigenvalues(matrix: &DMatrix<f64>) -> Vec<f64> {
        let n = matrix.nrows();
        let mut a = matrix.clone();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for k in (i + 1)..n {
                    off += a[(i, k)] * a[(i, k)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let (aip, aiq) = (a[(i, p)], a[(i, q)]);
                        a[(i, p)] = c * aip - s * aiq;
                        a[(i, q)] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let (api, aqi) = (a[(p, i)], a[(q, i)]);
                        a[(p, i)] = c * api - s * aqi;
                        a[(q, i)] = s * api + c * aqi;
                    }
                }
            }
        }
        let mut values: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        values.sort_by(f64::total_cmp);
        values
    }

    #[test]
    fn diagonalize_matches_jacobi_oracle() {
        let cm = CmHamiltonian {
            masses: vec![1.0, 2.0, 0.5, 3.0],
            omegas: vec![0.9, 1.4, 0.3, 0.0],
            dimension: 1,
            energy_offset: 0.0,
            couplings: vec![
                CmCoupling { alpha: 1, beta: 0, d0: 0.21, r0: vec![0.0] },
                CmCoupling { alpha: 2, beta: 0, d0: 0.13, r0: vec![0.0] },
                CmCoupling { alpha: 3, beta: 1, d0: 0.34, r0: vec![0.0] },
                CmCoupling { alpha: 3, beta: 2, d0: 0.08, r0: vec![0.0] },
            ],
        };
        let form = build_cm_stiffness(&cm);
        let decomposition = diagonalize(&form, &cm.masses, 1).unwrap();
        let oracle = jacobi_eigenvalues(&form.stiffness);
        for (freq, lambda) in decomposition.frequencies.iter().zip(&oracle) {
            assert_relative_eq!(freq * freq, *lambda, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn mode_vectors_orthonormal_and_reconstruct() {
        let cm = pair_cm([1.0, 2.5], [1.0, 0.4], 0.6, 0.0);
        let form = build_cm_stiffness(&cm);
        let d = diagonalize(&form, &cm.masses, 1).unwrap();
        let gram = d.mode_vectors.transpose() * &d.mode_vectors;
        assert_relative_eq!(gram, DMatrix::identity(2, 2), epsilon = 1e-10);
        let mut reconstructed = DMatrix::zeros(2, 2);
        for k in 0..2 {
            let v = d.mode_vectors.column(k);
            reconstructed += v * v.transpose() * d.frequencies[k].powi(2);
        }
        assert_relative_eq!(reconstructed, form.stiffness, epsilon = 1e-10, max_relative = 1e-10);
    }

    #[test]
    fn shifts_move_equilibrium_not_frequencies() {
        let base = pair_cm([1.0, 2.0], [1.0, 0.8], 0.5, 0.0);
        let shifted = pair_cm([1.0, 2.0], [1.0, 0.8], 0.5, 0.7);
        let d0 = decompose(&base).unwrap();
        let d1 = decompose(&shifted).unwrap();
        assert_eq!(d0.frequencies, d1.frequencies);
        assert_relative_eq!(d0.equilibrium, DMatrix::zeros(2, 1), epsilon = 1e-14);
        assert!(d1.equilibrium.iter().any(|x| x.abs() > 1e-3));
        // E_0 at the minimum of a nonnegative potential with a positive-d0
        // pair term stays nonnegative and gains from the shift
        assert!(d1.energy_offset > d0.energy_offset - 1e-14);
        // residual force at the reported equilibrium vanishes
        let form = build_cm_stiffness(&shifted);
        let s_star = DVector::from_fn(2, |a, _| d1.equilibrium[(a, 0)] * shifted.masses[a].sqrt());
        let force = &form.stiffness * s_star + form.linear.column(0);
        assert!(force.norm() < 1e-12);
    }

    #[test]
    fn inconsistent_shift_detected() {
        // untrapped symmetric pair: zero mode along the total CM, and a
        // linear term with a component on it (nonzero net force)
        let cm = pair_cm([1.0, 1.0], [0.0, 0.0], 1.0, 0.3);
        let mut form = build_cm_stiffness(&cm);
        form.linear[(0, 0)] += 0.5; // push along the translation mode
        assert!(matches!(
            diagonalize(&form, &cm.masses, 1),
            Err(ModeError::InconsistentShift)
        ));
        // the untouched antisymmetric shift itself is consistent
        let form = build_cm_stiffness(&cm);
        assert!(diagonalize(&form, &cm.masses, 1).is_ok());
    }

    #[test]
    fn unstable_mode_detected() {
        let cm = pair_cm([1.0, 1.0], [0.1, 0.1], -1.0, 0.0);
        assert!(matches!(decompose(&cm), Err(ModeError::UnstableMode { .. })));
    }

    #[test]
    fn cm_energy_examples() {
        let single = CmHamiltonian {
            masses: vec![1.0],
            omegas: vec![1.0],
            dimension: 1,
            energy_offset: 0.0,
            couplings: vec![],
        };
        let d = decompose(&single).unwrap();
        assert_relative_eq!(d.cm_energy(&[0]).unwrap(), 0.5, max_relative = 1e-15);

        // modes {1, 2}: synthesize directly through a diagonal stiffness
        let form = CmQuadraticForm {
            stiffness: dmatrix![1.0, 0.0; 0.0, 4.0],
            linear: DMatrix::zeros(2, 1),
            constant: 0.0,
        };
        let d = diagonalize(&form, &[1.0, 1.0], 1).unwrap();
        assert_relative_eq!(d.cm_energy(&[1, 0]).unwrap(), 2.5, max_relative = 1e-14);
        assert!(matches!(d.cm_energy(&[1]), Err(ModeError::OccupationMismatch { .. })));
    }

    #[test]
    fn cm_energy_impurity_bath_ground_state() {
        // m omega^2 = 2 d_z sqrt(N): branch frequencies omega sqrt(1 -+ 1/2)
        let (m, n, omega): (f64, f64, f64) = (1.0, 4.0, 0.9);
        let d_z = omega * omega * m / (2.0 * n.sqrt());
        let d0 = -d_z / (m * m);
        let omega_imp = (omega * omega - n * m * d0).sqrt();
        let omega_bath = (omega * omega - m * d0).sqrt();
        let cm = pair_cm([m, n * m], [omega_imp, omega_bath], d0, 0.0);
        let d = decompose(&cm).unwrap();
        let expected = 0.5 * omega * ((0.5f64).sqrt() + (1.5f64).sqrt());
        assert_relative_eq!(d.ground_state_energy(), expected, max_relative = 1e-12);
    }

    fn uncoupled_two_singles() -> SystemSpec {
        SystemSpec {
            dimension: 1,
            unit_system: UnitSystem::Natural,
            clusters: vec![
                ClusterSpec::new(vec![1.0], 1.0),
                ClusterSpec::new(vec![1.0], 1.0),
            ],
            couplings: vec![],
        }
    }

    #[test]
    fn brute_force_uncoupled_singles() {
        let freqs = brute_force_full_harmonic(&uncoupled_two_singles()).unwrap();
        assert_eq!(freqs.len(), 2);
        assert_relative_eq!(freqs[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(freqs[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn brute_force_equals_separated_route() {
        let c0 = ClusterSpec {
            masses: vec![1.0, 2.0],
            omega: 1.0,
            in_group: InGroupInteraction::Harmonic(dmatrix![0.0, 0.4; 0.4, 0.0]),
        };
        let c1 = ClusterSpec::new(vec![1.5, 0.5], 0.7);
        let d = DMatrix::from_fn(2, 2, |i, k| c1.masses[i] * c0.masses[k] * 0.3);
        let spec = SystemSpec {
            dimension: 1,
            unit_system: UnitSystem::Natural,
            clusters: vec![c0, c1],
            couplings: vec![InterClusterCoupling::new(1, 0, d)],
        };
        let brute = brute_force_full_harmonic(&spec).unwrap();
        let separated = separated_spectrum(&spec, DEFAULT_REL_TOL).unwrap();
        assert_eq!(brute.len(), separated.len());
        assert!(multiset_deviation(&brute, &separated) < 1e-9);
    }

    #[test]
    fn brute_force_impurity_bath_spectrum() {
        // impurity + bath of 3 equal masses, no in-group springs: full 4x4
        // spectrum must be {omega_x, omega_y, omega_bar, omega_bar}
        let (m, n, d_z, omega): (f64, f64, f64, f64) = (1.0, 3.0, 0.04, 1.0);
        let omega_ext = (omega * omega + n * d_z / m).sqrt();
        let bath_ext = (omega * omega + d_z / m).sqrt();
        let imp = ClusterSpec::new(vec![m], omega_ext);
        let bath = ClusterSpec::new(vec![m; 3], bath_ext);
        let spec = SystemSpec {
            dimension: 1,
            unit_system: UnitSystem::Natural,
            clusters: vec![imp, bath],
            couplings: vec![InterClusterCoupling::new(1, 0, DMatrix::from_element(3, 1, -d_z))],
        };
        let mut expected = vec![
            (omega * omega - d_z * n.sqrt() / m).sqrt(),
            (omega * omega + d_z * n.sqrt() / m).sqrt(),
            omega, // omega_bar^2 = bath_ext^2 - d_z/m = omega^2, twice
            omega,
        ];
        expected.sort_by(f64::total_cmp);
        let brute = brute_force_full_harmonic(&spec).unwrap();
        assert!(multiset_deviation(&brute, &expected) < 1e-12);
        let separated = separated_spectrum(&spec, DEFAULT_REL_TOL).unwrap();
        assert!(multiset_deviation(&brute, &separated) < 1e-9);
    }

    #[test]
    fn brute_force_rejects_external_in_group() {
        let mut spec = uncoupled_two_singles();
        spec.clusters[1].in_group = InGroupInteraction::External("coulomb".into());
        assert!(matches!(
            brute_force_full_harmonic(&spec),
            Err(ModeError::NonHarmonicInGroup { cluster: 1 })
        ));
    }

    #[test]
    fn assemble_energy_examples() {
        let single = CmHamiltonian {
            masses: vec![1.0],
            omegas: vec![1.0],
            dimension: 1,
            energy_offset: 0.0,
            couplings: vec![],
        };
        let d = decompose(&single).unwrap();
        let q = SpectrumQuery { occupations: vec![0], relative_energies: vec![] };
        assert_relative_eq!(assemble_total_energy(&q, &d).unwrap(), 0.5, max_relative = 1e-15);

        let q = SpectrumQuery { occupations: vec![4], relative_energies: vec![0.5, 1.5] };
        assert_relative_eq!(assemble_total_energy(&q, &d).unwrap(), 6.5, max_relative = 1e-15);
    }

    #[test]
    fn assembled_ground_state_matches_brute_force() {
        // all-harmonic two-cluster system: assembled ground state equals the
        // brute-force half-sum over the full spectrum
        let c0 = ClusterSpec {
            masses: vec![1.0, 1.0],
            omega: 1.0,
            in_group: InGroupInteraction::Harmonic(dmatrix![0.0, 0.25; 0.25, 0.0]),
        };
        let c1 = ClusterSpec::new(vec![2.0], 0.6);
        let d = DMatrix::from_fn(1, 2, |i, k| c1.masses[i] * c0.masses[k] * 0.15);
        let spec = SystemSpec {
            dimension: 1,
            unit_system: UnitSystem::Natural,
            clusters: vec![c0.clone(), c1.clone()],
            couplings: vec![InterClusterCoupling::new(1, 0, d)],
        };
        let (cm, descriptors) = separation::separate(&spec, DEFAULT_REL_TOL).unwrap();
        let decomposition = decompose(&cm).unwrap();
        let relative_energies: Vec<f64> = descriptors
            .iter()
            .map(|desc| {
                harmonic_relative_modes(desc.cluster, &spec.clusters[desc.cluster], desc.effective_frequency)
                    .unwrap()
                    .iter()
                    .map(|f| 0.5 * f)
                    .sum()
            })
            .collect();
        let query = SpectrumQuery { occupations: vec![0, 0], relative_energies };
        let assembled = assemble_total_energy(&query, &decomposition).unwrap();
        let brute: f64 =
            brute_force_full_harmonic(&spec).unwrap().iter().map(|f| 0.5 * f).sum();
        assert_relative_eq!(assembled, brute, max_relative = 1e-10);
    }

    #[test]
    fn untrapped_fully_coupled_has_one_zero_mode_per_dimension() {
        let mut cm = CmHamiltonian {
            masses: vec![1.0, 2.0, 0.7],
            omegas: vec![0.0, 0.0, 0.0],
            dimension: 3,
            energy_offset: 0.0,
            couplings: vec![
                CmCoupling { alpha: 1, beta: 0, d0: 0.2, r0: vec![0.0; 3] },
                CmCoupling { alpha: 2, beta: 0, d0: 0.4, r0: vec![0.0; 3] },
                CmCoupling { alpha: 2, beta: 1, d0: 0.1, r0: vec![0.0; 3] },
            ],
        };
        let d = decompose(&cm).unwrap();
        // one zero mode per dimension: total D across the replicated spectrum
        assert_eq!(d.zero_modes * 1, 1);
        assert_eq!(d.zero_modes * d.dimension, 3);
        // trapping any cluster removes it
        cm.omegas[0] = 0.5;
        assert_eq!(decompose(&cm).unwrap().zero_modes, 0);
    }
}
