//! Separation of in-group and inter-group motion.
//!
//! The inter-cluster coupling mixes coordinates of clusters `a` and `b` only
//! through the bilinear term `sum_ik d_ik r_i . r_k`. Switching each cluster
//! to relative-plus-center-of-mass coordinates turns the coupling matrix `d`
//! into `D_T = T_a^T d T_b`; the clusters decouple exactly when every entry
//! of `D_T` vanishes except the center-of-mass corner `(N_a, N_b)`, which is
//! equivalent to the factorization `d_ik = m_i m_k d0` with a single scalar
//! `d0` per pair.
//!
//! [`check_decoupling`] tests that factorization entry-wise and
//! cross-verifies through the transformed matrix; [`separate`] assembles the
//! reduced center-of-mass Hamiltonian and the per-cluster relative-motion
//! descriptors.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::model::{total_mass_and_com_weights, ClusterSpec, InGroupInteraction, SystemSpec};

/// Default relative tolerance for the decoupling residual. The condition is
/// exact in theory, approximate in floating point and in fitted models.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Absolute floor protecting the residual denominator when the mean
/// factorized value is at or near zero.
const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SeparationError {
    #[error("coupling matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("system does not decouple; failing pairs: {pairs:?}")]
    NotDecoupled { reports: Vec<DecouplingReport>, pairs: Vec<(usize, usize)> },
    #[error("cluster {cluster}: squared effective frequency {omega_bar_sq} is negative (unbounded relative motion)")]
    ImaginaryEffectiveFrequency { cluster: usize, omega_bar_sq: f64 },
}

/// Coordinate transformation of one cluster to relative-plus-CM coordinates,
/// `x = T y` with `y_i = x_i - X` for `i < N` and `y_N = X`.
#[derive(Debug, Clone)]
pub struct Transformation {
    pub cluster: usize,
    pub matrix: DMatrix<f64>,
}

/// Build the transformation matrix for one cluster. Element rules:
/// `t_ik = delta_ik` for `i, k < N`; `t_iN = 1` for all `i`;
/// `t_Nk = -m_k / m_N` for `k < N`.
pub fn build_transformation(cluster_index: usize, cluster: &ClusterSpec) -> Transformation {
    let n = cluster.len();
    let m_last = cluster.masses[n - 1];
    let matrix = DMatrix::from_fn(n, n, |i, k| {
        if k == n - 1 {
            1.0
        } else if i == n - 1 {
            -cluster.masses[k] / m_last
        } else if i == k {
            1.0
        } else {
            0.0
        }
    });
    Transformation { cluster: cluster_index, matrix }
}

/// Transform a coupling matrix to relative-plus-CM coordinates:
/// `D_T = T_a^T d T_b`.
pub fn transform_coupling(
    t_alpha: &Transformation,
    t_beta: &Transformation,
    d_matrix: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SeparationError> {
    let (na, nb) = (t_alpha.matrix.nrows(), t_beta.matrix.nrows());
    if d_matrix.nrows() != na || d_matrix.ncols() != nb {
        return Err(SeparationError::ShapeMismatch {
            rows: d_matrix.nrows(),
            cols: d_matrix.ncols(),
            expected_rows: na,
            expected_cols: nb,
        });
    }
    Ok(t_alpha.matrix.transpose() * d_matrix * &t_beta.matrix)
}

/// Outcome of the decoupling test for one coupling pair.
#[derive(Debug, Clone, Serialize)]
pub struct DecouplingReport {
    /// `(alpha, beta)` with `alpha > beta`.
    pub pair: (usize, usize),
    pub decoupled: bool,
    /// Extracted coupling scalar, present iff `decoupled`.
    pub d0: Option<f64>,
    /// `max |q_ik - mean(q)| / max(|mean(q)|, floor)` over all entries, with
    /// `q_ik = d_ik / (m_i m_k)`.
    pub max_residual: f64,
    /// Entries whose relative residual exceeds the tolerance.
    pub offending: Vec<OffendingEntry>,
    /// Cross-check through the coordinate transformation: largest
    /// off-corner entry of `D_T`, relative to the largest entry of `D_T`.
    pub transformed_off_corner: f64,
    /// Tolerance the test was run at.
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OffendingEntry {
    pub row: usize,
    pub col: usize,
    pub residual: f64,
}

/// Test whether `d_ik = m_i m_k d0` holds for some scalar `d0`.
///
/// The scalar is extracted as the mean of `q_ik = d_ik / (m_i m_k)` so that
/// numerical noise is treated symmetrically across entries. The result is
/// cross-verified by transforming `d` and measuring the off-corner entries
/// of `D_T`, which must vanish exactly when the factorization holds.
pub fn check_decoupling(
    pair: (usize, usize),
    cluster_alpha: &ClusterSpec,
    cluster_beta: &ClusterSpec,
    d_matrix: &DMatrix<f64>,
    rel_tol: f64,
) -> Result<DecouplingReport, SeparationError> {
    let (na, nb) = (cluster_alpha.len(), cluster_beta.len());
    if d_matrix.nrows() != na || d_matrix.ncols() != nb {
        return Err(SeparationError::ShapeMismatch {
            rows: d_matrix.nrows(),
            cols: d_matrix.ncols(),
            expected_rows: na,
            expected_cols: nb,
        });
    }

    let q = DMatrix::from_fn(na, nb, |i, k| {
        d_matrix[(i, k)] / (cluster_alpha.masses[i] * cluster_beta.masses[k])
    });
    let q_mean = q.iter().sum::<f64>() / (na * nb) as f64;
    let denom = q_mean.abs().max(RESIDUAL_FLOOR);

    let mut max_residual = 0.0f64;
    let mut offending = Vec::new();
    for i in 0..na {
        for k in 0..nb {
            let residual = (q[(i, k)] - q_mean).abs() / denom;
            max_residual = max_residual.max(residual);
            if residual > rel_tol {
                offending.push(OffendingEntry { row: i, col: k, residual });
            }
        }
    }
    let decoupled = max_residual <= rel_tol;

    let t_alpha = build_transformation(pair.0, cluster_alpha);
    let t_beta = build_transformation(pair.1, cluster_beta);
    let dt = transform_coupling(&t_alpha, &t_beta, d_matrix)?;
    let dt_max = dt.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(RESIDUAL_FLOOR);
    let mut off_corner = 0.0f64;
    for i in 0..na {
        for k in 0..nb {
            if (i, k) != (na - 1, nb - 1) {
                off_corner = off_corner.max(dt[(i, k)].abs() / dt_max);
            }
        }
    }

    Ok(DecouplingReport {
        pair,
        decoupled,
        d0: decoupled.then_some(q_mean),
        max_residual,
        offending,
        transformed_off_corner: off_corner,
        rel_tol,
    })
}

/// Run [`check_decoupling`] for every coupling pair in the spec.
pub fn check_all(spec: &SystemSpec, rel_tol: f64) -> Result<Vec<DecouplingReport>, SeparationError> {
    spec.couplings
        .iter()
        .map(|c| {
            check_decoupling(
                (c.alpha, c.beta),
                &spec.clusters[c.alpha],
                &spec.clusters[c.beta],
                &c.d_matrix,
                rel_tol,
            )
        })
        .collect()
}

/// Scalar coupling between two cluster centers of mass:
/// `1/2 M_a M_b d0 (R_a - R_b - r0)^2` plus a constant offset.
#[derive(Debug, Clone, Serialize)]
pub struct CmCoupling {
    pub alpha: usize,
    pub beta: usize,
    pub d0: f64,
    /// Shift `r0^(alpha beta)`, one component per dimension.
    pub r0: Vec<f64>,
}

/// Reduced center-of-mass Hamiltonian: M coupled oscillators carrying every
/// inter-cluster dependency of the original model.
#[derive(Debug, Clone, Serialize)]
pub struct CmHamiltonian {
    /// Total cluster masses `M_a`.
    pub masses: Vec<f64>,
    /// One-body trap frequencies `omega^(a)`.
    pub omegas: Vec<f64>,
    pub dimension: usize,
    /// Sum of the per-pair constant offsets `v`.
    pub energy_offset: f64,
    /// Couplings in canonical order `alpha > beta`.
    pub couplings: Vec<CmCoupling>,
}

impl CmHamiltonian {
    pub fn cluster_count(&self) -> usize {
        self.masses.len()
    }

    /// Coupling scalar for an unordered pair; symmetric in its arguments and
    /// zero for uncoupled or identical indices.
    pub fn d0_between(&self, a: usize, b: usize) -> f64 {
        self.couplings
            .iter()
            .find(|c| (c.alpha, c.beta) == (a, b) || (c.alpha, c.beta) == (b, a))
            .map_or(0.0, |c| c.d0)
    }

    /// Shift vector for an ordered pair; antisymmetric:
    /// `r0(b, a) = -r0(a, b)`.
    pub fn shift_between(&self, a: usize, b: usize) -> Vec<f64> {
        for c in &self.couplings {
            if (c.alpha, c.beta) == (a, b) {
                return c.r0.clone();
            }
            if (c.alpha, c.beta) == (b, a) {
                return c.r0.iter().map(|x| -x).collect();
            }
        }
        vec![0.0; self.dimension]
    }

    /// In-group effective frequency from the external trap plus the
    /// inter-group couplings:
    /// `omega_bar^2 = omega^2 + sum_{b != a} M_b d0(a, b)`.
    pub fn effective_frequency(&self, alpha: usize) -> Result<f64, SeparationError> {
        let mut omega_bar_sq = self.omegas[alpha].powi(2);
        for b in 0..self.masses.len() {
            if b != alpha {
                omega_bar_sq += self.masses[b] * self.d0_between(alpha, b);
            }
        }
        if omega_bar_sq < 0.0 {
            return Err(SeparationError::ImaginaryEffectiveFrequency { cluster: alpha, omega_bar_sq });
        }
        Ok(omega_bar_sq.sqrt())
    }
}

/// Per-cluster relative Hamiltonian descriptor: the in-group problem at the
/// effective frequency, with the CM kinetic term removed.
#[derive(Debug, Clone)]
pub struct RelativeDescriptor {
    pub cluster: usize,
    pub masses: Vec<f64>,
    pub in_group: InGroupInteraction,
    pub effective_frequency: f64,
}

/// Split a validated system into its center-of-mass Hamiltonian and the
/// per-cluster relative descriptors. Fails with
/// [`SeparationError::NotDecoupled`] if any coupling pair violates the
/// factorization condition, in which case only brute force applies.
pub fn separate(
    spec: &SystemSpec,
    rel_tol: f64,
) -> Result<(CmHamiltonian, Vec<RelativeDescriptor>), SeparationError> {
    let reports = check_all(spec, rel_tol)?;
    let failing: Vec<(usize, usize)> =
        reports.iter().filter(|r| !r.decoupled).map(|r| r.pair).collect();
    if !failing.is_empty() {
        let failed = reports.into_iter().filter(|r| !r.decoupled).collect();
        return Err(SeparationError::NotDecoupled { reports: failed, pairs: failing });
    }

    let mut couplings = Vec::new();
    let mut energy_offset = 0.0;
    for (coupling, report) in spec.couplings.iter().zip(&reports) {
        couplings.push(CmCoupling {
            alpha: coupling.alpha,
            beta: coupling.beta,
            d0: report.d0.expect("decoupled pair carries d0"),
            r0: coupling.shift(spec.dimension),
        });
        energy_offset += coupling.v_const.unwrap_or(0.0);
    }

    let cm = CmHamiltonian {
        masses: spec.clusters.iter().map(|c| total_mass_and_com_weights(c).0).collect(),
        omegas: spec.clusters.iter().map(|c| c.omega).collect(),
        dimension: spec.dimension,
        energy_offset,
        couplings,
    };

    let descriptors = spec
        .clusters
        .iter()
        .enumerate()
        .map(|(a, cluster)| {
            Ok(RelativeDescriptor {
                cluster: a,
                masses: cluster.masses.clone(),
                in_group: cluster.in_group.clone(),
                effective_frequency: cm.effective_frequency(a)?,
            })
        })
        .collect::<Result<Vec<_>, SeparationError>>()?;

    Ok((cm, descriptors))
}
