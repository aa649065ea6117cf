//! Data model for systems of particle clusters with harmonic inter-cluster
//! couplings.
//!
//! A system is a list of clusters, each holding particle masses, an isotropic
//! one-body trap frequency and an opaque in-group interaction tag, plus a
//! sparse list of inter-cluster coupling matrices. Couplings are stored as
//! full `N_a x N_b` matrices so that systems which do *not* factorize are
//! representable; whether a coupling decouples is discovered by
//! [`crate::separation::check_decoupling`], never assumed.
//!
//! All types serialize to a strict JSON object model (unknown keys are
//! rejected); see the config schema in the repository README.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// In-group interaction tag. The relative (in-group) dynamics is opaque to
/// the separation machinery; only the `Harmonic` case can be diagonalized by
/// the brute-force oracle in [`crate::modes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InGroupInteraction {
    /// No pairwise interaction inside the cluster.
    None,
    /// Pairwise springs `V_ik = k_ik (r_i - r_k)^2 / 2`; the matrix must be
    /// symmetric with zero diagonal and nonnegative entries.
    Harmonic(#[serde(with = "matrix_rows")] DMatrix<f64>),
    /// Arbitrary interaction handled by an external solver; only the label is
    /// carried along.
    External(String),
}

/// One cluster: particle masses, isotropic trap frequency and the in-group
/// interaction tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    /// Particle masses, all strictly positive. Length is the particle count.
    pub masses: Vec<f64>,
    /// One-body trap angular frequency, `>= 0`. One value per cluster.
    pub omega: f64,
    #[serde(default = "default_in_group")]
    pub in_group: InGroupInteraction,
}

fn default_in_group() -> InGroupInteraction {
    InGroupInteraction::None
}

impl ClusterSpec {
    pub fn new(masses: Vec<f64>, omega: f64) -> Self {
        ClusterSpec { masses, omega, in_group: InGroupInteraction::None }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

/// Harmonic coupling between the pair of clusters `(alpha, beta)` with
/// `alpha > beta`:
/// `U = 1/2 sum_ik d[i][k] (r_i^(alpha) - r_k^(beta) - r0)^2 + v_const`.
///
/// `d_matrix` is `N_alpha x N_beta` (rows follow cluster `alpha`). A pair
/// absent from [`SystemSpec::couplings`] has `d = 0` (uncoupled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterClusterCoupling {
    pub alpha: usize,
    pub beta: usize,
    #[serde(with = "matrix_rows")]
    pub d_matrix: DMatrix<f64>,
    /// Oscillator center shift, one component per spatial dimension. Empty
    /// means zero shift.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r0: Vec<f64>,
    /// Constant energy offset attached to this pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_const: Option<f64>,
}

impl InterClusterCoupling {
    pub fn new(alpha: usize, beta: usize, d_matrix: DMatrix<f64>) -> Self {
        InterClusterCoupling { alpha, beta, d_matrix, r0: Vec::new(), v_const: None }
    }

    /// Shift vector expanded to `dim` components (empty `r0` means zero).
    pub fn shift(&self, dim: usize) -> Vec<f64> {
        if self.r0.is_empty() {
            vec![0.0; dim]
        } else {
            self.r0.clone()
        }
    }
}

/// Unit system tag. All internal computation is done in natural units
/// (`hbar = 1`, reference mass and frequency = 1); SI inputs are converted at
/// the boundary, see [`crate::units`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitSystem {
    Si,
    Natural,
}

/// Full M-cluster model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// Number of spatial dimensions (typically 1 to 3).
    pub dimension: usize,
    pub unit_system: UnitSystem,
    pub clusters: Vec<ClusterSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub couplings: Vec<InterClusterCoupling>,
}

impl SystemSpec {
    /// Parse a scenario config from JSON text. Unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(ConfigError::Parse)
    }

    /// Parse a scenario config from raw bytes.
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, ConfigError> {
        serde_json::from_slice(bytes).map_err(ConfigError::Parse)
    }

    /// Serialize back to config text. Round-trips through
    /// [`SystemSpec::from_json_str`] to an identical value.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn particle_count(&self) -> usize {
        self.clusters.iter().map(ClusterSpec::len).sum()
    }

    /// Coupling matrix for the pair `(alpha, beta)`, if present in either
    /// index order. The returned matrix is always `N_alpha x N_beta`.
    pub fn coupling_between(&self, alpha: usize, beta: usize) -> Option<DMatrix<f64>> {
        for c in &self.couplings {
            if c.alpha == alpha && c.beta == beta {
                return Some(c.d_matrix.clone());
            }
            if c.alpha == beta && c.beta == alpha {
                return Some(c.d_matrix.transpose());
            }
        }
        None
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Machine-readable code for one invariant violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    ZeroDimension,
    NoClusters,
    EmptyCluster,
    NonpositiveMass,
    NegativeTrapFrequency,
    SpringMatrixShape,
    SpringMatrixAsymmetric,
    SpringMatrixDiagonal,
    SpringMatrixNegative,
    CouplingIndexOutOfRange,
    CouplingOrder,
    CouplingDuplicate,
    CouplingShapeMismatch,
    ShiftDimensionMismatch,
    NonFiniteValue,
}

/// One invariant violation with a code for machines and a message for humans.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, message: String) -> Self {
        Violation { code, message }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

/// Check every model invariant and return the full list of violations.
/// A valid spec returns an empty list. Pure: repeated calls on the same spec
/// return identical lists.
pub fn validate_system(spec: &SystemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.dimension == 0 {
        out.push(Violation::new(
            ViolationCode::ZeroDimension,
            "dimension must be a positive integer".into(),
        ));
    }
    if spec.clusters.is_empty() {
        out.push(Violation::new(ViolationCode::NoClusters, "at least one cluster required".into()));
    }

    for (ci, cluster) in spec.clusters.iter().enumerate() {
        if cluster.masses.is_empty() {
            out.push(Violation::new(
                ViolationCode::EmptyCluster,
                format!("cluster {ci}: at least one particle required"),
            ));
        }
        for (pi, &m) in cluster.masses.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                out.push(Violation::new(
                    ViolationCode::NonpositiveMass,
                    format!("cluster {ci}: mass {m} at index {pi} must be positive and finite"),
                ));
            }
        }
        if !(cluster.omega >= 0.0 && cluster.omega.is_finite()) {
            out.push(Violation::new(
                ViolationCode::NegativeTrapFrequency,
                format!("cluster {ci}: trap frequency {} must be >= 0", cluster.omega),
            ));
        }
        if let InGroupInteraction::Harmonic(springs) = &cluster.in_group {
            let n = cluster.masses.len();
            if springs.nrows() != n || springs.ncols() != n {
                out.push(Violation::new(
                    ViolationCode::SpringMatrixShape,
                    format!(
                        "cluster {ci}: spring matrix is {}x{}, expected {n}x{n}",
                        springs.nrows(),
                        springs.ncols()
                    ),
                ));
            } else {
                for i in 0..n {
                    if springs[(i, i)] != 0.0 {
                        out.push(Violation::new(
                            ViolationCode::SpringMatrixDiagonal,
                            format!("cluster {ci}: spring matrix diagonal entry ({i},{i}) must be zero"),
                        ));
                    }
                    for k in 0..n {
                        let s = springs[(i, k)];
                        if !(s >= 0.0 && s.is_finite()) {
                            out.push(Violation::new(
                                ViolationCode::SpringMatrixNegative,
                                format!("cluster {ci}: spring constant ({i},{k}) = {s} must be >= 0"),
                            ));
                        }
                        if k < i && springs[(i, k)] != springs[(k, i)] {
                            out.push(Violation::new(
                                ViolationCode::SpringMatrixAsymmetric,
                                format!("cluster {ci}: spring matrix not symmetric at ({i},{k})"),
                            ));
                        }
                    }
                }
            }
        }
    }

    let mut seen_pairs = Vec::new();
    for (idx, c) in spec.couplings.iter().enumerate() {
        let m = spec.clusters.len();
        if c.alpha >= m || c.beta >= m {
            out.push(Violation::new(
                ViolationCode::CouplingIndexOutOfRange,
                format!("coupling {idx}: cluster indices ({}, {}) out of range 0..{m}", c.alpha, c.beta),
            ));
            continue;
        }
        if c.alpha <= c.beta {
            out.push(Violation::new(
                ViolationCode::CouplingOrder,
                format!("coupling {idx}: requires alpha > beta, got ({}, {})", c.alpha, c.beta),
            ));
        }
        if seen_pairs.contains(&(c.alpha, c.beta)) || seen_pairs.contains(&(c.beta, c.alpha)) {
            out.push(Violation::new(
                ViolationCode::CouplingDuplicate,
                format!("coupling {idx}: pair ({}, {}) appears more than once", c.alpha, c.beta),
            ));
        }
        seen_pairs.push((c.alpha, c.beta));

        let (na, nb) = (spec.clusters[c.alpha].len(), spec.clusters[c.beta].len());
        if c.d_matrix.nrows() != na || c.d_matrix.ncols() != nb {
            out.push(Violation::new(
                ViolationCode::CouplingShapeMismatch,
                format!(
                    "coupling {idx}: d_matrix is {}x{}, expected {na}x{nb}",
                    c.d_matrix.nrows(),
                    c.d_matrix.ncols()
                ),
            ));
        }
        if c.d_matrix.iter().any(|d| !d.is_finite()) {
            out.push(Violation::new(
                ViolationCode::NonFiniteValue,
                format!("coupling {idx}: d_matrix contains a non-finite entry"),
            ));
        }
        if !c.r0.is_empty() && c.r0.len() != spec.dimension {
            out.push(Violation::new(
                ViolationCode::ShiftDimensionMismatch,
                format!("coupling {idx}: r0 has {} components, expected {}", c.r0.len(), spec.dimension),
            ));
        }
        if c.r0.iter().any(|x| !x.is_finite()) || c.v_const.is_some_and(|v| !v.is_finite()) {
            out.push(Violation::new(
                ViolationCode::NonFiniteValue,
                format!("coupling {idx}: r0 or v_const contains a non-finite value"),
            ));
        }
    }
    out
}

/// Total cluster mass and the center-of-mass weights `m_i / M`.
/// The weights sum to one within 1e-14 relative.
pub fn total_mass_and_com_weights(cluster: &ClusterSpec) -> (f64, Vec<f64>) {
    let total: f64 = cluster.masses.iter().sum();
    let weights = cluster.masses.iter().map(|m| m / total).collect();
    (total, weights)
}

/// Row-major (De)Serialization of a dense matrix as a list of rows.
pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(m.nrows()))?;
        for i in 0..m.nrows() {
            let row: Vec<f64> = (0..m.ncols()).map(|k| m[(i, k)]).collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("matrix rows have unequal lengths"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, k| rows[i][k]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn single_cluster_spec() -> SystemSpec {
        SystemSpec {
            dimension: 1,
            unit_system: UnitSystem::Natural,
            clusters: vec![ClusterSpec::new(vec![1.0], 1.0)],
            couplings: vec![],
        }
    }

    #[test]
    fn minimal_system_is_valid() {
        assert!(validate_system(&single_cluster_spec()).is_empty());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let spec = SystemSpec {
            dimension: 1,
            unit_system: UnitSystem::Natural,
            clusters: vec![
                ClusterSpec::new(vec![1.0, 1.0], 1.0),
                ClusterSpec::new(vec![1.0, 1.0], 1.0),
            ],
            couplings: vec![InterClusterCoupling::new(1, 0, DMatrix::zeros(2, 3))],
        };
        let violations = validate_system(&spec);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].code, ViolationCode::CouplingShapeMismatch);
    }

    #[test]
    fn zero_mass_is_reported() {
        let mut spec = single_cluster_spec();
        spec.clusters[0].masses = vec![1.0, 0.0];
        let violations = validate_system(&spec);
        assert!(violations.iter().any(|v| v.code == ViolationCode::NonpositiveMass));
    }

    #[test]
    fn nan_values_are_rejected() {
        let mut spec = single_cluster_spec();
        spec.clusters[0].masses = vec![f64::NAN];
        spec.clusters[0].omega = f64::NAN;
        let violations = validate_system(&spec);
        assert!(violations.iter().any(|v| v.code == ViolationCode::NonpositiveMass));
        assert!(violations.iter().any(|v| v.code == ViolationCode::NegativeTrapFrequency));
    }

    #[test]
    fn coupling_order_and_duplicates() {
        let mut spec = SystemSpec {
            dimension: 1,
            unit_system: UnitSystem::Natural,
            clusters: vec![ClusterSpec::new(vec![1.0], 1.0), ClusterSpec::new(vec![1.0], 1.0)],
            couplings: vec![
                InterClusterCoupling::new(0, 1, DMatrix::zeros(1, 1)),
                InterClusterCoupling::new(1, 0, DMatrix::zeros(1, 1)),
            ],
        };
        let violations = validate_system(&spec);
        assert!(violations.iter().any(|v| v.code == ViolationCode::CouplingOrder));
        assert!(violations.iter().any(|v| v.code == ViolationCode::CouplingDuplicate));

        spec.couplings.remove(0);
        assert!(validate_system(&spec).is_empty());
    }

    #[test]
    fn validation_is_idempotent() {
        let mut spec = single_cluster_spec();
        spec.clusters[0].masses = vec![-1.0];
        let a = validate_system(&spec);
        let b = validate_system(&spec);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.code, y.code);
            assert_eq!(x.message, y.message);
        }
    }

    #[test]
    fn com_weights_equal_masses() {
        let (total, w) = total_mass_and_com_weights(&ClusterSpec::new(vec![1.0, 1.0, 1.0], 0.0));
        assert_eq!(total, 3.0);
        for wi in &w {
            assert!((wi - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn com_weights_arithmetic() {
        let (total, w) = total_mass_and_com_weights(&ClusterSpec::new(vec![1.0, 2.0, 3.0], 0.0));
        assert_eq!(total, 6.0);
        assert!((w[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 1.0 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn com_weights_ca40_bath() {
        // 40Ca+ from CODATA/AME: 39.962590863 u minus one electron mass
        let m = crate::constants::CA40_ION_MASS_KG;
        let (total, w) = total_mass_and_com_weights(&ClusterSpec::new(vec![m; 10], 0.0));
        assert!((total - 10.0 * m).abs() / (10.0 * m) < 1e-14);
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
        for wi in &w {
            assert!((wi - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn config_round_trip_with_all_fields() {
        let spec = SystemSpec {
            dimension: 2,
            unit_system: UnitSystem::Si,
            clusters: vec![
                ClusterSpec {
                    masses: vec![1.0, 2.5],
                    omega: 0.75,
                    in_group: InGroupInteraction::Harmonic(dmatrix![0.0, 0.3; 0.3, 0.0]),
                },
                ClusterSpec {
                    masses: vec![0.5],
                    omega: 0.0,
                    in_group: InGroupInteraction::External("coulomb".into()),
                },
            ],
            couplings: vec![InterClusterCoupling {
                alpha: 1,
                beta: 0,
                d_matrix: dmatrix![0.1, 0.2],
                r0: vec![0.4, -0.25],
                v_const: Some(1.5),
            }],
        };
        let text = spec.to_json_string();
        let back = SystemSpec::from_json_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"dimension": 1, "unit_system": "natural", "clusters": [], "extra": 1}"#;
        assert!(SystemSpec::from_json_str(text).is_err());
        let text = r#"{"dimension": 1, "unit_system": "natural",
                       "clusters": [{"masses": [1.0], "omega": 1.0, "color": "red"}]}"#;
        assert!(SystemSpec::from_json_str(text).is_err());
    }

    #[test]
    fn ragged_matrix_rejected() {
        let text = r#"{"dimension": 1, "unit_system": "natural",
            "clusters": [{"masses": [1.0], "omega": 1.0}, {"masses": [1.0, 1.0], "omega": 1.0}],
            "couplings": [{"alpha": 1, "beta": 0, "d_matrix": [[1.0], [1.0, 2.0]]}]}"#;
        assert!(SystemSpec::from_json_str(text).is_err());
    }
}
