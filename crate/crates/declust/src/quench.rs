//! Quench dynamics of the impurity plus bath center of mass: two decoupled
//! normal coordinates driven by a time-dependent trap frequency.
//!
//! The normal coordinates `x = (z_I - sqrt(N) Z)/sqrt(2)` and
//! `y = (z_I + sqrt(N) Z)/sqrt(2)` see squared frequencies
//! `omega^2(t) -+ delta` with `delta = d_z sqrt(N)/m`. Each branch carries a
//! Gaussian scaling solution whose width parameter obeys the Ermakov
//! equation
//! `lambda^3 lambda'' / omega0^2 = 1 - omega^2(t) lambda^4 / omega0^2`.
//!
//! Rather than integrating the nonlinear Ermakov equation, the module
//! integrates the linear classical pair `u'' + omega^2(t) u = 0`,
//! `(u, u')(0) = (1, 0)`, `(v, v')(0) = (0, 1)` and composes
//! `lambda = sqrt(u^2 + omega0^2 v^2)` (Pinney). The linear equation is
//! non-stiff, keeps `lambda > 0` structurally, and its Wronskian is a free
//! exactness monitor: the Ermakov residual equals `omega0^2 |W^2 - 1|`.

use serde::Serialize;
use thiserror::Error;

use crate::bessel::{self, BesselError};
use crate::ode::{self, OdeError, State, StepControl};

/// Wronskian drift bound enforced at every stored point.
pub const WRONSKIAN_TOL: f64 = 1e-8;

/// Ermakov residual bound, in units of `omega0^2`.
pub const ERMAKOV_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum QuenchError {
    #[error("invalid frequency protocol: {reason}")]
    InvalidProtocol { reason: String },
    #[error("branch {branch:?}: squared frequency reaches {omega_sq_min} inside the window (must stay positive)")]
    NegativeSquaredFrequency { branch: Branch, omega_sq_min: f64 },
    #[error("branch series have different grids ({left} vs {right} points)")]
    GridMismatch { left: usize, right: usize },
    #[error("Wronskian drifted to {drift:e} at t = {t} (tolerance {WRONSKIAN_TOL:e})")]
    WronskianDrift { t: f64, drift: f64 },
    #[error("closed form requires a pure exponential-ramp segment: {reason}")]
    UnsupportedProtocol { reason: String },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Bessel(#[from] BesselError),
}

/// Time-dependent squared trap frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyProtocol {
    Constant { omega_sq: f64 },
    /// `omega^2(t) = omega_sq_init exp(-gamma omega(0) t)` until it reaches
    /// `omega_sq_final` at `t_f = ln(init/final) / (gamma omega(0))`, then
    /// constant. Continuous at `t_f` by construction.
    ExpRamp { omega_sq_init: f64, gamma: f64, omega_sq_final: f64 },
    /// Piecewise-constant segments `(start_time, omega_sq)`; the first must
    /// start at `t = 0`.
    Piecewise { steps: Vec<(f64, f64)> },
}

/// One integration segment with a smooth closed-form coefficient.
#[derive(Debug, Clone, Copy)]
enum SegmentKind {
    Exp { amplitude: f64, rate: f64 },
    Const { omega_sq: f64 },
}

impl SegmentKind {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            SegmentKind::Exp { amplitude, rate } => amplitude * (-rate * t).exp(),
            SegmentKind::Const { omega_sq } => omega_sq,
        }
    }
}

impl FrequencyProtocol {
    pub fn exp_ramp(omega_sq_init: f64, gamma: f64, omega_sq_final: f64) -> Result<Self, QuenchError> {
        if !(omega_sq_init >= omega_sq_final && omega_sq_final > 0.0) {
            return Err(QuenchError::InvalidProtocol {
                reason: format!("need omega_sq_init >= omega_sq_final > 0, got {omega_sq_init} and {omega_sq_final}"),
            });
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(QuenchError::InvalidProtocol { reason: format!("gamma must be positive, got {gamma}") });
        }
        Ok(FrequencyProtocol::ExpRamp { omega_sq_init, gamma, omega_sq_final })
    }

    pub fn piecewise(steps: Vec<(f64, f64)>) -> Result<Self, QuenchError> {
        if steps.first().map(|s| s.0) != Some(0.0) {
            return Err(QuenchError::InvalidProtocol { reason: "piecewise protocol must start at t = 0".into() });
        }
        if steps.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(QuenchError::InvalidProtocol { reason: "piecewise start times must increase".into() });
        }
        Ok(FrequencyProtocol::Piecewise { steps })
    }

    /// Reference frequency `omega(0) = sqrt(omega^2(0))`.
    pub fn omega_ref(&self) -> f64 {
        self.omega_sq(0.0).max(0.0).sqrt()
    }

    /// Squared frequency at time `t >= 0`.
    pub fn omega_sq(&self, t: f64) -> f64 {
        match self {
            FrequencyProtocol::Constant { omega_sq } => *omega_sq,
            FrequencyProtocol::ExpRamp { omega_sq_init, gamma, omega_sq_final } => {
                let tf = self.ramp_end().expect("exp ramp has an end");
                if t < tf {
                    omega_sq_init * (-gamma * omega_sq_init.sqrt() * t).exp()
                } else {
                    *omega_sq_final
                }
            }
            FrequencyProtocol::Piecewise { steps } => {
                let mut value = steps[0].1;
                for &(start, omega_sq) in steps {
                    if t >= start {
                        value = omega_sq;
                    }
                }
                value
            }
        }
    }

    /// Time where the ramp switches to its constant floor, if any.
    pub fn ramp_end(&self) -> Option<f64> {
        match self {
            FrequencyProtocol::ExpRamp { omega_sq_init, gamma, omega_sq_final } => {
                Some((omega_sq_init / omega_sq_final).ln() / (gamma * omega_sq_init.sqrt()))
            }
            _ => None,
        }
    }

    /// Closed-form segments covering `[0, t_max]`, split at every coefficient
    /// breakpoint so the integrator never steps across a non-smooth point.
    fn segments(&self, t_max: f64) -> Vec<(f64, f64, SegmentKind)> {
        match self {
            FrequencyProtocol::Constant { omega_sq } => {
                vec![(0.0, t_max, SegmentKind::Const { omega_sq: *omega_sq })]
            }
            FrequencyProtocol::ExpRamp { omega_sq_init, gamma, omega_sq_final } => {
                let rate = gamma * omega_sq_init.sqrt();
                let tf = self.ramp_end().expect("exp ramp has an end");
                if tf <= 0.0 {
                    // init == final: nothing to ramp
                    vec![(0.0, t_max, SegmentKind::Const { omega_sq: *omega_sq_final })]
                } else if tf >= t_max {
                    vec![(0.0, t_max, SegmentKind::Exp { amplitude: *omega_sq_init, rate })]
                } else {
                    vec![
                        (0.0, tf, SegmentKind::Exp { amplitude: *omega_sq_init, rate }),
                        (tf, t_max, SegmentKind::Const { omega_sq: *omega_sq_final }),
                    ]
                }
            }
            FrequencyProtocol::Piecewise { steps } => {
                let mut out = Vec::new();
                for (i, &(start, omega_sq)) in steps.iter().enumerate() {
                    if start >= t_max {
                        break;
                    }
                    let end = steps.get(i + 1).map_or(t_max, |s| s.0).min(t_max);
                    out.push((start, end, SegmentKind::Const { omega_sq }));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    X,
    Y,
}

/// One normal-coordinate branch: `omega_xi^2(t) = omega^2(t) + offset`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BranchSpec {
    pub label: Branch,
    /// `-+ d_z sqrt(N) / m` in natural units (minus for x, plus for y).
    pub offset: f64,
    /// Initial branch frequency `omega_xi(0)`.
    pub omega0: f64,
}

impl BranchSpec {
    pub fn new(label: Branch, offset: f64, protocol: &FrequencyProtocol) -> Result<Self, QuenchError> {
        let omega0_sq = protocol.omega_sq(0.0) + offset;
        if omega0_sq <= 0.0 {
            return Err(QuenchError::NegativeSquaredFrequency { branch: label, omega_sq_min: omega0_sq });
        }
        Ok(BranchSpec { label, offset, omega0: omega0_sq.sqrt() })
    }
}

/// Classical pair and scaling solution of one branch on the output grid.
#[derive(Debug, Clone)]
pub struct BranchSeries {
    pub spec: BranchSpec,
    pub u: Vec<f64>,
    pub u_dot: Vec<f64>,
    pub v: Vec<f64>,
    pub v_dot: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_dot: Vec<f64>,
    /// `max_t |u v' - u' v - 1|`.
    pub max_wronskian_drift: f64,
    /// `max_t |lambda'' lambda^3 + omega_xi^2 lambda^4 - omega_xi(0)^2|`
    /// with `lambda''` taken from the equation of motion.
    pub max_ermakov_residual: f64,
}

/// Uniform output grid: `n` points spanning `[0, t_max]`, endpoints exact.
pub fn uniform_grid(t_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least two points");
    (0..n)
        .map(|j| if j == n - 1 { t_max } else { j as f64 * t_max / (n - 1) as f64 })
        .collect()
}

/// Integrate the classical pair of one branch over `[0, t_max]` with dense
/// output on `grid`. The squared branch frequency must stay positive over
/// the whole window; this is checked per segment (the coefficients are
/// monotone within one) before any integration runs.
pub fn integrate_classical_pair(
    branch: &BranchSpec,
    protocol: &FrequencyProtocol,
    t_max: f64,
    ctrl: &StepControl,
    grid: &[f64],
) -> Result<Vec<State>, QuenchError> {
    let segments = protocol.segments(t_max);
    let mut omega_sq_max = 0.0f64;
    for (start, end, kind) in &segments {
        let at_start = kind.eval(*start) + branch.offset;
        let at_end = kind.eval(*end) + branch.offset;
        let local_min = at_start.min(at_end);
        if local_min <= 0.0 {
            return Err(QuenchError::NegativeSquaredFrequency { branch: branch.label, omega_sq_min: local_min });
        }
        omega_sq_max = omega_sq_max.max(at_start).max(at_end);
    }

    // cap the step so the O(h^4) Hermite dense output stays far below the
    // integrator tolerance; scales with the fastest branch frequency
    let cap = 0.01 / omega_sq_max.sqrt().max(1e-6);
    let ctrl = StepControl { max_step: ctrl.max_step.min(cap), ..*ctrl };

    let mut states: Vec<State> = Vec::with_capacity(grid.len());
    let mut y: State = [1.0, 0.0, 0.0, 1.0];
    if grid.first().copied() == Some(0.0) {
        states.push(y);
    }
    for (start, end, kind) in &segments {
        let offset = branch.offset;
        let rhs = move |t: f64, s: &State| {
            let w2 = kind.eval(t) + offset;
            [s[1], -w2 * s[0], s[3], -w2 * s[2]]
        };
        let sub: Vec<f64> = grid.iter().copied().filter(|&t| t > *start && t <= *end).collect();
        y = ode::integrate(rhs, *start, *end, y, &ctrl, &sub, &mut states)?;
    }
    Ok(states)
}

/// Compose the Pinney scaling solution `lambda = sqrt(u^2 + omega0^2 v^2)`
/// and its derivative from an integrated classical pair. Fails if the
/// Wronskian has drifted beyond tolerance anywhere on the grid.
pub fn pinney_lambda(states: &[State], omega0: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>, QuenchError> {
    let mut out = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let [u, u_dot, v, v_dot] = *s;
        let drift = (u * v_dot - u_dot * v - 1.0).abs();
        if drift > WRONSKIAN_TOL {
            return Err(QuenchError::WronskianDrift { t: grid.get(i).copied().unwrap_or(f64::NAN), drift });
        }
        let lambda = (u * u + omega0 * omega0 * v * v).sqrt();
        let lambda_dot = (u * u_dot + omega0 * omega0 * v * v_dot) / lambda;
        out.push((lambda, lambda_dot));
    }
    Ok(out)
}

fn compose_branch(
    spec: BranchSpec,
    states: Vec<State>,
    grid: &[f64],
) -> Result<BranchSeries, QuenchError> {
    let lambdas = pinney_lambda(&states, spec.omega0, grid)?;
    let omega0_sq = spec.omega0 * spec.omega0;
    let mut max_wronskian_drift = 0.0f64;
    let mut max_ermakov_residual = 0.0f64;
    for s in &states {
        let [u, u_dot, v, v_dot] = *s;
        max_wronskian_drift = max_wronskian_drift.max((u * v_dot - u_dot * v - 1.0).abs());
        // lambda'' from the equation of motion; the omega^2(t) terms cancel
        // and the residual collapses to omega0^2 (W^2 - 1)
        let lambda_sq = u * u + omega0_sq * v * v;
        let residual = lambda_sq * (u_dot * u_dot + omega0_sq * v_dot * v_dot)
            - (u * u_dot + omega0_sq * v * v_dot).powi(2)
            - omega0_sq;
        max_ermakov_residual = max_ermakov_residual.max(residual.abs());
    }
    let n = states.len();
    let mut series = BranchSeries {
        spec,
        u: Vec::with_capacity(n),
        u_dot: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        v_dot: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        lambda_dot: Vec::with_capacity(n),
        max_wronskian_drift,
        max_ermakov_residual,
    };
    for (s, (l, ld)) in states.iter().zip(lambdas) {
        series.u.push(s[0]);
        series.u_dot.push(s[1]);
        series.v.push(s[2]);
        series.v_dot.push(s[3]);
        series.lambda.push(l);
        series.lambda_dot.push(ld);
    }
    Ok(series)
}

/// Impurity variance in units of `hbar / (m omega_ref)`:
/// `1/4 (lambda_x^2 omega_ref / omega_x(0) + lambda_y^2 omega_ref / omega_y(0))`.
pub fn variance_series(
    branch_x: &BranchSeries,
    branch_y: &BranchSeries,
    omega_ref: f64,
) -> Result<Vec<f64>, QuenchError> {
    if branch_x.lambda.len() != branch_y.lambda.len() {
        return Err(QuenchError::GridMismatch { left: branch_x.lambda.len(), right: branch_y.lambda.len() });
    }
    Ok(branch_x
        .lambda
        .iter()
        .zip(&branch_y.lambda)
        .map(|(lx, ly)| {
            0.25 * (lx * lx * omega_ref / branch_x.spec.omega0 + ly * ly * omega_ref / branch_y.spec.omega0)
        })
        .collect())
}

/// Dimensionless quench scenario: everything in units of `omega(0)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuenchScenario {
    /// `d_z sqrt(N) / m` in units of `omega(0)^2`; the branch offsets are
    /// `-+ coupling_delta`.
    pub coupling_delta: f64,
    pub omega_sq_init: f64,
    pub omega_sq_final: f64,
    /// Bath size, when known; enables the bath CM variance
    /// `<Z^2> = <z_I^2> / N`.
    pub n_bath: Option<usize>,
}

impl QuenchScenario {
    /// The driving used throughout the impurity-in-ring study:
    /// `m omega^2(0) = 20 d_z sqrt(N)` and `m omega^2(t_f) = 2 d_z sqrt(N)`
    /// with `N = 10` bath ions.
    pub fn paper_preset() -> Self {
        QuenchScenario { coupling_delta: 0.05, omega_sq_init: 1.0, omega_sq_final: 0.1, n_bath: Some(10) }
    }

    pub fn omega_ref(&self) -> f64 {
        self.omega_sq_init.sqrt()
    }

    pub fn protocol(&self, gamma: f64) -> Result<FrequencyProtocol, QuenchError> {
        FrequencyProtocol::exp_ramp(self.omega_sq_init, gamma, self.omega_sq_final)
    }

    pub fn branch(&self, label: Branch, protocol: &FrequencyProtocol) -> Result<BranchSpec, QuenchError> {
        let offset = match label {
            Branch::X => -self.coupling_delta,
            Branch::Y => self.coupling_delta,
        };
        BranchSpec::new(label, offset, protocol)
    }
}

/// Full time evolution of one quench: both branches, scaling solutions and
/// derived variances on a shared grid.
#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    pub gamma: f64,
    pub protocol: FrequencyProtocol,
    pub omega_ref: f64,
    pub times: Vec<f64>,
    pub branch_x: BranchSeries,
    pub branch_y: BranchSeries,
    /// `<z_I^2> m omega(0) / hbar`.
    pub variance_impurity: Vec<f64>,
    /// `<Z^2> m omega(0) / hbar = <z_I^2> / N`, when the bath size is known.
    pub variance_bath_cm: Option<Vec<f64>>,
}

impl EvolutionRecord {
    pub fn max_wronskian_drift(&self) -> f64 {
        self.branch_x.max_wronskian_drift.max(self.branch_y.max_wronskian_drift)
    }

    /// Largest Ermakov residual across both branches, in units of the
    /// respective `omega_xi(0)^2`.
    pub fn max_ermakov_residual_scaled(&self) -> f64 {
        let x = self.branch_x.max_ermakov_residual / self.branch_x.spec.omega0.powi(2);
        let y = self.branch_y.max_ermakov_residual / self.branch_y.spec.omega0.powi(2);
        x.max(y)
    }
}

/// Run one quench at driving speed `gamma`.
pub fn run_single(
    scenario: &QuenchScenario,
    gamma: f64,
    t_max: f64,
    grid_len: usize,
    ctrl: &StepControl,
) -> Result<EvolutionRecord, QuenchError> {
    let protocol = scenario.protocol(gamma)?;
    let grid = uniform_grid(t_max, grid_len);
    let branch_x = scenario.branch(Branch::X, &protocol)?;
    let branch_y = scenario.branch(Branch::Y, &protocol)?;
    let states_x = integrate_classical_pair(&branch_x, &protocol, t_max, ctrl, &grid)?;
    let states_y = integrate_classical_pair(&branch_y, &protocol, t_max, ctrl, &grid)?;
    let series_x = compose_branch(branch_x, states_x, &grid)?;
    let series_y = compose_branch(branch_y, states_y, &grid)?;
    let variance_impurity = variance_series(&series_x, &series_y, scenario.omega_ref())?;
    let variance_bath_cm = scenario
        .n_bath
        .map(|n| variance_impurity.iter().map(|z| z / n as f64).collect());
    Ok(EvolutionRecord {
        gamma,
        protocol,
        omega_ref: scenario.omega_ref(),
        times: grid,
        branch_x: series_x,
        branch_y: series_y,
        variance_impurity,
        variance_bath_cm,
    })
}

/// Sweep over driving speeds; one record per `gamma`.
pub fn run_quench(
    scenario: &QuenchScenario,
    gammas: &[f64],
    t_max: f64,
    grid_len: usize,
    ctrl: &StepControl,
) -> Result<Vec<EvolutionRecord>, QuenchError> {
    gammas.iter().map(|&g| run_single(scenario, g, t_max, grid_len, ctrl)).collect()
}

/// Closed-form classical pair for the exponential ramp segment of the
/// x branch (real Bessel order; the y branch has imaginary order and is
/// handled numerically only). `grid` must lie inside the ramp,
/// `[0, min(t_f, t_max)]`.
pub fn bessel_closed_form_x(
    branch: &BranchSpec,
    protocol: &FrequencyProtocol,
    grid: &[f64],
) -> Result<Vec<State>, QuenchError> {
    let FrequencyProtocol::ExpRamp { omega_sq_init, gamma, omega_sq_final: _ } = protocol else {
        return Err(QuenchError::UnsupportedProtocol { reason: "protocol is not an exponential ramp".into() });
    };
    let tf = protocol.ramp_end().expect("exp ramp has an end");
    if grid.iter().any(|&t| t < 0.0 || t > tf * (1.0 + 1e-12)) {
        return Err(QuenchError::UnsupportedProtocol {
            reason: format!("grid leaves the ramp segment [0, {tf}]"),
        });
    }
    let rate = gamma * omega_sq_init.sqrt();
    // omega_xi^2(t) = A e^{-ct} - B with B = -offset
    Ok(bessel::closed_form_pair(*omega_sq_init, rate, -branch.offset, grid)?)
}

/// Sudden-quench width: the initial ground state (width of `omega_initial`)
/// evolving under a constant `omega_final`,
/// `lambda^2(t) = cos^2(omega_final t) + (omega_initial/omega_final)^2 sin^2(omega_final t)`.
pub fn sudden_lambda_sq(omega_initial: f64, omega_final: f64, t: f64) -> f64 {
    let (s, c) = (omega_final * t).sin_cos();
    c * c + (omega_initial / omega_final).powi(2) * s * s
}

/// Sudden-quench impurity variance at time `t` after the quench, in units
/// of `hbar / (m omega_ref)`.
pub fn sudden_variance(scenario: &QuenchScenario, t: f64) -> f64 {
    let omega_ref = scenario.omega_ref();
    let mut out = 0.0;
    for offset in [-scenario.coupling_delta, scenario.coupling_delta] {
        let omega0 = (scenario.omega_sq_init + offset).sqrt();
        let omega_f = (scenario.omega_sq_final + offset).sqrt();
        out += 0.25 * sudden_lambda_sq(omega0, omega_f, t) * omega_ref / omega0;
    }
    out
}

/// Adiabatic plateau of the impurity variance: each branch width tracks
/// `lambda^2 = omega_xi(0) / omega_xi(t_f)`.
pub fn adiabatic_variance(scenario: &QuenchScenario) -> f64 {
    let omega_ref = scenario.omega_ref();
    let mut out = 0.0;
    for offset in [-scenario.coupling_delta, scenario.coupling_delta] {
        let omega_f = (scenario.omega_sq_final + offset).sqrt();
        out += 0.25 * omega_ref / omega_f;
    }
    out
}
