//! Adaptive Dormand-Prince 5(4) integrator for the classical oscillator
//! pair, with cubic Hermite dense output.
//!
//! The state is `[u, u', v, v']` for the linear equation `w'' + q(t) w = 0`
//! with `(u, u')(t0) = (1, 0)` and `(v, v')(t0) = (0, 1)`. The equation is
//! smooth and non-stiff for the frequency protocols used here; the embedded
//! pair controls the local error and FSAL keeps it at six function
//! evaluations per step.

use thiserror::Error;

pub type State = [f64; 4];

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("step limit exceeded at t = {t}")]
    MaxStepsExceeded { t: f64 },
}

/// Step-size control parameters.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on the step size. Also bounds the cubic Hermite
    /// interpolation error of the dense output, which is O(h^4).
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-10, atol: 1e-12, max_step: f64::INFINITY, max_steps: 50_000_000 }
    }
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
// b - b_hat: the embedded 4th-order error weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn axpy(y: &State, h: f64, coeffs: &[f64], k: &[State]) -> State {
    let mut out = *y;
    for (c, ki) in coeffs.iter().zip(k) {
        if *c != 0.0 {
            for d in 0..4 {
                out[d] += h * c * ki[d];
            }
        }
    }
    out
}

/// Cubic Hermite interpolation of every state component from the values and
/// derivatives at the step ends.
fn hermite(theta: f64, h: f64, y0: &State, f0: &State, y1: &State, f1: &State) -> State {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let mut out = [0.0; 4];
    for d in 0..4 {
        out[d] = h00 * y0[d] + h10 * h * f0[d] + h01 * y1[d] + h11 * h * f1[d];
    }
    out
}

/// Integrate from `t0` to `t1`, writing dense output for every grid point in
/// `(t0, t1]` (ascending) into `out`, and return the state at `t1`.
///
/// Grid points are interpolated by cubic Hermite on each component; a grid
/// point landing on a step end is exact.
pub fn integrate<F>(
    rhs: F,
    t0: f64,
    t1: f64,
    y0: State,
    ctrl: &StepControl,
    grid: &[f64],
    out: &mut Vec<State>,
) -> Result<State, OdeError>
where
    F: Fn(f64, &State) -> State,
{
    debug_assert!(t1 > t0);
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut f_here = rhs(t, &y);
    let mut h = (span / 100.0).min(ctrl.max_step).min(span);
    let mut next_grid = 0;
    let mut k = [[0.0; 4]; 7];

    for _step in 0..ctrl.max_steps {
        if t >= t1 {
            break;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepSizeUnderflow { t });
        }
        if t + h > t1 {
            h = t1 - t;
        }

        k[0] = f_here;
        for stage in 1..7 {
            let y_stage = axpy(&y, h, &A[stage][..stage], &k[..stage]);
            k[stage] = rhs(t + C[stage] * h, &y_stage);
        }
        let y_new = axpy(&y, h, &B, &k);

        let mut err_sq = 0.0;
        for d in 0..4 {
            let mut e = 0.0;
            for (ei, ki) in E.iter().zip(&k) {
                e += ei * ki[d];
            }
            e *= h;
            let scale = ctrl.atol + ctrl.rtol * y[d].abs().max(y_new[d].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / 4.0).sqrt();

        if err <= 1.0 {
            // k[6] = f(t + h, y_new): FSAL
            let f_new = k[6];
            while next_grid < grid.len() && grid[next_grid] <= t + h + 1e-15 * t1.abs().max(1.0) {
                let tg = grid[next_grid];
                if tg <= t0 {
                    next_grid += 1;
                    continue;
                }
                let theta = ((tg - t) / h).clamp(0.0, 1.0);
                out.push(hermite(theta, h, &y, &f_here, &y_new, &f_new));
                next_grid += 1;
            }
            t += h;
            y = y_new;
            f_here = f_new;
        }

        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(ctrl.max_step);
    }
    if t < t1 {
        return Err(OdeError::MaxStepsExceeded { t });
    }
    // grid points at exactly t1 that were not flushed by the last step
    while next_grid < grid.len() && grid[next_grid] <= t1 + 1e-12 * t1.abs().max(1.0) {
        out.push(y);
        next_grid += 1;
    }
    Ok(y)
}
