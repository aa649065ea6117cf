//! Real-order Bessel functions and the closed-form oscillator pair for an
//! exponentially decaying frequency segment.
//!
//! `w'' + (A e^{-ct} - B) w = 0` with `B > 0` is solved by
//! `J_nu(tau), Y_nu(tau)` with order `nu = 2 sqrt(B) / c` in the variable
//! `tau(t) = (2 sqrt(A) / c) e^{-ct/2}`. This is the validation route for
//! the numerically integrated pair; `B <= 0` (imaginary order) is not
//! supported and handled by numerics only.
//!
//! `J_nu` and `Y_nu` are evaluated from their standard integral
//! representations (a finite oscillatory part over `[0, pi]` plus an
//! exponentially decaying tail), which are accurate and uniform over the
//! moderate orders and arguments needed here. Accuracy is traded for
//! simplicity: a few 1e-12-level quadratures per point instead of
//! region-switched series.

use thiserror::Error;

use crate::ode::State;

#[derive(Debug, Error)]
pub enum BesselError {
    #[error("closed form needs a positive frequency depth (real order); got B = {depth}")]
    UnsupportedOrder { depth: f64 },
}

/// Adaptive Simpson quadrature with absolute tolerance.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        m: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, m, b, fa, fm, fb, whole, tol, 40)
}

/// Cutoff for the tail integrals: smallest T with
/// `x sinh(T) - |nu| T >= 60`.
fn tail_cutoff(nu: f64, x: f64) -> f64 {
    let mut t = (60.0f64 / x).asinh().max(0.5);
    while x * t.sinh() - nu.abs() * t < 60.0 && t < 60.0 {
        t += 0.25;
    }
    t
}

const QUAD_TOL: f64 = 1e-12;

/// Bessel function of the first kind, real order, `x > 0`.
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    let oscillatory =
        adaptive_simpson(&|theta: f64| (x * theta.sin() - nu * theta).cos(), 0.0, std::f64::consts::PI, QUAD_TOL);
    let sin_nu_pi = (nu * std::f64::consts::PI).sin();
    let tail = if sin_nu_pi == 0.0 {
        0.0
    } else {
        let cutoff = tail_cutoff(nu, x);
        adaptive_simpson(&|t: f64| (-x * t.sinh() - nu * t).exp(), 0.0, cutoff, QUAD_TOL)
    };
    (oscillatory - sin_nu_pi * tail) / std::f64::consts::PI
}

/// Bessel function of the second kind, real order, `x > 0`.
pub fn bessel_y(nu: f64, x: f64) -> f64 {
    let oscillatory =
        adaptive_simpson(&|theta: f64| (x * theta.sin() - nu * theta).sin(), 0.0, std::f64::consts::PI, QUAD_TOL);
    let cos_nu_pi = (nu * std::f64::consts::PI).cos();
    let cutoff = tail_cutoff(nu, x);
    let tail = adaptive_simpson(
        &|t: f64| ((nu * t).exp() + (-nu * t).exp() * cos_nu_pi) * (-x * t.sinh()).exp(),
        0.0,
        cutoff,
        QUAD_TOL,
    );
    (oscillatory - tail) / std::f64::consts::PI
}

/// `d/dx J_nu(x) = (J_{nu-1}(x) - J_{nu+1}(x)) / 2`.
pub fn bessel_j_prime(nu: f64, x: f64) -> f64 {
    0.5 * (bessel_j(nu - 1.0, x) - bessel_j(nu + 1.0, x))
}

/// `d/dx Y_nu(x) = (Y_{nu-1}(x) - Y_{nu+1}(x)) / 2`.
pub fn bessel_y_prime(nu: f64, x: f64) -> f64 {
    0.5 * (bessel_y(nu - 1.0, x) - bessel_y(nu + 1.0, x))
}

/// Closed-form fundamental pair for `w'' + (A e^{-ct} - B) w = 0` with
/// `(u, u')(0) = (1, 0)` and `(v, v')(0) = (0, 1)`, evaluated on `grid`.
/// Requires `A > 0`, `c > 0` and `B > 0` (real Bessel order).
pub fn closed_form_pair(
    amplitude: f64,
    rate: f64,
    depth: f64,
    grid: &[f64],
) -> Result<Vec<State>, BesselError> {
    if depth <= 0.0 {
        return Err(BesselError::UnsupportedOrder { depth });
    }
    let nu = 2.0 * depth.sqrt() / rate;
    let tau = move |t: f64| (2.0 * amplitude.sqrt() / rate) * (-rate * t / 2.0).exp();
    let tau0 = tau(0.0);

    // match initial conditions: columns (J, Y), rows (value, d/dt) where
    // d/dt = -(c/2) tau d/dtau; determinant is -c/pi from the J/Y Wronskian
    let j0 = bessel_j(nu, tau0);
    let y0 = bessel_y(nu, tau0);
    let jp0 = -(rate / 2.0) * tau0 * bessel_j_prime(nu, tau0);
    let yp0 = -(rate / 2.0) * tau0 * bessel_y_prime(nu, tau0);
    let det = j0 * yp0 - jp0 * y0;
    // (a, b) solving [j0 y0; jp0 yp0] [a; b] = [w0; w0']
    let solve = |w0: f64, w0p: f64| ((w0 * yp0 - w0p * y0) / det, (w0p * j0 - w0 * jp0) / det);
    let (au, bu) = solve(1.0, 0.0);
    let (av, bv) = solve(0.0, 1.0);

    Ok(grid
        .iter()
        .map(|&t| {
            let tt = tau(t);
            let j = bessel_j(nu, tt);
            let y = bessel_y(nu, tt);
            let jp = -(rate / 2.0) * tt * bessel_j_prime(nu, tt);
            let yp = -(rate / 2.0) * tt * bessel_y_prime(nu, tt);
            [au * j + bu * y, au * jp + bu * yp, av * j + bv * y, av * jp + bv * yp]
        })
        .collect())
}
