//! Newton solver for `-Δu = f(x, u)` with zero Dirichlet data.

pub mod cg;
pub mod operator;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::Field;
use crate::grid::{EAST, NORTH, SOUTH, WEST};
use crate::nonlinearity::Nonlinearity;

pub use cg::{pcg, CgOptions, CgStats, Shifted};
pub use operator::{apply_axisym_laplacian, AxisymmetricLaplacian};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Discrete max-norm PDE residual accepted as converged.
    pub tol_pde: f64,
    /// Relative tolerance of the inner linear solves.
    pub tol_lin: f64,
    pub max_newton: usize,
    pub max_lin_iter: usize,
    pub exec: Exec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_pde: 1e-9, tol_lin: 1e-11, max_newton: 30, max_lin_iter: 50_000, exec: Exec::default() }
    }
}

/// Maximum number of step halvings per Newton iteration.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub damping_events: usize,
    /// Residual before the first and after every Newton step.
    pub residuals: Vec<f64>,
    pub linear_iterations: usize,
    /// Minimum of `u` when it is not positive although `f(·, 0) > 0`.
    pub positivity_violation: Option<f64>,
}

/// Solves `(-Δ_h - c) φ = rhs` with the max-norm residual below
/// `tol_lin · |rhs|_∞`.
pub fn solve_linear(
    lap: &AxisymmetricLaplacian,
    c: &Field,
    rhs: &Field,
    tol_lin: f64,
    max_iter: usize,
    exec: Exec,
) -> Result<Field> {
    let mut phi = vec![0.0; lap.len()];
    let scale = rhs.linf();
    if scale == 0.0 {
        return Ok(rhs.with_values(phi));
    }
    let m = lap.mass();
    let b: Vec<f64> = rhs.values.iter().enumerate().map(|(k, v)| m[k] * v).collect();
    let op = Shifted { lap, c: &c.values };
    pcg(&op, &b, &mut phi, CgOptions { tol_abs: tol_lin * scale, max_iter, exec })?;
    Ok(rhs.with_values(phi))
}

/// `-Δ_h u - f(x, u)` at every unknown.
pub fn pde_residual(lap: &AxisymmetricLaplacian, nl: &Nonlinearity, u: &[f64], exec: Exec) -> Result<Vec<f64>> {
    let g = &lap.grid;
    let mut res = lap.laplacian(u, exec);
    let mut bad = None;
    for (k, v) in res.iter_mut().enumerate() {
        let (r, z) = g.coords(k);
        match nl.eval(r, z, u[k]) {
            Ok(f) => *v = -*v - f,
            Err(e) => {
                bad = Some(e);
                break;
            }
        }
    }
    match bad {
        Some(e) => Err(e),
        None => Ok(res),
    }
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration from `u0`.
///
/// Each step solves `(-Δ_h - f_u(u_k)) δ = -(−Δ_h u_k - f(u_k))` and halves
/// the step while the residual grows. An indefinite linearization is returned
/// as an error: the iterate has left the stable branch.
pub fn newton_solve(
    lap: &AxisymmetricLaplacian,
    nl: &Nonlinearity,
    u0: &Field,
    opts: &SolverOptions,
) -> Result<(Field, SolveReport)> {
    let exec = opts.exec;
    let g = lap.grid.clone();
    let len = lap.len();
    if u0.values.len() != len {
        return Err(Error::Contract("initial guess does not match the grid".into()));
    }
    if u0.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("initial guess is not finite".into()));
    }
    let m = lap.mass();
    let mut u = u0.values.clone();
    let mut res = pde_residual(lap, nl, &u, exec)?;
    let mut rn = linf(&res);
    let mut report = SolveReport {
        newton_iterations: 0,
        final_residual: rn,
        converged: rn <= opts.tol_pde,
        damping_events: 0,
        residuals: vec![rn],
        linear_iterations: 0,
        positivity_violation: None,
    };
    let mut c = vec![0.0; len];
    let mut delta = vec![0.0; len];
    let mut b = vec![0.0; len];
    while !report.converged && report.newton_iterations < opts.max_newton {
        for k in 0..len {
            let (r, z) = g.coords(k);
            c[k] = nl.eval_du(r, z, u[k])?;
        }
        exec.fill(&mut b, |k| -m[k] * res[k]);
        delta.iter_mut().for_each(|d| *d = 0.0);
        let op = Shifted { lap, c: &c };
        let tol_abs = (opts.tol_lin * rn).max(0.1 * opts.tol_pde);
        let stats = pcg(&op, &b, &mut delta, CgOptions { tol_abs, max_iter: opts.max_lin_iter, exec })?;
        report.linear_iterations += stats.iterations;
        report.newton_iterations += 1;

        let mut alpha = 1.0;
        let mut accepted = None;
        for halving in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
            if let Ok(tres) = pde_residual(lap, nl, &trial, exec) {
                let tn = linf(&tres);
                if tn.is_finite() && (tn < rn || tn <= opts.tol_pde) {
                    accepted = Some((trial, tres, tn));
                    break;
                }
            }
            if halving < MAX_HALVINGS {
                alpha *= 0.5;
                report.damping_events += 1;
            }
        }
        match accepted {
            Some((trial, tres, tn)) => {
                u = trial;
                res = tres;
                rn = tn;
                report.residuals.push(rn);
                report.final_residual = rn;
                report.converged = rn <= opts.tol_pde;
            }
            None => break,
        }
    }
    let field = u0.with_values(u);
    if report.converged && nl.positive_at_zero() {
        let min = field.min();
        if min <= 0.0 {
            report.positivity_violation = Some(min);
        }
    }
    Ok((field, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    R,
    Z,
}

/// `∂u/∂r` or `∂u/∂z` at every unknown: centered in the bulk, second-order
/// one-sided through the zero boundary value next to a cut arm, and zero for
/// `∂/∂r` on the axis.
pub fn derivative_field(u: &Field, dir: Direction) -> Field {
    let g = &u.grid;
    let h = g.h;
    let (plus, minus) = match dir {
        Direction::R => (EAST, WEST),
        Direction::Z => (NORTH, SOUTH),
    };
    let values = (0..g.unknowns())
        .map(|k| {
            if dir == Direction::R && g.on_axis(k) {
                return 0.0;
            }
            let nb = g.neighbors(k);
            let th = g.theta(k);
            let side = |arm: usize| -> (f64, f64) {
                if g.is_cut(k, arm) {
                    (th[arm] * h, 0.0)
                } else {
                    (h, u.values[nb[arm] as usize])
                }
            };
            let (h2, ue) = side(plus);
            let (h1, uw) = side(minus);
            let up = u.values[k];
            -h2 / (h1 * (h1 + h2)) * uw + (h2 - h1) / (h1 * h2) * up + h1 / (h2 * (h1 + h2)) * ue
        })
        .collect();
    u.with_values(values)
}
