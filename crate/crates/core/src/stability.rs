//! First eigenvalue of the linearized operator `𝔏 = -Δ - f_u(x, u)`.
//!
//! Eigenpairs are generalized ones, `(A - M c) φ = λ M φ`, with the same
//! weighted stencil as the solver. They are computed by shifted inverse power
//! iteration, with the shift chosen so that every inner system is positive
//! definite.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::Field;
use crate::nonlinearity::Nonlinearity;
use crate::solver::{pcg, AxisymmetricLaplacian, CgOptions, Shifted};

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Stop once `‖𝔏φ - λφ‖ / ‖φ‖` falls below this.
    pub tol_eig: f64,
    pub max_iter: usize,
    /// Added on top of the smallest shift that makes `𝔏 + s` definite.
    pub shift_extra: f64,
    pub max_lin_iter: usize,
    pub exec: Exec,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol_eig: 1e-8, max_iter: 2000, shift_extra: 1.0, max_lin_iter: 50_000, exec: Exec::default() }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub lambda1: f64,
    /// Positive first eigenfunction with unit discrete L² norm.
    pub eigenfield: Field,
    pub iterations: usize,
    pub residual: f64,
    pub stable: bool,
    pub shift: f64,
    pub single_signed: bool,
}

impl StabilityReport {
    pub fn margin(&self) -> f64 {
        10.0 * self.residual
    }
}

/// `λ₁ > margin`, with the margin defaulting to ten times the eigen residual.
pub fn is_stable(report: &StabilityReport, margin: Option<f64>) -> bool {
    report.lambda1 > margin.unwrap_or_else(|| report.margin())
}

fn reaction(lap: &AxisymmetricLaplacian, nl: &Nonlinearity, u: &Field) -> Result<Vec<f64>> {
    check_field(lap, u)?;
    let g = &lap.grid;
    (0..lap.len())
        .map(|k| {
            let (r, z) = g.coords(k);
            nl.eval_du(r, z, u.values[k])
        })
        .collect()
}

fn check_field(lap: &AxisymmetricLaplacian, f: &Field) -> Result<()> {
    if !Arc::ptr_eq(&lap.grid, &f.grid) || f.values.len() != lap.len() {
        return Err(Error::Contract("field does not live on the operator's grid".into()));
    }
    Ok(())
}

/// Weighted squared norm `Σ w φ²` with `w` the cell volume.
fn norm2(lap: &AxisymmetricLaplacian, x: &[f64], exec: Exec) -> f64 {
    let m = lap.mass();
    let h2 = lap.grid.h * lap.grid.h;
    exec.sum(x.len(), |k| m[k] * x[k] * x[k]) * h2
}

fn quotient(lap: &AxisymmetricLaplacian, c: &[f64], phi: &[f64], exec: Exec) -> Result<f64> {
    let m = lap.mass();
    let den = exec.sum(phi.len(), |k| m[k] * phi[k] * phi[k]);
    if !(den > 0.0) {
        return Err(Error::UndefinedQuotient);
    }
    let react = exec.sum(phi.len(), |k| m[k] * c[k] * phi[k] * phi[k]);
    Ok((lap.energy(phi, exec) - react) / den)
}

/// `(∫|∇φ|² - ∫ f_u(·,u) φ²) / ∫ φ²` in the axisymmetric volume weights.
pub fn rayleigh_quotient(
    lap: &AxisymmetricLaplacian,
    nl: &Nonlinearity,
    u: &Field,
    phi: &Field,
    exec: Exec,
) -> Result<f64> {
    check_field(lap, phi)?;
    let c = reaction(lap, nl, u)?;
    quotient(lap, &c, &phi.values, exec)
}

/// Relative residual `‖𝔏φ - λφ‖ / ‖φ‖` in the weighted norm.
fn eig_residual(lap: &AxisymmetricLaplacian, c: &[f64], phi: &[f64], lambda: f64, exec: Exec) -> f64 {
    let m = lap.mass();
    let mut y = vec![0.0; phi.len()];
    Shifted { lap, c }.apply(phi, &mut y, exec);
    exec.update(&mut y, |k, v| v / m[k] - lambda * phi[k]);
    (norm2(lap, &y, exec) / norm2(lap, phi, exec)).sqrt()
}

/// Smallest eigenvalue of `-Δ_h - f_u(·, u)` by shifted inverse iteration.
pub fn smallest_eigenvalue(
    lap: &AxisymmetricLaplacian,
    nl: &Nonlinearity,
    u: &Field,
    opts: &EigenOptions,
) -> Result<StabilityReport> {
    let c = reaction(lap, nl, u)?;
    // -Δ_h is positive definite, so s > max f_u makes 𝔏 + s definite
    let base = c.iter().fold(0.0f64, |a, &v| a.max(v)) + opts.shift_extra.max(0.0);
    let mut shift = base.max(f64::MIN_POSITIVE);
    let mut last = None;
    for _ in 0..3 {
        match inverse_iteration(lap, &c, u, shift, opts) {
            Ok(rep) => return Ok(rep),
            Err(Error::IndefiniteOperator(msg)) => {
                last = Some(msg);
                shift *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::EigenFailure(format!(
        "inner solver failed after two shift doublings: {}",
        last.unwrap_or_default()
    )))
}

fn inverse_iteration(
    lap: &AxisymmetricLaplacian,
    c: &[f64],
    u: &Field,
    shift: f64,
    opts: &EigenOptions,
) -> Result<StabilityReport> {
    let exec = opts.exec;
    let len = lap.len();
    if len == 0 {
        return Err(Error::EigenFailure("no unknowns".into()));
    }
    let m = lap.mass();
    let cs: Vec<f64> = c.iter().map(|v| v - shift).collect();
    let op = Shifted { lap, c: &cs };
    let mut phi = vec![1.0; len];
    let scale = norm2(lap, &phi, exec).sqrt();
    phi.iter_mut().for_each(|v| *v /= scale);
    let mut lambda = quotient(lap, c, &phi, exec)?;
    let mut residual = eig_residual(lap, c, &phi, lambda, exec);
    let mut b = vec![0.0; len];
    let mut x = vec![0.0; len];
    let mut iterations = 0;
    while residual > opts.tol_eig {
        if iterations >= opts.max_iter {
            return Err(Error::EigenFailure(format!(
                "inverse iteration stalled at residual {residual:e} after {iterations} steps"
            )));
        }
        iterations += 1;
        exec.fill(&mut b, |k| m[k] * phi[k]);
        // the exact answer is close to φ / (λ + s) once the iteration settles
        let guess = 1.0 / (lambda + shift);
        exec.fill(&mut x, |k| guess * phi[k]);
        let tol_abs = 0.05 * opts.tol_eig * phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        pcg(&op, &b, &mut x, CgOptions { tol_abs, max_iter: opts.max_lin_iter, exec })?;
        let nrm = norm2(lap, &x, exec).sqrt();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(Error::EigenFailure("inverse iterate lost all mass".into()));
        }
        exec.fill(&mut phi, |k| x[k] / nrm);
        lambda = quotient(lap, c, &phi, exec)?;
        residual = eig_residual(lap, c, &phi, lambda, exec);
    }
    let sum: f64 = phi.iter().sum();
    if sum < 0.0 {
        phi.iter_mut().for_each(|v| *v = -*v);
    }
    let (lo, hi) = phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let report = StabilityReport {
        lambda1: lambda,
        eigenfield: u.with_values(phi),
        iterations,
        residual,
        stable: false,
        shift,
        single_signed: lo * hi > 0.0,
    };
    let stable = is_stable(&report, None);
    Ok(StabilityReport { stable, ..report })
}

/// `λ₁` on `{z > 0}`: the same stencil with a Dirichlet line on `z = 0`.
pub fn half_domain_eigenvalue(
    lap: &AxisymmetricLaplacian,
    nl: &Nonlinearity,
    u: &Field,
    opts: &EigenOptions,
) -> Result<StabilityReport> {
    check_field(lap, u)?;
    let g = &lap.grid;
    let half = Arc::new(g.upper_half());
    let values = (0..half.unknowns())
        .map(|k| {
            let (i, j) = half.node(k);
            g.index(i, j).map(|kk| u.values[kk]).ok_or_else(|| {
                Error::InternalContradiction("half-domain node missing from the full grid".into())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hl = AxisymmetricLaplacian::new(half.clone(), lap.n)?;
    let uh = Field::with_values(&Field::zeros(half, lap.n), values);
    smallest_eigenvalue(&hl, nl, &uh, opts)
}

/// Eigenfield header comment for CPFIELD output.
pub fn eigen_comment(report: &StabilityReport) -> String {
    format!("eigen lambda1={}", crate::field::fmt_f64(report.lambda1))
}
