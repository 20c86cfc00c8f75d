//! Jacobi-preconditioned conjugate gradients for the weighted stencil systems.
//!
//! The systems have the form `(A - M c) x = b` with `A` symmetric positive
//! definite and `M` diagonal. Convergence is judged on the *unweighted*
//! residual `M^{-1} (b - (A - M c) x)` in the max norm, which is the quantity
//! the Newton loop and the eigen iteration reason about. A non-positive
//! curvature `pᵀ A p <= 0` proves the operator indefinite and aborts.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::solver::operator::AxisymmetricLaplacian;

/// `A - M diag(c)` for a reaction coefficient `c` given per unknown.
pub struct Shifted<'a> {
    pub lap: &'a AxisymmetricLaplacian,
    pub c: &'a [f64],
}

impl Shifted<'_> {
    pub fn apply(&self, x: &[f64], y: &mut [f64], exec: Exec) {
        self.lap.apply_sym(x, y, exec);
        let m = self.lap.mass();
        exec.update(y, |k, v| v - m[k] * self.c[k] * x[k]);
    }

    fn diagonal(&self) -> Vec<f64> {
        let m = self.lap.mass();
        self.lap.diag().iter().enumerate().map(|(k, d)| d - m[k] * self.c[k]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Absolute target for the unweighted max-norm residual.
    pub tol_abs: f64,
    pub max_iter: usize,
    pub exec: Exec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `op x = b` in place, starting from the incoming `x`.
pub fn pcg(op: &Shifted<'_>, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<CgStats> {
    let exec = opts.exec;
    let len = b.len();
    let mass = op.lap.mass();
    let diag = op.diagonal();
    if let Some(k) = diag.iter().position(|&d| d <= 0.0) {
        return Err(Error::IndefiniteOperator(format!(
            "non-positive diagonal entry at unknown {k}"
        )));
    }
    let unweighted = |r: &[f64]| exec.max(len, |k| (r[k] / mass[k]).abs());

    let mut r = vec![0.0; len];
    let mut ap = vec![0.0; len];
    op.apply(x, &mut ap, exec);
    exec.fill(&mut r, |k| b[k] - ap[k]);
    let mut res = unweighted(&r);
    if res <= opts.tol_abs {
        return Ok(CgStats { iterations: 0, residual: res });
    }
    let mut z = vec![0.0; len];
    exec.fill(&mut z, |k| r[k] / diag[k]);
    let mut p = z.clone();
    let mut rz = exec.dot(&r, &z);
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        op.apply(&p, &mut ap, exec);
        let pap = exec.dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::IndefiniteOperator(format!(
                "negative curvature pᵀAp = {pap:e} at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        exec.update(x, |k, v| v + alpha * p[k]);
        exec.update(&mut r, |k, v| v - alpha * ap[k]);
        res = unweighted(&r);
        if res <= opts.tol_abs {
            // confirm against the true residual before accepting
            op.apply(x, &mut ap, exec);
            exec.fill(&mut r, |k| b[k] - ap[k]);
            res = unweighted(&r);
            if res <= opts.tol_abs {
                return Ok(CgStats { iterations: it, residual: res });
            }
            // the recursive residual drifted: restart from the true one
            exec.fill(&mut z, |k| r[k] / diag[k]);
            rz = exec.dot(&r, &z);
            p.copy_from_slice(&z);
            continue;
        }
        exec.fill(&mut z, |k| r[k] / diag[k]);
        let rz_new = exec.dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        exec.update(&mut p, |k, v| z[k] + beta * v);
    }
    Err(Error::IndefiniteOperator(format!(
        "no convergence in {} iterations (residual {res:e}, target {:e})",
        opts.max_iter, opts.tol_abs
    )))
}
