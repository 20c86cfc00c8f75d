//! Critical points of the rotated solution and their Hessian inertia.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::{fmt_f64, Field, Interpolant};
use crate::solver::{derivative_field, Direction};

/// Calibrated so that `-1/3` sits a factor 100 above `τ_H` at `h = 1/128`.
pub const C_H_DEFAULT: f64 = 128.0 * 128.0 / 300.0;

pub fn tau_h(h: f64, c_h: f64) -> f64 {
    c_h * h * h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointType {
    Max,
    Min,
    Saddle,
    Degenerate,
    /// Off-axis point, standing for an `(n-2)`-sphere of critical points.
    Ring,
}

impl PointType {
    pub fn as_str(self) -> &'static str {
        match self {
            PointType::Max => "max",
            PointType::Min => "min",
            PointType::Saddle => "saddle",
            PointType::Degenerate => "degenerate",
            PointType::Ring => "ring",
        }
    }
}

/// Inertia counts `(negative, zero, positive)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Signature {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub r: f64,
    pub z: f64,
    pub on_axis: bool,
    pub value: f64,
    pub gradient_residual: f64,
    /// Cartesian Hessian at `(r, 0, …, 0, z)`.
    pub hessian: DMatrix<f64>,
    /// Hessian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub signature: Signature,
    pub kind: PointType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    pub points: Vec<CriticalPoint>,
    pub count_nondegenerate_max: usize,
    pub unique_nondegenerate_max: bool,
    pub tau_h: f64,
    /// Candidates that did not reach `tol_cp`, or reached it within two cells
    /// of the boundary.
    pub unconverged: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CensusOptions {
    pub tol_cp: f64,
    pub c_h: f64,
    pub max_newton: usize,
    pub exec: Exec,
}

impl Default for CensusOptions {
    fn default() -> Self {
        Self { tol_cp: 1e-8, c_h: C_H_DEFAULT, max_newton: 50, exec: Exec::default() }
    }
}

/// Inertia of a symmetric matrix with zero threshold `tau`.
pub fn classify(hessian: &DMatrix<f64>, tau: f64) -> (PointType, Signature, Vec<f64>) {
    let mut eig: Vec<f64> = SymmetricEigen::new(hessian.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let mut sig = Signature::default();
    for &l in &eig {
        if l.abs() <= tau {
            sig.zero += 1;
        } else if l < 0.0 {
            sig.negative += 1;
        } else {
            sig.positive += 1;
        }
    }
    let kind = if sig.zero > 0 {
        PointType::Degenerate
    } else if sig.positive == 0 {
        PointType::Max
    } else if sig.negative == 0 {
        PointType::Min
    } else {
        PointType::Saddle
    };
    (kind, sig, eig)
}

fn near_boundary(u: &Field, r: f64, z: f64) -> bool {
    let g = &u.grid;
    let i = (r / g.h).round();
    let j = (z / g.h).round() + g.j0() as f64;
    if i < 0.0 || j < 0.0 {
        return true;
    }
    match g.index(i as usize, j as usize) {
        Some(k) => g.boundary_distance(k, 3) <= 2,
        None => true,
    }
}

/// Cartesian Hessian of the rotated field at the meridian point `(r, z)`.
pub fn hessian_at(u: &Field, interp: &Interpolant, r: f64, z: f64) -> Result<DMatrix<f64>> {
    if near_boundary(u, r, z) {
        return Err(Error::TooCloseToBoundary { r, z });
    }
    let n = u.n;
    let h = u.grid.h;
    let v = |dr: f64, dz: f64| interp.value(r + dr, z + dz);
    let c = v(0.0, 0.0);
    let uzz = (v(0.0, h) - 2.0 * c + v(0.0, -h)) / (h * h);
    let mut m = DMatrix::zeros(n, n);
    if r < 0.5 * h {
        // even in r: u(-h) = u(h)
        let urr = 2.0 * (v(h, 0.0) - c) / (h * h);
        for i in 0..n - 1 {
            m[(i, i)] = urr;
        }
        m[(n - 1, n - 1)] = uzz;
        return Ok(m);
    }
    let urr = (v(h, 0.0) - 2.0 * c + v(-h, 0.0)) / (h * h);
    // the gradient that defines the critical point, so a ring gives an exact zero
    let ur = interp.jet(r, z).grad[0];
    let urz = (v(h, h) - v(h, -h) - v(-h, h) + v(-h, -h)) / (4.0 * h * h);
    m[(0, 0)] = urr;
    for i in 1..n - 1 {
        m[(i, i)] = ur / r;
    }
    m[(n - 1, n - 1)] = uzz;
    m[(0, n - 1)] = urz;
    m[(n - 1, 0)] = urz;
    Ok(m)
}

enum Seed {
    Axis { z0: f64, z1: f64 },
    Plane { r: f64, z: f64 },
}

fn candidates(u: &Field) -> Vec<Seed> {
    let g = &u.grid;
    let ur = derivative_field(u, Direction::R);
    let uz = derivative_field(u, Direction::Z);
    let crosses = |f: &Field, ks: &[usize]| {
        let lo = ks.iter().map(|&k| f.values[k]).fold(f64::INFINITY, f64::min);
        let hi = ks.iter().map(|&k| f.values[k]).fold(f64::NEG_INFINITY, f64::max);
        lo <= 0.0 && hi >= 0.0
    };
    let mut seeds = Vec::new();
    for j in 0..g.nz - 1 {
        for i in 0..g.nr - 1 {
            let ks = [g.index(i, j), g.index(i + 1, j), g.index(i, j + 1), g.index(i + 1, j + 1)];
            if ks.iter().any(Option::is_none) {
                continue;
            }
            let ks: Vec<usize> = ks.iter().map(|k| k.unwrap()).collect();
            if !crosses(&uz, &ks) {
                continue;
            }
            let r = g.r(i);
            if r < 2.0 * g.h {
                seeds.push(Seed::Axis { z0: g.z(j), z1: g.z(j + 1) });
            } else if crosses(&ur, &ks) {
                seeds.push(Seed::Plane { r: r + 0.5 * g.h, z: g.z(j) + 0.5 * g.h });
            }
        }
    }
    seeds
}

/// Root of `u_z(0, ·)` bracketed near `[z0, z1]`, safeguarded Newton.
fn refine_axis(interp: &Interpolant, z0: f64, z1: f64, h: f64, tol: f64, max_it: usize) -> Option<(f64, f64)> {
    let gz = |z: f64| interp.jet(0.0, z).grad[1];
    let (mut a, mut b) = (z0 - h, z1 + h);
    let (mut fa, fb) = (gz(a), gz(b));
    if fa == 0.0 {
        return Some((a, 0.0));
    }
    if fb == 0.0 {
        return Some((b, 0.0));
    }
    if fa * fb > 0.0 {
        return None;
    }
    let mut z = 0.5 * (a + b);
    for _ in 0..max_it.max(200) {
        let jet = interp.jet(0.0, z);
        let f = jet.grad[1];
        if f.abs() <= tol {
            return Some((z, f.abs()));
        }
        if (f < 0.0) == (fa < 0.0) {
            a = z;
            fa = f;
        } else {
            b = z;
        }
        let newton = z - f / jet.hess[1][1];
        z = if newton.is_finite() && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if b - a <= 1e-15 * h {
            let f = gz(z).abs();
            return (f <= tol).then_some((z, f));
        }
    }
    None
}

/// Damped Newton on the interpolated gradient in the meridian plane.
fn refine_plane(interp: &Interpolant, mut r: f64, mut z: f64, h: f64, tol: f64, max_it: usize) -> Option<(f64, f64, f64)> {
    let norm = |j: &crate::field::Jet| j.grad[0].hypot(j.grad[1]);
    let mut jet = interp.jet(r, z);
    for _ in 0..max_it {
        let gn = norm(&jet);
        if gn <= tol {
            return Some((r, z, gn));
        }
        let [[a, b], [_, d]] = jet.hess;
        let det = a * d - b * b;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let mut dr = -(d * jet.grad[0] - b * jet.grad[1]) / det;
        let mut dz = -(-b * jet.grad[0] + a * jet.grad[1]) / det;
        let len = dr.hypot(dz);
        if len > h {
            dr *= h / len;
            dz *= h / len;
        }
        let mut step = 1.0;
        loop {
            let (nr, nz) = ((r + step * dr).abs(), z + step * dz);
            let nj = interp.jet(nr, nz);
            if norm(&nj) < gn || step < 1e-6 {
                r = nr;
                z = nz;
                jet = nj;
                break;
            }
            step *= 0.5;
        }
    }
    let gn = norm(&jet);
    (gn <= tol).then_some((r, z, gn))
}

/// All critical points of `u`, deduplicated within two cells.
pub fn find_critical_points(u: &Field, opts: &CensusOptions) -> Result<Census> {
    let g = &u.grid;
    let h = g.h;
    let interp = Interpolant::new(u);
    let seeds = candidates(u);
    let tau = tau_h(h, opts.c_h);
    if seeds.is_empty() {
        if u.max() > 0.0 && u.max() != u.min() {
            return Err(Error::InternalContradiction(
                "positive field with zero boundary values has no critical-point candidates".into(),
            ));
        }
        return Ok(Census { points: vec![], count_nondegenerate_max: 0, unique_nondegenerate_max: false, tau_h: tau, unconverged: 0 });
    }
    let found = opts.exec.map_jobs(&seeds, |s| match *s {
        Seed::Axis { z0, z1 } => refine_axis(&interp, z0, z1, h, opts.tol_cp, opts.max_newton).map(|(z, res)| (0.0, z, res)),
        Seed::Plane { r, z } => refine_plane(&interp, r, z, h, opts.tol_cp, opts.max_newton),
    });
    let unconverged = found.iter().filter(|f| f.is_none()).count();
    let mut hits: Vec<(f64, f64, f64)> = found.into_iter().flatten().collect();
    hits.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut kept: Vec<(f64, f64, f64)> = Vec::new();
    for p in hits {
        if kept.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) > 2.0 * h) {
            kept.push(p);
        }
    }
    // a positive solution has no critical points on its zero boundary
    let before = kept.len();
    kept.retain(|&(r, z, _)| !near_boundary(u, r, z));
    let unconverged = unconverged + (before - kept.len());
    if kept.is_empty() && u.max() > 0.0 && u.max() != u.min() {
        return Err(Error::InternalContradiction(
            "positive field with zero boundary values has no interior critical point".into(),
        ));
    }
    kept.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let mut points = Vec::with_capacity(kept.len());
    for (r, z, res) in kept {
        let on_axis = r < 0.5 * h;
        let r = if on_axis { 0.0 } else { r };
        let hessian = hessian_at(u, &interp, r, z)?;
        let (mut kind, signature, eigenvalues) = classify(&hessian, tau);
        if !on_axis && u.n >= 3 {
            kind = PointType::Ring;
        }
        points.push(CriticalPoint {
            r,
            z,
            on_axis,
            value: interp.value(r, z),
            gradient_residual: res,
            hessian,
            eigenvalues,
            signature,
            kind,
        });
    }
    let count_nondegenerate_max = points.iter().filter(|p| p.kind == PointType::Max).count();
    let unique_nondegenerate_max = points.len() == 1 && points[0].kind == PointType::Max && points[0].signature.zero == 0;
    Ok(Census { points, count_nondegenerate_max, unique_nondegenerate_max, tau_h: tau, unconverged })
}

/// `r,z,on_axis,type,grad_residual,eig1..eign`.
pub fn census_csv(census: &Census, n: usize) -> String {
    let mut s = String::from("r,z,on_axis,type,grad_residual");
    for i in 1..=n {
        let _ = write!(s, ",eig{i}");
    }
    s.push('\n');
    for p in &census.points {
        let _ = write!(s, "{},{},{},{},{}", fmt_f64(p.r), fmt_f64(p.z), p.on_axis, p.kind.as_str(), fmt_f64(p.gradient_residual));
        for e in &p.eigenvalues {
            let _ = write!(s, ",{}", fmt_f64(*e));
        }
        s.push('\n');
    }
    s
}

/// Quadratic least-squares fit of the rotated field around an axis point.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorFit {
    /// Fitted Cartesian Hessian (twice the quadratic coefficients).
    pub hessian: DMatrix<f64>,
    /// Mean transverse coefficient: `u ≈ u(o) + c₁|x'|² + c₂ x_n² + …`.
    pub c1: f64,
    pub c2: f64,
    pub offdiag_max: f64,
    /// Spread of the transverse diagonal entries.
    pub transverse_spread: f64,
    pub samples: usize,
}

/// Fits `a + b·x + ½ xᵀHx` to the rotated field on the ball of radius
/// `radius_cells·h` around `(0, z0)`, sampled on the `n`-dimensional lattice of
/// spacing `h`.
pub fn taylor_fit(u: &Field, z0: f64, radius_cells: usize) -> Result<TaylorFit> {
    let n = u.n;
    let h = u.grid.h;
    let interp = Interpolant::new(u);
    let m = radius_cells as isize;
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![-m; n];
    loop {
        let x: Vec<f64> = idx.iter().map(|&k| k as f64 * h).collect();
        if idx.iter().map(|&k| k * k).sum::<isize>() <= m * m {
            pts.push(x);
        }
        let mut d = 0;
        while d < n {
            idx[d] += 1;
            if idx[d] <= m {
                break;
            }
            idx[d] = -m;
            d += 1;
        }
        if d == n {
            break;
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let cols = 1 + n + pairs.len();
    if pts.len() < cols {
        return Err(Error::Contract("too few samples for a quadratic fit".into()));
    }
    let mut a = DMatrix::zeros(pts.len(), cols);
    let mut b = DVector::zeros(pts.len());
    for (row, x) in pts.iter().enumerate() {
        let rho = x[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        b[row] = interp.value(rho, z0 + x[n - 1]);
        a[(row, 0)] = 1.0;
        for i in 0..n {
            a[(row, 1 + i)] = x[i] / h;
        }
        for (c, &(i, j)) in pairs.iter().enumerate() {
            let f = if i == j { 0.5 } else { 1.0 };
            a[(row, 1 + n + c)] = f * x[i] * x[j] / (h * h);
        }
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::InternalContradiction(format!("least squares failed: {e}")))?;
    let mut hess = DMatrix::zeros(n, n);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let v = sol[1 + n + c] / (h * h);
        hess[(i, j)] = v;
        hess[(j, i)] = v;
    }
    let trans: Vec<f64> = (0..n - 1).map(|i| hess[(i, i)]).collect();
    let c1 = trans.iter().sum::<f64>() / trans.len().max(1) as f64 / 2.0;
    let spread = trans.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)) - trans.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let mut off = 0.0f64;
    for &(i, j) in &pairs {
        if i != j {
            off = off.max(hess[(i, j)].abs());
        }
    }
    Ok(TaylorFit { c1, c2: hess[(n - 1, n - 1)] / 2.0, hessian: hess, offdiag_max: off, transverse_spread: spread, samples: pts.len() })
}
