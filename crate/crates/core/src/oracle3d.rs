//! Brute-force three-dimensional solve on a voxel grid.
//!
//! Nothing here reuses the meridian stencil: the Laplacian is the plain
//! 7-point Shortley–Weller operator in Cartesian coordinates, solved by
//! Jacobi-preconditioned BiCGSTAB inside its own damped Newton loop. The
//! solution is never assumed to be symmetric.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::domain::Profile;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::{fmt_f64, Field, Interpolant};
use crate::morse::Census;
use crate::nonlinearity::Nonlinearity;

/// Arms shorter than this fraction of a voxel are lengthened to it.
const ARM_MIN: f64 = 1e-3;
pub const MAX_N: usize = 96;

/// Values at the centers of an `N³` voxel grid over `[-R, R]² × [-a, a]`.
/// Outside voxels hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    pub n: usize,
    pub rext: f64,
    pub zext: f64,
    /// `z`-major, then `y`, then `x`.
    pub values: Vec<f64>,
}

impl VoxelField {
    pub fn hx(&self) -> f64 {
        2.0 * self.rext / self.n as f64
    }

    pub fn hz(&self) -> f64 {
        2.0 * self.zext / self.n as f64
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let (hx, hz) = (self.hx(), self.hz());
        [
            -self.rext + (i as f64 + 0.5) * hx,
            -self.rext + (j as f64 + 0.5) * hx,
            -self.zext + (k as f64 + 0.5) * hz,
        ]
    }

    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    pub fn inside(&self, i: usize, j: usize, k: usize) -> bool {
        !self.values[self.idx(i, j, k)].is_nan()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// Empty field with the mask of `d`.
    pub fn masked(d: &dyn Profile, n: usize) -> Self {
        let mut v = Self { n, rext: d.radial_extent(), zext: d.axis_height(), values: vec![f64::NAN; n * n * n] };
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let [x, y, z] = v.center(i, j, k);
                    if d.inside(x.hypot(y), z) {
                        let p = v.idx(i, j, k);
                        v.values[p] = 0.0;
                    }
                }
            }
        }
        v
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 24 + 64);
        s.push_str("CPVOX 1\n");
        let _ = writeln!(s, "N {}", self.n);
        let _ = writeln!(s, "extent {} {}", fmt_f64(self.rext), fmt_f64(self.zext));
        s.push_str("data\n");
        for row in self.values.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Format { line, msg };
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l)).filter(|(_, l)| !l.starts_with('#'));
        let mut take = |key: &str| -> Result<(usize, Vec<String>)> {
            let (ln, l) = lines.next().ok_or_else(|| err(0, format!("missing `{key}` line")))?;
            let parts: Vec<String> = l.split_whitespace().map(str::to_string).collect();
            if parts.first().map(String::as_str) != Some(key) {
                return Err(err(ln, format!("expected `{key}`")));
            }
            Ok((ln, parts[1..].to_vec()))
        };
        let (ln, v) = take("CPVOX")?;
        if v != ["1"] {
            return Err(err(ln, "unsupported CPVOX version".into()));
        }
        let (ln, v) = take("N")?;
        let n: usize = v.first().and_then(|s| s.parse().ok()).ok_or_else(|| err(ln, "bad N".into()))?;
        let (ln, v) = take("extent")?;
        let nums: Vec<f64> = v.iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| err(ln, e.to_string()))?;
        if nums.len() != 2 {
            return Err(err(ln, "extent needs R and a".into()));
        }
        take("data")?;
        let mut values = Vec::with_capacity(n * n * n);
        for (ln, l) in lines {
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(ln, e.to_string()))?;
            if row.len() != n {
                return Err(err(ln, format!("expected {n} values, found {}", row.len())));
            }
            values.extend(row);
        }
        if values.len() != n * n * n {
            return Err(err(0, format!("expected {} data rows", n * n)));
        }
        Ok(Self { n, rext: nums[0], zext: nums[1], values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Distance fraction along the arm from `p` to `p + d` at which the domain is left.
fn arm_fraction(dom: &dyn Profile, p: [f64; 3], d: [f64; 3]) -> f64 {
    let inside = |s: f64| {
        let q = [p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]];
        dom.inside(q[0].hypot(q[1]), q[2])
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    (0.5 * (lo + hi)).clamp(ARM_MIN, 1.0)
}

/// 7-point operator `-Δ_h` with boundary arms, one row per inside voxel.
struct Stencil {
    diag: Vec<f64>,
    /// `(column, coefficient)` of the off-diagonal entries (coefficient < 0).
    off: Vec<[(u32, f64); 6]>,
    cells: Vec<(usize, usize, usize)>,
}

const NO: u32 = u32::MAX;

impl Stencil {
    fn build(dom: &dyn Profile, mask: &VoxelField) -> Self {
        let n = mask.n;
        let (hx, hz) = (mask.hx(), mask.hz());
        let mut id = vec![NO; n * n * n];
        let mut cells = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if mask.inside(i, j, k) {
                        id[mask.idx(i, j, k)] = cells.len() as u32;
                        cells.push((i, j, k));
                    }
                }
            }
        }
        let mut diag = Vec::with_capacity(cells.len());
        let mut off = Vec::with_capacity(cells.len());
        for &(i, j, k) in &cells {
            let p = mask.center(i, j, k);
            let mut d = 0.0;
            let mut row = [(NO, 0.0); 6];
            for axis in 0..3 {
                let h = if axis == 2 { hz } else { hx };
                let mut arm = [(NO, 1.0); 2];
                for (s, sign) in [(0usize, 1isize), (1, -1)] {
                    let mut c = [i as isize, j as isize, k as isize];
                    c[axis] += sign;
                    let nb = if c.iter().all(|&v| v >= 0 && (v as usize) < n) {
                        id[mask.idx(c[0] as usize, c[1] as usize, c[2] as usize)]
                    } else {
                        NO
                    };
                    if nb == NO {
                        let mut dir = [0.0; 3];
                        dir[axis] = sign as f64 * h;
                        arm[s] = (NO, arm_fraction(dom, p, dir));
                    } else {
                        arm[s] = (nb, 1.0);
                    }
                }
                let (tp, tm) = (arm[0].1 * h, arm[1].1 * h);
                let cp = 2.0 / (tp * (tp + tm));
                let cm = 2.0 / (tm * (tp + tm));
                d += cp + cm;
                row[2 * axis] = (arm[0].0, if arm[0].0 == NO { 0.0 } else { -cp });
                row[2 * axis + 1] = (arm[1].0, if arm[1].0 == NO { 0.0 } else { -cm });
            }
            diag.push(d);
            off.push(row);
        }
        Self { diag, off, cells }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    /// `y = (-Δ_h - diag(c)) x`.
    fn apply(&self, c: &[f64], x: &[f64], y: &mut [f64], exec: Exec) {
        exec.fill(y, |p| {
            let mut s = (self.diag[p] - c[p]) * x[p];
            for &(q, a) in &self.off[p] {
                if q != NO {
                    s += a * x[q as usize];
                }
            }
            s
        });
    }
}

/// Jacobi-preconditioned BiCGSTAB for `(-Δ_h - diag(c)) x = b`.
fn bicgstab(st: &Stencil, c: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iter: usize, exec: Exec) -> Result<usize> {
    let len = b.len();
    let dinv: Vec<f64> = (0..len).map(|p| 1.0 / (st.diag[p] - c[p])).collect();
    if dinv.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Oracle("non-positive diagonal in the voxel Jacobian".into()));
    }
    let linf = |v: &[f64]| exec.max(v.len(), |p| v[p].abs());
    let mut r = vec![0.0; len];
    st.apply(c, x, &mut r, exec);
    exec.update(&mut r, |p, v| b[p] - v);
    if linf(&r) <= tol {
        return Ok(0);
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut v = vec![0.0; len];
    let mut p = vec![0.0; len];
    let mut y = vec![0.0; len];
    let mut s = vec![0.0; len];
    let mut zs = vec![0.0; len];
    let mut t = vec![0.0; len];
    for it in 1..=max_iter {
        let rho_new = exec.dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::Oracle(format!("BiCGSTAB breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        exec.update(&mut p, |q, pv| r[q] + beta * (pv - omega * v[q]));
        exec.fill(&mut y, |q| dinv[q] * p[q]);
        st.apply(c, &y, &mut v, exec);
        alpha = rho / exec.dot(&r0, &v);
        exec.fill(&mut s, |q| r[q] - alpha * v[q]);
        if linf(&s) <= tol {
            exec.update(x, |q, xv| xv + alpha * y[q]);
            return Ok(it);
        }
        exec.fill(&mut zs, |q| dinv[q] * s[q]);
        st.apply(c, &zs, &mut t, exec);
        let tt = exec.dot(&t, &t);
        omega = if tt > 0.0 { exec.dot(&t, &s) / tt } else { 0.0 };
        exec.update(x, |q, xv| xv + alpha * y[q] + omega * zs[q]);
        exec.fill(&mut r, |q| s[q] - omega * t[q]);
        if linf(&r) <= tol {
            // confirm against the true residual
            st.apply(c, x, &mut t, exec);
            exec.fill(&mut r, |q| b[q] - t[q]);
            if linf(&r) <= tol {
                return Ok(it);
            }
        }
    }
    Err(Error::Oracle(format!("BiCGSTAB did not converge in {max_iter} iterations")))
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub n: usize,
    pub tol: f64,
    pub max_newton: usize,
    pub max_lin_iter: usize,
    pub exec: Exec,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { n: 48, tol: 1e-9, max_newton: 30, max_lin_iter: 20_000, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolve {
    pub field: VoxelField,
    pub newton_iterations: usize,
    pub residual: f64,
    pub linear_iterations: usize,
}

/// Solves `-Δv = f(x, v)` with zero boundary values on the voxel grid.
pub fn solve_3d(dom: &dyn Profile, nl: &Nonlinearity, opts: &OracleOptions) -> Result<OracleSolve> {
    if opts.n < 4 || opts.n > MAX_N {
        return Err(Error::Contract(format!("voxel resolution must be in 4..={MAX_N}, got {}", opts.n)));
    }
    let exec = opts.exec;
    let mut field = VoxelField::masked(dom, opts.n);
    let st = Stencil::build(dom, &field);
    let len = st.len();
    if len == 0 {
        return Err(Error::Oracle("no voxel centers inside the domain".into()));
    }
    let coords: Vec<(f64, f64)> = st
        .cells
        .iter()
        .map(|&(i, j, k)| {
            let [x, y, z] = field.center(i, j, k);
            (x.hypot(y), z)
        })
        .collect();
    let zero = vec![0.0; len];
    let residual = |u: &[f64]| -> Result<(Vec<f64>, f64)> {
        let mut res = vec![0.0; len];
        st.apply(&zero, u, &mut res, exec);
        for p in 0..len {
            res[p] -= nl.eval(coords[p].0, coords[p].1, u[p])?;
        }
        let m = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok((res, m))
    };
    let mut u = vec![0.0; len];
    let (mut res, mut rn) = residual(&u)?;
    let mut its = 0;
    let mut lin = 0;
    let mut c = vec![0.0; len];
    while rn > opts.tol {
        if its >= opts.max_newton {
            return Err(Error::Oracle(format!("Newton did not converge: residual {rn:e} after {its} steps")));
        }
        its += 1;
        for p in 0..len {
            c[p] = nl.eval_du(coords[p].0, coords[p].1, u[p])?;
        }
        let b: Vec<f64> = res.iter().map(|v| -v).collect();
        let mut delta = vec![0.0; len];
        lin += bicgstab(&st, &c, &b, &mut delta, (1e-3 * rn).max(0.1 * opts.tol), opts.max_lin_iter, exec)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=20 {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            if let Ok((tr, tn)) = residual(&trial) {
                if tn < rn || tn <= opts.tol {
                    u = trial;
                    res = tr;
                    rn = tn;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::Oracle(format!("Newton stalled at residual {rn:e}")));
        }
    }
    for (p, &(i, j, k)) in st.cells.iter().enumerate() {
        let q = field.idx(i, j, k);
        field.values[q] = u[p];
    }
    Ok(OracleSolve { field, newton_iterations: its, residual: rn, linear_iterations: lin })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub voxels: usize,
    pub centroid: [f64; 3],
}

/// Voxels where every axis difference changes sign (or is below `h²`),
/// grouped into 26-connected clusters.
pub fn scan_critical_voxels(v: &VoxelField) -> Vec<Cluster> {
    let n = v.n;
    let (hx, hz) = (v.hx(), v.hz());
    let val = |i: isize, j: isize, k: isize| -> f64 {
        if i < 0 || j < 0 || k < 0 || i as usize >= n || j as usize >= n || k as usize >= n {
            return 0.0;
        }
        let x = v.values[v.idx(i as usize, j as usize, k as usize)];
        if x.is_nan() {
            0.0
        } else {
            x
        }
    };
    let mut mark = vec![false; n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if !v.inside(i, j, k) {
                    continue;
                }
                let c = [i as isize, j as isize, k as isize];
                let u0 = val(c[0], c[1], c[2]);
                let flat = (0..3).all(|axis| {
                    let h = if axis == 2 { hz } else { hx };
                    let mut up = c;
                    let mut dn = c;
                    up[axis] += 1;
                    dn[axis] -= 1;
                    let fwd = val(up[0], up[1], up[2]) - u0;
                    let bwd = u0 - val(dn[0], dn[1], dn[2]);
                    fwd * bwd <= 0.0 || ((fwd + bwd) / (2.0 * h)).abs() < h * h
                });
                mark[v.idx(i, j, k)] = flat;
            }
        }
    }
    let mut seen = vec![false; n * n * n];
    let mut out = Vec::new();
    for start in 0..n * n * n {
        if !mark[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let (mut count, mut sum) = (0usize, [0.0; 3]);
        while let Some(q) = queue.pop_front() {
            let (i, j, k) = (q % n, (q / n) % n, q / (n * n));
            let p = v.center(i, j, k);
            count += 1;
            for a in 0..3 {
                sum[a] += p[a];
            }
            for dk in -1isize..=1 {
                for dj in -1isize..=1 {
                    for di in -1isize..=1 {
                        let (ii, jj, kk) = (i as isize + di, j as isize + dj, k as isize + dk);
                        if ii < 0 || jj < 0 || kk < 0 || ii as usize >= n || jj as usize >= n || kk as usize >= n {
                            continue;
                        }
                        let w = v.idx(ii as usize, jj as usize, kk as usize);
                        if mark[w] && !seen[w] {
                            seen[w] = true;
                            queue.push_back(w);
                        }
                    }
                }
            }
        }
        out.push(Cluster { voxels: count, centroid: sum.map(|s| s / count as f64) });
    }
    out
}

/// `(max |v(x,y,z) - v(-y,x,z)|, max |v(x,y,z) - v(x,y,-z)|)`.
pub fn symmetry_witnesses(v: &VoxelField) -> (f64, f64) {
    let n = v.n;
    let (mut rot, mut mir) = (0.0f64, 0.0f64);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let a = v.values[v.idx(i, j, k)];
                if a.is_nan() {
                    continue;
                }
                // (x, y) -> (-y, x) maps center (i, j) to (n-1-j, i)
                let b = v.values[v.idx(n - 1 - j, i, k)];
                let c = v.values[v.idx(i, j, n - 1 - k)];
                rot = rot.max(if b.is_nan() { a.abs() } else { (a - b).abs() });
                mir = mir.max(if c.is_nan() { a.abs() } else { (a - c).abs() });
            }
        }
    }
    (rot, mir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub linf_rel: f64,
    /// Distance between the cluster centroid and the meridian critical point,
    /// in voxel units (infinite when there is not exactly one of each).
    pub cp_offset_cells: f64,
    pub clusters: Vec<Cluster>,
    pub census_count: usize,
    pub rotation_witness: f64,
    pub mirror_witness: f64,
    pub vmax: f64,
}

impl OracleComparison {
    pub fn witnesses_pass(&self, rel: f64) -> bool {
        self.rotation_witness <= rel * self.vmax && self.mirror_witness <= rel * self.vmax
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("linf_rel,cp_offset_cells,clusters,census_count,rotation_witness,mirror_witness,vmax\n");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt_f64(self.linf_rel),
            fmt_f64(self.cp_offset_cells),
            self.clusters.len(),
            self.census_count,
            fmt_f64(self.rotation_witness),
            fmt_f64(self.mirror_witness),
            fmt_f64(self.vmax)
        );
        s
    }
}

/// Compares the voxel solution with the meridian one through the meridian
/// interpolant and matches the critical-point census against the voxel scan.
pub fn compare_with_axisymmetric(v: &VoxelField, u: &Field, census: &Census) -> Result<OracleComparison> {
    let interp = Interpolant::new(u);
    let n = v.n;
    let vmax = v.max();
    if !(vmax > 0.0) {
        return Err(Error::Oracle("voxel solution has no positive value".into()));
    }
    let mut worst = 0.0f64;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let a = v.values[v.idx(i, j, k)];
                if a.is_nan() {
                    continue;
                }
                let [x, y, z] = v.center(i, j, k);
                worst = worst.max((interp.value(x.hypot(y), z) - a).abs());
            }
        }
    }
    let clusters = scan_critical_voxels(v);
    let (rot, mir) = symmetry_witnesses(v);
    if clusters.len() != census.points.len() {
        return Err(Error::CensusMismatch { meridian: census.points.len(), voxel: clusters.len() });
    }
    let cp_offset_cells = if clusters.len() == 1 {
        let c = clusters[0].centroid;
        let p = &census.points[0];
        // a meridian point at radius r stands for the circle x² + y² = r²
        let dr = (c[0].hypot(c[1]) - p.r) / v.hx();
        let dz = (c[2] - p.z) / v.hz();
        dr.hypot(dz)
    } else {
        f64::INFINITY
    };
    Ok(OracleComparison {
        linf_rel: worst / vmax,
        cp_offset_cells,
        census_count: census.points.len(),
        clusters,
        rotation_witness: rot,
        mirror_witness: mir,
        vmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{MeridianDomain, ProfileFunction};

    fn ball() -> MeridianDomain {
        MeridianDomain::new(3, ProfileFunction::ball(1.0).unwrap(), "").unwrap()
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let nl = Nonlinearity::constant(0.0).unwrap();
        let s = solve_3d(&ball(), &nl, &OracleOptions { n: 16, ..OracleOptions::default() }).unwrap();
        assert_eq!(s.newton_iterations, 0);
        assert_eq!(s.field.max(), 0.0);
    }

    #[test]
    fn torsion_ball_center() {
        let nl = Nonlinearity::constant(1.0).unwrap();
        let s = solve_3d(&ball(), &nl, &OracleOptions { n: 32, ..OracleOptions::default() }).unwrap();
        let v = &s.field;
        // the origin is the common corner of the eight central voxels
        let m = v.n / 2;
        let mut avg = 0.0;
        for k in m - 1..=m {
            for j in m - 1..=m {
                for i in m - 1..=m {
                    avg += v.values[v.idx(i, j, k)] / 8.0;
                }
            }
        }
        let h = v.hx();
        // trilinear average of (1 - |x|²)/6 over the corner cube
        assert!((avg - (1.0 / 6.0 - h * h / 8.0)).abs() < 2e-3, "{avg}");
        let cl = scan_critical_voxels(v);
        assert_eq!(cl.len(), 1);
        assert!(cl[0].centroid.iter().all(|c| c.abs() < 1e-12));
        let (rot, mir) = symmetry_witnesses(v);
        assert!(rot <= 5e-3 * v.max() && mir <= 5e-3 * v.max());
    }

    #[test]
    fn double_bump_has_two_clusters() {
        let mut v = VoxelField::masked(&ball(), 24);
        for k in 0..24 {
            for j in 0..24 {
                for i in 0..24 {
                    let p = v.idx(i, j, k);
                    if v.values[p].is_nan() {
                        continue;
                    }
                    let [x, y, z] = v.center(i, j, k);
                    // a bump and an anti-bump: two positive humps would also carry a saddle
                    v.values[p] = x * (-(x * x + y * y + z * z) / 0.5).exp();
                }
            }
        }
        assert_eq!(scan_critical_voxels(&v).len(), 2);
    }

    #[test]
    fn cpvox_round_trip() {
        let mut v = VoxelField::masked(&ball(), 8);
        for (p, x) in v.values.iter_mut().enumerate() {
            if !x.is_nan() {
                *x = (p as f64).sqrt() / 7.0;
            }
        }
        let text = v.render();
        let back = VoxelField::parse(&text).unwrap();
        assert_eq!(back.render(), text);
    }
}
