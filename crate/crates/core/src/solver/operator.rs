//! Discrete axisymmetric Laplacian on an embedded-boundary meridian grid.
//!
//! The operator is assembled in the symmetric form `A = M (-Δ_h)` where `M`
//! holds the finite-volume cell weights of `r^{n-2} dr` (equal to `r` for
//! `n = 3`, a half cell on the axis).
//! Radial fluxes use face weights `r_{i±1/2}^{n-2}`; an arm cut by the
//! boundary at fraction `θ` contributes `w / (θ h²)` to the diagonal only,
//! which keeps `A` symmetric and positive definite. On the axis the even
//! reflection `u(-h, z) = u(h, z)` reproduces `(n-1) u_rr + u_zz`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::Field;
use crate::grid::{MeridianGrid, EAST, NONE, NORTH, SOUTH, WEST};

#[derive(Debug, Clone)]
pub struct AxisymmetricLaplacian {
    pub grid: Arc<MeridianGrid>,
    pub n: usize,
    mass: Vec<f64>,
    diag: Vec<f64>,
    links: Vec<[(u32, f64); 4]>,
    /// Weight `w / (θ h²)` of each cut arm (zero for uncut arms).
    cut: Vec<[f64; 4]>,
}

impl AxisymmetricLaplacian {
    pub fn new(grid: Arc<MeridianGrid>, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDomain(format!("dimension must be at least 2, got {n}")));
        }
        let h = grid.h;
        let h2 = h * h;
        let p = (n - 2) as i32;
        let len = grid.unknowns();
        let mut mass = Vec::with_capacity(len);
        let mut diag = Vec::with_capacity(len);
        let mut links = Vec::with_capacity(len);
        let mut cut = Vec::with_capacity(len);
        for k in 0..len {
            let (i, _) = grid.node(k);
            let r = grid.r(i);
            let nb = grid.neighbors(k);
            let th = grid.theta(k);
            // finite-volume cell weight: ∫ r^{n-2} dr over [r - h/2, r + h/2] ∩ [0, ∞), per h
            let lo = (r - 0.5 * h).max(0.0);
            let m = ((r + 0.5 * h).powi(p + 1) - lo.powi(p + 1)) / ((p + 1) as f64 * h);
            let mut weights = [0.0; 4];
            if i == 0 {
                weights[EAST] = (0.5 * h).powi(p);
            } else {
                weights[EAST] = (r + 0.5 * th[EAST] * h).powi(p);
                weights[WEST] = (r - 0.5 * th[WEST] * h).powi(p);
            }
            weights[NORTH] = m;
            weights[SOUTH] = m;
            let mut d = 0.0;
            let mut lk = [(NONE, 0.0); 4];
            let mut ct = [0.0; 4];
            for arm in 0..4 {
                if arm == WEST && i == 0 {
                    continue;
                }
                let c = weights[arm] / (th[arm] * h2);
                d += c;
                if nb[arm] == NONE {
                    ct[arm] = c;
                } else {
                    lk[arm] = (nb[arm], c);
                }
            }
            mass.push(m);
            diag.push(d);
            links.push(lk);
            cut.push(ct);
        }
        Ok(Self { grid, n, mass, diag, links, cut })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Volume weights `M`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Diagonal of `A`.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `y = A x`.
    pub fn apply_sym(&self, x: &[f64], y: &mut [f64], exec: Exec) {
        exec.fill(y, |k| {
            let mut s = self.diag[k] * x[k];
            for &(j, c) in &self.links[k] {
                if j != NONE {
                    s -= c * x[j as usize];
                }
            }
            s
        });
    }

    /// Discrete Dirichlet energy `xᵀ A x` assembled edge by edge.
    pub fn energy(&self, x: &[f64], exec: Exec) -> f64 {
        exec.sum(self.len(), |k| {
            let mut e = 0.0;
            for (arm, &(j, c)) in self.links[k].iter().enumerate() {
                if j != NONE {
                    // each interior edge is visited from both ends
                    let d = x[k] - x[j as usize];
                    e += 0.5 * c * d * d;
                } else {
                    e += self.cut[k][arm] * x[k] * x[k];
                }
            }
            e
        })
    }

    /// `Δ_h u` (unweighted) with zero boundary values.
    pub fn laplacian(&self, u: &[f64], exec: Exec) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        self.apply_sym(u, &mut y, exec);
        exec.update(&mut y, |k, v| -v / self.mass[k]);
        y
    }

    /// Contribution of nonzero Dirichlet data `bc(r, z)` at the cut points, in
    /// weighted units: `-Δ_h u = (A u - lift) / M`.
    pub fn boundary_lift(&self, bc: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let g = &self.grid;
        (0..self.len())
            .map(|k| {
                let (r, z) = g.coords(k);
                let th = g.theta_raw(k);
                let mut s = 0.0;
                for (arm, &c) in self.cut[k].iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let d = th[arm] * g.h;
                    let (br, bz) = match arm {
                        EAST => (r + d, z),
                        WEST => (r - d, z),
                        NORTH => (r, z + d),
                        _ => (r, z - d),
                    };
                    s += c * bc(br, bz);
                }
                s
            })
            .collect()
    }
}

/// `Δ_h u` as a field on the grid of `u`.
pub fn apply_axisym_laplacian(lap: &AxisymmetricLaplacian, u: &Field, exec: Exec) -> Result<Field> {
    if !Arc::ptr_eq(&lap.grid, &u.grid) || u.values.len() != lap.len() || u.n != lap.n {
        return Err(Error::Contract(
            "field does not live on the operator's grid (exterior or foreign nodes)".into(),
        ));
    }
    Ok(u.with_values(lap.laplacian(&u.values, exec)))
}
