//! Embedded-boundary discretization of the meridian half-plane `r >= 0`.
//!
//! Nodes sit at `(i h, (j - j0) h)` with `j0 = (nz - 1) / 2`, so the origin is a
//! node and the grid is mirror symmetric in `z`. Each inside node carries four
//! stencil arms (`+r`, `-r`, `+z`, `-z`); an arm that crosses the boundary
//! stores the fraction `θ ∈ (0, 1]` of a cell at which it does so.

use crate::domain::Profile;
use crate::error::{Error, Result};

/// Arms shorter than this fraction of a cell are lengthened to it.
pub const THETA_MIN: f64 = 1e-6;

pub const NONE: u32 = u32::MAX;

/// Arm order used throughout: `+r`, `-r`, `+z`, `-z`.
pub const EAST: usize = 0;
pub const WEST: usize = 1;
pub const NORTH: usize = 2;
pub const SOUTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    BoundaryAdjacent,
    Exterior,
}

/// Bounding box requested for a grid: radial extent and half-height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub r: f64,
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct MeridianGrid {
    pub nr: usize,
    pub nz: usize,
    /// Node spacing, identical in `r` and `z`.
    pub h: f64,
    pub rmax: f64,
    pub zmax: f64,
    /// Homotopy parameter the grid was built for (`1` for a plain domain).
    pub t: f64,
    class: Vec<NodeClass>,
    index: Vec<u32>,
    nodes: Vec<(u32, u32)>,
    nbr: Vec<[u32; 4]>,
    theta: Vec<[f64; 4]>,
    theta_raw: Vec<[f64; 4]>,
}

impl MeridianGrid {
    /// Builds the grid for `profile` over the box `extent`, with `nr x nz` nodes.
    ///
    /// The spacing is the larger of `extent.r / (nr - 1)` and
    /// `2 extent.z / (nz - 1)`, so the box is always covered.
    pub fn build(profile: &dyn Profile, extent: Extent, nr: usize, nz: usize, t: f64) -> Result<Self> {
        if nr < 9 || nz < 9 {
            return Err(Error::Contract(format!("grid needs at least 9x9 nodes, got {nr}x{nz}")));
        }
        if nz % 2 == 0 {
            return Err(Error::Contract(format!("nz must be odd so that z = 0 is a node, got {nz}")));
        }
        if !(extent.r > 0.0 && extent.z > 0.0) {
            return Err(Error::Contract("grid extent must be positive".into()));
        }
        let j0 = (nz - 1) / 2;
        let h = (extent.r / (nr - 1) as f64).max(extent.z / j0 as f64);
        let g0 = profile.axis_height();
        if g0 < 3.0 * h {
            return Err(Error::ResolutionTooCoarse(format!(
                "axis half-height {g0} spans fewer than 3 cells of size {h}"
            )));
        }
        let rr = |i: usize| i as f64 * h;
        let zz = |j: usize| (j as f64 - j0 as f64) * h;

        // classify the upper half and reflect
        let mut inside = vec![false; nr * nz];
        for j in j0..nz {
            for i in 0..nr {
                let v = profile.inside(rr(i), zz(j));
                inside[j * nr + i] = v;
                inside[(2 * j0 - j) * nr + i] = v;
            }
        }

        let mut index = vec![NONE; nr * nz];
        let mut nodes = Vec::new();
        for j in 0..nz {
            for i in 0..nr {
                if inside[j * nr + i] {
                    index[j * nr + i] = nodes.len() as u32;
                    nodes.push((i as u32, j as u32));
                }
            }
        }

        let mut class = vec![NodeClass::Exterior; nr * nz];
        let mut nbr = Vec::with_capacity(nodes.len());
        let mut theta = Vec::with_capacity(nodes.len());
        let mut theta_raw = Vec::with_capacity(nodes.len());
        let at = |i: isize, j: isize| -> bool {
            i >= 0 && j >= 0 && (i as usize) < nr && (j as usize) < nz && inside[j as usize * nr + i as usize]
        };
        for &(i, j) in &nodes {
            let (i, j) = (i as usize, j as usize);
            let (r, z) = (rr(i), zz(j));
            let mut nb = [NONE; 4];
            let mut th = [1.0; 4];
            let offsets = [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)];
            for (arm, (di, dj)) in offsets.iter().enumerate() {
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if arm == WEST && i == 0 {
                    // even reflection across the axis: the arm is never cut
                    continue;
                }
                if at(ii, jj) {
                    nb[arm] = index[jj as usize * nr + ii as usize];
                } else if *dj == 0 {
                    th[arm] = radial_cut(profile, r, z, *di as f64 * h);
                } else {
                    th[arm] = axial_cut(profile, r, z, *dj as f64 * h);
                }
            }
            theta_raw.push(th);
            let clamped = th.map(|v| v.max(THETA_MIN));
            theta.push(clamped);
            let cut = (0..4).any(|arm| nb[arm] == NONE && !(arm == WEST && i == 0));
            class[j * nr + i] = if cut { NodeClass::BoundaryAdjacent } else { NodeClass::Interior };
            nbr.push(nb);
        }
        // copy the upper-half arm fractions onto the lower half for bit-exact symmetry
        let mut grid = Self {
            nr,
            nz,
            h,
            rmax: (nr - 1) as f64 * h,
            zmax: j0 as f64 * h,
            t,
            class,
            index,
            nodes,
            nbr,
            theta,
            theta_raw,
        };
        grid.symmetrize_lower();
        Ok(grid)
    }

    fn symmetrize_lower(&mut self) {
        let j0 = self.j0();
        for k in 0..self.nodes.len() {
            let (i, j) = (self.nodes[k].0 as usize, self.nodes[k].1 as usize);
            if j >= j0 {
                continue;
            }
            let m = self.index[(2 * j0 - j) * self.nr + i] as usize;
            let src = self.theta_raw[m];
            let mut th = [src[EAST], src[WEST], src[SOUTH], src[NORTH]];
            for (arm, t) in th.iter_mut().enumerate() {
                if self.nbr[k][arm] != NONE {
                    *t = 1.0;
                }
            }
            self.theta_raw[k] = th;
            self.theta[k] = th.map(|v| v.max(THETA_MIN));
        }
    }

    /// Same nodes with an extra Dirichlet line at `z = 0`: only `z > 0` remains.
    pub fn upper_half(&self) -> Self {
        let j0 = self.j0();
        let keep = |k: usize| self.nodes[k].1 as usize > j0;
        let mut index = vec![NONE; self.nr * self.nz];
        let mut nodes = Vec::new();
        let mut old = Vec::new();
        for k in 0..self.nodes.len() {
            if keep(k) {
                let (i, j) = self.nodes[k];
                index[j as usize * self.nr + i as usize] = nodes.len() as u32;
                nodes.push((i, j));
                old.push(k);
            }
        }
        let mut class = vec![NodeClass::Exterior; self.nr * self.nz];
        let mut nbr = Vec::with_capacity(nodes.len());
        let mut theta = Vec::with_capacity(nodes.len());
        let mut theta_raw = Vec::with_capacity(nodes.len());
        for (&(i, j), &k) in nodes.iter().zip(&old) {
            let mut nb = [NONE; 4];
            let mut th = self.theta_raw[k];
            for arm in 0..4 {
                let o = self.nbr[k][arm];
                if o != NONE && keep(o as usize) {
                    let (oi, oj) = self.nodes[o as usize];
                    nb[arm] = index[oj as usize * self.nr + oi as usize];
                } else if o != NONE {
                    th[arm] = 1.0;
                }
            }
            let cut = (0..4).any(|arm| nb[arm] == NONE && !(arm == WEST && i == 0));
            class[j as usize * self.nr + i as usize] =
                if cut { NodeClass::BoundaryAdjacent } else { NodeClass::Interior };
            nbr.push(nb);
            theta_raw.push(th);
            theta.push(th.map(|v| v.max(THETA_MIN)));
        }
        Self { class, index, nodes, nbr, theta, theta_raw, ..self.clone() }
    }

    pub fn j0(&self) -> usize {
        (self.nz - 1) / 2
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn z(&self, j: usize) -> f64 {
        (j as f64 - self.j0() as f64) * self.h
    }

    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    pub fn class(&self, i: usize, j: usize) -> NodeClass {
        self.class[j * self.nr + i]
    }

    /// Unknown index of node `(i, j)`, if the node is inside.
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        match self.index[j * self.nr + i] {
            NONE => None,
            k => Some(k as usize),
        }
    }

    /// Grid indices `(i, j)` of unknown `k`.
    pub fn node(&self, k: usize) -> (usize, usize) {
        let (i, j) = self.nodes[k];
        (i as usize, j as usize)
    }

    /// Coordinates `(r, z)` of unknown `k`.
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.node(k);
        (self.r(i), self.z(j))
    }

    /// Neighbor unknowns along the four arms; [`NONE`] where the arm is cut
    /// (or is the reflected `-r` arm of an axis node).
    pub fn neighbors(&self, k: usize) -> [u32; 4] {
        self.nbr[k]
    }

    /// Arm fractions after clamping to [`THETA_MIN`].
    pub fn theta(&self, k: usize) -> [f64; 4] {
        self.theta[k]
    }

    /// Arm fractions as computed from the geometry.
    pub fn theta_raw(&self, k: usize) -> [f64; 4] {
        self.theta_raw[k]
    }

    pub fn on_axis(&self, k: usize) -> bool {
        self.nodes[k].0 == 0
    }

    pub fn is_cut(&self, k: usize, arm: usize) -> bool {
        self.nbr[k][arm] == NONE && !(arm == WEST && self.on_axis(k))
    }

    /// Number of cells between unknown `k` and the nearest cut arm, measured
    /// along grid lines (capped at `cap`).
    pub fn boundary_distance(&self, k: usize, cap: usize) -> usize {
        let (i, j) = self.node(k);
        let mut best = cap;
        for (di, dj) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            for step in 0..cap {
                let ii = i as isize + di * step as isize;
                let jj = j as isize + dj * step as isize;
                if ii < 0 {
                    break;
                }
                if jj < 0 || ii as usize >= self.nr || jj as usize >= self.nz {
                    best = best.min(step);
                    break;
                }
                match self.index(ii as usize, jj as usize) {
                    None => {
                        best = best.min(step);
                        break;
                    }
                    Some(kk) => {
                        let arm = match (di, dj) {
                            (1, 0) => EAST,
                            (-1, 0) => WEST,
                            (0, 1) => NORTH,
                            _ => SOUTH,
                        };
                        if self.is_cut(kk, arm) {
                            best = best.min(step + 1);
                            break;
                        }
                    }
                }
            }
        }
        best
    }

    /// `class(i, j) == class(i, -j)` for every node.
    pub fn is_mirror_symmetric(&self) -> bool {
        let j0 = self.j0();
        (0..self.nz).all(|j| {
            (0..self.nr).all(|i| self.class(i, j) == self.class(i, 2 * j0 - j))
        })
    }
}

/// Fraction along a radial arm from `(r, z)` of length `dr` (signed) at which
/// `|z| = g(r)`. Bisection to relative tolerance `1e-12`.
fn radial_cut(profile: &dyn Profile, r: f64, z: f64, dr: f64) -> f64 {
    let phi = |s: f64| z.abs() - profile.height((r + s * dr).max(0.0));
    let (mut lo, mut hi) = (0.0, 1.0);
    if phi(hi) < 0.0 {
        // the neighbor is outside for another reason (radial cutoff); take a full arm
        return 1.0;
    }
    while hi - lo > 1e-12 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Fraction along an axial arm; the boundary sits at `|z| = g(r)`.
fn axial_cut(profile: &dyn Profile, r: f64, z: f64, dz: f64) -> f64 {
    let g = profile.height(r);
    let target = if dz > 0.0 { g } else { -g };
    let s = (target - z) / dz;
    if s > 0.0 && s <= 1.0 {
        s
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{HomotopyFamily, MeridianDomain, ProfileFunction};

    fn ball() -> MeridianDomain {
        MeridianDomain::new(3, ProfileFunction::ball(1.0).unwrap(), "ball").unwrap()
    }

    #[test]
    fn ball_grid_contains_origin() {
        let g = MeridianGrid::build(&ball(), Extent { r: 1.0, z: 1.0 }, 65, 129, 1.0).unwrap();
        assert!(g.unknowns() > 0);
        assert_eq!(g.class(0, g.j0()), NodeClass::Interior);
        assert!(g.is_mirror_symmetric());
        assert_eq!(g.h, 1.0 / 64.0);
        assert!(!ball().inside(2.0, 0.0));
    }

    #[test]
    fn arms_terminate_properly() {
        let g = MeridianGrid::build(&ball(), Extent { r: 1.0, z: 1.0 }, 33, 65, 1.0).unwrap();
        for k in 0..g.unknowns() {
            for arm in 0..4 {
                let th = g.theta(k)[arm];
                assert!(th > 0.0 && th <= 1.0);
                if g.neighbors(k)[arm] != NONE {
                    assert_eq!(th, 1.0);
                }
            }
        }
    }

    #[test]
    fn cusp_has_short_arms() {
        let p = ProfileFunction::polynomial(vec![1.0, -2.0, 1.0]).unwrap();
        let d = MeridianDomain::new(3, p, "spindle").unwrap();
        let g = MeridianGrid::build(&d, Extent { r: 1.0, z: 1.0 }, 65, 129, 1.0).unwrap();
        let mut short = 0;
        for k in 0..g.unknowns() {
            for arm in 0..4 {
                let raw = g.theta_raw(k)[arm];
                if raw < 0.1 {
                    short += 1;
                }
                assert_eq!(g.theta(k)[arm], raw.max(THETA_MIN));
            }
        }
        assert!(short > 0);
        assert!(g.is_mirror_symmetric());
    }

    #[test]
    fn too_thin_is_rejected() {
        let d = MeridianDomain::new(3, ProfileFunction::spheroid(1.0, 0.02).unwrap(), "").unwrap();
        let e = MeridianGrid::build(&d, Extent { r: 1.0, z: 1.0 }, 33, 65, 1.0).unwrap_err();
        assert!(matches!(e, Error::ResolutionTooCoarse(_)));
        assert!(MeridianGrid::build(&ball(), Extent { r: 1.0, z: 1.0 }, 33, 64, 1.0).is_err());
    }

    #[test]
    fn homotopy_member_grid() {
        let d = MeridianDomain::new(3, ProfileFunction::spheroid(1.0, 0.5).unwrap(), "").unwrap();
        let fam = HomotopyFamily::new(d);
        let ext = Extent { r: fam.max_extent(), z: fam.a };
        let g0 = MeridianGrid::build(&fam.at(0.0), ext, 65, 33, 0.0).unwrap();
        let g1 = MeridianGrid::build(&fam.at(0.5), ext, 65, 33, 0.5).unwrap();
        assert!(g1.unknowns() > g0.unknowns());
        assert_eq!(g0.h, g1.h);
    }

    #[test]
    fn upper_half_masks_equator() {
        let g = MeridianGrid::build(&ball(), Extent { r: 1.0, z: 1.0 }, 33, 65, 1.0).unwrap();
        let u = g.upper_half();
        assert!(u.unknowns() < g.unknowns() / 2);
        let k = u.index(0, u.j0() + 1).unwrap();
        assert!(u.is_cut(k, SOUTH));
        assert_eq!(u.theta(k)[SOUTH], 1.0);
    }
}
