//! Scalar fields on a [`MeridianGrid`] and the `CPFIELD` text format.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{MeridianGrid, EAST, NORTH, SOUTH, WEST};

/// Values at the inside nodes of a grid; the Dirichlet trace is implicit.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Arc<MeridianGrid>,
    /// Spatial dimension of the underlying axisymmetric problem.
    pub n: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Arc<MeridianGrid>, n: usize) -> Self {
        let len = grid.unknowns();
        Self { grid, n, values: vec![0.0; len] }
    }

    pub fn from_fn(grid: Arc<MeridianGrid>, n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.unknowns())
            .map(|k| {
                let (r, z) = grid.coords(k);
                f(r, z)
            })
            .collect();
        Self { grid, n, values }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { grid: self.grid.clone(), n: self.n, values }
    }

    /// Value at node `(i, j)` if it is inside.
    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.grid.index(i, j).map(|k| self.values[k])
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn linf_distance(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Dense `nz x nr` array with `NaN` at exterior nodes, `z` ascending.
    pub fn to_raw(&self, t: f64) -> RawField {
        let g = &self.grid;
        let mut data = vec![f64::NAN; g.nr * g.nz];
        for k in 0..g.unknowns() {
            let (i, j) = g.node(k);
            data[j * g.nr + i] = self.values[k];
        }
        RawField {
            n: self.n,
            nr: g.nr,
            nz: g.nz,
            rmax: g.rmax,
            zmin: -g.zmax,
            zmax: g.zmax,
            t,
            comments: Vec::new(),
            data,
        }
    }

    /// Loads values from a raw field whose mask must match `grid` exactly.
    pub fn from_raw(raw: &RawField, grid: Arc<MeridianGrid>) -> Result<Self> {
        if raw.nr != grid.nr || raw.nz != grid.nz {
            return Err(Error::Format {
                line: 3,
                msg: format!(
                    "field is {}x{} but the grid is {}x{}",
                    raw.nr, raw.nz, grid.nr, grid.nz
                ),
            });
        }
        let mut values = vec![0.0; grid.unknowns()];
        for j in 0..grid.nz {
            for i in 0..grid.nr {
                let v = raw.data[j * grid.nr + i];
                match grid.index(i, j) {
                    Some(k) if v.is_finite() => values[k] = v,
                    None if v.is_nan() => {}
                    _ => {
                        return Err(Error::Format {
                            line: 7 + raw.comments.len() + j,
                            msg: format!("mask mismatch at node ({i}, {j})"),
                        })
                    }
                }
            }
        }
        Ok(Self { grid, n: raw.n, values })
    }

    pub fn write_cpfield(&self, path: &Path, t: f64, comments: &[String]) -> Result<()> {
        let mut raw = self.to_raw(t);
        raw.comments = comments.to_vec();
        std::fs::write(path, raw.render())?;
        Ok(())
    }
}

/// Fixed 17-significant-digit rendering shared by every text artifact.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

/// A parsed `CPFIELD 1` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawField {
    pub n: usize,
    pub nr: usize,
    pub nz: usize,
    pub rmax: f64,
    pub zmin: f64,
    pub zmax: f64,
    pub t: f64,
    /// Comment lines (without the leading `# `), written before `data`.
    pub comments: Vec<String>,
    pub data: Vec<f64>,
}

impl RawField {
    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.data.len() * 24 + 128);
        s.push_str("CPFIELD 1\n");
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "grid {} {}", self.nr, self.nz);
        let _ = writeln!(s, "extent {} {} {}", fmt_f64(self.rmax), fmt_f64(self.zmin), fmt_f64(self.zmax));
        let _ = writeln!(s, "t {}", fmt_f64(self.t));
        for c in &self.comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("data\n");
        for row in self.data.chunks(self.nr) {
            let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        let err = |line: usize, msg: &str| Error::Format { line, msg: msg.into() };
        let mut next = |want: &str| -> Result<(usize, Vec<String>)> {
            let (no, l) = lines.next().ok_or_else(|| err(0, &format!("missing `{want}` line")))?;
            Ok((no, l.split_whitespace().map(str::to_owned).collect()))
        };
        let num = |no: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| err(no, &format!("{s}: {e}")))
        };
        let int = |no: usize, s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|e| err(no, &format!("{s}: {e}")))
        };

        let (no, l) = next("CPFIELD")?;
        if l != ["CPFIELD", "1"] {
            return Err(err(no, "expected `CPFIELD 1`"));
        }
        let (no, l) = next("n")?;
        if l.len() != 2 || l[0] != "n" {
            return Err(err(no, "expected `n <dim>`"));
        }
        let n = int(no, &l[1])?;
        let (no, l) = next("grid")?;
        if l.len() != 3 || l[0] != "grid" {
            return Err(err(no, "expected `grid <nr> <nz>`"));
        }
        let (nr, nz) = (int(no, &l[1])?, int(no, &l[2])?);
        let (no, l) = next("extent")?;
        if l.len() != 4 || l[0] != "extent" {
            return Err(err(no, "expected `extent <rmax> <zmin> <zmax>`"));
        }
        let (rmax, zmin, zmax) = (num(no, &l[1])?, num(no, &l[2])?, num(no, &l[3])?);
        let (no, l) = next("t")?;
        if l.len() != 2 || l[0] != "t" {
            return Err(err(no, "expected `t <t>`"));
        }
        let t = num(no, &l[1])?;
        let mut comments = Vec::new();
        loop {
            let (no, raw) = lines.next().ok_or_else(|| err(0, "missing `data` line"))?;
            if let Some(c) = raw.strip_prefix('#') {
                comments.push(c.strip_prefix(' ').unwrap_or(c).to_owned());
            } else if raw.trim() == "data" {
                break;
            } else {
                return Err(err(no, "expected `data`"));
            }
        }
        let mut data = Vec::with_capacity(nr * nz);
        let mut rows = 0;
        for (no, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let row: Vec<&str> = l.split_whitespace().collect();
            if row.len() != nr {
                return Err(err(no, &format!("expected {nr} values, found {}", row.len())));
            }
            for v in row {
                data.push(if v == "nan" { f64::NAN } else { num(no, v)? });
            }
            rows += 1;
        }
        if rows != nz {
            return Err(err(0, &format!("expected {nz} data rows, found {rows}")));
        }
        Ok(Self { n, nr, nz, rmax, zmin, zmax, t, comments, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Padding (in nodes) around the dense interpolation array.
const PAD: usize = 3;
/// Floor on the arm fraction used for ghost extrapolation.
const GHOST_THETA_MIN: f64 = 0.1;

/// Separable Catmull–Rom interpolant of a field.
///
/// Exterior nodes next to the boundary carry ghost values extrapolated
/// linearly through the zero boundary value at the cut point (a second layer
/// continues the same slope); nodes at `r < 0` mirror `r > 0`.
#[derive(Debug, Clone)]
pub struct Interpolant {
    h: f64,
    zmin: f64,
    w: usize,
    ht: usize,
    data: Vec<f64>,
}

/// Value, gradient and Hessian (in `(r, z)`) of the interpolant at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl Interpolant {
    pub fn new(field: &Field) -> Self {
        let g = &field.grid;
        let (nr, nz) = (g.nr, g.nz);
        let w = nr + 2 * PAD;
        let ht = nz + 2 * PAD;
        let mut data = vec![0.0; w * ht];
        let mut state = vec![0u8; w * ht]; // 0 empty, 1 inside, 2 ghost layer 1, 3 ghost layer 2
        let at = |i: usize, j: usize| (j + PAD) * w + (i + PAD);
        for k in 0..g.unknowns() {
            let (i, j) = g.node(k);
            data[at(i, j)] = field.values[k];
            state[at(i, j)] = 1;
        }
        // layer 1: linear extrapolation through the cut point
        let dirs: [(isize, isize, usize); 4] = [(1, 0, EAST), (-1, 0, WEST), (0, 1, NORTH), (0, -1, SOUTH)];
        let mut acc = vec![(0.0f64, 0u32); w * ht];
        for k in 0..g.unknowns() {
            let (i, j) = g.node(k);
            let th = g.theta(k);
            for &(di, dj, arm) in &dirs {
                if !g.is_cut(k, arm) {
                    continue;
                }
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if ii < 0 {
                    continue;
                }
                let p = ((jj + PAD as isize) as usize) * w + (ii + PAD as isize) as usize;
                let est = field.values[k] * (1.0 - 1.0 / th[arm].max(GHOST_THETA_MIN));
                acc[p].0 += est;
                acc[p].1 += 1;
            }
        }
        for p in 0..w * ht {
            if state[p] == 0 && acc[p].1 > 0 {
                data[p] = acc[p].0 / acc[p].1 as f64;
                state[p] = 2;
            }
        }
        // layer 2: continue the slope one more node
        let mut acc = vec![(0.0f64, 0u32); w * ht];
        for jj in 1..ht - 1 {
            for ii in 1..w - 1 {
                let p = jj * w + ii;
                if state[p] != 2 {
                    continue;
                }
                for &(di, dj, _) in &dirs {
                    let q = ((jj as isize + dj) as usize) * w + (ii as isize + di) as usize;
                    let back = ((jj as isize - dj) as usize) * w + (ii as isize - di) as usize;
                    if state[q] == 0 && (state[back] == 1 || state[back] == 2) {
                        acc[q].0 += 2.0 * data[p] - data[back];
                        acc[q].1 += 1;
                    }
                }
            }
        }
        for p in 0..w * ht {
            if state[p] == 0 && acc[p].1 > 0 {
                data[p] = acc[p].0 / acc[p].1 as f64;
                state[p] = 3;
            }
        }
        // even reflection across the axis
        for jj in 0..ht {
            for m in 1..=PAD {
                data[jj * w + PAD - m] = data[jj * w + PAD + m];
            }
        }
        Self { h: g.h, zmin: -g.zmax, w, ht, data }
    }

    fn node(&self, i: isize, j: isize) -> f64 {
        let ii = i + PAD as isize;
        let jj = j + PAD as isize;
        if ii < 0 || jj < 0 || ii as usize >= self.w || jj as usize >= self.ht {
            return 0.0;
        }
        self.data[jj as usize * self.w + ii as usize]
    }

    /// Interpolated value and derivatives at `(r, z)`; `r` may be negative
    /// (the field is even in `r`).
    pub fn jet(&self, r: f64, z: f64) -> Jet {
        let x = r / self.h;
        let y = (z - self.zmin) / self.h;
        let (i, s) = split(x);
        let (j, t) = split(y);
        let (wr, dr, ddr) = cr_weights(s);
        let (wz, dz, ddz) = cr_weights(t);
        let mut v = 0.0;
        let mut gr = 0.0;
        let mut gz = 0.0;
        let mut hrr = 0.0;
        let mut hrz = 0.0;
        let mut hzz = 0.0;
        for b in 0..4 {
            let jj = j + b as isize - 1;
            let mut row = [0.0; 4];
            for (a, rv) in row.iter_mut().enumerate() {
                *rv = self.node(i + a as isize - 1, jj);
            }
            let rv: f64 = (0..4).map(|a| wr[a] * row[a]).sum();
            let rd: f64 = (0..4).map(|a| dr[a] * row[a]).sum();
            let rdd: f64 = (0..4).map(|a| ddr[a] * row[a]).sum();
            v += wz[b] * rv;
            gr += wz[b] * rd;
            gz += dz[b] * rv;
            hrr += wz[b] * rdd;
            hrz += dz[b] * rd;
            hzz += ddz[b] * rv;
        }
        let h = self.h;
        Jet {
            value: v,
            grad: [gr / h, gz / h],
            hess: [[hrr / (h * h), hrz / (h * h)], [hrz / (h * h), hzz / (h * h)]],
        }
    }

    pub fn value(&self, r: f64, z: f64) -> f64 {
        self.jet(r, z).value
    }
}

fn split(x: f64) -> (isize, f64) {
    let i = x.floor();
    (i as isize, x - i)
}

/// Catmull–Rom weights and their first and second derivatives for the
/// four nodes `i-1, i, i+1, i+2` at fractional offset `s`.
fn cr_weights(s: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        [
            0.5 * (-s3 + 2.0 * s2 - s),
            0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
            0.5 * (-3.0 * s3 + 4.0 * s2 + s),
            0.5 * (s3 - s2),
        ],
        [
            0.5 * (-3.0 * s2 + 4.0 * s - 1.0),
            0.5 * (9.0 * s2 - 10.0 * s),
            0.5 * (-9.0 * s2 + 8.0 * s + 1.0),
            0.5 * (3.0 * s2 - 2.0 * s),
        ],
        [-3.0 * s + 2.0, 9.0 * s - 5.0, -9.0 * s + 4.0, 3.0 * s - 1.0],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{MeridianDomain, ProfileFunction};
    use crate::grid::Extent;
    use proptest::prelude::*;

    fn ball_grid(nr: usize, nz: usize) -> Arc<MeridianGrid> {
        let d = MeridianDomain::new(3, ProfileFunction::ball(1.0).unwrap(), "").unwrap();
        Arc::new(MeridianGrid::build(&d, Extent { r: 1.0, z: 1.0 }, nr, nz, 1.0).unwrap())
    }

    #[test]
    fn interpolant_reproduces_quadratics() {
        let g = ball_grid(33, 65);
        let f = Field::from_fn(g, 3, |r, z| 1.0 - r * r - 2.0 * z * z + 0.5 * z);
        let ip = Interpolant::new(&f);
        for &(r, z) in &[(0.1, 0.05), (0.33, -0.21), (0.0, 0.4), (0.5, 0.5)] {
            let j = ip.jet(r, z);
            assert!((j.value - (1.0 - r * r - 2.0 * z * z + 0.5 * z)).abs() < 1e-12);
            assert!((j.grad[0] + 2.0 * r).abs() < 1e-10);
            assert!((j.grad[1] - (-4.0 * z + 0.5)).abs() < 1e-10);
        }
    }

    #[test]
    fn nodes_are_reproduced() {
        let g = ball_grid(17, 33);
        let f = Field::from_fn(g.clone(), 3, |r, z| (1.0 - r * r - z * z) * (1.0 + r));
        let ip = Interpolant::new(&f);
        for k in 0..g.unknowns() {
            let (r, z) = g.coords(k);
            assert!((ip.value(r, z) - f.values[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(RawField::parse("CPFIELD 2\n").is_err());
        assert!(RawField::parse("CPFIELD 1\nn 3\ngrid 2 1\nextent 1 -1 1\nt 0\ndata\n1 2 3\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn cpfield_round_trip_is_byte_identical(seed in 0u64..1000, t in 0.0f64..1.0) {
            let g = ball_grid(17, 33);
            let f = Field::from_fn(g.clone(), 3, |r, z| ((seed as f64 + 1.0) * (r + 3.0 * z)).sin() / 7.0);
            let mut raw = f.to_raw(t);
            raw.comments.push(format!("eigen lambda1={}", fmt_f64(t)));
            let text = raw.render();
            let back = RawField::parse(&text).unwrap();
            prop_assert_eq!(back.render(), text);
            let again = Field::from_raw(&back, g).unwrap();
            prop_assert_eq!(again.values, f.values);
        }
    }
}
